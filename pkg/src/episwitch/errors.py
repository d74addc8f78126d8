"""Exception hierarchy shared across the toolkit.

``HypothesisError`` marks an analysis whose mathematical hypotheses fail on
the given data (the CLI maps it to exit code 2); everything else signals a
usage or numerical problem.
"""


class EpiSwitchError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(EpiSwitchError, ValueError):
    """Incompatible matrix/vector dimensions."""


class ValidationError(EpiSwitchError, ValueError):
    """Invalid input data (bad weights, malformed scenario fields, ...)."""


class ConvergenceError(EpiSwitchError, RuntimeError):
    """An iterative solver failed to converge; message carries diagnostics."""


class HypothesisError(EpiSwitchError, RuntimeError):
    """Hypotheses of the requested construction fail on the given model."""


class UnboundedSemigroupError(EpiSwitchError, RuntimeError):
    """Sampled evolution semigroup grows without bound (shift below JLE)."""
