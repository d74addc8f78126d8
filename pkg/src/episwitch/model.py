"""Autonomous SIS model for a structured population.

State x_i is the infected fraction of group i.  The dynamics are

    dx/dt = (-D + B) x - diag(x) B x,

with D = diag(alpha_i) the recovery/turnover rates (alpha_i > 0) and
B >= 0 the cross-infection rates.  The box Sigma_n = [0, 1]^n is forward
invariant and x = 0 is the disease-free equilibrium (DFE).

The threshold quantity is the reproduction number R0 = rho(D^{-1} B): the
DFE is globally asymptotically stable iff R0 <= 1, and for irreducible B
a unique endemic equilibrium in the open orthant exists iff R0 > 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import posmat
from .errors import ConvergenceError, DimensionError, HypothesisError, ValidationError

__all__ = [
    "SisModel",
    "Classification",
    "EquilibriumReport",
    "vector_field",
    "jacobian",
    "r0",
    "endemic_equilibrium",
    "classify",
]

ENDEMIC_TOL = 1e-10
_MAX_FIXED_POINT_ITERS = 100_000


@dataclass(frozen=True)
class SisModel:
    """One constituent SIS system, held as (diagonal of D, matrix B)."""

    d: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float).reshape(-1)
        b = posmat.as_square_matrix(self.b)
        if d.shape[0] != b.shape[0]:
            raise DimensionError(
                f"D has {d.shape[0]} entries but B is {b.shape[0]}x{b.shape[0]}"
            )
        if not np.all(np.isfinite(d)):
            raise ValidationError("D entries must be finite")
        if np.min(d) <= 0.0:
            raise ValidationError("diagonal of D must be strictly positive")
        if np.min(b) < 0.0:
            raise ValidationError("B must be entrywise nonnegative")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @property
    def a(self) -> np.ndarray:
        """Linearisation -D + B at the DFE (always Metzler)."""
        return self.b - np.diag(self.d)


class Classification(enum.Enum):
    DFE_GAS = "dfe-gas"
    ENDEMIC_EXISTS = "endemic-exists"


@dataclass(frozen=True)
class EquilibriumReport:
    r0: float
    dfe_gas: bool
    endemic: Optional[np.ndarray]
    classification: Classification
    tol: float = field(default=ENDEMIC_TOL)


def _check_state(m: SisModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != m.n:
        raise DimensionError(f"state has {x.shape[0]} entries, model has {m.n}")
    return x


def vector_field(m: SisModel, x) -> np.ndarray:
    """f(x) = (-D + B) x - diag(x) B x."""
    x = _check_state(m, x)
    bx = m.b @ x
    return bx - m.d * x - x * bx


def jacobian(m: SisModel, x) -> np.ndarray:
    """J(x) = -D + B - diag(x) B - diag(Bx); Metzler everywhere on Sigma_n."""
    x = _check_state(m, x)
    return m.a - x[:, None] * m.b - np.diag(m.b @ x)


def r0(m: SisModel) -> float:
    """Reproduction number rho(D^{-1} B)."""
    return posmat.spectral_radius(m.b / m.d[:, None])


def endemic_equilibrium(m: SisModel, tol: float = ENDEMIC_TOL) -> Optional[np.ndarray]:
    """Unique endemic equilibrium for irreducible B, or None when R0 <= 1.

    Iterates the monotone map g(x)_i = (Bx)_i / (alpha_i + (Bx)_i) downward
    from the all-ones vector (its fixed points are exactly the equilibria,
    and the iteration is order-preserving), then polishes with damped
    Newton on f.
    """
    if not posmat.is_irreducible(m.b):
        raise HypothesisError(
            "endemic equilibrium requires irreducible B "
            "(uniqueness can fail on reducible infection graphs)"
        )
    if r0(m) <= 1.0:
        return None

    x = np.ones(m.n)
    for _ in range(_MAX_FIXED_POINT_ITERS):
        bx = m.b @ x
        x_next = bx / (m.d + bx)
        if np.max(np.abs(x_next - x)) < max(tol, 1e-13):
            x = x_next
            break
        x = x_next
    else:
        raise ConvergenceError(
            f"endemic fixed-point iteration stalled after {_MAX_FIXED_POINT_ITERS} steps "
            f"(residual {np.max(np.abs(vector_field(m, x))):.3e})"
        )

    # Newton polish; damping by halving keeps iterates in the open box.
    for _ in range(100):
        f = vector_field(m, x)
        if np.max(np.abs(f)) <= tol:
            break
        step = np.linalg.solve(jacobian(m, x), -f)
        lam = 1.0
        for _ in range(40):
            x_try = x + lam * step
            if np.min(x_try) > 0.0 and np.max(np.abs(vector_field(m, x_try))) < np.max(np.abs(f)):
                x = x_try
                break
            lam *= 0.5
        else:
            break
    residual = np.max(np.abs(vector_field(m, x)))
    if residual > tol:
        raise ConvergenceError(
            f"endemic Newton polish stopped at residual {residual:.3e} > tol {tol:.1e}"
        )
    return x


def classify(m: SisModel, tol: float = ENDEMIC_TOL) -> EquilibriumReport:
    """Threshold dichotomy: R0 <= 1 => DFE globally stable, else endemic point.

    R0 = 1 is classified on the GAS side (the stable set is closed).
    """
    rep = r0(m)
    if rep <= 1.0:
        return EquilibriumReport(
            r0=rep, dfe_gas=True, endemic=None,
            classification=Classification.DFE_GAS, tol=tol,
        )
    xbar = endemic_equilibrium(m, tol=tol)
    return EquilibriumReport(
        r0=rep, dfe_gas=False, endemic=xbar,
        classification=Classification.ENDEMIC_EXISTS, tol=tol,
    )
