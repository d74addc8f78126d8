"""episwitch: switched SIS epidemic models, thresholds and switching laws.

A numerical toolkit for SIS compartmental models whose parameters switch
between finitely many configurations: joint-Lyapunov-exponent threshold
analysis, extremal-norm certification of the disease-free equilibrium,
switching signals that force persistence or periodic endemic orbits,
Markov-jump stability tests, and stabilizing switching-law synthesis.
"""

__version__ = "0.1.0"

from .model import Classification, EquilibriumReport, SisModel, classify, endemic_equilibrium, r0
from .signals import (
    SignalKind,
    SwitchedSisModel,
    SwitchingSignal,
    constant_signal,
    evaluate,
    evolution,
    periodic_from_weights,
)
from .simulate import IntegratorConfig, Trajectory, integrate, integrate_linear

__all__ = [
    "__version__",
    "Classification",
    "EquilibriumReport",
    "SisModel",
    "classify",
    "endemic_equilibrium",
    "r0",
    "SignalKind",
    "SwitchedSisModel",
    "SwitchingSignal",
    "constant_signal",
    "evaluate",
    "evolution",
    "periodic_from_weights",
    "IntegratorConfig",
    "Trajectory",
    "integrate",
    "integrate_linear",
]
