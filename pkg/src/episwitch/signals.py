"""Switching signals, the switched SIS container, and evolution operators.

A switching signal is a piecewise-constant, right-continuous map from
time to constituent indices 1..m with positive dwelling on each segment.
Signals are stored as explicit segment lists (reproducible, serializable);
periodic signals repeat their segment list forever.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Sequence, Tuple

import numpy as np

from . import posmat
from .errors import DimensionError, ValidationError
from .model import SisModel

__all__ = [
    "SignalKind",
    "SwitchingSignal",
    "SwitchedSisModel",
    "EvolutionOperator",
    "periodic_from_weights",
    "evaluate",
    "evolution",
]


class SignalKind(enum.Enum):
    PIECEWISE_CONSTANT = "piecewise-constant"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class SwitchingSignal:
    """Segments are (mode, duration) pairs with 1-based mode indices.

    For ``PERIODIC`` signals the segment list is one period; evaluation
    wraps modulo the period.  Finite-horizon signals are defined on
    [0, total duration] only.
    """

    kind: SignalKind
    segments: Tuple[Tuple[int, float], ...]

    def __post_init__(self):
        segs = tuple((int(j), float(tau)) for j, tau in self.segments)
        if not segs:
            raise ValidationError("signal needs at least one segment")
        for j, tau in segs:
            if j < 1:
                raise ValidationError(f"mode index {j} is not in 1..m")
            if not (tau > 0.0 and np.isfinite(tau)):
                raise ValidationError(f"segment duration {tau} must be positive")
        object.__setattr__(self, "segments", segs)

    @property
    def duration(self) -> float:
        """Total segment length: the period for periodic signals."""
        return float(sum(tau for _, tau in self.segments))

    @property
    def dwell(self) -> float:
        return float(min(tau for _, tau in self.segments))

    @property
    def max_mode(self) -> int:
        return max(j for j, _ in self.segments)

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "segments": [[j, tau] for j, tau in self.segments]}

    @staticmethod
    def from_json(obj: dict) -> "SwitchingSignal":
        return SwitchingSignal(SignalKind(obj["kind"]),
                               tuple((j, tau) for j, tau in obj["segments"]))


def constant_signal(mode: int) -> SwitchingSignal:
    """sigma(t) = mode for all t (one periodic segment of unit length)."""
    return SwitchingSignal(SignalKind.PERIODIC, ((mode, 1.0),))


def periodic_from_weights(kappa: Sequence[float], period: float) -> SwitchingSignal:
    """T-periodic signal spending the fraction kappa_j of each period in mode j.

    Mode 1 occupies [0, kappa_1 T), mode 2 the next kappa_2 T, and so on;
    zero-weight modes are dropped.  Weights must be nonnegative and sum to 1.
    """
    k = np.asarray(kappa, dtype=float).reshape(-1)
    if period <= 0.0 or not np.isfinite(period):
        raise ValidationError(f"period must be positive, got {period}")
    if np.min(k) < 0.0:
        raise ValidationError("weights must be nonnegative")
    if abs(float(np.sum(k)) - 1.0) > 1e-12:
        raise ValidationError(f"weights sum to {np.sum(k)!r}, expected 1 within 1e-12")
    segments = tuple((j + 1, float(w * period)) for j, w in enumerate(k) if w > 0.0)
    return SwitchingSignal(SignalKind.PERIODIC, segments)


def evaluate(sig: SwitchingSignal, t: float) -> int:
    """Right-continuous evaluation sigma(t); periodic signals wrap t mod T."""
    if t < 0.0:
        raise ValidationError(f"signal evaluated at negative time {t}")
    total = sig.duration
    if sig.kind is SignalKind.PERIODIC:
        t = t % total
    elif t >= total:
        if t == total:  # closed right endpoint: final mode
            return sig.segments[-1][0]
        raise ValidationError(
            f"time {t} beyond the finite horizon {total} of the signal"
        )
    acc = 0.0
    for j, tau in sig.segments:
        acc += tau
        if t < acc:
            return j
    return sig.segments[-1][0]


def iter_segments(sig: SwitchingSignal, t_end: float) -> Iterator[Tuple[int, float, float]]:
    """Yield (mode, start, stop) covering [0, t_end], repeating periodic signals."""
    if t_end < 0.0:
        raise ValidationError("t_end must be nonnegative")
    if t_end == 0.0:
        return
    if sig.kind is SignalKind.PIECEWISE_CONSTANT and t_end > sig.duration + 1e-12:
        raise ValidationError(
            f"horizon {t_end} beyond the finite signal duration {sig.duration}"
        )
    t = 0.0
    while t < t_end:
        for j, tau in sig.segments:
            stop = min(t + tau, t_end)
            if stop > t:
                yield j, t, stop
            t += tau
            if t >= t_end:
                return


@dataclass(frozen=True)
class SwitchedSisModel:
    """Family of SIS constituents sharing the group dimension."""

    models: Tuple[SisModel, ...]

    def __post_init__(self):
        models = tuple(self.models)
        if not models:
            raise ValidationError("switched model needs at least one constituent")
        n = models[0].n
        for k, mod in enumerate(models):
            if mod.n != n:
                raise DimensionError(
                    f"constituent {k + 1} has dimension {mod.n}, expected {n}"
                )
        object.__setattr__(self, "models", models)

    @property
    def m(self) -> int:
        return len(self.models)

    @property
    def n(self) -> int:
        return self.models[0].n

    @property
    def matrices(self) -> list[np.ndarray]:
        """Linearisations A_j = -D_j + B_j at the DFE."""
        return [mod.a for mod in self.models]

    def constituent(self, mode: int) -> SisModel:
        """1-based lookup matching switching-signal indices."""
        if not 1 <= mode <= self.m:
            raise ValidationError(f"mode {mode} not in 1..{self.m}")
        return self.models[mode - 1]


@dataclass(frozen=True)
class EvolutionOperator:
    """State-transition matrix Phi_sigma(t) of the switched linearisation."""

    matrix: np.ndarray
    t: float


def evolution(model: SwitchedSisModel, sig: SwitchingSignal, t: float) -> EvolutionOperator:
    """Phi_sigma(t) as the ordered product of segment exponentials.

    Later segments multiply from the left.  For periodic signals whole
    periods are raised to an integer power, so long horizons stay cheap.
    """
    if t < 0.0:
        raise ValidationError("evolution horizon must be nonnegative")
    if sig.max_mode > model.m:
        raise ValidationError(
            f"signal uses mode {sig.max_mode} but model has {model.m} constituents"
        )
    n = model.n
    mats = model.matrices
    if t == 0.0:
        return EvolutionOperator(np.eye(n), 0.0)

    def product_over(t_span: float) -> np.ndarray:
        phi = np.eye(n)
        for j, start, stop in iter_segments(sig, t_span):
            phi = posmat.expm(mats[j - 1], stop - start) @ phi
        return phi

    if sig.kind is SignalKind.PERIODIC:
        period = sig.duration
        k, rem = divmod(t, period)
        k = int(k)
        if k >= 2:
            phi_period = product_over(period)
            phi = np.linalg.matrix_power(phi_period, k)
            if rem > 0.0:
                phi = product_over(rem) @ phi
            return EvolutionOperator(np.maximum(phi, 0.0), float(t))
    phi = product_over(float(t))
    return EvolutionOperator(np.maximum(phi, 0.0), float(t))
