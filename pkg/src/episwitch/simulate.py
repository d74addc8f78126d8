"""Trajectory integration for the switched SIS system and its linearisation.

Fixed-step RK4 with mandatory stops at every switching instant: steps never
straddle a discontinuity size of the right-hand side, so the integrator is
deterministic and the classical order holds piecewise.  The nonlinear flow
is confined to the invariant box Sigma_n = [0, 1]^n; round-off drift up to
``tol_drift`` is clipped, anything larger is an error (the exact flow
cannot leave the box, so larger drift means a misconfigured integrator).

Property harnesses for the order-theoretic facts used throughout
(linear-over-nonlinear comparison, monotonicity in initial conditions,
monotone-in-time trajectories) live here as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .errors import HypothesisError, ValidationError
from .model import SisModel, vector_field
from .signals import (
    SignalKind,
    SwitchedSisModel,
    SwitchingSignal,
    constant_signal,
    iter_segments,
)

__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "HarnessReport",
    "integrate",
    "integrate_linear",
    "integrate_terminal",
    "check_comparison",
    "check_monotone",
    "check_directional_monotone",
]


@dataclass(frozen=True)
class IntegratorConfig:
    """step: base RK4 step; tol_drift: allowed box violation before erroring."""

    step: float = 1e-3
    tol_drift: float = 1e-9

    def __post_init__(self):
        if not (self.step > 0.0 and np.isfinite(self.step)):
            raise ValidationError(f"step must be positive, got {self.step}")


DEFAULT_CONFIG = IntegratorConfig()


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution: strictly increasing times (switch instants included),
    one state row per time, and the active 1-based mode at each time
    (right-continuous at switches)."""

    times: np.ndarray
    states: np.ndarray
    modes: np.ndarray
    signal: SwitchingSignal

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, path) -> None:
        """Write `t,x1,...,xn,sigma` rows, 17 significant digits, LF endings."""
        n = self.states.shape[1]
        header = "t," + ",".join(f"x{i + 1}" for i in range(n)) + ",sigma"
        with open(path, "w", newline="\n") as fh:
            fh.write(header + "\n")
            for t, row, j in zip(self.times, self.states, self.modes):
                vals = ",".join(f"{v:.17g}" for v in row)
                fh.write(f"{t:.17g},{vals},{int(j)}\n")


@dataclass(frozen=True)
class HarnessReport:
    """Outcome of an order-property check; violations are max positive gaps."""

    ok: bool
    max_violation: float
    at_time: float
    detail: str = ""


def _rhs_nonlinear(mod: SisModel) -> Callable[[np.ndarray], np.ndarray]:
    a_t, b_t, = mod.a.T, mod.b.T

    def f(x: np.ndarray) -> np.ndarray:
        return x @ a_t - x * (x @ b_t)

    return f


def _rhs_linear(mod: SisModel) -> Callable[[np.ndarray], np.ndarray]:
    a_t = mod.a.T

    def f(x: np.ndarray) -> np.ndarray:
        return x @ a_t

    return f


def _check_x0(model: SwitchedSisModel, x0, require_box: bool) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x0, dtype=float))
    if x.shape[1] != model.n:
        raise ValidationError(f"initial state has {x.shape[1]} entries, model has {model.n}")
    if require_box and (np.min(x) < 0.0 or np.max(x) > 1.0):
        raise ValidationError("initial state must lie in the box [0, 1]^n")
    return x


def _run(
    model: SwitchedSisModel,
    sig: SwitchingSignal,
    x0: np.ndarray,
    t_end: float,
    cfg: IntegratorConfig,
    linear: bool,
    record: bool,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shared stepping core over a batch of initial states (rows of x0)."""
    if t_end < 0.0 or not np.isfinite(t_end):
        raise ValidationError(f"t_end must be finite and nonnegative, got {t_end}")
    if sig.max_mode > model.m:
        raise ValidationError(
            f"signal uses mode {sig.max_mode} but model has {model.m} constituents"
        )
    x = x0.copy()
    times = [0.0]
    states = [x.copy()]
    modes = [sig.segments[0][0]]
    make_rhs = _rhs_linear if linear else _rhs_nonlinear
    rhs_cache = {}

    for mode, start, stop in iter_segments(sig, t_end):
        f = rhs_cache.get(mode)
        if f is None:
            f = rhs_cache[mode] = make_rhs(model.constituent(mode))
        span = stop - start
        nsteps = max(1, math.ceil(span / cfg.step - 1e-12))
        h = span / nsteps
        t = start
        for k in range(nsteps):
            k1 = f(x)
            k2 = f(x + (0.5 * h) * k1)
            k3 = f(x + (0.5 * h) * k2)
            k4 = f(x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = stop if k == nsteps - 1 else start + (k + 1) * h
            if not linear:
                drift_lo = float(np.min(x))
                drift_hi = float(np.max(x)) - 1.0
                if drift_lo < -cfg.tol_drift or drift_hi > cfg.tol_drift:
                    comp = int(np.argmin(x) % x.shape[1]) if drift_lo < -cfg.tol_drift \
                        else int(np.argmax(x) % x.shape[1])
                    worst = min(drift_lo, 0.0) if drift_lo < -cfg.tol_drift else drift_hi
                    raise ValidationError(
                        f"invariance drift {worst:.3e} beyond tol_drift at t={t:.6g}, "
                        f"component {comp + 1}: Sigma_n is forward invariant, so the "
                        f"integrator step {cfg.step} is too coarse for this model"
                    )
                np.clip(x, 0.0, 1.0, out=x)
            if record:
                times.append(t)
                states.append(x.copy())
                modes.append(mode)
    if not record:
        return np.array([0.0, t_end]), x, np.array([], dtype=int)
    # Right-continuity: a point sitting exactly on a switch instant carries
    # the mode of the segment that starts there, not the one that ends.
    times_arr = np.asarray(times)
    modes_arr = np.asarray(modes, dtype=int)
    seg_starts = {start: mode for mode, start, _ in iter_segments(sig, t_end)}
    for idx, t in enumerate(times):
        if t in seg_starts:
            modes_arr[idx] = seg_starts[t]
    return times_arr, np.asarray(states), modes_arr


def integrate(
    model: SwitchedSisModel,
    sig: SwitchingSignal,
    x0,
    t_end: float,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
) -> Trajectory:
    """Solve the switched nonlinear system from x0 in Sigma_n."""
    x = _check_x0(model, x0, require_box=True)
    times, states, modes = _run(model, sig, x, t_end, cfg, linear=False, record=True)
    return Trajectory(times, states[:, 0, :], modes, sig)


def integrate_linear(
    model: SwitchedSisModel,
    sig: SwitchingSignal,
    x0,
    t_end: float,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
) -> Trajectory:
    """Solve the switched linearisation dx/dt = (-D_sigma + B_sigma) x."""
    x = _check_x0(model, x0, require_box=False)
    times, states, modes = _run(model, sig, x, t_end, cfg, linear=True, record=True)
    return Trajectory(times, states[:, 0, :], modes, sig)


def integrate_terminal(
    model: SwitchedSisModel,
    sig: SwitchingSignal,
    x0_batch,
    t_end: float,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    linear: bool = False,
) -> np.ndarray:
    """Terminal states for a batch of initial conditions (rows), no storage.

    Same stepping as :func:`integrate`, vectorized across the batch; used by
    the large randomized harnesses where full trajectories would be waste.
    """
    x = _check_x0(model, x0_batch, require_box=not linear)
    _, terminal, _ = _run(model, sig, x, t_end, cfg, linear=linear, record=False)
    return terminal


def check_comparison(
    model: SwitchedSisModel,
    sig: SwitchingSignal,
    x0,
    y0,
    t_end: float,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    slack: float = 1e-8,
) -> HarnessReport:
    """Nonlinear solution from x0 stays below the linear solution from y0.

    Requires 0 <= x0 <= y0; the quadratic term only removes mass, so the
    linearisation majorizes the flow componentwise for every signal.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    if np.min(x0) < 0.0 or np.any(x0 > y0):
        raise ValidationError("comparison requires 0 <= x0 <= y0 componentwise")
    nl = integrate(model, sig, x0, t_end, cfg)
    lin = integrate_linear(model, sig, y0, t_end, cfg)
    gap = nl.states - lin.states
    worst = int(np.argmax(np.max(gap, axis=1)))
    max_violation = float(np.max(gap))
    return HarnessReport(
        ok=max_violation <= slack,
        max_violation=max_violation,
        at_time=float(nl.times[worst]),
        detail="nonlinear <= linear comparison",
    )


def check_monotone(
    model: SwitchedSisModel,
    sig: SwitchingSignal,
    x0,
    y0,
    t_end: float,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    slack: float = 1e-8,
) -> HarnessReport:
    """Order of initial conditions is preserved: x0 <= y0 => x(t) <= y(t)."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    if np.min(x0) < 0.0 or np.any(x0 > y0) or np.max(y0) > 1.0:
        raise ValidationError("monotonicity requires 0 <= x0 <= y0 in Sigma_n")
    lo = integrate(model, sig, x0, t_end, cfg)
    hi = integrate(model, sig, y0, t_end, cfg)
    gap = lo.states - hi.states
    worst = int(np.argmax(np.max(gap, axis=1)))
    max_violation = float(np.max(gap))
    return HarnessReport(
        ok=max_violation <= slack,
        max_violation=max_violation,
        at_time=float(lo.times[worst]),
        detail="cooperative order preservation",
    )


def check_directional_monotone(
    mod: SisModel,
    w,
    t_end: float = 5.0,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    stride: int = 100,
    sign_floor: float = 1e-9,
) -> HarnessReport:
    """Trajectory from w is strictly monotone when f(w) has a strict sign.

    f(w) << 0 forces a componentwise decreasing trajectory, f(w) >> 0 an
    increasing one; mixed signs, or components within ``sign_floor`` of
    zero (equilibria up to round-off), reject the premise.  Strictness is
    asserted on a coarsened grid (every ``stride``-th point) so genuine
    decrease is not hidden by round-off.
    """
    w = np.asarray(w, dtype=float).reshape(-1)
    fw = vector_field(mod, w)
    if np.max(fw) < -sign_floor:
        direction = -1.0
    elif np.min(fw) > sign_floor:
        direction = 1.0
    else:
        raise HypothesisError(
            "lemma precondition fails: f(w) must be strictly negative or "
            f"strictly positive componentwise, got {fw}"
        )
    traj = integrate(SwitchedSisModel((mod,)), constant_signal(1), w, t_end, cfg)
    sample = traj.states[::stride]
    times = traj.times[::stride]
    diffs = direction * np.diff(sample, axis=0)
    max_violation = float(-np.min(diffs))
    worst = int(np.argmin(np.min(diffs, axis=1)))
    return HarnessReport(
        ok=bool(np.all(diffs > 0.0)),
        max_violation=max_violation,
        at_time=float(times[worst]),
        detail="strictly decreasing" if direction < 0 else "strictly increasing",
    )
