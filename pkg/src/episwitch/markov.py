"""Markov jump switching: path sampling, indicator moments, L1 stability.

The switching index follows a continuous-time Markov chain with rate
matrix Pi(t) (row sums zero, nonnegative off-diagonal).  The conditional
first moments xi_i(t) = E[ indicator(sigma(t) = i) * x(t) ] satisfy a
linear ODE driven by the block matrix

    A_Pi = blockdiag(-D_1 + B_1, ..., -D_m + B_m) + coupling,

where the coupling realizes sum_j pi_ji(t) xi_j(t): block (i, j) carries
pi_ji * I_n, i.e. the transpose of Pi acts across blocks.  Dropping the
nonnegative quadratic correction leaves dxi/dt <= A_Pi xi, so the linear
solution majorizes the true moments and a Hurwitz A_(Pi bar) yields the
explicit L1 bound  integral(xi) <= -A_(Pi bar)^{-1} xi(0).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import posmat
from .errors import ConvergenceError, DimensionError, ValidationError
from .model import SisModel
from .signals import SwitchedSisModel
from .simulate import IntegratorConfig

__all__ = [
    "MarkovSpec",
    "JumpPath",
    "MomentEstimates",
    "StabilityVerdict",
    "simulate_jump",
    "build_moment_matrix",
    "integrate_linear_moment_bound",
    "monte_carlo_moments",
    "l1_stability_test",
    "thread_count",
]

MC_CONFIG = IntegratorConfig(step=0.01)


def thread_count() -> int:
    """Worker cap from EPISWITCH_THREADS, defaulting to available cores."""
    cap = os.environ.get("EPISWITCH_THREADS", "")
    cores = os.cpu_count() or 1
    if cap:
        try:
            return max(1, min(int(cap), cores))
        except ValueError:
            raise ValidationError(f"EPISWITCH_THREADS={cap!r} is not an integer")
    return cores


def _check_rate_matrix(pi, what: str) -> np.ndarray:
    p = posmat.as_square_matrix(pi)
    off = p - np.diag(np.diag(p))
    if np.min(off) < 0.0:
        raise ValidationError(f"{what} must have nonnegative off-diagonal rates")
    if np.max(np.abs(np.sum(p, axis=1))) > 1e-12:
        raise ValidationError(f"{what} rows must sum to zero within 1e-12")
    return p


@dataclass(frozen=True)
class MarkovSpec:
    """Transition-rate specification.

    ``rates`` is the constant rate matrix, or the value on the first piece
    of a piecewise-constant schedule given as (start_time, matrix) pairs
    in ``schedule``.  ``rates_bar`` is a constant Metzler matrix bounding
    Pi(t) entrywise for all t; it defaults to ``rates`` in the constant
    case and is required for schedules.
    """

    rates: np.ndarray
    rates_bar: Optional[np.ndarray] = None
    schedule: Optional[Tuple[Tuple[float, np.ndarray], ...]] = None

    def __post_init__(self):
        rates = _check_rate_matrix(self.rates, "rate matrix")
        object.__setattr__(self, "rates", rates)
        bar = self.rates_bar
        if bar is None:
            if self.schedule is not None:
                raise ValidationError("time-varying rates require an explicit rates_bar")
            bar = rates.copy()
        bar = posmat.as_square_matrix(bar)
        if not posmat.is_metzler(bar):
            raise ValidationError("rates_bar must be Metzler")
        if bar.shape != rates.shape:
            raise DimensionError("rates_bar dimension differs from rates")
        object.__setattr__(self, "rates_bar", bar)
        if self.schedule is not None:
            sched = []
            prev = -math.inf
            for start, mat in self.schedule:
                if start <= prev:
                    raise ValidationError("schedule start times must increase")
                prev = start
                mat = _check_rate_matrix(mat, f"schedule rates at t={start}")
                if np.max(mat - bar) > 1e-12:
                    raise ValidationError(
                        f"schedule rates at t={start} exceed rates_bar entrywise"
                    )
                sched.append((float(start), mat))
            if sched[0][0] != 0.0:
                raise ValidationError("schedule must start at t=0")
            object.__setattr__(self, "schedule", tuple(sched))
        if np.max(rates - bar) > 1e-12:
            raise ValidationError("rates exceed rates_bar entrywise")

    @property
    def m(self) -> int:
        return self.rates.shape[0]

    def rates_at(self, t: float) -> np.ndarray:
        if self.schedule is None:
            return self.rates
        current = self.schedule[0][1]
        for start, mat in self.schedule:
            if start <= t:
                current = mat
            else:
                break
        return current


@dataclass(frozen=True)
class JumpPath:
    """One realization: right-continuous, state ``states[k]`` on
    [jump_times[k], jump_times[k+1]).  jump_times[0] = 0."""

    jump_times: np.ndarray
    states: np.ndarray
    horizon: float

    def state_at(self, t: float) -> int:
        k = int(np.searchsorted(self.jump_times, t, side="right") - 1)
        return int(self.states[k])


def simulate_jump(
    spec: MarkovSpec,
    sigma0: int,
    horizon: float,
    seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> JumpPath:
    """Sample one chain realization.

    Constant rates use exact Gillespie sampling (exponential holding times,
    categorical jump targets); schedules are sampled by thinning against
    the rates_bar majorant.  A state with zero exit rate simply holds
    forever.  Deterministic for a fixed seed.
    """
    if not 1 <= sigma0 <= spec.m:
        raise ValidationError(f"sigma0 must be in 1..{spec.m}")
    if rng is None:
        rng = np.random.default_rng(seed)
    times = [0.0]
    states = [int(sigma0)]
    t = 0.0
    state = sigma0 - 1
    bar = spec.rates_bar
    constant = spec.schedule is None
    while True:
        exit_bar = -float(bar[state, state]) if not constant else -float(
            spec.rates[state, state]
        )
        if exit_bar <= 0.0:
            break
        t = t + rng.exponential(1.0 / exit_bar)
        if t >= horizon:
            break
        if constant:
            row = spec.rates[state].copy()
        else:
            row = spec.rates_at(t)[state].copy()
            # Thinning: accept the candidate event with probability
            # (actual exit rate) / (majorant exit rate).
            actual = -float(row[state])
            if rng.uniform() * exit_bar > actual:
                continue
        row[state] = 0.0
        total = float(np.sum(row))
        if total <= 0.0:
            continue
        state = int(np.searchsorted(np.cumsum(row) / total, rng.uniform()))
        times.append(t)
        states.append(state + 1)
    return JumpPath(
        jump_times=np.asarray(times), states=np.asarray(states, dtype=int),
        horizon=float(horizon),
    )


def build_moment_matrix(model: SwitchedSisModel, rates) -> np.ndarray:
    """A_Pi = blockdiag(-D_i + B_i) + (Pi transpose) (x) I_n.

    The transpose placement makes block row i receive sum_j pi_ji xi_j,
    matching the moment differential equation; it is validated against
    Monte Carlo majorization in the test-suite.
    """
    pi = _check_rate_matrix(rates, "rate matrix")
    if pi.shape[0] != model.m:
        raise DimensionError(
            f"rate matrix is {pi.shape[0]}x{pi.shape[0]} but model has {model.m} modes"
        )
    n = model.n
    blocks = np.zeros((model.m * n, model.m * n))
    for i, a in enumerate(model.matrices):
        blocks[i * n:(i + 1) * n, i * n:(i + 1) * n] = a
    return blocks + posmat.kron_with_identity(pi.T, n)


def integrate_linear_moment_bound(
    model: SwitchedSisModel,
    spec: MarkovSpec,
    xi0,
    t_grid: Sequence[float],
) -> np.ndarray:
    """Solve dxi/dt = A_Pi xi on the grid (the quadratic term dropped).

    Because the dropped term is nonnegative, the result majorizes the true
    moment vector componentwise.  Constant coefficients: exact via stepwise
    matrix exponentials.
    """
    xi = np.asarray(xi0, dtype=float).reshape(-1)
    a_pi = build_moment_matrix(model, spec.rates)
    if xi.shape[0] != a_pi.shape[0]:
        raise DimensionError(
            f"xi0 has {xi.shape[0]} entries, expected {a_pi.shape[0]}"
        )
    if np.min(xi) < 0.0:
        raise ValidationError("xi0 must be nonnegative")
    grid = np.asarray(t_grid, dtype=float)
    out = np.empty((grid.shape[0], xi.shape[0]))
    prev_t = 0.0
    cur = xi.copy()
    cache = {}
    for k, t in enumerate(grid):
        dt = float(t - prev_t)
        if dt < 0.0:
            raise ValidationError("t_grid must be nondecreasing")
        if dt > 0.0:
            key = round(dt, 15)
            if key not in cache:
                cache[key] = posmat.expm(a_pi, dt)
            cur = cache[key] @ cur
        out[k] = cur
        prev_t = float(t)
    return out


@dataclass(frozen=True)
class MomentEstimates:
    """Monte Carlo moment estimates on a time grid.

    ``xi`` has shape (len(t_grid), m, n): block i estimates
    E[indicator(sigma=i) x].  ``ci95`` is the matching half-width of the
    normal 95% confidence interval, ``mean_x`` the summed expectation.
    """

    t_grid: np.ndarray
    xi: np.ndarray
    ci95: np.ndarray
    paths: int

    @property
    def mean_x(self) -> np.ndarray:
        return np.sum(self.xi, axis=1)

    def xi_flat(self) -> np.ndarray:
        return self.xi.reshape(self.xi.shape[0], -1)

    def ci_flat(self) -> np.ndarray:
        return self.ci95.reshape(self.ci95.shape[0], -1)


def _simulate_chunk(
    model: SwitchedSisModel,
    spec: MarkovSpec,
    x0: np.ndarray,
    sigma0: int,
    grid: np.ndarray,
    path_indices: np.ndarray,
    seed: int,
    step: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Sum and sum-of-squares of indicator moments over one chunk of paths."""
    n, m = model.n, model.m
    npaths = path_indices.shape[0]

    paths = [
        simulate_jump(
            spec, sigma0, float(grid[-1]),
            rng=np.random.default_rng(np.random.SeedSequence((seed, int(p)))),
        )
        for p in path_indices
    ]
    max_jumps = max(p.jump_times.shape[0] for p in paths)
    jtimes = np.full((npaths, max_jumps + 1), np.inf)
    jstates = np.zeros((npaths, max_jumps + 1), dtype=int)
    for i, p in enumerate(paths):
        k = p.jump_times.shape[0]
        jtimes[i, :k] = p.jump_times
        jstates[i, :k] = p.states - 1
        jstates[i, k:] = p.states[-1] - 1

    a_t = np.stack([mod.a.T for mod in model.models])
    b_t = np.stack([mod.b.T for mod in model.models])

    x = np.tile(np.asarray(x0, dtype=float), (npaths, 1))
    tp = np.zeros(npaths)
    ptr = np.zeros(npaths, dtype=int)
    mode = jstates[:, 0].copy()
    next_jump = jtimes[np.arange(npaths), ptr + 1]

    sums = np.zeros((grid.shape[0], m, n))
    sumsq = np.zeros((grid.shape[0], m, n))

    def rhs(xv: np.ndarray) -> np.ndarray:
        out = np.empty_like(xv)
        for j in range(m):
            sel = mode == j
            if np.any(sel):
                xs = xv[sel]
                out[sel] = xs @ a_t[j] - xs * (xs @ b_t[j])
        return out

    def record(k: int) -> None:
        for j in range(m):
            sel = mode == j
            if np.any(sel):
                xs = x[sel]
                sums[k, j] += np.sum(xs, axis=0)
                sumsq[k, j] += np.sum(xs * xs, axis=0)

    if grid[0] == 0.0:
        record(0)
        start_idx = 1
    else:
        start_idx = 0

    for k in range(start_idx, grid.shape[0]):
        t_stop = float(grid[k])
        while True:
            target = np.minimum(next_jump, t_stop)
            remaining = target - tp
            if not np.any(remaining > 0.0):
                break
            h = np.minimum(remaining, step)
            hc = h[:, None]
            k1 = rhs(x)
            k2 = rhs(x + 0.5 * hc * k1)
            k3 = rhs(x + 0.5 * hc * k2)
            k4 = rhs(x + hc * k3)
            x = x + (hc / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            np.clip(x, 0.0, 1.0, out=x)
            tp = np.where(h == remaining, target, tp + h)
            arrived = tp == next_jump
            if np.any(arrived):
                ptr[arrived] += 1
                mode[arrived] = jstates[arrived, np.minimum(ptr[arrived], max_jumps)]
                next_jump = jtimes[np.arange(npaths), np.minimum(ptr + 1, max_jumps)]
        record(k)
    return sums, sumsq


def monte_carlo_moments(
    model: SwitchedSisModel,
    spec: MarkovSpec,
    x0,
    sigma0: int,
    t_grid: Sequence[float],
    paths: int = 10_000,
    seed: int = 0,
    step: float = MC_CONFIG.step,
) -> MomentEstimates:
    """Estimate xi_i(t) = E[indicator(sigma=i) x(t)] by path sampling.

    Each path draws its jump times from an RNG stream derived from
    (seed, path index), then the nonlinear switched system is integrated
    with RK4 split exactly at every jump; integration is vectorized across
    paths and chunks run on a thread pool capped by EPISWITCH_THREADS.
    Chunk results combine in fixed index order, so estimates are
    bit-reproducible for a fixed seed regardless of scheduling.
    """
    if paths < 1:
        raise ValidationError("paths must be >= 1")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != model.n:
        raise DimensionError(f"x0 has {x0.shape[0]} entries, model has {model.n}")
    if np.min(x0) < 0.0 or np.max(x0) > 1.0:
        raise ValidationError("x0 must lie in the box [0, 1]^n")
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or grid.shape[0] < 1 or np.any(np.diff(grid) <= 0.0):
        raise ValidationError("t_grid must be strictly increasing")
    if spec.m != model.m:
        raise DimensionError("Markov spec and model disagree on mode count")

    workers = thread_count()
    # Chunk size is fixed (not tied to the worker count) so the combination
    # order, and therefore every output bit, is identical for any thread cap.
    chunk_size = 256
    chunks = [
        np.arange(lo, min(lo + chunk_size, paths))
        for lo in range(0, paths, chunk_size)
    ]
    results: List[Optional[Tuple[np.ndarray, np.ndarray]]] = [None] * len(chunks)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(
                    _simulate_chunk, model, spec, x0, sigma0, grid, idx, seed, step
                ): k
                for k, idx in enumerate(chunks)
            }
            for fut, k in futures.items():
                results[k] = fut.result()
    else:
        for k, idx in enumerate(chunks):
            results[k] = _simulate_chunk(model, spec, x0, sigma0, grid, idx, seed, step)

    sums = np.zeros((grid.shape[0], model.m, model.n))
    sumsq = np.zeros_like(sums)
    for res in results:
        sums += res[0]
        sumsq += res[1]
    mean = sums / paths
    if paths > 1:
        var = np.maximum(sumsq - paths * mean * mean, 0.0) / (paths - 1)
    else:
        var = np.zeros_like(mean)
    ci = 1.959963984540054 * np.sqrt(var / paths)
    return MomentEstimates(t_grid=grid, xi=mean, ci95=ci, paths=paths)


@dataclass(frozen=True)
class StabilityVerdict:
    """Hurwitz test of A_(Pi bar) and, when stable, the explicit L1 bound."""

    a_pi_bar: np.ndarray
    hurwitz: bool
    l1_bound: Optional[np.ndarray]


def l1_stability_test(model: SwitchedSisModel, spec: MarkovSpec, xi0) -> StabilityVerdict:
    """L1 stability of the jump-switched model via the moment majorant.

    Builds A_(Pi bar), tests the Hurwitz property by the spectral abscissa
    cross-checked against the Metzler inverse-sign criterion, and returns
    the cumulative-moment bound -A_(Pi bar)^{-1} xi(0) when stable.
    """
    xi = np.asarray(xi0, dtype=float).reshape(-1)
    if np.min(xi) < 0.0:
        raise ValidationError("xi0 must be nonnegative")
    a_bar = build_moment_matrix(model, spec.rates_bar)
    if xi.shape[0] != a_bar.shape[0]:
        raise DimensionError(f"xi0 has {xi.shape[0]} entries, expected {a_bar.shape[0]}")
    abscissa = posmat.spectral_abscissa(a_bar)
    hurwitz = abscissa < 0.0
    inverse_check = posmat.neg_inverse_nonpositive(a_bar)
    if not inverse_check.singular and inverse_check.nonpositive != hurwitz:
        raise ConvergenceError(
            "spectral and inverse-sign stability tests disagree on the "
            f"moment matrix (abscissa {abscissa:.3e})"
        )
    bound = None
    if hurwitz:
        bound = -np.linalg.solve(a_bar, xi)
    return StabilityVerdict(a_pi_bar=a_bar, hurwitz=hurwitz, l1_bound=bound)
