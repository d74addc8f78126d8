"""Endemic behaviour engineered by switching, and its converse.

Even when every constituent SIS system kills the disease, a convex
combination R = sum_j kappa_j (-D_j + B_j) with mu(R) > 0 lets a fast
periodic switching signal keep every infection level bounded away from
zero (persistence) and sustain a nontrivial periodic orbit.  Conversely,
when every constituent is endemic but some combination is Hurwitz, fast
periodic switching drives the disease out.

All three constructions rest on the same averaging principle: over one
fast period the switched flow tracks the autonomous SIS system built from
the averaged matrices (D_hat, B_hat), with an error that shrinks linearly
in the period.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.optimize

from . import posmat
from .errors import ConvergenceError, HypothesisError, ValidationError
from .model import SisModel, endemic_equilibrium, vector_field
from .signals import (
    SwitchedSisModel,
    SwitchingSignal,
    constant_signal,
    evolution,
    periodic_from_weights,
)
from .simulate import (
    DEFAULT_CONFIG,
    IntegratorConfig,
    Trajectory,
    integrate,
    integrate_terminal,
)

__all__ = [
    "ConvexCombination",
    "AveragingBound",
    "PersistenceResult",
    "PeriodicOrbit",
    "StabilizationResult",
    "averaged_model",
    "averaging_bound",
    "find_combination",
    "persistence_construction",
    "averaging_gap",
    "periodic_orbit",
    "stabilize",
]

_MIN_PERIOD = 2.0 ** -20
_SIGN_MARGIN = 1e-6


@dataclass(frozen=True)
class ConvexCombination:
    """Weights kappa with R = sum kappa_j (-D_j + B_j) = -D_hat + B_hat."""

    kappa: np.ndarray
    r: np.ndarray
    d_hat: np.ndarray
    b_hat: np.ndarray
    abscissa: float


def _check_weights(model: SwitchedSisModel, kappa) -> np.ndarray:
    k = np.asarray(kappa, dtype=float).reshape(-1)
    if k.shape[0] != model.m:
        raise ValidationError(f"got {k.shape[0]} weights for {model.m} constituents")
    if np.min(k) < 0.0:
        raise ValidationError("weights must be nonnegative")
    if abs(float(np.sum(k)) - 1.0) > 1e-12:
        raise ValidationError(f"weights sum to {np.sum(k)!r}, expected 1 within 1e-12")
    return k


def averaged_model(model: SwitchedSisModel, kappa) -> SisModel:
    """SIS system with D_hat = sum kappa_j D_j, B_hat = sum kappa_j B_j.

    For the kappa-periodic signal, the time average of f_sigma(s)(x) over a
    period equals the averaged field exactly (the field is piecewise
    constant in time).
    """
    k = _check_weights(model, kappa)
    d_hat = sum(w * mod.d for w, mod in zip(k, model.models))
    b_hat = sum(w * mod.b for w, mod in zip(k, model.models))
    return SisModel(d=d_hat, b=b_hat)


def combination(model: SwitchedSisModel, kappa) -> ConvexCombination:
    """Assemble the combination record for given weights."""
    k = _check_weights(model, kappa)
    avg = averaged_model(model, k)
    r = avg.a
    return ConvexCombination(
        kappa=k, r=r, d_hat=avg.d, b_hat=avg.b,
        abscissa=posmat.spectral_abscissa(r),
    )


@dataclass(frozen=True)
class AveragingBound:
    """Certified constants for the fast-switching tracking error on [0, 1].

    ``lipschitz`` and ``sup_bound`` over-estimate the Lipschitz constant and
    the sup of every constituent field on the box Sigma_n (closed-form
    entrywise bounds, no sampling), so
    ``bound_value = period * sup_bound * e^{2K} (2 + K)`` is a true bound.
    """

    lipschitz: float
    sup_bound: float
    period: float
    bound_value: float


def averaging_bound(model: SwitchedSisModel, kappa, period: float) -> AveragingBound:
    """Tracking-error bound between the switched and averaged flows."""
    _check_weights(model, kappa)
    if period <= 0.0:
        raise ValidationError("period must be positive")
    # Row i of the Jacobian is bounded by d_i + 2 (B 1)_i on the box; the
    # field itself by max(d_i, (B 1)_i).
    big_k = 0.0
    sup_r = 0.0
    for mod in model.models:
        row_sums = mod.b @ np.ones(mod.n)
        big_k = max(big_k, float(np.max(mod.d + 2.0 * row_sums)))
        sup_r = max(sup_r, float(np.max(np.maximum(mod.d, row_sums))))
    value = period * sup_r * math.exp(2.0 * big_k) * (2.0 + big_k)
    return AveragingBound(
        lipschitz=big_k, sup_bound=sup_r, period=period, bound_value=value
    )


def find_combination(
    model: SwitchedSisModel,
    target_sign: str,
    budget: int = 500,
) -> Optional[ConvexCombination]:
    """Search the weight simplex for mu(R) of the requested sign.

    Vertices first, then all pairwise edges on a 1/32 grid, then a
    Nelder-Mead refinement of the incumbent.  Returns the combination when
    the margin |mu(R)| >= 1e-6 is met, None otherwise.
    """
    if target_sign not in ("positive", "negative"):
        raise ValidationError(f"target_sign must be 'positive' or 'negative', got {target_sign!r}")
    want = 1.0 if target_sign == "positive" else -1.0
    m = model.m
    mats = model.matrices
    evals = 0

    def mu_of(kap: np.ndarray) -> float:
        r = sum(w * a for w, a in zip(kap, mats))
        return posmat.spectral_abscissa(r)

    best_kappa = None
    best_val = -math.inf

    candidates = [np.eye(m)[j] for j in range(m)]
    for i, j in itertools.combinations(range(m), 2):
        for step in range(1, 32):
            t = step / 32.0
            kap = np.zeros(m)
            kap[i], kap[j] = 1.0 - t, t
            candidates.append(kap)
    for kap in candidates:
        if evals >= budget:
            break
        val = want * mu_of(kap)
        evals += 1
        if val > best_val:
            best_val, best_kappa = val, kap

    if m > 1 and evals < budget:
        def objective(z: np.ndarray) -> float:
            w = np.abs(z) + 1e-12
            return -want * mu_of(w / np.sum(w))

        res = scipy.optimize.minimize(
            objective, best_kappa + 1e-3, method="Nelder-Mead",
            options={"maxfev": budget - evals, "xatol": 1e-10, "fatol": 1e-12},
        )
        w = np.abs(res.x) + 1e-12
        kap = w / np.sum(w)
        val = want * mu_of(kap)
        if val > best_val:
            best_val, best_kappa = val, kap

    if best_val < _SIGN_MARGIN:
        return None
    return combination(model, best_kappa)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PersistenceResult:
    """Periodic signal under which all infection levels stay above delta."""

    signal: SwitchingSignal
    delta: float
    floor_point: np.ndarray
    period: float
    kappa: np.ndarray


def _perron_direction(r: np.ndarray) -> np.ndarray:
    """Right eigenvector for the rightmost eigenvalue, scaled to sup 1."""
    lam, vecs = np.linalg.eig(r)
    k = int(np.argmax(lam.real))
    v = vecs[:, k].real
    if np.max(v) < 0.0:
        v = -v
    if np.min(v) <= 0.0:
        raise HypothesisError(
            "the combination matrix has no strictly positive leading "
            "eigenvector; an irreducible averaged infection graph is required"
        )
    return v / np.max(v)


def persistence_construction(
    model: SwitchedSisModel,
    kappa,
    tol: float = 1e-9,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
) -> PersistenceResult:
    """Fast periodic switching that keeps every group infected.

    Takes the Perron direction v of R = -D_hat + B_hat (so Rv = mu v >> 0),
    scales it by the largest c in (0, 1] keeping the averaged field strictly
    positive at cv (bisection with a residual margin), then halves the
    period T = 1/N0 until one switched period strictly grows the state:
    x(1, v, sigma) >> v.  The returned delta is the observed floor over the
    first unit of time, which the period map then propagates forever.
    """
    comb = combination(model, kappa)
    if comb.abscissa <= _SIGN_MARGIN:
        raise HypothesisError(
            f"persistence needs mu(R) > 0 with margin; got {comb.abscissa:.3e}"
        )
    avg = averaged_model(model, comb.kappa)
    v_dir = _perron_direction(comb.r)

    def strictly_up(c: float) -> bool:
        return float(np.min(vector_field(avg, c * v_dir))) > 0.0

    if not strictly_up(1e-3):
        raise HypothesisError("averaged field not positive even near the origin")
    lo, hi = 1e-3, 1.0
    if strictly_up(1.0):
        lo = 1.0
    else:
        for _ in range(10):  # coarse on purpose: keeps a usable growth margin
            mid = 0.5 * (lo + hi)
            if strictly_up(mid):
                lo = mid
            else:
                hi = mid
    v = lo * v_dir

    n0 = 1
    while True:
        period = 1.0 / n0
        sig = periodic_from_weights(comb.kappa, period)
        traj = integrate(model, sig, v, 1.0, cfg)
        if np.all(traj.terminal > v):
            delta = float(np.min(traj.states))
            if delta <= 0.0:
                raise ConvergenceError("trajectory touched the boundary during the first period")
            return PersistenceResult(
                signal=sig, delta=delta, floor_point=v, period=period, kappa=comb.kappa
            )
        n0 *= 2
        if 1.0 / n0 < _MIN_PERIOD:
            raise HypothesisError(
                "no period down to 2^-20 achieves one-period growth; "
                "the combination margin is too small"
            )


# ---------------------------------------------------------------------------
# Periodic orbits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeriodicOrbit:
    """Fixed point of the unit-time map under a 1/N0-periodic signal."""

    x_star: np.ndarray
    period: float
    residual: float
    interior_margin: float
    signal: SwitchingSignal
    n0: int


def averaging_gap(
    model: SwitchedSisModel,
    avg: SisModel,
    sig: SwitchingSignal,
    x0: np.ndarray,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
) -> float:
    """Measured sup-norm gap on [0, 1] between switched and averaged flows."""
    sw = integrate(model, sig, x0, 1.0, cfg)
    av = integrate(SwitchedSisModel((avg,)), constant_signal(1), x0, 1.0, cfg)
    grid = np.linspace(0.0, 1.0, 101)
    gap = 0.0
    for i in range(model.n):
        sw_i = np.interp(grid, sw.times, sw.states[:, i])
        av_i = np.interp(grid, av.times, av.states[:, i])
        gap = max(gap, float(np.max(np.abs(sw_i - av_i))))
    return gap


def periodic_orbit(
    model: SwitchedSisModel,
    kappa,
    tol: float = 1e-10,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
) -> PeriodicOrbit:
    """Interior periodic orbit x(t + 1) = x(t) for fast kappa-switching.

    Requires every constituent stable (mu(-D_j + B_j) < 0) and the
    combination unstable (mu(R) > 0).  The period 1/N0 is halved until the
    measured averaging gap at horizon 1 falls below half the distance from
    the averaged endemic point x_hat to the boundary of the box, then the
    unit-time map P(x) = x(1, x, sigma) is solved by damped Newton with a
    finite-difference Jacobian, seeded at x_hat, with Picard fallback.
    """
    comb = combination(model, kappa)
    for j, a in enumerate(model.matrices, start=1):
        mu_j = posmat.spectral_abscissa(a)
        if mu_j >= 0.0:
            raise HypothesisError(
                f"constituent {j} is not stable (mu = {mu_j:.3e}); the orbit "
                "construction switches between stable systems"
            )
    if comb.abscissa <= _SIGN_MARGIN:
        raise HypothesisError(
            f"periodic orbit needs mu(R) > 0 with margin; got {comb.abscissa:.3e}"
        )
    avg = averaged_model(model, comb.kappa)
    x_hat = endemic_equilibrium(avg)
    boundary_dist = float(min(np.min(x_hat), np.min(1.0 - x_hat)))

    n0 = 1
    sig = periodic_from_weights(comb.kappa, 1.0)
    while averaging_gap(model, avg, sig, x_hat, cfg) >= 0.5 * boundary_dist:
        n0 *= 2
        if 1.0 / n0 < _MIN_PERIOD:
            raise HypothesisError("averaging gap will not fall below the interior margin")
        sig = periodic_from_weights(comb.kappa, 1.0 / n0)

    def period_map(x: np.ndarray) -> np.ndarray:
        return integrate_terminal(model, sig, x[None, :], 1.0, cfg)[0]

    def period_map_with_jacobian(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        h = 1e-6
        batch = np.vstack([x[None, :], x[None, :] + h * np.eye(model.n)])
        out = integrate_terminal(model, sig, batch, 1.0, cfg)
        jac = (out[1:] - out[0]).T / h
        return out[0], jac

    x = x_hat.copy()
    px, jac = period_map_with_jacobian(x)
    residual = float(np.max(np.abs(px - x)))
    for _ in range(60):
        if residual <= tol:
            break
        try:
            step = np.linalg.solve(jac - np.eye(model.n), -(px - x))
        except np.linalg.LinAlgError:
            step = -(px - x)
        lam = 1.0
        for _ in range(30):
            x_try = x + lam * step
            if np.min(x_try) > 0.0 and np.max(x_try) < 1.0:
                p_try = period_map(x_try)
                r_try = float(np.max(np.abs(p_try - x_try)))
                if r_try < residual:
                    x, px, residual = x_try, p_try, r_try
                    break
            lam *= 0.5
        else:
            # Newton stagnated: Picard iteration, which the monotone
            # structure keeps stable for small periods.
            moved = False
            for _ in range(400):
                x_new = px
                p_new = period_map(x_new)
                r_new = float(np.max(np.abs(p_new - x_new)))
                x, px = x_new, p_new
                if r_new < residual:
                    residual = r_new
                    moved = True
                if residual <= tol:
                    break
            if residual > tol and not moved:
                break
        if residual <= tol:
            break
        px, jac = period_map_with_jacobian(x)
        residual = float(np.max(np.abs(px - x)))
    if residual > tol:
        raise ConvergenceError(
            f"unit-time map fixed point stalled at residual {residual:.3e} > {tol:.1e}"
        )

    orbit_traj = integrate(model, sig, x, 1.0, cfg)
    interior_margin = float(np.min(orbit_traj.states))
    if interior_margin <= 0.0:
        raise ConvergenceError("orbit leaves the open positive orthant")
    for j, mod in enumerate(model.models, start=1):
        if float(np.max(np.abs(vector_field(mod, x)))) <= 10.0 * tol:
            raise ConvergenceError(
                f"orbit point coincides with an equilibrium of constituent {j}"
            )
    return PeriodicOrbit(
        x_star=x,
        period=1.0,
        residual=residual,
        interior_margin=interior_margin,
        signal=sig,
        n0=n0,
    )


# ---------------------------------------------------------------------------
# Stabilization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StabilizationResult:
    """Periodic law contracting the linearisation: Phi_sigma(T) v <= alpha v."""

    signal: SwitchingSignal
    alpha: float
    v: np.ndarray
    period: float
    kappa: np.ndarray


def stabilize(
    model: SwitchedSisModel,
    budget: int = 500,
) -> StabilizationResult:
    """Periodic switching law making the DFE globally attractive.

    Every constituent must be unstable (mu(-D_j + B_j) > 0) while some
    convex combination R is Hurwitz.  With v = -R^{-1} 1 rescaled to
    v_i > 1, the period is halved from 1 until the one-period evolution
    contracts v: Phi_sigma(T) v <= alpha v with alpha < 1.  The comparison
    lemma then pushes the contraction onto the nonlinear flow.
    """
    for j, a in enumerate(model.matrices, start=1):
        mu_j = posmat.spectral_abscissa(a)
        if mu_j <= 0.0:
            raise HypothesisError(
                f"stabilization assumes every constituent unstable; "
                f"constituent {j} has mu = {mu_j:.3e}"
            )
    comb = find_combination(model, "negative", budget=budget)
    if comb is None:
        raise HypothesisError(
            "no Hurwitz convex combination found: the hypothesis of the "
            "stabilization theorem fails for this family"
        )
    v = np.linalg.solve(comb.r, -np.ones(model.n))
    if np.min(v) <= 0.0:
        raise HypothesisError("-R^{-1} 1 is not strictly positive")
    v = 2.0 * v / np.min(v)

    period = 1.0
    while period >= _MIN_PERIOD:
        sig = periodic_from_weights(comb.kappa, period)
        phi = evolution(model, sig, period).matrix
        alpha = float(np.max((phi @ v) / v))
        if alpha < 1.0:
            return StabilizationResult(
                signal=sig, alpha=alpha, v=v, period=period, kappa=comb.kappa
            )
        period *= 0.5
    raise ConvergenceError("period halving underflowed without achieving contraction")
