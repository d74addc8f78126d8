"""Joint Lyapunov exponent estimation and extremal-norm certificates.

The joint Lyapunov exponent (JLE) of the switched linearisation
{A_1, ..., A_m}, A_j = -D_j + B_j, is the worst-case exponential growth
rate over all switching signals; it plays the threshold role that
mu(-D + B) plays for a single system.

Two estimators are provided:

* a lower bound from the best periodic signal found by randomized search:
  a T-periodic signal realizes the exact growth rate
  log(rho(Phi_sigma(T))) / T, which never exceeds the JLE;
* an upper estimate from the infinity norms of all length-``depth``
  products of block exponentials e^{A_j t_block}, following the
  subadditivity of t -> log sup ||Phi(t)||.  Restricting to block-aligned
  signals makes this an estimate rather than a certificate; signals that
  switch faster than ``t_block`` can outgrow it, so prefer small blocks
  when fast switching matters.

On top of these sits a certified object: an approximation of the absolute
extremal norm

    v(x) = sup { ||S |x| ||_inf : S in the shifted evolution semigroup },

sampled on a fixed duration grid ``delta`` and saturated under dominance
pruning.  The saturated row set gives a polytope norm that provably
contracts every grid-aligned evolution operator of the shifted family,
which is what the certificate checks below rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import posmat
from .errors import (
    ConvergenceError,
    DimensionError,
    UnboundedSemigroupError,
    ValidationError,
)
from .model import vector_field
from .signals import (
    SignalKind,
    SwitchedSisModel,
    SwitchingSignal,
    constant_signal,
    evolution,
    periodic_from_weights,
)

__all__ = [
    "JleEstimate",
    "ExtremalNormApprox",
    "DualPair",
    "CertificateReport",
    "DecreaseReport",
    "jle_lower_bound",
    "jle_upper_bound",
    "estimate_jle",
    "supremum_norm",
    "build_extremal_norm",
    "dual_vector",
    "verify_nonstrict_lyapunov",
    "check_extremal_inequality",
    "verify_nonlinear_decrease",
]

_DOMINANCE_RTOL = 1e-11
_ROW_FLOOR = 1e-12
_GROWTH_LIMIT = 1e6


# ---------------------------------------------------------------------------
# JLE estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JleEstimate:
    """Bracketing estimates of the joint Lyapunov exponent.

    ``lower`` is certified (an achieved periodic growth rate); ``upper`` is
    the block-product estimate, widened to ``lower`` if the search found a
    faster-growing signal than the block restriction can see.
    """

    lower: float
    upper: float
    witness_signal: SwitchingSignal
    horizon: float
    samples: int


def _periodic_exponent(model: SwitchedSisModel, sig: SwitchingSignal) -> float:
    """Exact asymptotic growth rate of a periodic signal from its monodromy."""
    period = sig.duration
    phi = evolution(model, sig, period).matrix
    rho = posmat.spectral_radius(phi)
    if rho <= 0.0:
        return -math.inf
    return math.log(rho) / period


def jle_lower_bound(
    model: SwitchedSisModel,
    horizon: float = 20.0,
    budget: int = 200,
    seed: int = 0,
) -> Tuple[float, SwitchingSignal]:
    """Best certified lower bound found within ``budget`` signal evaluations.

    Searches constant signals (exact rate mu(A_j)), Dirichlet-weighted
    periodic patterns over a geometric period grid down to fast switching,
    and a duration-rescaling hill climb around the incumbent.  Returns the
    bound and the witness signal; deterministic for fixed seed.
    """
    if horizon <= 0.0:
        raise ValidationError("horizon must be positive")
    rng = np.random.default_rng(seed)
    m = model.m
    evaluations = 0

    best_val = -math.inf
    best_sig: Optional[SwitchingSignal] = None

    # Constant signals: exact exponents, free of budget.
    for j in range(1, m + 1):
        val = posmat.spectral_abscissa(model.models[j - 1].a)
        if val > best_val:
            best_val, best_sig = val, constant_signal(j)

    if m > 1:
        periods = np.geomspace(1e-2, min(4.0, horizon), 6)
        while evaluations < budget:
            if evaluations < budget // 2:
                # Weighted periodic patterns in canonical mode order.
                kappa = rng.dirichlet(np.ones(m))
                if np.min(kappa) < 1e-9:
                    kappa = (kappa + 1e-6) / np.sum(kappa + 1e-6)
                period = float(periods[evaluations % len(periods)])
                sig = periodic_from_weights(kappa / np.sum(kappa), period)
            else:
                # Arbitrary short mode patterns with random durations.
                k = int(rng.integers(2, 5))
                modes = 1 + rng.integers(0, m, size=k)
                period = float(periods[evaluations % len(periods)])
                durs = rng.dirichlet(np.ones(k)) * period
                if np.min(durs) < 1e-9 * period:
                    durs = (durs + 1e-6 * period) * period / np.sum(durs + 1e-6 * period)
                sig = SwitchingSignal(
                    SignalKind.PERIODIC,
                    tuple((int(j), float(tau)) for j, tau in zip(modes, durs)),
                )
            val = _periodic_exponent(model, sig)
            evaluations += 1
            if val > best_val:
                best_val, best_sig = val, sig

        # Duration-rescaling refinement around the incumbent.
        factors = (0.5, 0.8, 1.25, 2.0)
        improved = True
        while improved and evaluations < budget:
            improved = False
            segs = best_sig.segments
            for i in range(len(segs)):
                for fac in factors:
                    if evaluations >= budget:
                        break
                    new_tau = segs[i][1] * fac
                    if not (1e-7 <= new_tau <= horizon):
                        continue
                    cand_segs = list(segs)
                    cand_segs[i] = (segs[i][0], new_tau)
                    cand = SwitchingSignal(SignalKind.PERIODIC, tuple(cand_segs))
                    val = _periodic_exponent(model, cand)
                    evaluations += 1
                    if val > best_val + 1e-12:
                        best_val, best_sig = val, cand
                        improved = True
    return best_val, best_sig


def jle_upper_bound(
    model: SwitchedSisModel,
    t_block: float = 4.0,
    depth: int = 5,
) -> float:
    """Block-product growth estimate (1/(depth*t_block)) log max ||prod||_inf.

    The maximum runs over all m^depth mode sequences of ``depth`` blocks of
    length ``t_block``.  For m = 1 this is a true upper bound on mu(A);
    for switched families it bounds every signal that dwells at least
    ``t_block`` per mode.
    """
    if t_block <= 0.0 or depth < 1:
        raise ValidationError("t_block must be positive and depth >= 1")
    m = model.m
    if m ** depth > 1_000_000:
        raise ValidationError(
            f"{m}^{depth} block products exceed the 1e6 combinatorial budget"
        )
    blocks = [posmat.expm(a, t_block) for a in model.matrices]
    n = model.n
    best = 0.0

    stack: List[Tuple[np.ndarray, int]] = [(np.eye(n), 0)]
    while stack:
        prod, level = stack.pop()
        if level == depth:
            best = max(best, float(np.max(np.sum(prod, axis=1))))
            continue
        for blk in blocks:
            stack.append((blk @ prod, level + 1))
    if best <= 0.0:
        raise ConvergenceError(
            "all block products underflowed to zero; reduce t_block or depth"
        )
    return math.log(best) / (depth * t_block)


def estimate_jle(
    model: SwitchedSisModel,
    horizon: float = 20.0,
    budget: int = 200,
    seed: int = 0,
    t_block: float = 4.0,
    depth: int = 5,
) -> JleEstimate:
    """Run both estimators and assemble a consistent bracket."""
    lower, witness = jle_lower_bound(model, horizon=horizon, budget=budget, seed=seed)
    upper = jle_upper_bound(model, t_block=t_block, depth=depth)
    return JleEstimate(
        lower=lower,
        upper=max(upper, lower),
        witness_signal=witness,
        horizon=horizon,
        samples=budget,
    )


# ---------------------------------------------------------------------------
# Extremal norm approximation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExtremalNormApprox:
    """Polytope approximation of the absolute extremal norm.

    ``rows`` stacks the rows of the sampled (shift-normalized) evolution
    operators; the rows of the identity are always retained, so
    v(x) = max_w <w, |x|> >= ||x||_inf.  By construction v(x) = v(|x|),
    and after saturation every grid generator G_j = e^{(A_j - shift I) delta}
    satisfies v(G_j x) <= (1 + 1e-11) v(x) for x >= 0.
    """

    rows: np.ndarray
    shift: float
    delta: float

    @property
    def n(self) -> int:
        return self.rows.shape[1]

    @property
    def contains_identity(self) -> bool:
        eye = np.eye(self.n)
        return all(any(np.array_equal(w, e) for w in self.rows) for e in eye)

    def value(self, x) -> float:
        z = np.abs(np.asarray(x, dtype=float).reshape(-1))
        if z.shape[0] != self.n:
            raise DimensionError(f"vector has {z.shape[0]} entries, norm has {self.n}")
        return float(np.max(self.rows @ z))

    def value_many(self, xs: np.ndarray) -> np.ndarray:
        return np.max(np.abs(np.atleast_2d(xs)) @ self.rows.T, axis=1)

    def __call__(self, x) -> float:
        return self.value(x)


def supremum_norm(n: int) -> ExtremalNormApprox:
    """The plain infinity norm as the trivial one-element approximation."""
    return ExtremalNormApprox(rows=np.eye(n), shift=0.0, delta=0.0)


def _dominated(cands: np.ndarray, kept: np.ndarray) -> np.ndarray:
    """Boolean mask: candidate row <= (1+rtol) * some kept row, entrywise."""
    if kept.size == 0:
        return np.zeros(cands.shape[0], dtype=bool)
    out = np.zeros(cands.shape[0], dtype=bool)
    bound = kept * (1.0 + _DOMINANCE_RTOL) + 1e-300
    for lo in range(0, cands.shape[0], 256):
        chunk = cands[lo:lo + 256]
        out[lo:lo + 256] = np.any(
            np.all(chunk[:, None, :] <= bound[None, :, :], axis=2), axis=1
        )
    return out


def default_grid_step(model: SwitchedSisModel, shift: float) -> float:
    """Duration grid heuristic balancing closure cost against derivative slack.

    The saturated norm contracts exactly at multiples of delta; between grid
    points the decrease margin degrades by O(delta * ||A - shift I||^2), so
    for Hurwitz-side shifts delta is tied to |shift| to keep the nonstrict
    certificate strict.
    """
    gain = max(
        float(np.max(np.sum(np.abs(a - shift * np.eye(model.n)), axis=1)))
        for a in model.matrices
    )
    gain = max(gain, 1e-6)
    if shift < 0.0:
        return float(min(0.25, abs(shift) / (4.0 * gain * gain)))
    return float(min(0.25, 1.0 / (4.0 * gain * gain)))


def build_extremal_norm(
    model: SwitchedSisModel,
    shift: float,
    sample_budget: int = 20_000,
    delta: Optional[float] = None,
) -> ExtremalNormApprox:
    """Saturate the shifted evolution semigroup on a duration grid.

    Starting from the rows of the identity, repeatedly right-multiplies by
    the grid generators e^{(A_j - shift I) delta} and keeps only rows not
    entrywise dominated by an existing one.  The loop terminates when no
    candidate survives; growth beyond 1e6 means the shift sits below the
    JLE and raises :class:`UnboundedSemigroupError`.
    """
    if delta is None:
        delta = default_grid_step(model, shift)
    if delta <= 0.0:
        raise ValidationError("grid step delta must be positive")
    n = model.n
    gens = [posmat.expm(a - shift * np.eye(n), delta) for a in model.matrices]

    rows = np.eye(n)
    frontier = np.eye(n)
    while frontier.shape[0] > 0:
        cands = np.vstack([frontier @ g for g in gens])
        cands = cands[np.max(cands, axis=1) > _ROW_FLOOR]
        if cands.size == 0:
            break
        if float(np.max(cands)) > _GROWTH_LIMIT:
            raise UnboundedSemigroupError(
                f"sampled semigroup grew beyond {_GROWTH_LIMIT:.0e}: "
                f"shift {shift:.6g} lies below the joint Lyapunov exponent"
            )
        cands = cands[~_dominated(cands, rows)]
        # Self-pruning inside the batch, strongest rows first.
        order = np.argsort(-np.sum(cands, axis=1), kind="stable")
        new: List[np.ndarray] = []
        for idx in order:
            u = cands[idx]
            if new and _dominated(u[None, :], np.asarray(new))[0]:
                continue
            new.append(u)
        if not new:
            break
        new_arr = np.asarray(new)
        # Retire previously kept rows that the new ones dominate, except the
        # protected identity rows.
        tail = rows[n:]
        if tail.shape[0]:
            keep_tail = ~_dominated(tail, new_arr)
            rows = np.vstack([rows[:n], tail[keep_tail]])
        rows = np.vstack([rows, new_arr])
        frontier = new_arr
        if rows.shape[0] > sample_budget:
            raise ConvergenceError(
                f"extremal-norm sampling exceeded budget {sample_budget} rows "
                f"(grid step {delta:.3g}); raise the budget or the shift"
            )
    norm = ExtremalNormApprox(rows=rows, shift=float(shift), delta=float(delta))
    # Closure audit: every one-step image must be dominated by a kept row.
    for g in gens:
        images = rows @ g
        images = images[np.max(images, axis=1) > _ROW_FLOOR]
        if not np.all(_dominated(images, rows)):
            raise ConvergenceError(
                "saturation audit failed: a generator image escaped the row set"
            )
    return norm


# ---------------------------------------------------------------------------
# Dual pairs and certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DualPair:
    """Vectors with <x, y> = v(x) v*(y); y normalized to v*(y) = 1."""

    x: np.ndarray
    y: np.ndarray
    norm_id: str


def dual_vector(norm: Optional[ExtremalNormApprox], x) -> DualPair:
    """A dual vector of x: pick the achieving sampled row, restore signs.

    For the max-of-linear-functionals structure the achieving row w has
    v*(w) = 1 (it is exposed at x), so y = sign(x) * w satisfies
    <x, y> = v(x) exactly.  For x >= 0 this yields y >= 0, matching the
    sign property of dual vectors of absolute norms.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if not np.any(x != 0.0):
        raise ValidationError("dual vector undefined at x = 0")
    if norm is None:
        norm = supremum_norm(x.shape[0])
    z = np.abs(x)
    k = int(np.argmax(norm.rows @ z))
    w = norm.rows[k]
    y = np.where(x < 0.0, -w, w)
    return DualPair(x=x, y=y, norm_id="sup" if norm.delta == 0.0 else "extremal")


@dataclass(frozen=True)
class CertificateReport:
    """Outcome of a sampled certificate check (violations are positive)."""

    ok: bool
    max_value: float
    tol: float
    worst_state: Optional[np.ndarray]
    worst_mode: int
    samples: int


def _sphere_samples(
    norm: ExtremalNormApprox, n: int, samples: int, rng: np.random.Generator
) -> np.ndarray:
    """Random points on the v-unit sphere in the closed positive orthant."""
    dirs = np.abs(rng.standard_normal((samples, n))) + 1e-12
    corners = np.vstack([np.eye(n), np.ones((1, n))])
    dirs = np.vstack([dirs, corners])
    return dirs / norm.value_many(dirs)[:, None]


def verify_nonstrict_lyapunov(
    model: SwitchedSisModel,
    norm: ExtremalNormApprox,
    samples: int = 400,
    seed: int = 0,
    tol: float = 1e-8,
) -> CertificateReport:
    """Check <y, A_j x> <= tol at sampled dual pairs on the v-unit sphere.

    A pass certifies (at the samples) that v does not increase along any
    constituent of the linearisation, i.e. v is a nonstrict Lyapunov
    function for the switched linear system.
    """
    rng = np.random.default_rng(seed)
    pts = _sphere_samples(norm, model.n, samples, rng)
    mats = model.matrices
    worst = -math.inf
    worst_state = None
    worst_mode = 0
    for x in pts:
        y = dual_vector(norm, x).y
        for j, a in enumerate(mats, start=1):
            val = float(y @ (a @ x))
            if val > worst:
                worst, worst_state, worst_mode = val, x.copy(), j
    return CertificateReport(
        ok=worst <= tol,
        max_value=worst,
        tol=tol,
        worst_state=worst_state,
        worst_mode=worst_mode,
        samples=pts.shape[0],
    )


def random_grid_signal(
    m: int,
    delta: float,
    t_max: float,
    rng: np.random.Generator,
) -> SwitchingSignal:
    """Random finite-horizon signal with segment lengths on the delta grid.

    Every duration is an exact multiple of ``delta``, so the certified
    grid-closure of the saturated norm applies to the whole product; the
    realized horizon is the largest grid multiple not exceeding ``t_max``.
    """
    segments = []
    total = 0.0
    while True:
        mult = int(rng.integers(1, 9))
        tau = mult * delta
        if total + tau > t_max and segments:
            break
        segments.append((int(rng.integers(1, m + 1)), float(tau)))
        total += tau
        if total + delta > t_max:
            break
    return SwitchingSignal(SignalKind.PIECEWISE_CONSTANT, tuple(segments))


def check_extremal_inequality(
    model: SwitchedSisModel,
    norm: ExtremalNormApprox,
    trials: int = 1000,
    t_max: float = 5.0,
    seed: int = 0,
    rel_slack: float = 1e-6,
) -> CertificateReport:
    """Sample v(Phi_sigma(t) x) <= e^{shift * t} v(x) (1 + rel_slack).

    Signals are drawn on the norm's duration grid, where the saturated row
    set makes the inequality hold by construction up to pruning tolerance;
    the check guards the whole pipeline (expm, products, evaluation).
    """
    rng = np.random.default_rng(seed)
    worst = -math.inf
    worst_state = None
    for _ in range(trials):
        t_span = float(rng.uniform(0.5, t_max))
        sig = random_grid_signal(model.m, norm.delta, t_span, rng)
        t = sig.duration
        phi = evolution(model, sig, t).matrix
        x = np.abs(rng.standard_normal(model.n)) + 1e-9
        lhs = norm.value(phi @ x)
        rhs = math.exp(norm.shift * t) * norm.value(x)
        excess = lhs / rhs - 1.0
        if excess > worst:
            worst, worst_state = excess, x
    return CertificateReport(
        ok=worst <= rel_slack,
        max_value=worst,
        tol=rel_slack,
        worst_state=worst_state,
        worst_mode=0,
        samples=trials,
    )


# ---------------------------------------------------------------------------
# Strict decrease for the nonlinear system
# ---------------------------------------------------------------------------

def _bump(z: np.ndarray) -> np.ndarray:
    """C-infinity bump: exp(1 - 1/(1-z^2)) inside |z| < 1, zero outside."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    zz = z[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - zz * zz))
    return out


def _bump_prime(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    zz = z[inside]
    one_minus = 1.0 - zz * zz
    out[inside] = np.exp(1.0 - 1.0 / one_minus) * (-2.0 * zz) / (one_minus * one_minus)
    return out


@dataclass(frozen=True)
class DecreaseReport:
    """Worst sampled margin of the boundary-corrected strict Lyapunov check."""

    ok: bool
    worst_margin: float
    worst_state: Optional[np.ndarray]
    worst_mode: int
    ell: float
    big_l: float
    eps: float
    samples: int


def verify_nonlinear_decrease(
    model: SwitchedSisModel,
    norm: Optional[ExtremalNormApprox],
    ell: float,
    big_l: float,
    eps: float,
    samples: int = 400,
    seed: int = 0,
) -> DecreaseReport:
    """Sample the strict decrease <p, f_j(x)> < 0 on the shell v in [ell, L].

    V(x) = v(x) (1 + sum_i psi_eps(x_i)) corrects the plain norm near the
    orthant boundary with a smooth bump psi_eps(z) = psi(z + 1 - eps)
    supported on z < eps; p is the corresponding subgradient element

        p = y (1 + sum_i psi_eps(x_i)) + v(x) sum_{x_i < eps} psi'_eps(x_i) e_i.

    Reports the worst (largest) margin over samples and constituents.
    """
    if not 0.0 < eps < 1.0:
        raise ValidationError(f"eps must lie in (0, 1), got {eps}")
    if not 0.0 < ell < big_l:
        raise ValidationError(f"need 0 < ell < L, got ell={ell}, L={big_l}")
    if norm is None:
        norm = supremum_norm(model.n)
    rng = np.random.default_rng(seed)
    shiftarg = 1.0 - eps

    worst = -math.inf
    worst_state = None
    worst_mode = 0
    for _ in range(samples):
        u = np.abs(rng.standard_normal(model.n)) + 1e-12
        level = float(rng.uniform(ell, big_l))
        x = level * u / norm.value(u)
        v_x = norm.value(x)
        y = dual_vector(norm, x).y
        weight = 1.0 + float(np.sum(_bump(x + shiftarg)))
        correction = v_x * _bump_prime(x + shiftarg)
        p = y * weight + correction
        for j, mod in enumerate(model.models, start=1):
            margin = float(p @ vector_field(mod, x))
            if margin > worst:
                worst, worst_state, worst_mode = margin, x.copy(), j
    return DecreaseReport(
        ok=worst < 0.0,
        worst_margin=worst,
        worst_state=worst_state,
        worst_mode=worst_mode,
        ell=ell,
        big_l=big_l,
        eps=eps,
        samples=samples,
    )
