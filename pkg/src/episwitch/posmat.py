"""Positive/Metzler matrix core.

Classification, spectra, irreducibility, matrix exponentials and Kronecker
products used by every other module.  A matrix is Metzler when all its
off-diagonal entries are nonnegative; such matrices generate positive linear
flows (e^{At} >= 0 entrywise for t >= 0).

All functions accept anything convertible to a square float array and are
pure; matrices up to a few hundred rows are the intended scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.csgraph

from .errors import ConvergenceError, DimensionError, ValidationError

__all__ = [
    "SpectralReport",
    "InverseSignReport",
    "as_square_matrix",
    "is_metzler",
    "spectral_abscissa",
    "spectral_radius",
    "spectral_report",
    "is_irreducible",
    "union_graph_strongly_connected",
    "expm",
    "kron_with_identity",
    "neg_inverse_nonpositive",
]


def as_square_matrix(a) -> np.ndarray:
    """Validate and return ``a`` as an (n, n) float64 array."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] < 1:
        raise DimensionError("matrix dimension must be >= 1")
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix entries must be finite")
    return m


@dataclass(frozen=True)
class SpectralReport:
    """Spectral abscissa mu(A), spectral radius rho(A) and the Hurwitz flag."""

    abscissa: float
    radius: float
    hurwitz: bool


@dataclass(frozen=True)
class InverseSignReport:
    """Result of the inverse-sign test for Metzler stability.

    ``nonpositive`` is True iff the matrix is invertible with A^{-1} <= 0
    entrywise.  A singular matrix yields ``nonpositive=False`` with the
    ``singular`` flag set instead of an exception (the mu(A)=0 boundary).
    """

    nonpositive: bool
    singular: bool


def is_metzler(a, tol: float = 0.0) -> bool:
    """True iff all off-diagonal entries are >= -tol."""
    m = as_square_matrix(a)
    off = m - np.diag(np.diag(m))
    return bool(np.min(off) >= -tol)


def _eigvals(m: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceError(
            f"eigenvalue iteration failed on a {m.shape[0]}x{m.shape[0]} "
            f"matrix: {exc}"
        ) from exc


def spectral_abscissa(a) -> float:
    """mu(A) = max Re(lambda) over the spectrum of A."""
    m = as_square_matrix(a)
    if m.shape[0] == 1:
        return float(m[0, 0])
    return float(np.max(_eigvals(m).real))


def spectral_radius(a) -> float:
    """rho(A) = max |lambda|; for nonnegative A this is the Perron root."""
    m = as_square_matrix(a)
    if m.shape[0] == 1:
        return float(abs(m[0, 0]))
    return float(np.max(np.abs(_eigvals(m))))


def spectral_report(a) -> SpectralReport:
    """Abscissa, radius and Hurwitz flag in one eigenvalue pass."""
    m = as_square_matrix(a)
    lam = _eigvals(m)
    mu = float(np.max(lam.real))
    return SpectralReport(abscissa=mu, radius=float(np.max(np.abs(lam))), hurwitz=mu < 0.0)


def is_irreducible(a) -> bool:
    """True iff the off-diagonal adjacency graph of A is strongly connected.

    Edge (i, j) exists when i != j and a_ij != 0 (exact zero test: entries
    are exact inputs, structure is not a numerical property).  Uses Tarjan's
    strongly-connected-components algorithm via scipy.csgraph.
    """
    m = as_square_matrix(a)
    n = m.shape[0]
    if n == 1:
        return True
    adj = (m != 0.0)
    np.fill_diagonal(adj, False)
    graph = scipy.sparse.csr_matrix(adj)
    ncomp = scipy.sparse.csgraph.connected_components(
        graph, directed=True, connection="strong", return_labels=False
    )
    return int(ncomp) == 1


def union_graph_strongly_connected(mats: Sequence) -> bool:
    """True iff the union graph of a family of Metzler matrices is strongly connected.

    The union graph has edge (i, j), i != j, when some member has a_ij > 0;
    equivalently the entrywise maximum of the off-diagonal patterns is
    irreducible.
    """
    if len(mats) == 0:
        raise ValidationError("empty matrix family")
    ms = [as_square_matrix(m) for m in mats]
    n = ms[0].shape[0]
    for m in ms[1:]:
        if m.shape[0] != n:
            raise DimensionError(
                f"family mixes dimensions {n} and {m.shape[0]}"
            )
    pattern = np.zeros((n, n))
    for m in ms:
        pattern = np.maximum(pattern, m - np.diag(np.diag(m)))
    return is_irreducible(pattern)


def expm(a, t: float = 1.0) -> np.ndarray:
    """e^{At} by scaling-and-squaring with Pade approximation.

    For Metzler A and t >= 0 the result is entrywise nonnegative; tiny
    negative round-off is clipped to zero so downstream positivity
    reasoning stays exact.
    """
    m = as_square_matrix(a)
    if not np.isfinite(t):
        raise ValidationError("time t must be finite")
    result = scipy.linalg.expm(m * t)
    if not np.all(np.isfinite(result)):
        raise ConvergenceError(
            f"matrix exponential overflowed (scaled norm {np.max(np.abs(m)) * abs(t):.3e})"
        )
    if t >= 0.0 and is_metzler(m):
        result = np.maximum(result, 0.0)
    return result


def kron_with_identity(pi, n: int) -> np.ndarray:
    """Block matrix with blocks pi_ij * I_n (the Kronecker product pi (x) I_n)."""
    p = as_square_matrix(pi)
    if n < 1:
        raise DimensionError("identity dimension must be >= 1")
    return np.kron(p, np.eye(n))


def neg_inverse_nonpositive(a, tol: float = 1e-12) -> InverseSignReport:
    """Test whether A is invertible with A^{-1} <= 0 entrywise.

    For Metzler A this is equivalent to A being Hurwitz, which makes the
    test a spectrum-free stability check.  Singularity is reported via the
    flag rather than raised: the mu(A) = 0 boundary is a meaningful outcome.
    """
    m = as_square_matrix(a)
    n = m.shape[0]
    # Rank-revealing check before the solve; cond-based cutoff keeps the
    # boundary case deterministic.
    sv = np.linalg.svd(m, compute_uv=False)
    if sv[-1] <= tol * max(1.0, sv[0]):
        return InverseSignReport(nonpositive=False, singular=True)
    inv = np.linalg.solve(m, np.eye(n))
    scale = max(1.0, float(np.max(np.abs(inv))))
    return InverseSignReport(
        nonpositive=bool(np.max(inv) <= tol * scale), singular=False
    )
