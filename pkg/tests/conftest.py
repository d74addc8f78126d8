"""Shared desk-scale fixtures and random model generators."""

import numpy as np
import pytest

from episwitch.model import SisModel
from episwitch.signals import SwitchedSisModel


@pytest.fixture
def scalar_endemic():
    """Scalar model with R0 = 2 and endemic point 0.5."""
    return SisModel(d=[1.0], b=[[2.0]])


@pytest.fixture
def scalar_stable():
    """Scalar model with R0 = 0.5; the DFE attracts everything."""
    return SisModel(d=[2.0], b=[[1.0]])


@pytest.fixture
def cross_pair():
    """Two stable constituents whose average is unstable.

    B matrices couple the two groups in opposite directions; each
    -I + B_j has abscissa -1 + sqrt(0.3) < 0, their mean has +0.55.
    """
    a = SisModel(d=[1.0, 1.0], b=[[0.0, 0.1], [3.0, 0.0]])
    b = SisModel(d=[1.0, 1.0], b=[[0.0, 3.0], [0.1, 0.0]])
    return SwitchedSisModel((a, b))


@pytest.fixture
def unstable_diag_pair():
    """Constituents with abscissae diag(1,-3) / diag(-3,1): each unstable,
    the 50/50 average is diag(-1,-1)."""
    a = SisModel(d=[1.0, 3.0], b=np.diag([2.0, 0.0]))
    b = SisModel(d=[3.0, 1.0], b=np.diag([0.0, 2.0]))
    return SwitchedSisModel((a, b))


@pytest.fixture
def markov_scalar_pair():
    """Scalar constituents with linearisations [-1] and [-2]."""
    return SwitchedSisModel((SisModel(d=[2.0], b=[[1.0]]),
                             SisModel(d=[3.0], b=[[1.0]])))


def random_metzler(rng, n, stable_margin=None):
    """Random Metzler matrix; optionally resampled until mu <= -stable_margin."""
    for _ in range(200):
        a = rng.uniform(0.0, 0.5, size=(n, n))
        a[rng.uniform(size=(n, n)) < 0.4] = 0.0
        np.fill_diagonal(a, -rng.uniform(0.5, 3.0, size=n))
        if stable_margin is None:
            return a
        if np.max(np.linalg.eigvals(a).real) <= -stable_margin:
            return a
    raise AssertionError("could not sample a sufficiently stable Metzler matrix")


def random_sis_model(rng, n, irreducible=True):
    """Random SIS model; a ring in B guarantees irreducibility if asked."""
    b = rng.uniform(0.0, 1.0, size=(n, n))
    b[rng.uniform(size=(n, n)) < 0.4] = 0.0
    if irreducible:
        for i in range(n):
            b[i, (i + 1) % n] = max(b[i, (i + 1) % n], 0.2)
    d = rng.uniform(0.5, 2.0, size=n)
    return SisModel(d=d, b=b)


def random_stable_family(rng, n=3, m=2, margin=0.5, coupling=0.35):
    """Random switched family, every constituent Hurwitz with margin and the
    union infection graph strongly connected."""
    for _ in range(200):
        mods = []
        ok = True
        for _ in range(m):
            b = rng.uniform(0.0, coupling, size=(n, n))
            b[rng.uniform(size=(n, n)) < 0.4] = 0.0
            for i in range(n):
                b[i, (i + 1) % n] = max(b[i, (i + 1) % n], 0.1)
            d = rng.uniform(1.2, 2.5, size=n)
            mod = SisModel(d=d, b=b)
            if np.max(np.linalg.eigvals(mod.a).real) > -margin:
                ok = False
                break
            mods.append(mod)
        if ok:
            return SwitchedSisModel(tuple(mods))
    raise AssertionError("could not sample a stable switched family")
