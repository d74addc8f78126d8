"""Joint Lyapunov exponent estimators and extremal-norm certificates."""

import numpy as np
import pytest
import scipy.optimize

from episwitch import posmat
from episwitch.errors import EpiSwitchError, UnboundedSemigroupError, ValidationError
from episwitch.jle import (
    build_extremal_norm,
    check_extremal_inequality,
    dual_vector,
    estimate_jle,
    jle_lower_bound,
    jle_upper_bound,
    supremum_norm,
    verify_nonlinear_decrease,
    verify_nonstrict_lyapunov,
)
from episwitch.model import SisModel
from episwitch.signals import SwitchedSisModel

from conftest import random_metzler, random_stable_family


def _singleton(a: np.ndarray) -> SwitchedSisModel:
    """Wrap a Metzler matrix A as the SIS family with -D + B = A."""
    d = -np.diag(a)
    assert np.min(d) > 0.0, "test matrices need negative diagonals"
    b = a - np.diag(np.diag(a))
    return SwitchedSisModel((SisModel(d=d, b=b),))


class TestLowerBound:
    def test_singleton_diagonal(self):
        sw = _singleton(np.diag([-1.0, -2.0]))
        lo, wit = jle_lower_bound(sw)
        assert lo == pytest.approx(-1.0, abs=1e-6)
        assert wit.segments[0][0] == 1

    def test_decoupled_diagonal_pair(self):
        m1 = SisModel(d=[1.0, 2.0], b=np.zeros((2, 2)))
        m2 = SisModel(d=[2.0, 1.0], b=np.zeros((2, 2)))
        lo, _ = jle_lower_bound(SwitchedSisModel((m1, m2)), budget=100)
        assert lo == pytest.approx(-1.0, abs=1e-3)

    def test_fast_switching_instability_found(self, cross_pair):
        lo, wit = jle_lower_bound(cross_pair, budget=200, seed=0)
        assert lo > 0.0
        assert wit.duration < 0.5  # short-period witness

    def test_never_below_constant_exponents(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            fam = random_stable_family(rng, n=3, m=3, margin=0.1)
            lo, _ = jle_lower_bound(fam, budget=60, seed=1)
            best_mu = max(posmat.spectral_abscissa(a) for a in fam.matrices)
            assert lo >= best_mu - 1e-9

    def test_seed_reproducible(self, cross_pair):
        a = jle_lower_bound(cross_pair, budget=80, seed=5)
        b = jle_lower_bound(cross_pair, budget=80, seed=5)
        assert a[0] == b[0] and a[1] == b[1]


class TestUpperBound:
    def test_singleton_diagonal_tight(self):
        sw = _singleton(np.diag([-1.0, -2.0]))
        up = jle_upper_bound(sw, t_block=8.0, depth=5)
        assert -1.0 <= up <= -1.0 + 0.05

    def test_common_contraction_exact(self):
        m = SisModel(d=[1.0, 1.0], b=np.zeros((2, 2)))  # A = -I
        sw = SwitchedSisModel((m, m))
        up = jle_upper_bound(sw, t_block=2.0, depth=3)
        assert up == pytest.approx(-1.0, abs=1e-12)

    def test_diagonal_pair_approaches_minus_one(self):
        m1 = SisModel(d=[1.0, 2.0], b=np.zeros((2, 2)))
        m2 = SisModel(d=[2.0, 1.0], b=np.zeros((2, 2)))
        sw = SwitchedSisModel((m1, m2))
        up = jle_upper_bound(sw, t_block=4.0, depth=5)
        assert up >= -1.0 - 1e-12
        assert up < -0.9

    def test_combinatorial_budget_enforced(self, cross_pair):
        with pytest.raises(ValidationError, match="budget"):
            jle_upper_bound(cross_pair, t_block=1.0, depth=21)

    def test_estimate_bracket_ordering(self, cross_pair):
        est = estimate_jle(cross_pair, budget=100, seed=0)
        assert est.lower <= est.upper


class TestExtremalNorm:
    def test_pure_contraction_reduces_to_sup(self):
        sw = _singleton(-np.eye(2))
        norm = build_extremal_norm(sw, shift=0.0)
        assert norm.rows.shape == (2, 2)
        assert norm.contains_identity

    def test_semistable_diagonal_reduces_to_sup(self):
        norm = build_extremal_norm(_singleton(np.diag([-1e-9, -1.0])), shift=0.0)
        x = np.array([0.3, 0.9])
        assert norm.value(x) == pytest.approx(0.9)

    def test_absoluteness_by_construction(self, cross_pair):
        norm = build_extremal_norm(cross_pair, shift=0.7)
        rng = np.random.default_rng(33)
        for _ in range(50):
            x = rng.standard_normal(2)
            assert norm.value(x) == norm.value(np.abs(x))

    def test_monotone_on_orthant(self, cross_pair):
        norm = build_extremal_norm(cross_pair, shift=0.7)
        rng = np.random.default_rng(34)
        for _ in range(50):
            x = rng.uniform(0.0, 1.0, 2)
            y = x + rng.uniform(0.0, 1.0, 2)
            assert norm.value(x) <= norm.value(y) + 1e-15

    def test_norm_axioms(self, cross_pair):
        norm = build_extremal_norm(cross_pair, shift=0.7)
        rng = np.random.default_rng(35)
        for _ in range(100):
            x, y = rng.standard_normal(2), rng.standard_normal(2)
            c = float(rng.uniform(0.1, 5.0))
            assert norm.value(c * x) == pytest.approx(c * norm.value(x), rel=1e-12)
            assert norm.value(x + y) <= norm.value(x) + norm.value(y) + 1e-12
        assert norm.value(np.zeros(2)) == 0.0

    def test_shift_below_jle_detected(self):
        # strongly unstable singleton at shift 0 must blow up
        sw = _singleton(np.array([[-0.5, 3.0], [3.0, -0.5]]))
        with pytest.raises(UnboundedSemigroupError, match="below the joint"):
            build_extremal_norm(sw, shift=0.0)

    def test_budget_exhaustion_reported(self, cross_pair):
        with pytest.raises(EpiSwitchError):
            build_extremal_norm(cross_pair, shift=0.0, sample_budget=500)


class TestDualPairs:
    def test_sup_norm_achieving_coordinate(self):
        pair = dual_vector(None, np.array([1.0, 0.0]))
        assert np.array_equal(pair.y, [1.0, 0.0])
        pair = dual_vector(None, np.array([0.5, 1.0]))
        assert np.array_equal(pair.y, [0.0, 1.0])

    def test_sign_property_on_orthant(self, cross_pair):
        norm = build_extremal_norm(cross_pair, shift=0.7)
        rng = np.random.default_rng(36)
        for _ in range(100):
            x = rng.uniform(0.0, 1.0, 2) + 1e-6
            y = dual_vector(norm, x).y
            assert np.min(y) >= 0.0

    def test_negative_components_flip_sign(self):
        pair = dual_vector(None, np.array([-2.0, 1.0]))
        assert pair.y[0] <= 0.0
        assert pair.x @ pair.y == pytest.approx(2.0)

    def test_zero_rejected(self):
        with pytest.raises(ValidationError):
            dual_vector(None, np.zeros(3))

    def test_duality_identity_via_lp_oracle(self, cross_pair):
        """<x,y> = v(x) v*(y) with v*(y) evaluated by linear programming.

        For the polytope norm v(z) = max_w <w, |z|>, the dual norm at
        y >= 0 is max(<y, xM>) over the section {x >= 0, R x <= 1} of the unit
        ball, an LP independent of the dual_vector construction.
        """
        norm = build_extremal_norm(cross_pair, shift=0.7)
        rng = np.random.default_rng(37)
        for _ in range(20):
            x = rng.uniform(0.05, 1.0, 2)
            pair = dual_vector(norm, x)
            res = scipy.optimize.linprog(
                -pair.y, A_ub=norm.rows, b_ub=np.ones(norm.rows.shape[0]),
                bounds=[(0, None)] * 2, method="highs")
            assert res.status == 0
            v_dual = -res.fun
            assert v_dual == pytest.approx(1.0, abs=1e-9)
            assert float(x @ pair.y) == pytest.approx(norm.value(x) * v_dual, rel=1e-9)


class TestCertificates:
    def test_identity_contraction_passes(self):
        sw = _singleton(-np.eye(2))
        rep = verify_nonstrict_lyapunov(sw, supremum_norm(2), samples=100, seed=0)
        assert rep.ok and rep.max_value <= -1.0 + 1e-12

    def test_stable_diagonal_pair_passes(self):
        m1 = SisModel(d=[1.0, 2.0], b=np.zeros((2, 2)))
        m2 = SisModel(d=[2.0, 1.0], b=np.zeros((2, 2)))
        sw = SwitchedSisModel((m1, m2))
        rep = verify_nonstrict_lyapunov(sw, supremum_norm(2), samples=100, seed=0)
        assert rep.ok

    def test_unstable_family_with_sup_norm_fails(self, cross_pair):
        rep = verify_nonstrict_lyapunov(cross_pair, supremum_norm(2), samples=200, seed=0)
        assert not rep.ok and rep.max_value > 0.0
        assert rep.worst_state is not None

    def test_extremal_inequality_on_stable_family(self):
        rng = np.random.default_rng(38)
        fam = random_stable_family(rng, n=3)
        shift = jle_upper_bound(fam, t_block=4.0, depth=5)
        norm = build_extremal_norm(fam, shift=shift)
        rep = check_extremal_inequality(fam, norm, trials=200, seed=1)
        assert rep.ok, f"excess {rep.max_value}"


class TestNonlinearDecrease:
    def test_subcritical_scalar_all_negative(self, scalar_stable):
        sw = SwitchedSisModel((scalar_stable,))
        rep = verify_nonlinear_decrease(sw, None, ell=0.01, big_l=1.0, eps=1e-3,
                                        samples=200, seed=0)
        assert rep.ok and rep.worst_margin < 0.0

    def test_supercritical_scalar_flags_instability(self, scalar_endemic):
        sw = SwitchedSisModel((scalar_endemic,))
        rep = verify_nonlinear_decrease(sw, None, ell=0.001, big_l=0.2, eps=1e-3,
                                        samples=300, seed=0)
        assert not rep.ok and rep.worst_margin > 0.0

    def test_eps_validated(self, scalar_stable):
        sw = SwitchedSisModel((scalar_stable,))
        with pytest.raises(ValidationError, match="eps"):
            verify_nonlinear_decrease(sw, None, ell=0.01, big_l=1.0, eps=1.5)

    def test_shell_validated(self, scalar_stable):
        sw = SwitchedSisModel((scalar_stable,))
        with pytest.raises(ValidationError, match="ell"):
            verify_nonlinear_decrease(sw, None, ell=1.0, big_l=0.5, eps=0.1)


def test_singleton_brackets_on_random_stable_metzler():
    rng = np.random.default_rng(39)
    for _ in range(10):
        n = int(rng.integers(2, 5))
        a = random_metzler(rng, n, stable_margin=0.2)
        sw = _singleton(a)
        mu = posmat.spectral_abscissa(a)
        lo, _ = jle_lower_bound(sw)
        up = jle_upper_bound(sw, t_block=8.0, depth=5)
        assert lo <= mu + 1e-9 <= up + 1e-9
        assert up - lo < 0.1
