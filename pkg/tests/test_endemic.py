"""Averaging, simplex search, persistence, periodic orbits, stabilization."""

import numpy as np
import pytest

from episwitch import posmat
from episwitch.endemic import (
    averaged_model,
    averaging_bound,
    averaging_gap,
    find_combination,
    periodic_orbit,
    persistence_construction,
    stabilize,
)
from episwitch.errors import HypothesisError
from episwitch.model import SisModel, endemic_equilibrium, vector_field
from episwitch.signals import (
    SwitchedSisModel,
    constant_signal,
    evaluate,
    evolution,
    periodic_from_weights,
)
from episwitch.simulate import IntegratorConfig, integrate

from conftest import random_sis_model


class TestAveragedModel:
    def test_unit_weight_returns_constituent(self, cross_pair):
        avg = averaged_model(cross_pair, [1.0, 0.0])
        assert np.array_equal(avg.b, cross_pair.models[0].b)
        assert np.array_equal(avg.d, cross_pair.models[0].d)

    def test_entrywise_average(self, cross_pair):
        avg = averaged_model(cross_pair, [0.5, 0.5])
        assert np.allclose(avg.b, [[0.0, 1.55], [1.55, 0.0]])
        assert np.allclose(avg.d, [1.0, 1.0])

    def test_time_average_identity_by_quadrature(self, cross_pair):
        """Riemann-sum oracle: (1/T) integral of f_sigma(s)(x) ds = f_hat(x)."""
        kappa = np.array([0.3, 0.7])
        period = 0.8
        sig = periodic_from_weights(kappa, period)
        avg = averaged_model(cross_pair, kappa)
        rng = np.random.default_rng(40)
        grid = (np.arange(8000) + 0.5) * (period / 8000)
        for _ in range(10):
            x = rng.uniform(0.0, 1.0, 2)
            acc = np.zeros(2)
            for s in grid:
                acc += vector_field(cross_pair.constituent(evaluate(sig, s)), x)
            acc /= len(grid)
            assert np.max(np.abs(acc - vector_field(avg, x))) < 1e-10


class TestAveragingBound:
    def test_linear_in_period(self, cross_pair):
        b1 = averaging_bound(cross_pair, [0.5, 0.5], 0.01)
        b2 = averaging_bound(cross_pair, [0.5, 0.5], 0.02)
        assert b2.bound_value == pytest.approx(2.0 * b1.bound_value, rel=1e-12)

    def test_constants_dominate_grid_oracle(self, scalar_endemic):
        """Dense-grid maxima of |f| and |J| never exceed the certified K, r."""
        sw = SwitchedSisModel((scalar_endemic,))
        bound = averaging_bound(sw, [1.0], 1.0)
        xs = np.linspace(0.0, 1.0, 10_000)
        f_max = max(abs(vector_field(scalar_endemic, [x])[0]) for x in xs)
        from episwitch.model import jacobian
        j_max = max(abs(jacobian(scalar_endemic, [x])[0, 0]) for x in xs)
        assert bound.sup_bound >= f_max
        assert bound.lipschitz >= j_max

    def test_constants_dominate_grid_oracle_multigroup(self):
        rng = np.random.default_rng(41)
        from episwitch.model import jacobian
        for _ in range(20):
            m = random_sis_model(rng, 3)
            sw = SwitchedSisModel((m,))
            bound = averaging_bound(sw, [1.0], 1.0)
            for _ in range(200):
                x = rng.uniform(0.0, 1.0, 3)
                assert np.max(np.abs(vector_field(m, x))) <= bound.sup_bound + 1e-12
                assert np.max(np.sum(np.abs(jacobian(m, x)), axis=1)) <= bound.lipschitz + 1e-12

    def test_empirical_gap_below_bound(self, cross_pair):
        rng = np.random.default_rng(42)
        kappa = np.array([0.5, 0.5])
        avg = averaged_model(cross_pair, kappa)
        for _ in range(10):
            period = float(rng.uniform(0.001, 0.01))
            x0 = rng.uniform(0.0, 1.0, 2)
            sig = periodic_from_weights(kappa, period)
            gap = averaging_gap(cross_pair, avg, sig, x0)
            assert gap < averaging_bound(cross_pair, kappa, period).bound_value


class TestFindCombination:
    def test_destabilizing_combination_on_cross_pair(self, cross_pair):
        for a in cross_pair.matrices:
            assert posmat.spectral_abscissa(a) == pytest.approx(-1.0 + np.sqrt(0.3), abs=1e-12)
        comb = find_combination(cross_pair, "positive")
        assert comb is not None
        assert comb.abscissa >= 0.55 - 1e-6
        assert np.allclose(comb.r, comb.b_hat - np.diag(comb.d_hat))

    def test_stabilizing_combination_on_diagonal_pair(self, unstable_diag_pair):
        comb = find_combination(unstable_diag_pair, "negative")
        assert comb is not None
        assert comb.abscissa <= -1.0 + 1e-6

    def test_single_stable_model_has_no_positive_hull(self, scalar_stable):
        sw = SwitchedSisModel((scalar_stable,))
        assert find_combination(sw, "positive") is None


class TestPersistence:
    def test_construction_on_cross_pair(self, cross_pair):
        res = persistence_construction(cross_pair, [0.5, 0.5])
        assert res.delta > 0.0
        assert np.log2(1.0 / res.period) == pytest.approx(round(np.log2(1.0 / res.period)))
        # one-period advance strictly increases the floor point
        end = integrate(cross_pair, res.signal, res.floor_point, 1.0).terminal
        assert np.all(end > res.floor_point)

    def test_long_run_floor(self, cross_pair):
        res = persistence_construction(cross_pair, [0.5, 0.5])
        traj = integrate(cross_pair, res.signal, res.floor_point, 20.0)
        assert np.min(traj.states) >= res.delta * (1.0 - 1e-6)

    def test_scaled_start_keeps_scaled_floor(self, cross_pair):
        res = persistence_construction(cross_pair, [0.5, 0.5])
        lam = 0.5
        traj = integrate(cross_pair, res.signal, lam * res.floor_point, 20.0)
        assert np.min(traj.states) >= lam * res.delta * (1.0 - 1e-6)

    def test_requires_unstable_combination(self, cross_pair):
        with pytest.raises(HypothesisError, match="mu\\(R\\)"):
            persistence_construction(cross_pair, [1.0, 0.0])


class TestPeriodicOrbit:
    def test_orbit_on_cross_pair(self, cross_pair):
        orbit = periodic_orbit(cross_pair, [0.5, 0.5])
        assert orbit.residual <= 1e-10
        assert orbit.interior_margin > 0.0
        for mod in cross_pair.models:
            assert np.max(np.abs(vector_field(mod, orbit.x_star))) > 1e-9

    def test_orbit_closes_at_integer_times(self, cross_pair):
        orbit = periodic_orbit(cross_pair, [0.5, 0.5])
        traj = integrate(cross_pair, orbit.signal, orbit.x_star, 3.0)
        for k in (1.0, 2.0, 3.0):
            idx = int(np.argmin(np.abs(traj.times - k)))
            assert traj.times[idx] == pytest.approx(k, abs=1e-12)
            assert np.max(np.abs(traj.states[idx] - orbit.x_star)) < 1e-8

    def test_single_stable_constituent_rejected(self, scalar_stable):
        sw = SwitchedSisModel((scalar_stable,))
        with pytest.raises(HypothesisError):
            periodic_orbit(sw, [1.0])

    def test_unstable_constituent_rejected(self, cross_pair, scalar_endemic):
        fam = SwitchedSisModel((
            SisModel(d=[1.0, 1.0], b=[[0.0, 2.0], [2.0, 0.0]]),
            cross_pair.models[0],
        ))
        with pytest.raises(HypothesisError, match="stable"):
            periodic_orbit(fam, [0.5, 0.5])


class TestStabilize:
    def test_diagonal_pair_contracts(self, unstable_diag_pair):
        res = stabilize(unstable_diag_pair)
        assert 0.0 < res.alpha < 1.0
        # commuting diagonal exponentials: Phi(T) = e^{-T} I on the balanced split
        assert res.alpha == pytest.approx(np.exp(-res.period), rel=1e-9)
        phi = evolution(unstable_diag_pair, res.signal, res.period).matrix
        assert np.all(phi @ res.v <= res.alpha * res.v + 1e-12)
        assert np.min(res.v) > 1.0

    def test_iterated_contraction(self, unstable_diag_pair):
        res = stabilize(unstable_diag_pair)
        phi = evolution(unstable_diag_pair, res.signal, res.period).matrix
        power = np.eye(2)
        for k in range(1, 11):
            power = phi @ power
            assert np.all(power @ res.v <= res.alpha ** k * res.v * (1.0 + 1e-9))

    def test_nonlinear_decay_from_corner(self, unstable_diag_pair):
        res = stabilize(unstable_diag_pair)
        traj = integrate(unstable_diag_pair, res.signal, np.ones(2), 20.0)
        assert np.max(np.abs(traj.terminal)) < 1e-4

    def test_rejects_stable_constituent(self, cross_pair):
        with pytest.raises(HypothesisError, match="unstable"):
            stabilize(cross_pair)

    def test_rejects_family_without_hurwitz_hull(self, scalar_endemic):
        sw = SwitchedSisModel((scalar_endemic,))
        with pytest.raises(HypothesisError, match="Hurwitz"):
            stabilize(sw)
