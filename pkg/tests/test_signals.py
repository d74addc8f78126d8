"""Switching signals and evolution operators."""

import numpy as np
import pytest

from episwitch import posmat
from episwitch.errors import ValidationError
from episwitch.model import SisModel
from episwitch.signals import (
    SignalKind,
    SwitchedSisModel,
    SwitchingSignal,
    constant_signal,
    evaluate,
    evolution,
    periodic_from_weights,
)

from conftest import random_stable_family


class TestConstruction:
    def test_weights_to_segments(self):
        sig = periodic_from_weights([0.5, 0.5], 1.0)
        assert sig.segments == ((1, 0.5), (2, 0.5))
        assert sig.kind is SignalKind.PERIODIC

    def test_zero_weight_dropped(self):
        sig = periodic_from_weights([1.0, 0.0], 2.0)
        assert sig.segments == ((1, 2.0),)

    def test_fractional_weights(self):
        sig = periodic_from_weights([0.25, 0.75], 0.4)
        assert sig.segments[0] == (1, pytest.approx(0.1))
        assert sig.segments[1] == (2, pytest.approx(0.3))

    def test_bad_weight_sum_rejected(self):
        with pytest.raises(ValidationError, match="sum"):
            periodic_from_weights([0.5, 0.6], 1.0)

    def test_nonpositive_duration_rejected(self):
        with pytest.raises(ValidationError):
            SwitchingSignal(SignalKind.PERIODIC, ((1, 0.0),))

    def test_json_round_trip(self):
        sig = periodic_from_weights([0.3, 0.7], 2.5)
        assert SwitchingSignal.from_json(sig.to_json()) == sig


class TestEvaluate:
    def test_right_continuous_at_switch(self):
        sig = periodic_from_weights([0.5, 0.5], 1.0)
        assert evaluate(sig, 0.5) == 2

    def test_periodic_wrap(self):
        sig = periodic_from_weights([0.5, 0.5], 1.0)
        assert evaluate(sig, 1.0) == 1

    def test_just_before_switch(self):
        sig = periodic_from_weights([0.5, 0.5], 1.0)
        assert evaluate(sig, 0.49999) == 1

    def test_finite_horizon_overrun(self):
        sig = SwitchingSignal(SignalKind.PIECEWISE_CONSTANT, ((1, 1.0), (2, 0.5)))
        assert evaluate(sig, 1.2) == 2
        with pytest.raises(ValidationError, match="horizon"):
            evaluate(sig, 2.0)


class TestEvolution:
    def test_zero_horizon_identity(self, cross_pair):
        sig = periodic_from_weights([0.5, 0.5], 1.0)
        assert np.array_equal(evolution(cross_pair, sig, 0.0).matrix, np.eye(2))

    def test_single_constituent_matches_expm(self, scalar_endemic):
        sw = SwitchedSisModel((scalar_endemic,))
        for t in (0.3, 1.7, 6.0):
            phi = evolution(sw, constant_signal(1), t).matrix
            assert np.allclose(phi, posmat.expm(scalar_endemic.a, t), rtol=1e-12)

    def test_commuting_diagonal_pair(self):
        m1 = SisModel(d=[1.0, 2.0], b=np.zeros((2, 2)))
        m2 = SisModel(d=[2.0, 1.0], b=np.zeros((2, 2)))
        sw = SwitchedSisModel((m1, m2))
        sig = periodic_from_weights([0.5, 0.5], 1.0)
        phi = evolution(sw, sig, 1.0).matrix
        assert np.allclose(phi, np.diag([np.exp(-1.5), np.exp(-1.5)]), rtol=1e-12)

    def test_semigroup_property_at_period_boundaries(self):
        rng = np.random.default_rng(9)
        fam = random_stable_family(rng)
        sig = periodic_from_weights([0.4, 0.6], 0.8)
        # t a whole number of periods: sigma(. + t) = sigma, so
        # Phi(t + s) = Phi(s) Phi(t).
        t, s = 1.6, 1.2
        lhs = evolution(fam, sig, t + s).matrix
        rhs = evolution(fam, sig, s).matrix @ evolution(fam, sig, t).matrix
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_nonnegative_for_metzler_families(self):
        rng = np.random.default_rng(10)
        for _ in range(25):
            fam = random_stable_family(rng, n=int(rng.integers(2, 5)))
            kappa = rng.dirichlet(np.ones(fam.m))
            kappa = (kappa + 0.01) / np.sum(kappa + 0.01)
            sig = periodic_from_weights(kappa, float(rng.uniform(0.2, 2.0)))
            phi = evolution(fam, sig, float(rng.uniform(0.0, 8.0))).matrix
            assert np.min(phi) >= 0.0

    def test_long_horizon_power_shortcut_consistent(self, cross_pair):
        sig = periodic_from_weights([0.5, 0.5], 0.25)
        fast = evolution(cross_pair, sig, 5.125).matrix
        slow = np.eye(2)
        from episwitch.signals import iter_segments
        for j, a, b in iter_segments(sig, 5.125):
            slow = posmat.expm(cross_pair.matrices[j - 1], b - a) @ slow
        assert np.allclose(fast, slow, rtol=1e-10, atol=1e-14)

    def test_mode_beyond_family_rejected(self, cross_pair):
        with pytest.raises(ValidationError, match="mode"):
            evolution(cross_pair, constant_signal(3), 1.0)
