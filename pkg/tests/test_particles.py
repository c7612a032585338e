import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftflow.models import Likelihood, linear_likelihood
from driftflow.particles import (
    DegenerateWeightsError,
    ParticleSet,
    bayes_reweight,
    effective_sample_size,
    make_equal_weight,
    weighted_mean,
)

from conftest import table_likelihood


class TestMakeEqualWeight:
    def test_three_points(self):
        s = make_equal_weight([0.0, 1.0, 2.0])
        np.testing.assert_array_equal(s.weights, [1 / 3] * 3)
        np.testing.assert_array_equal(s.locations[:, 0], [0, 1, 2])
        assert s.dim == 1 and s.count == 3

    def test_single(self):
        s = make_equal_weight([5.0])
        assert s.weights.tolist() == [1.0]

    def test_two_dimensional(self):
        s = make_equal_weight([(0, 0), (1, 1)])
        assert s.dim == 2
        assert s.weights.tolist() == [0.5, 0.5]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            make_equal_weight([])

    def test_ragged_rejected(self):
        with pytest.raises(ValueError):
            make_equal_weight([(0, 0), (1,)])


def test_particle_set_is_immutable():
    s = make_equal_weight([1.0, 2.0])
    with pytest.raises(ValueError):
        s.weights[0] = 3.0


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        ParticleSet([1.5, -0.5], [[0.0], [1.0]])


class TestBayesReweight:
    def test_hand_normalized(self):
        s = make_equal_weight([0.0, 1.0])
        out = bayes_reweight(s, table_likelihood([1, 3]), 1.0)
        np.testing.assert_allclose(out.weights, [0.25, 0.75], rtol=0, atol=1e-15)

    def test_tempering(self):
        s = make_equal_weight([0.0, 1.0])
        out = bayes_reweight(s, table_likelihood([1, 9]), 0.5)
        np.testing.assert_allclose(out.weights, [0.25, 0.75], rtol=0, atol=1e-15)

    @pytest.mark.parametrize("gamma", [0.1, 0.5, 1.0])
    def test_constant_likelihood(self, gamma):
        s = ParticleSet([0.2, 0.3, 0.5], [[0.0], [1.0], [2.0]])
        out = bayes_reweight(s, table_likelihood([4, 4, 4]), gamma)
        np.testing.assert_allclose(out.weights, s.weights, atol=1e-15)

    def test_locations_untouched(self, rng):
        s = make_equal_weight(rng.normal(size=(7, 2)))
        out = bayes_reweight(s, linear_likelihood(0.3, 0.5), 0.7)
        assert np.array_equal(out.locations, s.locations)

    @pytest.mark.parametrize("gamma", [0.0, -0.1, 1.5])
    def test_gamma_range(self, gamma):
        with pytest.raises(ValueError):
            bayes_reweight(make_equal_weight([0.0]), table_likelihood([1]), gamma)

    def test_total_degeneration_signalled(self):
        s = make_equal_weight([0.0, 1.0])
        with pytest.raises(DegenerateWeightsError):
            bayes_reweight(s, table_likelihood([0, 0]), 1.0)

    def test_nan_likelihood_rejected(self):
        s = make_equal_weight([0.0, 1.0])
        bad = Likelihood(lambda p: np.full(len(p), np.nan), "nan")
        with pytest.raises(ValueError):
            bayes_reweight(s, bad, 1.0)

    def test_narrow_likelihood_does_not_underflow(self):
        # raw densities exp(-5e5) underflow; log-space weighting keeps the ratio
        s = make_equal_weight([0.0, 1e-4])
        out = bayes_reweight(s, linear_likelihood(1.0, 1e-3), 1.0)
        assert out.weights[1] > out.weights[0] > 0
        # log-ratio is (1 - (1 - 1e-4)^2) / 2e-6 = 99.995
        assert np.log(out.weights[1] / out.weights[0]) == pytest.approx(99.995, rel=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(
        g1=st.floats(0.01, 0.6),
        g2=st.floats(0.01, 0.4),
        xs=st.lists(st.floats(-3, 3), min_size=2, max_size=12),
    )
    def test_gamma_additivity(self, g1, g2, xs):
        s = make_equal_weight(xs)
        lik = linear_likelihood(0.4, 0.7)
        twice = bayes_reweight(bayes_reweight(s, lik, g1), lik, g2)
        once = bayes_reweight(s, lik, g1 + g2)
        np.testing.assert_allclose(twice.weights, once.weights, rtol=0, atol=1e-12)


class TestEss:
    def test_equal_weights(self):
        assert effective_sample_size(make_equal_weight(np.arange(10.0))) == pytest.approx(10, abs=1e-12)

    def test_single_survivor(self):
        assert effective_sample_size(ParticleSet([1.0, 0.0], [[0.0], [1.0]])) == 1.0

    def test_quarter(self):
        s = ParticleSet([0.25, 0.75], [[0.0], [1.0]])
        assert effective_sample_size(s) == pytest.approx(1 / (0.0625 + 0.5625), rel=1e-15)
        assert effective_sample_size(s) == pytest.approx(1.6)

    def test_unnormalized_rejected(self):
        with pytest.raises(ValueError):
            effective_sample_size(ParticleSet([1.0, 1.0], [[0.0], [1.0]]))

    def test_decreases_with_gamma(self):
        s = make_equal_weight(np.linspace(-2, 2, 15))
        lik = linear_likelihood(1.0, 0.5)
        values = [effective_sample_size(bayes_reweight(s, lik, g)) for g in np.linspace(0.05, 1, 20)]
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


class TestWeightedMean:
    def test_symmetric(self):
        assert weighted_mean(make_equal_weight([-1.0, 1.0])).tolist() == [0.0]

    def test_direct_sum(self):
        assert weighted_mean(ParticleSet([0.25, 0.75], [[0.0], [1.0]]))[0] == pytest.approx(0.75)

    def test_single(self):
        assert weighted_mean(make_equal_weight([(2.0, 3.0)])).tolist() == [2.0, 3.0]


def test_csv_round_trip(rng):
    s = bayes_reweight(make_equal_weight(rng.normal(size=(5, 3))), linear_likelihood(0.0, 1.0), 1.0)
    text = s.to_csv()
    assert text.splitlines()[0] == "w,x1,x2,x3"
    back = ParticleSet.from_csv(text)
    assert np.array_equal(back.weights, s.weights)
    assert np.array_equal(back.locations, s.locations)
