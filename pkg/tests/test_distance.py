import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftflow.distance import CvmConfig, cvm_distance, cvm_gradient, self_term, xlog
from driftflow.optimizer import BfgsSettings, minimize
from driftflow.particles import ParticleSet, make_equal_weight

FD_STEP = 1e-6
FD_RTOL = 1e-5


def random_set(rng, n, d):
    w = rng.uniform(0.1, 1.0, n)
    return ParticleSet(w / w.sum(), rng.normal(size=(n, d)))


def fd_gradient(x_set, y_set, cfg, h=FD_STEP):
    """Central differences of cvm_distance over every location coordinate."""
    x = x_set.locations
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        for d in range(x.shape[1]):
            up, dn = x.copy(), x.copy()
            up[i, d] += h
            dn[i, d] -= h
            f_up = cvm_distance(ParticleSet(x_set.weights, up), y_set, cfg)
            f_dn = cvm_distance(ParticleSet(x_set.weights, dn), y_set, cfg)
            g[i, d] = (f_up - f_dn) / (2 * h)
    return g


class TestXlog:
    def test_one(self):
        assert xlog(1.0) == 0.0

    def test_zero(self):
        assert xlog(0.0) == 0.0

    def test_four(self):
        assert xlog(4.0) == pytest.approx(4 * math.log(4), rel=1e-15)
        assert xlog(4.0) == pytest.approx(5.5452, abs=1e-4)

    def test_below_floor(self):
        assert xlog(1e-13) == 0.0
        assert xlog(1e-8, log_floor=1e-6) == 0.0

    def test_negative(self):
        with pytest.raises(ValueError):
            xlog(-1.0)

    def test_array(self):
        np.testing.assert_allclose(xlog(np.array([0.0, 1.0, math.e])), [0.0, 0.0, math.e])


class TestDistanceValues:
    def test_identical_sets(self, rng):
        s = random_set(rng, 6, 2)
        assert cvm_distance(s, s, CvmConfig(1.0)) == 0.0

    def test_unit_gap_without_penalty(self):
        x, y = make_equal_weight([0.0]), make_equal_weight([1.0])
        assert cvm_distance(x, y, CvmConfig(0.0)) == 0.0
        assert cvm_distance(x, y, CvmConfig(1.0)) == pytest.approx(1.0, abs=1e-15)

    def test_gap_of_two(self):
        x, y = make_equal_weight([0.0]), make_equal_weight([2.0])
        d = cvm_distance(x, y, CvmConfig(0.0))
        assert d == pytest.approx(-2 * 4 * math.log(4), rel=1e-14)
        assert d == pytest.approx(-11.0904, abs=1e-4)

    def test_brute_force_double_loop(self, rng):
        # independent scalar triple loop over the defining sums
        x, y = random_set(rng, 4, 2), random_set(rng, 5, 2)
        c = 3.0

        def cross(a, b):
            total = 0.0
            for wi, xi in zip(a.weights, a.locations):
                for wj, yj in zip(b.weights, b.locations):
                    s = sum((xi[d] - yj[d]) ** 2 for d in range(len(xi)))
                    total += wi * wj * (s * math.log(s) if s > 0 else 0.0)
            return total

        mx = [sum(w * p[d] for w, p in zip(x.weights, x.locations)) for d in range(2)]
        my = [sum(w * p[d] for w, p in zip(y.weights, y.locations)) for d in range(2)]
        de = sum((a - b) ** 2 for a, b in zip(mx, my))
        expected = cross(y, y) - 2 * cross(x, y) + cross(x, x) + c * de
        assert cvm_distance(x, y, CvmConfig(c)) == pytest.approx(expected, rel=1e-12)

    def test_unequal_counts(self, rng):
        x, y = random_set(rng, 3, 1), random_set(rng, 7, 1)
        assert np.isfinite(cvm_distance(x, y))

    def test_neglecting_dyy_shifts_by_constant(self, rng):
        y = random_set(rng, 6, 2)
        for _ in range(3):
            x = random_set(rng, 6, 2)
            full = cvm_distance(x, y, CvmConfig(2.0, True))
            part = cvm_distance(x, y, CvmConfig(2.0, False))
            assert full - part == pytest.approx(self_term(y), rel=1e-12)

    def test_mean_penalty_vanishes_when_means_agree(self, rng):
        x = make_equal_weight([-1.0, 1.0])
        y = ParticleSet([0.5, 0.5], [[-3.0], [3.0]])
        assert cvm_distance(x, y, CvmConfig(0.0)) == cvm_distance(x, y, CvmConfig(50.0))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cvm_distance(make_equal_weight([0.0]), make_equal_weight([(0.0, 1.0)]))

    def test_unnormalized(self):
        with pytest.raises(ValueError):
            cvm_distance(ParticleSet([1.0, 1.0], [[0.0], [1.0]]), make_equal_weight([0.0]))


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 12),
    d=st.integers(1, 3),
    seed=st.integers(0, 2**32 - 1),
    c=st.sampled_from([0.0, 1.0, 10.0]),
)
def test_permutation_invariance(n, d, seed, c):
    rng = np.random.default_rng(seed)
    x, y = random_set(rng, n, d), random_set(rng, n + 2, d)
    px, py = rng.permutation(n), rng.permutation(n + 2)
    xp = ParticleSet(x.weights[px], x.locations[px])
    yp = ParticleSet(y.weights[py], y.locations[py])
    base = cvm_distance(x, y, CvmConfig(c))
    assert cvm_distance(xp, yp, CvmConfig(c)) == pytest.approx(base, abs=1e-12)


class TestGradient:
    def test_symmetric_minimum(self):
        s = make_equal_weight([-1.0, 1.0])
        np.testing.assert_allclose(cvm_gradient(s, s, CvmConfig(0.0)), 0.0, atol=1e-15)

    def test_single_particles_with_penalty(self):
        x, y = make_equal_weight([0.0]), make_equal_weight([2.0])
        cfg = CvmConfig(1.0)
        g = cvm_gradient(x, y, cfg)[0, 0]
        assert g == pytest.approx(fd_gradient(x, y, cfg)[0, 0], rel=FD_RTOL)
        # closed form of d/dx [-2 xlog((x-2)^2) + (x-2)^2] at 0
        assert g == pytest.approx(8 * (math.log(4) + 1) - 4, rel=1e-12)

    def test_matches_finite_differences(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 11))
            d = int(rng.integers(1, 4))
            x, y = random_set(rng, n, d), random_set(rng, n, d)
            cfg = CvmConfig(float(rng.choice([0.0, 1.0, 10.0])), bool(rng.integers(2)))
            g = cvm_gradient(x, y, cfg)
            fd = fd_gradient(x, y, cfg)
            assert np.linalg.norm(g - fd) <= FD_RTOL * np.linalg.norm(fd)

    def test_coincident_points_are_finite(self):
        x = make_equal_weight([0.0, 0.0, 1.0])
        g = cvm_gradient(x, x, CvmConfig())
        assert np.all(np.isfinite(g))

    def test_shape(self, rng):
        assert cvm_gradient(random_set(rng, 4, 3), random_set(rng, 6, 3)).shape == (4, 3)


def test_argmin_unchanged_without_dyy(rng):
    y = random_set(rng, 6, 1)
    x0 = make_equal_weight(rng.normal(size=4) * 0.5 + y.weights @ y.locations)
    optima = []
    for include in (True, False):
        cfg = CvmConfig(10.0, include)

        def obj(theta):
            x = ParticleSet(x0.weights, theta.reshape(-1, 1))
            return cvm_distance(x, y, cfg), cvm_gradient(x, y, cfg).ravel()

        res = minimize(obj, x0.locations.ravel(), BfgsSettings(grad_tol=1e-9, max_step=0.5))
        assert np.max(np.abs(obj(res.x)[1])) <= 1e-8
        optima.append(np.sort(res.x))
    np.testing.assert_allclose(optima[0], optima[1], atol=1e-8)


def _best_time(fn, repeats=5):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def test_cost_is_quadratic_in_particle_count(rng):
    sizes = [250, 500, 1000]
    times = []
    for n in sizes:
        x, y = random_set(rng, n, 1), random_set(rng, n, 1)
        times.append(_best_time(lambda: (cvm_distance(x, y), cvm_gradient(x, y))))
    slope = np.polyfit(np.log(sizes), np.log(times), 1)[0]
    assert 1.5 <= slope <= 2.6
