import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from freca.params import (
    DimensionError,
    ModelUpdate,
    NonFiniteError,
    ZeroNormError,
    angular_distance,
    euclidean_distance,
    hybrid_distance,
    weighted_sum,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def vec_pair(min_dim=1, max_dim=16):
    return st.integers(min_dim, max_dim).flatmap(
        lambda n: st.tuples(arrays(np.float64, n, elements=finite), arrays(np.float64, n, elements=finite))
    )


class TestWeightedSum:
    def test_identity(self):
        v = np.array([1.5, -2.0, 3.25])
        np.testing.assert_array_equal(weighted_sum([v], [1.0]), v)

    def test_mean(self):
        out = weighted_sum([np.array([0.0, 0.0]), np.array([4.0, 8.0])], [0.5, 0.5])
        np.testing.assert_array_equal(out, [2.0, 4.0])

    def test_forced_weights(self):
        np.testing.assert_array_equal(weighted_sum([np.array([0.0]), np.array([4.0])], [0.25, 0.75]), [3.0])

    def test_does_not_mutate_inputs(self):
        a, b = np.array([1.0, 2.0]), np.array([3.0, 4.0])
        weighted_sum([a, b], [2.0, 3.0])
        np.testing.assert_array_equal(a, [1.0, 2.0])

    @pytest.mark.parametrize(
        "vectors, weights, exc",
        [
            ([], [], ValueError),
            ([np.ones(2), np.ones(3)], [0.5, 0.5], DimensionError),
            ([np.ones(2)], [0.5, 0.5], DimensionError),
            ([np.ones(2)], [math.nan], NonFiniteError),
            ([np.ones(2)], [math.inf], NonFiniteError),
        ],
    )
    def test_errors(self, vectors, weights, exc):
        with pytest.raises(exc):
            weighted_sum(vectors, weights)

    @given(arrays(np.float64, 5, elements=finite), st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8))
    def test_convex_weights_of_identical_vectors(self, v, raw):
        w = [x / math.fsum(raw) for x in raw]
        out = weighted_sum([v] * len(w), w)
        np.testing.assert_allclose(out, v, rtol=0, atol=1e-12 * max(1.0, np.abs(v).max()))


class TestEuclidean:
    def test_examples(self):
        v = np.array([1.0, -7.0])
        assert euclidean_distance(v, v) == 0.0
        assert euclidean_distance([0.0, 0.0], [3.0, 4.0]) == 5.0
        assert euclidean_distance([1.0, 2.0, 2.0], [0.0, 0.0, 0.0]) == 3.0

    def test_dim_mismatch(self):
        with pytest.raises(DimensionError):
            euclidean_distance([1.0], [1.0, 2.0])

    @given(vec_pair())
    def test_symmetric_nonnegative(self, ab):
        a, b = ab
        d = euclidean_distance(a, b)
        assert d >= 0
        assert d == euclidean_distance(b, a)
        assert (d == 0) == bool(np.array_equal(a, b))


class TestAngular:
    def test_examples(self):
        v = np.array([0.3, -1.2, 4.0])
        assert angular_distance(v, v) == pytest.approx(0.0, abs=1e-7)
        assert angular_distance(v, -v) == pytest.approx(1.0)
        assert angular_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.5)

    def test_zero_norm_raises(self):
        with pytest.raises(ZeroNormError):
            angular_distance([0.0, 0.0], [1.0, 2.0])
        with pytest.raises(ZeroNormError):
            angular_distance([1.0, 2.0], [0.0, 0.0])

    @given(vec_pair(2, 10), st.floats(1e-3, 1e3))
    def test_scale_invariance(self, ab, c):
        a, _ = ab
        if np.linalg.norm(a) < 1e-6:
            return
        assert angular_distance(c * a, a) == pytest.approx(0.0, abs=1e-6)

    @given(vec_pair(2, 10))
    def test_range(self, ab):
        a, b = ab
        if min(np.linalg.norm(a), np.linalg.norm(b)) == 0:
            return
        assert 0.0 <= angular_distance(a, b) <= 1.0


class TestHybrid:
    def test_limits(self):
        a, b = np.array([1.0, 2.0]), np.array([-3.0, 0.5])
        assert hybrid_distance(a, b, 1.0) == euclidean_distance(a, b)
        assert hybrid_distance(a, b, 0.0) == angular_distance(a, b)

    def test_degenerate_angular_part(self):
        with pytest.raises(ZeroNormError):
            hybrid_distance([0.0, 0.0], [3.0, 4.0], 0.5)

    def test_alpha_out_of_range(self):
        with pytest.raises(ValueError):
            hybrid_distance([1.0], [2.0], 1.5)

    @given(vec_pair(2, 10), st.floats(0.0, 1.0))
    def test_convex_combination(self, ab, alpha):
        a, b = ab
        if min(np.linalg.norm(a), np.linalg.norm(b)) == 0:
            return
        d_l, d_a = euclidean_distance(a, b), angular_distance(a, b)
        h = hybrid_distance(a, b, alpha)
        assert min(d_l, d_a) - 1e-9 <= h <= max(d_l, d_a) + 1e-9


def test_model_update_validation():
    with pytest.raises(ValueError):
        ModelUpdate(0, np.ones(3), 0)
    with pytest.raises(NonFiniteError):
        ModelUpdate(0, np.array([1.0, np.nan]), 1)
    u = ModelUpdate(3, [1, 2], 5)
    assert u.delta.dtype == np.float64 and u.dim == 2
