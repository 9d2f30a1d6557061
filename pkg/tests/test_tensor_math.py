import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qaflora import tensor_math as tm
from qaflora.errors import ContractError, DegenerateVectorError, NumericError, ShapeError

finite = st.floats(-50, 50, allow_nan=False)


def test_affine_apply_examples(backend):
    np.testing.assert_array_equal(tm.affine_apply(np.eye(3), [1, 2, 3]), [1, 2, 3])
    np.testing.assert_array_equal(tm.affine_apply(np.zeros((2, 3)), [5, 6, 7]), [0, 0])
    np.testing.assert_array_equal(tm.affine_apply([[1, 2], [3, 4]], [1, 1]), [3, 7])
    with pytest.raises(ShapeError):
        tm.affine_apply(np.eye(3), [1, 2])


def test_affine_apply_matches_triple_loop():
    rng = np.random.default_rng(5)
    for _ in range(3):
        w, x = rng.standard_normal((64, 64)), rng.standard_normal(64)
        naive = np.array([sum(w[i, j] * x[j] for j in range(64)) for i in range(64)])
        got = tm.affine_apply(w, x)
        assert np.max(np.abs(got - naive)) <= 1e-10 * np.max(np.abs(naive))


def test_softmax_examples(backend):
    np.testing.assert_allclose(tm.softmax([0, 0, 0]), [1 / 3] * 3, rtol=1e-15)
    # mpmath, 40 digits
    np.testing.assert_allclose(tm.softmax([1, 2, 3]),
                               [0.0900305731704, 0.244728471055, 0.665240955775], atol=1e-12)
    with pytest.raises(NumericError):
        tm.softmax([0.0, np.inf])


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 64), elements=finite), st.floats(-100, 100))
def test_softmax_sums_to_one_and_shift_invariant(z, c):
    p = tm.softmax(z)
    assert abs(p.sum() - 1.0) <= 1e-9
    assert np.all(p > 0) or len(z) > 1
    np.testing.assert_allclose(tm.softmax(z + c), p, atol=1e-9, rtol=0)


def test_kl_examples(backend):
    assert tm.kl_divergence([1, 0], [1, 0]) == 0.0
    p = tm.softmax([0.3, -1.0, 2.0])
    assert abs(tm.kl_divergence(p, p)) <= 1e-12
    assert tm.kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.143841036226, abs=1e-12)
    with pytest.raises(ShapeError):
        tm.kl_divergence([1.0], [0.5, 0.5])
    with pytest.raises(ContractError):
        tm.kl_divergence([1.0], [1.0], floor=0)


def test_kl_floor_bounds_zero_q():
    # q underflowed to 0 where p has mass: log uses the floor
    assert tm.kl_divergence([0.5, 0.5], [1.0, 0.0]) == pytest.approx(
        0.5 * np.log(0.5) + 0.5 * np.log(0.5 / 1e-10), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 1024), st.integers(0, 2**32 - 1))
def test_kl_nonnegative_and_self_zero(dim, seed):
    rng = np.random.default_rng(seed)
    p = tm.softmax(rng.standard_normal(dim) * 3)
    q = tm.softmax(rng.standard_normal(dim) * 3)
    assert tm.kl_divergence(p, q) >= -1e-12
    assert tm.kl_divergence(p, p) <= 1e-9


def test_cosine_distance_examples(backend):
    u = np.array([0.3, -2.0, 1.0])
    assert tm.cosine_distance(u, u) == pytest.approx(0.0, abs=1e-15)
    assert tm.cosine_distance([1, 0], [0, 1]) == pytest.approx(1.0)
    assert tm.cosine_distance([1, 0], [1, 1]) == pytest.approx(0.292893218813, abs=1e-12)
    with pytest.raises(DegenerateVectorError):
        tm.cosine_distance([0, 0], [1, 1])


def test_euclidean_examples(backend):
    assert tm.euclidean_distance([1, 2], [1, 2]) == 0.0
    assert tm.euclidean_distance([0, 0], [3, 4]) == 5.0
    assert tm.euclidean_distance([1, 2, 3], [4, 6, 3]) == 5.0


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 50), st.integers(0, 2**32 - 1))
def test_distance_properties(dim, seed):
    rng = np.random.default_rng(seed)
    u, v, w = rng.standard_normal((3, dim))
    assert abs(tm.cosine_distance(u, v) - tm.cosine_distance(v, u)) <= 1e-12
    assert 0.0 <= tm.cosine_distance(u, v) <= 2.0
    assert tm.euclidean_distance(u, w) <= tm.euclidean_distance(u, v) + tm.euclidean_distance(v, w) + 1e-9


def test_normalize_scores_examples():
    np.testing.assert_allclose(tm.normalize_scores([1, 3]), [0.25, 0.75])
    np.testing.assert_allclose(tm.normalize_scores([0, 0, 0]), [1 / 3] * 3)
    np.testing.assert_allclose(tm.normalize_scores([2, 2, 4]), [0.25, 0.25, 0.5])
    with pytest.raises(ContractError):
        tm.normalize_scores([1, -1])


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=20))
def test_normalize_scores_is_distribution(scores):
    out = tm.normalize_scores(scores)
    assert abs(out.sum() - 1.0) <= 1e-9
    assert np.all((out >= 0) & (out <= 1))
