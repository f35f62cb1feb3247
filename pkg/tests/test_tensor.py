import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ktjade.tensor import (
    as_sample,
    devectorize,
    kronecker,
    matricize,
    mode_kron,
    mode_multiply,
    multiply_all_modes,
    sample_matricize,
    sample_unmatricize,
    unmatricize,
    vectorize,
)

from conftest import random_orthogonal


def test_identity_multiplication_is_noop(rng):
    x = rng.standard_normal((2, 3, 4))
    for m, p in enumerate(x.shape):
        np.testing.assert_array_equal(mode_multiply(x, m, np.eye(p)), x)


def test_mode_products_commute(rng):
    x = rng.standard_normal((2, 3, 4))
    a = rng.standard_normal((5, 2))
    b = rng.standard_normal((3, 3))
    left = mode_multiply(mode_multiply(x, 0, a), 1, b)
    right = mode_multiply(mode_multiply(x, 1, b), 0, a)
    np.testing.assert_allclose(left, right, atol=1e-12)


def test_first_mode_product_swaps_rows():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(mode_multiply(x, 0, swap), [[3.0, 4.0], [1.0, 2.0]])


def test_all_modes_of_a_matrix_is_two_sided_product(rng):
    x = rng.standard_normal((3, 5))
    a1 = rng.standard_normal((3, 3))
    a2 = rng.standard_normal((4, 5))
    np.testing.assert_allclose(multiply_all_modes(x, [a1, a2]), a1 @ x @ a2.T, atol=1e-12)


def test_mode_multiply_rejects_nonconformable(rng):
    with pytest.raises(ValueError, match="cannot multiply mode"):
        mode_multiply(rng.standard_normal((2, 3)), 1, np.eye(2))


def test_matricize_matrix_cases(rng):
    x = rng.standard_normal((3, 4))
    np.testing.assert_array_equal(matricize(x, 0), x)
    np.testing.assert_array_equal(matricize(x, 1), x.T)


@pytest.mark.parametrize("dims", [(2, 3, 4), (2, 3, 2, 3)])
def test_matricization_identity(rng, dims):
    x = rng.standard_normal(dims)
    mats = [rng.standard_normal((p, p)) for p in dims]
    y = multiply_all_modes(x, mats)
    r = len(dims)
    for m in range(r):
        others = [mats[(m + j) % r] for j in range(1, r)]
        kron = others[0]
        for a in others[1:]:
            kron = np.kron(kron, a)
        expected = mats[m] @ matricize(x, m) @ kron.T
        np.testing.assert_allclose(matricize(y, m), expected, atol=1e-12)


def test_matricize_round_trip(rng):
    x = rng.standard_normal((2, 3, 4))
    for m in range(3):
        np.testing.assert_array_equal(unmatricize(matricize(x, m), m, x.shape), x)


def test_sample_matricize_matches_per_observation(rng):
    s = rng.standard_normal((5, 2, 3, 4))
    for m in range(3):
        mats = sample_matricize(s, m)
        for t in range(5):
            np.testing.assert_array_equal(mats[t], matricize(s[t], m))
        np.testing.assert_array_equal(sample_unmatricize(mats, m, s.shape[1:]), s)


def test_vectorize_is_column_stacking():
    np.testing.assert_array_equal(vectorize(np.array([[1.0, 2.0], [3.0, 4.0]])), [1, 3, 2, 4])


def test_vec_kronecker_identity(rng):
    x = rng.standard_normal((3, 4))
    a = rng.standard_normal((3, 3))
    b = rng.standard_normal((4, 4))
    np.testing.assert_allclose(vectorize(a @ x @ b.T), np.kron(b, a) @ vectorize(x), atol=1e-12)


def test_mode_kron_consistent_with_vectorize(rng):
    dims = (2, 3, 4)
    x = rng.standard_normal(dims)
    mats = [rng.standard_normal((p, p)) for p in dims]
    np.testing.assert_allclose(
        vectorize(multiply_all_modes(x, mats)), mode_kron(mats) @ vectorize(x), atol=1e-12
    )


@settings(max_examples=30, deadline=None)
@given(dims=st.lists(st.integers(1, 4), min_size=1, max_size=4), seed=st.integers(0, 2**32 - 1))
def test_vectorize_round_trip_and_norm(dims, seed):
    x = np.random.default_rng(seed).standard_normal(dims)
    v = vectorize(x)
    np.testing.assert_array_equal(devectorize(v, dims), x)
    assert np.isclose(np.linalg.norm(v), np.linalg.norm(x))


def test_kronecker_examples(rng):
    np.testing.assert_array_equal(kronecker(np.eye(2), np.eye(3)), np.eye(6))
    np.testing.assert_array_equal(kronecker([[1.0, 2.0]], [[3.0], [4.0]]), [[3, 6], [4, 8]])
    u1, u2 = random_orthogonal(rng, 3), random_orthogonal(rng, 4)
    k = kronecker(u2, u1)
    np.testing.assert_allclose(k.T @ k, np.eye(12), atol=1e-12)


def test_as_sample_validation():
    with pytest.raises(ValueError):
        as_sample(np.zeros(3))
    with pytest.raises(ValueError):
        as_sample(np.zeros((2, 0)))
