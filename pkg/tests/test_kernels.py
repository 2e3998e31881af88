import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from k3prf.errors import InvalidInputError
from k3prf.kernels import (
    KernelSpec,
    center_cross_gram,
    center_gram,
    check_psd,
    cross_gram,
    eval_kernel,
    explicit_poly2_features,
    gram,
)

from conftest import centering

SPECS = [KernelSpec.linear(), KernelSpec.poly2(), KernelSpec.poly2(0.0), KernelSpec.gaussian(1.7)]


def test_eval_kernel_hand_values():
    x, y = np.array([1.0, 2.0]), np.array([3.0, -1.0])
    assert eval_kernel(KernelSpec.linear(), x, y) == 1.0
    assert eval_kernel(KernelSpec.poly2(), x, y) == 4.0
    assert eval_kernel(KernelSpec.gaussian(1.0), x, x) == 1.0
    assert eval_kernel(KernelSpec.gaussian(2.0), x, y) == pytest.approx(np.exp(-13.0 / 8.0))


@pytest.mark.parametrize("spec", SPECS)
def test_gram_matches_pairwise_loop(spec, rng):
    X = rng.standard_normal((9, 4))
    K = gram(spec, X).values
    loop = np.array([[eval_kernel(spec, a, b) for b in X] for a in X])
    np.testing.assert_allclose(K, loop, atol=1e-12)
    assert np.array_equal(K, K.T)


@pytest.mark.parametrize("spec", SPECS)
def test_gram_is_psd(spec, rng):
    X = rng.standard_normal((30, 3))
    assert check_psd(gram(spec, X).values) > -1e-8


def test_gaussian_gram_unit_diagonal(rng):
    X = 100.0 * rng.standard_normal((20, 5))
    K = gram(KernelSpec.gaussian(0.3), X).values
    assert np.all(np.diag(K) == 1.0)
    assert K.min() >= 0.0


def test_check_psd_rejects_indefinite():
    with pytest.raises(InvalidInputError):
        check_psd(np.array([[1.0, 2.0], [2.0, 1.0]]))


@pytest.mark.parametrize("offset", [1.0, 0.0, 2.5])
def test_poly2_features_reproduce_kernel(offset, rng):
    X = rng.standard_normal((12, 3))
    Phi = explicit_poly2_features(X, offset)
    np.testing.assert_allclose(Phi @ Phi.T, gram(KernelSpec.poly2(offset), X).values, atol=1e-10)


def test_poly2_feature_count():
    # offset > 0: 1 + N + N + N(N-1)/2 columns; offset 0 drops the constant and linear terms
    X = np.ones((2, 4))
    assert explicit_poly2_features(X, 1.0).shape[1] == 1 + 4 + 4 + 6
    assert explicit_poly2_features(X, 0.0).shape[1] == 4 + 6


@pytest.mark.parametrize("spec", SPECS)
def test_center_gram_matches_explicit_projection(spec, rng):
    X = rng.standard_normal((15, 4))
    K = gram(spec, X).values
    J = centering(15)
    Kc = center_gram(K)
    assert Kc.centered
    np.testing.assert_allclose(Kc.values, J @ K @ J, atol=1e-12)
    np.testing.assert_allclose(Kc.values.sum(axis=0), 0.0, atol=1e-10)


def test_center_gram_idempotent(rng):
    K = gram(KernelSpec.gaussian(1.0), rng.standard_normal((10, 2)))
    once = center_gram(K)
    assert center_gram(once) is once


@pytest.mark.parametrize("spec", SPECS)
def test_center_cross_gram_matches_feature_centering(spec, rng):
    X = rng.standard_normal((14, 3))
    Xn = rng.standard_normal((4, 3))
    K = gram(spec, X).values
    kappa = cross_gram(spec, X, Xn)
    assert kappa.shape == (4, 14)
    # oracle: center the new rows' kernel against the training mean in feature space
    T = 14
    one = np.ones((4, T)) / T
    J = centering(T)
    oracle = (kappa - one @ K) @ J
    np.testing.assert_allclose(center_cross_gram(kappa, K), oracle, atol=1e-12)


def test_center_cross_gram_on_training_rows_gives_centered_gram(rng):
    X = rng.standard_normal((11, 3))
    spec = KernelSpec.poly2()
    K = gram(spec, X).values
    np.testing.assert_allclose(center_cross_gram(cross_gram(spec, X, X), K), center_gram(K).values, atol=1e-11)


def test_kernel_spec_validation():
    with pytest.raises(InvalidInputError):
        KernelSpec.gaussian(0.0)
    with pytest.raises(InvalidInputError):
        KernelSpec("cubic")
    assert KernelSpec.gaussian(1.0).with_sigma(2.0).sigma == 2.0


def test_gram_rejects_nonfinite():
    X = np.array([[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(InvalidInputError):
        gram(KernelSpec.linear(), X)


@settings(max_examples=40, deadline=None)
@given(
    T=st.integers(3, 12),
    N=st.integers(1, 4),
    sigma=st.floats(0.2, 10.0),
    seed=st.integers(0, 10_000),
)
def test_centered_gram_rows_sum_to_zero(T, N, sigma, seed):
    X = np.random.default_rng(seed).standard_normal((T, N))
    Kc = center_gram(gram(KernelSpec.gaussian(sigma), X)).values
    assert np.abs(Kc.sum(axis=1)).max() < 1e-10
    assert np.array_equal(Kc, Kc.T)
