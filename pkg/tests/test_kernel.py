import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.integrate import trapezoid

from dpbinreg.errors import InvalidParameterError, NumericalDegeneracyError
from dpbinreg.kernel import (
    KernelAtom,
    component_probit,
    covariance,
    factorize_covariance,
    first_column_mask,
    kernel_density,
    kernel_logpdf,
    marginal_x_density,
    n_free,
    precision,
    reconstruct_covariance,
    row_slice,
    tril_index,
    unit_lower,
)
from dpbinreg.validation import normal_logpdf_explicit


def random_spd(rng, r):
    A = rng.normal(size=(r, r))
    return A @ A.T + r * np.eye(r)


def test_storage_order():
    beta = unit_lower(np.array([1.0, 2.0, 3.0]))
    assert beta[1, 0] == 1.0 and beta[2, 0] == 2.0 and beta[2, 1] == 3.0
    assert row_slice(2) == slice(1, 3)
    assert tril_index(3, 1) == 4
    assert np.array_equal(first_column_mask(3), [True, True, False, True, False, False])


def test_reconstruct_hand_example():
    atom = KernelAtom(np.zeros(2), [-0.6], [1.0, 0.64])
    blocks = reconstruct_covariance(atom)
    np.testing.assert_allclose(blocks.full, [[1.0, 0.6], [0.6, 1.0]], atol=1e-14)
    assert blocks.conditional_variance == pytest.approx(0.64)


@pytest.mark.parametrize("p", [1, 2, 4])
def test_identity_case(p):
    sigma = covariance(np.zeros(n_free(p)), np.ones(p + 1))
    np.testing.assert_array_equal(sigma, np.eye(p + 1))
    bt, delta = factorize_covariance(np.eye(p + 1))
    np.testing.assert_allclose(bt, 0.0, atol=1e-15)
    np.testing.assert_allclose(delta, 1.0)


@pytest.mark.parametrize("b,d", [(0.3, 2.0), (-1.5, 0.2), (2.0, 5.0)])
def test_scalar_correlation_and_variance(b, d):
    sigma = covariance([b], [1.0, d])
    rho = sigma[0, 1] / np.sqrt(sigma[0, 0] * sigma[1, 1])
    assert rho == pytest.approx(-b / np.sqrt(b**2 + d))
    assert sigma[1, 1] == pytest.approx(b**2 + d)


def test_factorize_hand_example():
    bt, delta = factorize_covariance(np.array([[1.0, 0.6], [0.6, 1.0]]))
    np.testing.assert_allclose(bt, [-0.6], atol=1e-14)
    np.testing.assert_allclose(delta, [1.0, 0.64], atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_roundtrip_random_spd(p, seed):
    rng = np.random.default_rng(seed)
    sigma = random_spd(rng, p + 1)
    bt, delta = factorize_covariance(sigma)
    assert np.max(np.abs(covariance(bt, delta) - sigma)) < 1e-10
    # determinant of a unit-triangular similarity is the product of delta
    assert np.prod(delta) == pytest.approx(np.linalg.det(sigma), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_precision_matches_inverse(p, seed):
    rng = np.random.default_rng(seed)
    bt = rng.normal(size=n_free(p))
    delta = np.concatenate([[1.0], rng.uniform(0.2, 3.0, p)])
    np.testing.assert_allclose(precision(bt, delta), np.linalg.inv(covariance(bt, delta)), rtol=1e-9, atol=1e-10)


def test_factorize_rejects_non_spd():
    with pytest.raises(NumericalDegeneracyError):
        factorize_covariance(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(NumericalDegeneracyError):
        factorize_covariance(np.array([[1.0, 0.1], [0.2, 1.0]]))


def test_atom_requires_unit_first_delta():
    with pytest.raises(InvalidParameterError):
        KernelAtom(np.zeros(2), [0.0], [2.0, 1.0])
    with pytest.raises(InvalidParameterError):
        KernelAtom(np.zeros(2), [0.0], [1.0, -1.0])


def test_probit_independent_kernel():
    atom = KernelAtom(np.array([0.0, 3.0, -1.0]), [0.0, 0.0, 0.4], [1.0, 2.0, 0.5])
    x = np.random.default_rng(0).normal(size=(10, 2))
    np.testing.assert_allclose(component_probit(atom, x), 0.5)
    atom = KernelAtom(np.array([0.7, 3.0, -1.0]), [0.0, 0.0, 0.4], [1.0, 2.0, 0.5])
    np.testing.assert_allclose(component_probit(atom, x), stats.norm.cdf(0.7))


def test_probit_hand_value():
    atom = KernelAtom.from_moments(np.zeros(2), np.array([[1.0, 0.6], [0.6, 1.0]]))
    assert component_probit(atom, np.array([1.0])) == pytest.approx(0.77337, abs=1e-5)
    assert component_probit(atom, np.array([1.0])) == pytest.approx(stats.norm.cdf(0.75), rel=1e-12)


def test_standard_normal_density():
    atom = KernelAtom(np.zeros(2), [0.0], [1.0, 1.0])
    assert kernel_density(atom, 0.0, np.array([0.0])) == pytest.approx(1 / (2 * np.pi))


def test_logpdf_finite_far_out():
    zz, xx = np.meshgrid(np.linspace(-40, 40, 9), np.linspace(-40, 40, 9))
    y = np.stack([zz.ravel(), xx.ravel()], axis=1)
    vals = kernel_logpdf(np.zeros(2), np.zeros(1), np.ones(2), y)
    assert np.all(np.isfinite(vals))


def test_density_matches_explicit_formula(rng):
    for _ in range(10):
        sigma = random_spd(rng, 3)
        sigma /= sigma[0, 0]
        atom = KernelAtom.from_moments(rng.normal(size=3), sigma)
        y = rng.normal(size=(5, 3))
        np.testing.assert_allclose(
            kernel_logpdf(atom.mu, atom.beta_tilde, atom.delta, y),
            normal_logpdf_explicit(y, atom.mu, sigma),
            rtol=1e-10,
        )
        np.testing.assert_allclose(
            np.log(marginal_x_density(atom, y[:, 1:])), normal_logpdf_explicit(y[:, 1:], atom.mu[1:], sigma[1:, 1:]), rtol=1e-10
        )


def test_density_integrates_to_one():
    atom = KernelAtom(np.array([0.3, -0.2]), [0.5], [1.0, 0.8])
    g = np.linspace(-9, 9, 401)
    zz, xx = np.meshgrid(g, g, indexing="ij")
    dens = kernel_density(atom, zz.ravel(), xx.ravel()[:, None]).reshape(zz.shape)
    total = trapezoid(trapezoid(dens, g, axis=1), g)
    assert abs(total - 1.0) < 1e-3
