import warnings

import numpy as np
import pytest
from scipy import stats

from dpbinreg.functionals import (
    QuadratureWarning,
    default_axes,
    density_terms,
    directional_selection_gradient,
    inverse_density,
    kernel_correlations,
    mean_absolute_fitness,
    over_draws,
    posterior_predictive_correlations,
    regression_curve,
    selection_differential,
    selection_gradient,
    selection_integrand,
    stabilizing_selection_matrix,
    trait_mean_after,
    trait_mean_before,
)
from dpbinreg.gibbs import PosteriorDraws
from dpbinreg.kernel import KernelAtom
from dpbinreg.mixture import MixtureState
from dpbinreg.validation import finite_diff


def one_component(mu, sigma):
    return MixtureState.from_atoms(np.array([1.0]), [KernelAtom.from_moments(np.asarray(mu, float), np.asarray(sigma, float))])


SIGMA = np.array([[1.0, -0.30, 0.25], [-0.30, 0.9, 0.2], [0.25, 0.2, 0.7]])
MU = np.array([0.4, 1.0, -0.5])


def oracle(mu, sigma):
    mz = mu[0]
    sxz, sxx = sigma[1:, 0], sigma[1:, 1:]
    lam = stats.norm.pdf(mz) / stats.norm.cdf(mz)
    grad = np.linalg.solve(sxx, sxz) * stats.norm.pdf(mz)
    return {
        "fitness": stats.norm.cdf(mz),
        "differential": sxz * lam,
        "gradient": grad,
        "directional": grad / stats.norm.cdf(mz),
        "stabilizing": -mz * lam * np.outer(sxz, sxz),
    }


@pytest.fixture(scope="module")
def single():
    return one_component(MU, SIGMA)


def test_fitness_one_component(single):
    assert mean_absolute_fitness(single) == pytest.approx(stats.norm.cdf(0.4))


def test_differential_oracle(single):
    want = oracle(MU, SIGMA)["differential"]
    got = [selection_differential(single, j) for j in range(2)]
    np.testing.assert_allclose(got, want, atol=1e-3)


def test_gradient_oracle(single):
    want = oracle(MU, SIGMA)
    np.testing.assert_allclose(selection_gradient(single), want["gradient"], atol=1e-3)
    np.testing.assert_allclose(directional_selection_gradient(single), want["directional"], atol=1e-3)


def test_stabilizing_oracle(single):
    np.testing.assert_allclose(stabilizing_selection_matrix(single), oracle(MU, SIGMA)["stabilizing"], atol=1e-3)


def test_independence_zeroes_everything():
    sigma = SIGMA.copy()
    sigma[0, 1:] = sigma[1:, 0] = 0.0
    st = one_component(MU, sigma)
    for j in range(2):
        assert abs(selection_differential(st, j)) < 1e-6
    np.testing.assert_allclose(selection_gradient(st), 0.0, atol=1e-10)
    np.testing.assert_allclose(stabilizing_selection_matrix(st), 0.0, atol=1e-6)
    x = np.random.default_rng(0).normal(size=(5, 2))
    np.testing.assert_allclose(regression_curve(st, x), stats.norm.cdf(MU[0]))
    np.testing.assert_allclose(inverse_density(st, x, 1), inverse_density(st, x, 0), rtol=1e-12)


def test_trait_means(single):
    assert trait_mean_before(single, 0) == pytest.approx(1.0)
    lam = stats.norm.pdf(0.4) / stats.norm.cdf(0.4)
    assert trait_mean_after(single, 1) == pytest.approx(-0.5 + 0.25 * lam, abs=1e-4)


def test_inverse_density_normalized():
    rng = np.random.default_rng(2)
    atoms = [KernelAtom(rng.normal(size=3), rng.normal(scale=0.5, size=3), [1.0, 0.6, 1.3]) for _ in range(3)]
    st = MixtureState.from_atoms(np.array([0.5, 0.3, 0.2]), atoms)
    for j in range(2):
        axis = default_axes(st, [j], n_points=2001)[0]
        for yv in (0, 1):
            dens = inverse_density(st, axis[:, None], yv, dims=[j])
            assert np.sum(dens) * (axis[1] - axis[0]) == pytest.approx(1.0, abs=1e-3)


def random_state(rng, p=2, n_atoms=5):
    atoms = []
    for _ in range(n_atoms):
        A = rng.normal(size=(p + 1, p + 1))
        sig = A @ A.T + np.eye(p + 1)
        sig /= sig[0, 0]
        atoms.append(KernelAtom.from_moments(rng.normal(size=p + 1), sig))
    return MixtureState.from_atoms(rng.dirichlet(np.ones(n_atoms)), atoms)


def test_gradient_integrand_finite_differences():
    rng = np.random.default_rng(42)
    for _ in range(20):
        st = random_state(rng)
        x = st.mu[rng.integers(st.n_atoms), 1:] + 0.3 * rng.normal(size=2)
        terms = density_terms(st, x[None])
        fd_joint = finite_diff(lambda v: density_terms(st, v[None])["joint"][0], x)
        fd_fx = finite_diff(lambda v: density_terms(st, v[None])["fx"][0], x)
        assert np.linalg.norm(terms["joint_grad"][0] - fd_joint) / np.linalg.norm(fd_joint) < 1e-5
        assert np.linalg.norm(terms["fx_grad"][0] - fd_fx) / np.linalg.norm(fd_fx) < 1e-5
        dj, cf = selection_integrand(st, x[None])
        fd_curve = finite_diff(lambda v: density_terms(st, v[None])["curve"][0], x)
        np.testing.assert_allclose((dj - cf)[0], fd_curve * terms["fx"][0], rtol=1e-5, atol=1e-12)


def test_underresolved_grid_warns(single):
    axes = [np.linspace(-3, 5, 5), np.linspace(-4, 3, 5)]
    with pytest.warns(QuadratureWarning):
        selection_gradient(single, axes)


def test_kernel_correlations():
    corr = kernel_correlations(SIGMA)
    assert corr[0] == pytest.approx(-0.30 / np.sqrt(0.9))


def fixture_draws(states):
    S = len(states)
    return PosteriorDraws(
        weights=np.stack([s.weights for s in states]),
        mu=np.stack([s.mu for s in states]),
        beta_tilde=np.stack([s.beta_tilde for s in states]),
        delta=np.stack([s.delta for s in states]),
        alpha=np.ones(S),
        m=np.zeros((S, 3)), V=np.tile(np.eye(3), (S, 1, 1)), theta=np.zeros((S, 3)),
        C=np.tile(np.eye(3), (S, 1, 1)), s=np.ones((S, 2)), n_occupied=np.ones(S, int),
        iteration=np.arange(S), chain=np.zeros(S, int),
    )


def test_predictive_correlations_degenerate(single):
    draws = fixture_draws([single] * 10)
    out = posterior_predictive_correlations(draws, np.random.default_rng(0))
    np.testing.assert_allclose(out, np.tile(kernel_correlations(single.sigma[0]), (10, 1)))
    two = MixtureState(np.array([1.0, 0.0]), np.vstack([single.mu, single.mu + 1]),
                       np.vstack([single.beta_tilde, single.beta_tilde * 0]), np.vstack([single.delta] * 2))
    out = posterior_predictive_correlations(fixture_draws([two] * 5), np.random.default_rng(0))
    np.testing.assert_allclose(out, np.tile(kernel_correlations(single.sigma[0]), (5, 1)))
    assert over_draws(draws, mean_absolute_fitness).shape == (10,)
