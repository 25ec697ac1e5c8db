import numpy as np
import pytest
from scipy import stats

from conftest import Toy, simple_prior
from dpbinreg.compare import PplReport, fit_product_kernel, ppl_criterion, predictive_moments, product_kernel_prior
from dpbinreg.gibbs import SamplerConfig, run_chain
from dpbinreg.kernel import KernelAtom, component_probit
from test_functionals import fixture_draws
from dpbinreg.mixture import MixtureState


def test_product_kernel_prior_shapes():
    prior = simple_prior(2)
    pk = product_kernel_prior(prior)
    assert pk.n_free_beta == 1 and pk.a_C == prior.a_C - 2
    np.testing.assert_array_equal(pk.beta_free, [False, False, True])


@pytest.fixture(scope="module")
def paired_fits():
    rng = np.random.default_rng(8)
    n = 200
    cov = np.array([[1.0, 0.8], [0.8, 1.0]])
    zx = rng.multivariate_normal([0.0, 0.0], cov, size=n)
    data = Toy((zx[:, 0] > 0).astype(int), zx[:, 1:])
    prior = simple_prior(1)
    cfg = SamplerConfig(iterations=2500, burn_in=1000, thin=5, seed=4, truncation=20)
    return data, run_chain(data, cfg, prior), fit_product_kernel(data, cfg, prior)


def test_product_kernel_constraint(paired_fits):
    data, _, pk = paired_fits
    for st in list(pk.states())[::25]:
        np.testing.assert_allclose(st.sigma[:, 0, 1:], 0.0, atol=1e-12)
        for atom in st.atoms[:3]:
            vals = component_probit(atom, np.linspace(-3, 3, 7)[:, None])
            assert np.ptp(vals) < 1e-12


def test_product_kernel_needs_more_components(paired_fits):
    _, full, pk = paired_fits
    assert np.median(pk.n_occupied) > np.median(full.n_occupied)


def test_variance_identity_and_single_atom():
    atom = KernelAtom(np.array([0.6, 0.0]), [0.0], [1.0, 1.0])
    st = MixtureState.from_atoms(np.array([1.0]), [atom])
    draws = fixture_draws([st])
    draws.mu = draws.mu[:, :, :2]
    draws.beta_tilde = draws.beta_tilde[:, :, :1]
    draws.delta = draws.delta[:, :, :2]
    X = np.linspace(-2, 2, 5)[:, None]
    mean, var, flagged = predictive_moments(draws, X)
    np.testing.assert_allclose(mean, stats.norm.cdf(0.6))
    np.testing.assert_allclose(var, mean * (1 - mean))
    assert not flagged.any()


def test_ratio_vs_per_draw(paired_fits):
    data, full, _ = paired_fits
    ratio, _, _ = predictive_moments(full, data.X)
    avg, _, _ = predictive_moments(full, data.X, per_draw=True)
    assert np.max(np.abs(ratio - avg)) < 0.05


def test_perfect_fit_report():
    rep = PplReport(0.0, 0.0, np.array([1.0, 0.0]), np.zeros(2), np.array([1.0, 0.0]), np.zeros(2, bool))
    assert rep.D(1) == 0 and rep.D(np.inf) == 0


def test_ppl_components(paired_fits):
    data, full, pk = paired_fits
    a, b = ppl_criterion(full, data), ppl_criterion(pk, data)
    assert a.P == pytest.approx(np.sum(a.mean * (1 - a.mean)))
    assert a.G == pytest.approx(np.sum((data.y - a.mean) ** 2))
    assert a.D(10) == pytest.approx(a.P + 10 / 11 * a.G)
    assert a.P < b.P
    assert set(a.to_dict()["D"]) == {"1", "10", "100", "inf"}
