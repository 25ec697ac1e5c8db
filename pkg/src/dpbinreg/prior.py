"""Hyperprior elicitation from a rough covariate sketch.

Both procedures centre the kernel mean at ``(0, c_x)`` and use
``(r_x / 4)^2`` as a proxy for the covariate variances. They differ in how
the ``beta_tilde`` and ``delta`` hyperparameters are chosen:

* :func:`elicit_uniform_correlation` (one covariate only) searches a
  weight split of ``E(sigma^2)`` that makes the induced prior on the kernel
  correlation close to uniform on ``(-1, 1)``;
* :func:`elicit_inverse_wishart` matches the distributions that an
  ``IW_{p+1}(p + 3, T)`` covariance would imply for ``(beta, delta)``.
"""
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import stats

from .errors import InvalidParameterError
from .hyper import HyperPrior, HyperState
from .kernel import factorize_covariance_batch, n_free, row_slice, tril_index
from .mixture import joint_prob_y1_x, mixture_density_x, sample_prior_state

MIN_SIM_BUDGET = 10_000


@dataclass(frozen=True)
class PriorSketch:
    """Approximate covariate ranges ``r_x`` and centres ``c_x``."""

    r_x: np.ndarray
    c_x: np.ndarray

    def __post_init__(self):
        r_x = np.atleast_1d(np.asarray(self.r_x, dtype=float))
        c_x = np.atleast_1d(np.asarray(self.c_x, dtype=float))
        if r_x.shape != c_x.shape:
            raise InvalidParameterError("r_x and c_x must have the same length")
        if np.any(~np.isfinite(r_x)) or np.any(r_x <= 0):
            raise InvalidParameterError("covariate ranges must be positive")
        object.__setattr__(self, "r_x", r_x)
        object.__setattr__(self, "c_x", c_x)

    @property
    def p(self):
        return len(self.r_x)

    @property
    def scale_diag(self):
        """``(1, (r_1/4)^2, ..., (r_p/4)^2)``."""
        return np.concatenate([[1.0], (self.r_x / 4.0) ** 2])

    @classmethod
    def from_data(cls, X):
        X = np.asarray(X, dtype=float)
        return cls(X.max(axis=0) - X.min(axis=0), X.mean(axis=0))


def center_scale_hyperparams(sketch):
    """Hyperparameters of ``m`` and ``V`` shared by both procedures."""
    p = sketch.p
    B_m = 0.5 * np.diag(sketch.scale_diag)
    a_V = p + 3.0
    return {
        "a_m": np.concatenate([[0.0], sketch.c_x]),
        "B_m": B_m,
        "a_V": a_V,
        "B_V": (a_V - p - 2.0) * B_m,
    }


def elicit_inverse_wishart(sketch, split=0.5, a_alpha=2.0, b_alpha=1.0):
    """Hyperprior matched to an ``IW_{p+1}(p + 3, T)`` kernel covariance.

    ``T = diag(1, (r_1/4)^2, ..., (r_p/4)^2)``. ``split`` is the share of
    the block-diagonal ``beta_tilde`` covariance given to ``B_theta``; the
    rest goes to the prior mean of ``C``.
    """
    if not 0 < split < 1:
        raise InvalidParameterError("split must lie in (0, 1)")
    p = sketch.p
    q = n_free(p)
    T = sketch.scale_diag
    v = p + 3.0
    idx = np.arange(2, p + 2)
    nu = 0.5 * (v + idx - (p + 1))
    delta_mean = 0.5 * T[1:] / (nu - 1.0)
    block = np.zeros((q, q))
    for k in range(1, p + 1):
        sl = row_slice(k)
        block[sl, sl] = np.diag(delta_mean[k - 1] / T[:k])
    a_C = q + 3.0
    return HyperPrior(
        **center_scale_hyperparams(sketch),
        a_theta=np.zeros(q),
        B_theta=split * block,
        a_C=a_C,
        B_C=(a_C - q - 1.0) * (1.0 - split) * block,
        a_s=np.ones(p),
        b_s=2.0 / T[1:],
        nu=nu,
        a_alpha=a_alpha,
        b_alpha=b_alpha,
    )


def _simplex_grid(step):
    ticks = np.round(np.arange(step, 1.0, step), 10)
    for k1, k2 in product(ticks, ticks):
        k3 = round(1.0 - k1 - k2, 10)
        if k3 >= step - 1e-12:
            yield k1, k2, k3


def _uniform_ks(rho):
    rho = np.sort(rho)
    n = len(rho)
    cdf = 0.5 * (rho + 1.0)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


@dataclass(frozen=True)
class UniformCorrelationResult:
    prior: HyperPrior
    k: tuple
    b_theta: float
    b_s: float
    b_c: float
    ks: float
    table: list


def elicit_uniform_correlation(sketch, sim_budget=100_000, step=0.05, seed=0, a_s=1.0, a_alpha=2.0, b_alpha=1.0):
    """Search the variance split ``(k1, k2, k3)`` for a near-uniform correlation prior.

    Single covariate only. With ``nu = a_c = 2`` and target
    ``E(sigma^2) = (r/4)^2``::

        k1 (r/4)^2 = b_theta
        k2 (r/4)^2 = a_s / (b_s (nu - 1))
        k3 (r/4)^2 = b_c / (a_c - 1)

    Each candidate on a ``step`` simplex grid is scored by the
    Kolmogorov-Smirnov distance between the simulated prior of
    ``rho = -beta / sqrt(beta^2 + delta)`` and U(-1, 1). Common random
    numbers are shared across candidates.
    """
    if sketch.p != 1:
        raise InvalidParameterError("the uniform-correlation search supports a single covariate")
    if sim_budget < MIN_SIM_BUDGET:
        raise InvalidParameterError(f"sim_budget must be at least {MIN_SIM_BUDGET}")
    nu = a_c = 2.0
    target = (sketch.r_x[0] / 4.0) ** 2
    rng = np.random.default_rng(seed)
    n = int(sim_budget)
    e_theta = rng.standard_normal(n)
    e_beta = rng.standard_normal(n)
    g_c = rng.gamma(a_c, 1.0, n)
    g_s = rng.gamma(a_s, 1.0, n)
    g_delta = rng.gamma(nu, 1.0, n)

    table = []
    best = None
    for k1, k2, k3 in _simplex_grid(step):
        b_theta = k1 * target
        b_s = a_s / (k2 * target * (nu - 1.0))
        b_c = k3 * target * (a_c - 1.0)
        c = b_c / g_c
        beta = np.sqrt(b_theta) * e_theta + np.sqrt(c) * e_beta
        delta = (g_s / b_s) / g_delta
        ks = _uniform_ks(-beta / np.sqrt(beta**2 + delta))
        table.append((k1, k2, k3, ks))
        if best is None or ks < best[-1]:
            best = (k1, k2, k3, b_theta, b_s, b_c, ks)
    k1, k2, k3, b_theta, b_s, b_c, ks = best
    prior = HyperPrior(
        **center_scale_hyperparams(sketch),
        a_theta=np.zeros(1),
        B_theta=np.array([[b_theta]]),
        # IG(a_c, b_c) on the scalar C is IW_1(2 a_c, 2 b_c)
        a_C=2.0 * a_c,
        B_C=np.array([[2.0 * b_c]]),
        a_s=np.array([a_s]),
        b_s=np.array([b_s]),
        nu=np.array([nu]),
        a_alpha=a_alpha,
        b_alpha=b_alpha,
    )
    return UniformCorrelationResult(prior, (k1, k2, k3), b_theta, b_s, b_c, ks, table)


def implied_base_distribution_check(v, T, draws=100_000, seed=0):
    """Sample ``IW(v, T)``, factorize, and test the implied ``(beta, delta)`` laws.

    For diagonal ``T`` the factorization should give
    ``delta_i ~ IG((v + i - r) / 2, T_i / 2)`` and
    ``-beta[i, k] sqrt(T_k / delta_i) ~ N(0, 1)`` for ``k < i``.
    Returns a dict of KS statistics keyed by the parameter name (1-based
    indices as in ``delta_2`` or ``beta_3_1``).
    """
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if not np.allclose(T, np.diag(np.diag(T))):
        raise InvalidParameterError("only diagonal scale matrices are supported")
    t = np.diag(T)
    r = len(t)
    rng = np.random.default_rng(seed)
    sigma = stats.invwishart.rvs(df=v, scale=T, size=draws, random_state=rng).reshape(draws, r, r)
    beta_tilde, delta = factorize_covariance_batch(sigma)
    report = {"v": v, "T": t.tolist(), "draws": draws, "delta": {}, "beta": {}, "delta_mean": {}}
    for i in range(1, r):
        shape = 0.5 * (v + (i + 1) - r)
        dist = stats.invgamma(shape, scale=0.5 * t[i])
        report["delta"][f"delta_{i + 1}"] = float(stats.kstest(delta[:, i], dist.cdf).statistic)
        report["delta_mean"][f"delta_{i + 1}"] = [float(delta[:, i].mean()), float(dist.mean())]
        for k in range(i):
            std = -beta_tilde[:, tril_index(i, k)] * np.sqrt(t[k] / delta[:, i])
            report["beta"][f"beta_{i + 1}_{k + 1}"] = float(stats.kstest(std, stats.norm.cdf).statistic)
    report["sigma_mean"] = sigma.mean(axis=0).tolist()
    return report


def sample_hyper_state(prior, rng):
    """Draw ``psi`` from its hyperprior."""
    m = rng.multivariate_normal(prior.a_m, prior.B_m)
    V = np.atleast_2d(stats.invwishart.rvs(df=prior.a_V, scale=prior.B_V, random_state=rng))
    qf = prior.n_free_beta
    if qf:
        theta = rng.multivariate_normal(prior.a_theta, prior.B_theta)
        C = np.atleast_2d(stats.invwishart.rvs(df=prior.a_C, scale=prior.B_C, random_state=rng))
    else:
        theta, C = np.zeros(0), np.zeros((0, 0))
    s = rng.gamma(prior.a_s, 1.0 / prior.b_s)
    return HyperState(m=m, V=V, theta=theta, C=C, s=s, prior=prior)


def prior_predictive_curves(prior, sketch, n_draws=2000, truncation=50, n_grid=41, seed=0):
    """Prior simulation of the marginal regression curves ``Pr(y=1 | x_j)``.

    Returns ``(axes, curves)`` where ``axes[j]`` spans ``c_j +- r_j / 2`` and
    ``curves[j]`` has shape ``(n_draws, n_grid)``.
    """
    rng = np.random.default_rng(seed)
    axes = [np.linspace(c - 0.5 * r, c + 0.5 * r, n_grid) for r, c in zip(sketch.r_x, sketch.c_x)]
    curves = [np.empty((n_draws, n_grid)) for _ in axes]
    for d in range(n_draws):
        hyper = sample_hyper_state(prior, rng)
        alpha = rng.gamma(prior.a_alpha, 1.0 / prior.b_alpha)
        state = sample_prior_state(hyper, truncation, max(alpha, 1e-8), rng)
        for j, axis in enumerate(axes):
            pts = axis[:, None]
            with np.errstate(invalid="ignore", divide="ignore"):
                curves[j][d] = joint_prob_y1_x(state, pts, dims=[j]) / mixture_density_x(state, pts, dims=[j])
    return axes, curves


def summarize_curves(curves, level=0.90):
    lo, hi = 0.5 - level / 2, 0.5 + level / 2
    out = []
    for c in curves:
        out.append(
            {
                "mean": np.nanmean(c, axis=0),
                "lower": np.nanquantile(c, lo, axis=0),
                "upper": np.nanquantile(c, hi, axis=0),
            }
        )
    return out


__all__ = [
    "PriorSketch",
    "center_scale_hyperparams",
    "elicit_inverse_wishart",
    "elicit_uniform_correlation",
    "implied_base_distribution_check",
    "prior_predictive_curves",
    "sample_hyper_state",
    "summarize_curves",
]
