"""Product-kernel comparison model and posterior predictive loss."""
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .gibbs import run_chains
from .kernel import first_column_mask


def product_kernel_prior(prior):
    """Restrict a hyperprior so ``beta[k, 0] = 0`` for all ``k``, i.e. ``Sigma^zx = 0``."""
    return prior.restricted(prior.beta_free & ~first_column_mask(prior.p))


def fit_product_kernel(data, config, prior, n_chains=1, hyper_init=None):
    """Run the sampler with z independent of x inside every component."""
    return run_chains(data, config, product_kernel_prior(prior), n_chains, hyper_init)


def _log_terms(state, X):
    log_fx, log_pi = state.component_terms(X)
    return logsumexp(log_fx + log_pi, axis=1), logsumexp(log_fx, axis=1)


def predictive_moments(draws, X, per_draw=False, flag_below=1e-300):
    """Posterior predictive mean and variance of a new binary response at each row of ``X``.

    The default is the ratio estimator: the posterior average of
    ``Pr(y=1, x_i; G)`` divided by the posterior average of ``f(x_i; G)``.
    With ``per_draw`` the conditional ``Pr(y=1 | x_i; G)`` is averaged
    instead. Since ``y^2 = y`` the variance is ``mean (1 - mean)``.

    Returns ``(mean, var, flagged)``; ``flagged`` marks rows whose
    denominator fell below ``flag_below``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = len(X)
    log_num = np.empty((len(draws), n))
    log_den = np.empty((len(draws), n))
    for d, state in enumerate(draws.states()):
        log_num[d], log_den[d] = _log_terms(state, X)
    S = len(draws)
    if per_draw:
        mean = np.exp(log_num - log_den).mean(axis=0)
        log_den_avg = logsumexp(log_den, axis=0) - np.log(S)
    else:
        log_den_avg = logsumexp(log_den, axis=0) - np.log(S)
        mean = np.exp(logsumexp(log_num, axis=0) - np.log(S) - log_den_avg)
    mean = np.clip(mean, 0.0, 1.0)
    flagged = log_den_avg < np.log(flag_below)
    return mean, mean * (1.0 - mean), flagged


@dataclass(frozen=True)
class PplReport:
    """Posterior predictive loss ``D_k = P + k / (k + 1) G``."""

    P: float
    G: float
    mean: np.ndarray
    var: np.ndarray
    y: np.ndarray
    flagged: np.ndarray

    def D(self, k):
        if np.isinf(k):
            return self.P + self.G
        return self.P + k / (k + 1.0) * self.G

    def to_dict(self, ks=(1, 10, 100, np.inf)):
        return {
            "P": self.P,
            "G": self.G,
            "D": {("inf" if np.isinf(k) else str(k)): self.D(k) for k in ks},
            "n_flagged": int(self.flagged.sum()),
        }


def ppl_criterion(draws, data, per_draw=False):
    """Penalty ``P = sum var(y_new,i)`` and fit ``G = sum (y_i - E y_new,i)^2``."""
    mean, var, flagged = predictive_moments(draws, data.X, per_draw)
    y = np.asarray(data.y, dtype=float)
    return PplReport(float(var.sum()), float(np.sum((y - mean) ** 2)), mean, var, y, flagged)
