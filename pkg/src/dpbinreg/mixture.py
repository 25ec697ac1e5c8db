"""Truncated stick-breaking mixture ``G_N`` and its density evaluations."""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import log_ndtr, logsumexp, ndtr

from .errors import InvalidParameterError
from .kernel import KernelAtom, covariance, kernel_logpdf, mvn_logpdf, n_free, probit_coefficients

_CLAMP_EPS = 1e-15


def stick_breaking_weights(zetas):
    """Weights ``p_1..p_N`` from ``N - 1`` stick fractions in ``(0, 1)``.

    The last weight is the remainder of the stick, so the result sums to one.
    """
    zetas = np.asarray(zetas, dtype=float)
    if np.any(~(zetas > 0)) or np.any(~(zetas < 1)):
        raise InvalidParameterError("stick fractions must lie in the open interval (0, 1)")
    return _stick_break(zetas)


def _stick_break(zetas):
    # no validation: the sampler may produce zeta == 1.0 in floating point
    remaining = np.concatenate([[1.0], np.cumprod(1.0 - zetas)])
    weights = np.empty(len(zetas) + 1)
    weights[:-1] = zetas * remaining[:-1]
    last = 1.0 - weights[:-1].sum()
    if last < 0:
        if last < -_CLAMP_EPS * len(weights):
            raise InvalidParameterError(f"stick-breaking remainder is negative ({last:g})")
        last = 0.0
    weights[-1] = last
    return weights / weights.sum()


def log_gamma_variates(shape, rng):
    """``log G`` for ``G ~ gamma(shape, 1)``, accurate when ``G`` would underflow.

    Shapes below one use ``G = G' U^(1/shape)`` with ``G' ~ gamma(shape + 1)``.
    """
    shape = np.asarray(shape, dtype=float)
    small = shape < 1.0
    log_g = np.log(rng.gamma(np.where(small, shape + 1.0, shape)))
    u = rng.uniform(size=shape.shape)
    return np.where(small, log_g + np.log(u) / np.where(small, shape, 1.0), log_g)


def sample_log_sticks(a, b, rng):
    """``(log zeta, log(1 - zeta))`` for ``zeta ~ beta(a, b)`` without rounding ``zeta`` to 1."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    la = log_gamma_variates(a, rng)
    lb = log_gamma_variates(b, rng)
    total = np.logaddexp(la, lb)
    return la - total, lb - total


def log_stick_weights(log_z, log_1mz):
    """Log weights from log stick fractions; the last entry is ``sum(log(1 - zeta))``."""
    before = np.concatenate([[0.0], np.cumsum(log_1mz)])
    log_w = np.append(log_z + before[:-1], before[-1])
    return log_w - logsumexp(log_w)


@dataclass(frozen=True)
class MixtureState:
    """Truncated DP realization ``G_N``.

    Atoms are stored stacked: ``mu`` is ``(N, p+1)``, ``beta_tilde`` is
    ``(N, q)`` and ``delta`` is ``(N, p+1)`` with ``delta[:, 0] == 1``.
    """

    weights: np.ndarray
    mu: np.ndarray
    beta_tilde: np.ndarray
    delta: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        n_atoms, r = mu.shape
        bt = np.asarray(self.beta_tilde, dtype=float).reshape(n_atoms, n_free(r - 1))
        delta = np.asarray(self.delta, dtype=float).reshape(n_atoms, r)
        if w.shape != (n_atoms,):
            raise InvalidParameterError("weights and atoms disagree in number")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidParameterError("weights must lie on the simplex")
        if np.any(delta <= 0) or np.any(delta[:, 0] != 1.0):
            raise InvalidParameterError("delta must be positive with delta[:, 0] == 1")
        if not self.alpha > 0:
            raise InvalidParameterError("alpha must be positive")
        for name, val in (("weights", w), ("mu", mu), ("beta_tilde", bt), ("delta", delta)):
            object.__setattr__(self, name, val)

    @classmethod
    def from_atoms(cls, weights, atoms, alpha=1.0):
        return cls(
            weights,
            np.stack([a.mu for a in atoms]),
            np.stack([a.beta_tilde for a in atoms]),
            np.stack([a.delta for a in atoms]),
            alpha,
        )

    @property
    def n_atoms(self):
        return len(self.weights)

    @property
    def p(self):
        return self.mu.shape[1] - 1

    def atom(self, index):
        return KernelAtom(self.mu[index], self.beta_tilde[index], self.delta[index])

    @property
    def atoms(self):
        return [self.atom(i) for i in range(self.n_atoms)]

    @cached_property
    def sigma(self):
        return covariance(self.beta_tilde, self.delta)

    @cached_property
    def log_weights(self):
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    def marginal(self, dims=None):
        """Means and covariances of ``(z, x[dims])`` for every atom."""
        if dims is None:
            return self.mu, self.sigma
        idx = np.concatenate([[0], 1 + np.asarray(dims, dtype=int)])
        return self.mu[:, idx], self.sigma[:, idx[:, None], idx[None, :]]

    def component_terms(self, x, dims=None):
        """Per-atom ``log p_l + log N(x; mu_l^x, Sigma_l^xx)`` and ``log pi_l(x)``.

        ``x`` has shape ``(m, k)`` where ``k = len(dims)`` (``p`` when
        ``dims`` is None). Returns two ``(m, N)`` arrays.
        """
        mu, sigma = self.marginal(dims)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != mu.shape[1] - 1:
            raise InvalidParameterError("covariate dimension mismatch")
        log_fx = mvn_logpdf(x[:, None, :], mu[None, :, 1:], sigma[None, :, 1:, 1:])
        a, b, s = probit_coefficients(mu, sigma)
        log_pi = log_ndtr((a[None, :] + x @ b.T) / s[None, :])
        return self.log_weights[None, :] + log_fx, log_pi


def mixture_logdensity_zx(state, z, x):
    """Log of ``f(z, x; G_N)``; ``z`` is ``(m,)`` and ``x`` is ``(m, p)``."""
    zx = np.column_stack([np.atleast_1d(z), np.atleast_2d(x)])
    comp = kernel_logpdf(state.mu[None], state.beta_tilde[None], state.delta[None], zx[:, None, :])
    return logsumexp(state.log_weights[None, :] + comp, axis=1)


def mixture_density_zx(state, z, x):
    return np.exp(mixture_logdensity_zx(state, z, x))


def mixture_density_x(state, x, dims=None):
    """Covariate density ``f(x; G_N)`` (marginal over ``x[dims]`` if given)."""
    log_fx, _ = state.component_terms(x, dims)
    return np.exp(logsumexp(log_fx, axis=1))


def joint_prob_y1_x(state, x, dims=None):
    """``Pr(y = 1, x; G_N) = sum_l p_l N(x; mu_l^x, Sigma_l^xx) pi_l(x)``."""
    log_fx, log_pi = state.component_terms(x, dims)
    return np.exp(logsumexp(log_fx + log_pi, axis=1))


def mean_absolute_fitness(state):
    """``Pr(y = 1) = sum_l p_l Phi(mu_l^z)`` (the latent variance is 1)."""
    return float(np.sum(state.weights * ndtr(state.mu[:, 0])))


def sample_atoms_from_base(hyper, size, rng):
    """Draw ``size`` atoms from ``G_0(. | psi)`` as stacked arrays ``(mu, beta_tilde, delta)``."""
    prior = hyper.prior
    p = prior.p
    try:
        mu = rng.multivariate_normal(hyper.m, hyper.V, size=size, method="cholesky")
    except np.linalg.LinAlgError as exc:
        raise InvalidParameterError("V is not positive definite") from exc
    beta_tilde = np.zeros((size, n_free(p)))
    if prior.n_free_beta:
        try:
            beta_tilde[:, prior.beta_free] = rng.multivariate_normal(hyper.theta, hyper.C, size=size, method="cholesky")
        except np.linalg.LinAlgError as exc:
            raise InvalidParameterError("C is not positive definite") from exc
    delta = np.ones((size, p + 1))
    delta[:, 1:] = hyper.s / rng.gamma(hyper.nu, 1.0, size=(size, p))
    return mu, beta_tilde, delta


def sample_atom_from_base(hyper, rng):
    """One atom ``W ~ G_0``: ``mu ~ N(m, V)``, ``beta_tilde ~ N(theta, C)``, ``delta_i ~ IG(nu_i, s_i)``."""
    mu, bt, delta = sample_atoms_from_base(hyper, 1, rng)
    return KernelAtom(mu[0], bt[0], delta[0])


def sample_prior_state(hyper, n_atoms, alpha, rng):
    """A full ``G_N`` drawn from the truncated DP prior given ``alpha`` and ``psi``."""
    log_w = log_stick_weights(*sample_log_sticks(np.ones(n_atoms - 1), alpha, rng))
    mu, bt, delta = sample_atoms_from_base(hyper, n_atoms, rng)
    return MixtureState(np.exp(log_w), mu, bt, delta, alpha)
