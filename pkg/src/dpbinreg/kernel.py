"""Single mixture kernel: the unit lower-triangular / diagonal reparameterization.

A kernel on ``(z, x)`` with ``x`` of length ``p`` is a normal
``N_{p+1}(mu, Sigma)`` with ``Sigma = inv(beta) @ diag(delta) @ inv(beta).T``.
``beta`` is unit lower triangular and ``delta[0]`` (the latent response
variance) is pinned to 1.

The free entries of ``beta`` are stored in ``beta_tilde`` row by row::

    beta_tilde = (beta[1,0], beta[2,0], beta[2,1], beta[3,0], ...)

so row ``k`` of ``beta`` (0-based, ``k >= 1``) owns the slice
``beta_tilde[k(k-1)/2 : k(k+1)/2]``. All functions accept leading batch
dimensions unless noted otherwise.
"""
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import log_ndtr, ndtr

from .errors import InvalidParameterError, NumericalDegeneracyError

LOG_2PI = np.log(2.0 * np.pi)


def n_free(p):
    """Number of free entries of ``beta`` for ``p`` covariates."""
    return p * (p + 1) // 2


def dim_from_free(q):
    """Kernel dimension ``r = p + 1`` given ``q`` free entries."""
    r = int(round((1 + np.sqrt(1 + 8 * q)) / 2))
    if r * (r - 1) // 2 != q:
        raise InvalidParameterError(f"{q} is not a triangular number")
    return r


def row_slice(k):
    """Slice of ``beta_tilde`` holding row ``k`` (0-based, ``k >= 1``) of ``beta``."""
    return slice(k * (k - 1) // 2, k * (k + 1) // 2)


def tril_index(k, j):
    """Position of ``beta[k, j]`` (``j < k``) inside ``beta_tilde``."""
    if not 0 <= j < k:
        raise InvalidParameterError(f"beta[{k}, {j}] is not a free entry")
    return k * (k - 1) // 2 + j


def first_column_mask(p):
    """Boolean mask over ``beta_tilde`` selecting ``beta[k, 0]``, the z-x coupling."""
    mask = np.zeros(n_free(p), dtype=bool)
    for k in range(1, p + 1):
        mask[tril_index(k, 0)] = True
    return mask


def unit_lower(beta_tilde):
    """Assemble the unit lower-triangular ``beta`` from its free entries."""
    beta_tilde = np.asarray(beta_tilde, dtype=float)
    r = dim_from_free(beta_tilde.shape[-1])
    beta = np.zeros(beta_tilde.shape[:-1] + (r, r))
    rows, cols = np.tril_indices(r, -1)
    # np.tril_indices walks rows in order, matching the storage order above
    beta[..., rows, cols] = beta_tilde
    beta[..., np.arange(r), np.arange(r)] = 1.0
    return beta


def _check_delta(delta):
    delta = np.asarray(delta, dtype=float)
    if not np.all(np.isfinite(delta)) or np.any(delta <= 0):
        raise InvalidParameterError("delta entries must be finite and positive")
    return delta


def covariance(beta_tilde, delta):
    """``Sigma = inv(beta) diag(delta) inv(beta)^T``, batched over leading axes."""
    delta = _check_delta(delta)
    beta_inv = np.linalg.inv(unit_lower(beta_tilde))
    return np.einsum("...ik,...k,...jk->...ij", beta_inv, delta, beta_inv)


def precision(beta_tilde, delta):
    """``inv(Sigma) = beta^T diag(1/delta) beta`` without any matrix inversion."""
    delta = _check_delta(delta)
    beta = unit_lower(beta_tilde)
    return np.einsum("...ki,...k,...kj->...ij", beta, 1.0 / delta, beta)


def factorize_covariance(sigma):
    """Square-root-free Cholesky factorization of an SPD matrix.

    Parameters
    ----------
    sigma : array of shape (r, r)

    Returns
    -------
    beta_tilde : array of shape (r(r-1)/2,)
    delta : array of shape (r,)
        With ``diag(delta) = beta @ sigma @ beta.T``.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise InvalidParameterError("sigma must be a square matrix")
    if not np.allclose(sigma, sigma.T, rtol=1e-12, atol=1e-14):
        raise NumericalDegeneracyError("sigma is not symmetric")
    try:
        chol = linalg.cholesky(sigma, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalDegeneracyError("sigma is not positive definite") from exc
    diag = np.diag(chol)
    unit = chol / diag
    beta = linalg.solve_triangular(unit, np.eye(len(sigma)), lower=True, unit_diagonal=True)
    rows, cols = np.tril_indices(len(sigma), -1)
    return beta[rows, cols], diag**2


def factorize_covariance_batch(sigma):
    """Vectorized :func:`factorize_covariance` over a stack ``(..., r, r)``."""
    sigma = np.asarray(sigma, dtype=float)
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError("stack contains a non-SPD matrix") from exc
    diag = np.diagonal(chol, axis1=-2, axis2=-1)
    beta = np.linalg.inv(chol / diag[..., None, :])
    r = sigma.shape[-1]
    rows, cols = np.tril_indices(r, -1)
    return beta[..., rows, cols], diag**2


@dataclass(frozen=True)
class CovarianceBlocks:
    sigma_zz: float
    sigma_zx: np.ndarray
    sigma_xx: np.ndarray

    @property
    def full(self):
        p = len(self.sigma_zx)
        out = np.empty((p + 1, p + 1))
        out[0, 0] = self.sigma_zz
        out[0, 1:] = self.sigma_zx
        out[1:, 0] = self.sigma_zx
        out[1:, 1:] = self.sigma_xx
        return out

    @property
    def conditional_variance(self):
        """``var(z | x) = sigma_zz - sigma_zx inv(sigma_xx) sigma_zx^T``."""
        return float(self.sigma_zz - self.sigma_zx @ np.linalg.solve(self.sigma_xx, self.sigma_zx))


@dataclass(frozen=True)
class KernelAtom:
    """One mixture component ``(mu, beta_tilde, delta)`` with ``delta[0] == 1``."""

    mu: np.ndarray
    beta_tilde: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        bt = np.atleast_1d(np.asarray(self.beta_tilde, dtype=float))
        delta = _check_delta(np.atleast_1d(self.delta))
        r = len(mu)
        if r < 2 or len(delta) != r or len(bt) != n_free(r - 1):
            raise InvalidParameterError(
                f"inconsistent atom shapes: mu {mu.shape}, beta_tilde {bt.shape}, delta {delta.shape}"
            )
        if delta[0] != 1.0:
            raise InvalidParameterError("delta[0] must equal 1 (identifiability restriction)")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "beta_tilde", bt)
        object.__setattr__(self, "delta", delta)

    @property
    def p(self):
        return len(self.mu) - 1

    @property
    def beta(self):
        return unit_lower(self.beta_tilde)

    @property
    def sigma(self):
        return covariance(self.beta_tilde, self.delta)

    @classmethod
    def from_moments(cls, mu, sigma):
        """Build an atom from a mean and a covariance with ``sigma[0, 0] == 1``."""
        bt, delta = factorize_covariance(sigma)
        if not np.isclose(delta[0], 1.0, rtol=0, atol=1e-12):
            raise InvalidParameterError("sigma[0, 0] must equal 1")
        delta[0] = 1.0
        return cls(mu, bt, delta)


def reconstruct_covariance(atom):
    """Partition the kernel covariance of ``atom`` into z/x blocks."""
    sigma = atom.sigma
    return CovarianceBlocks(float(sigma[0, 0]), sigma[0, 1:].copy(), sigma[1:, 1:].copy())


def probit_coefficients(mu, sigma):
    """Intercept, slopes and scale of the component probit ``Phi((a + x b) / s)``.

    Works on stacks: ``mu`` is ``(..., r)`` and ``sigma`` is ``(..., r, r)``.
    ``sigma[..., 0, 0]`` is used as given, so unrestricted kernels are
    accepted as well.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    sxx = sigma[..., 1:, 1:]
    sxz = sigma[..., 1:, 0]
    slope = np.linalg.solve(sxx, sxz[..., None])[..., 0]
    var = sigma[..., 0, 0] - np.einsum("...i,...i->...", sxz, slope)
    if np.any(var <= 0):
        raise NumericalDegeneracyError("conditional variance of z given x is not positive")
    intercept = mu[..., 0] - np.einsum("...i,...i->...", slope, mu[..., 1:])
    return intercept, slope, np.sqrt(var)


def probit_from_moments(mu, sigma, x):
    """``Pr(z > 0 | x)`` for a normal ``(z, x)`` kernel with any ``sigma_zz``."""
    a, b, s = probit_coefficients(mu, sigma)
    return ndtr((a + np.asarray(x, dtype=float) @ b) / s)


def component_probit(atom, x):
    """Probability ``Pr(y = 1 | x)`` under a single kernel.

    ``x`` may be a single covariate vector or an ``(m, p)`` array of them.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != atom.p:
        raise InvalidParameterError(f"x has {x.shape[-1]} covariates, atom expects {atom.p}")
    return probit_from_moments(atom.mu, atom.sigma, x)


def log_component_probit(atom, x):
    a, b, s = probit_coefficients(atom.mu, atom.sigma)
    return log_ndtr((a + np.asarray(x, dtype=float) @ b) / s)


def kernel_logpdf(mu, beta_tilde, delta, y):
    """Log density of ``y`` under ``N(mu, inv(beta) diag(delta) inv(beta)^T)``.

    Evaluated through ``beta`` directly. ``y`` broadcasts against the
    parameters; the last axis of every argument is the kernel dimension.
    """
    delta = np.asarray(delta, dtype=float)
    resid = np.asarray(y, dtype=float) - np.asarray(mu, dtype=float)
    beta = unit_lower(beta_tilde)
    rotated = np.einsum("...ij,...j->...i", beta, resid)
    r = resid.shape[-1]
    return -0.5 * (r * LOG_2PI + np.sum(np.log(delta), axis=-1) + np.sum(rotated**2 / delta, axis=-1))


def mvn_logpdf(x, mean, cov):
    """Normal log density via Cholesky, batched over leading axes of ``mean``/``cov``."""
    x = np.asarray(x, dtype=float)
    resid = x - mean
    chol = np.linalg.cholesky(cov)
    # invert the (small) factor once, then broadcast over evaluation points
    sol = np.einsum("...ij,...j->...i", np.linalg.inv(chol), resid)
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    return -0.5 * (resid.shape[-1] * LOG_2PI + logdet + np.sum(sol**2, axis=-1))


def kernel_density(atom, z, x):
    """Joint density ``N_{p+1}((z, x); mu, Sigma)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[-1] != atom.p:
        raise InvalidParameterError("dimension mismatch between x and atom")
    zx = np.concatenate([np.broadcast_to(np.asarray(z, float)[..., None], x.shape[:-1] + (1,)), x], axis=-1)
    return np.exp(kernel_logpdf(atom.mu, atom.beta_tilde, atom.delta, zx))


def marginal_x_logpdf(atom, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != atom.p:
        raise InvalidParameterError("dimension mismatch between x and atom")
    return mvn_logpdf(x, atom.mu[1:], atom.sigma[1:, 1:])


def marginal_x_density(atom, x):
    """Covariate density ``N_p(x; mu^x, Sigma^xx)``."""
    return np.exp(marginal_x_logpdf(atom, x))
