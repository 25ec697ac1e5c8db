"""Centering-distribution parameters and their hyperpriors."""
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidParameterError
from .kernel import n_free


def _spd(mat, name):
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if mat.shape[0] != mat.shape[1] or not np.allclose(mat, mat.T):
        raise InvalidParameterError(f"{name} must be a symmetric square matrix")
    if mat.size and np.linalg.eigvalsh(mat).min() <= 0:
        raise InvalidParameterError(f"{name} must be positive definite")
    return mat


def _positive(vec, name):
    vec = np.atleast_1d(np.asarray(vec, dtype=float))
    if np.any(~np.isfinite(vec)) or np.any(vec <= 0):
        raise InvalidParameterError(f"{name} must be positive")
    return vec


@dataclass(frozen=True)
class HyperPrior:
    """Fixed hyper-hyperparameters of the model.

    ``m ~ N(a_m, B_m)``, ``V ~ IW(a_V, B_V)``, ``theta ~ N(a_theta, B_theta)``,
    ``C ~ IW(a_C, B_C)``, ``s_i ~ gamma(a_s_i, rate=b_s_i)`` and
    ``alpha ~ gamma(a_alpha, rate=b_alpha)``. ``nu`` holds the inverse-gamma
    shapes of ``delta_2..delta_{p+1}``.

    ``beta_free`` marks the entries of ``beta_tilde`` that are random; the
    remaining ones are pinned at zero (the product-kernel model pins the
    first column of ``beta``). ``theta`` and ``C`` live on the free entries
    only, so ``a_theta`` has length ``beta_free.sum()``.

    The inverse-Wishart ``IW_k(a, B)`` has density proportional to
    ``|S|^{-(a+k+1)/2} exp(-tr(B S^{-1}) / 2)``, mean ``B / (a - k - 1)``.
    """

    a_m: np.ndarray
    B_m: np.ndarray
    a_V: float
    B_V: np.ndarray
    a_theta: np.ndarray
    B_theta: np.ndarray
    a_C: float
    B_C: np.ndarray
    a_s: np.ndarray
    b_s: np.ndarray
    nu: np.ndarray
    a_alpha: float = 2.0
    b_alpha: float = 1.0
    beta_free: np.ndarray = None

    def __post_init__(self):
        a_m = np.atleast_1d(np.asarray(self.a_m, dtype=float))
        r = len(a_m)
        p = r - 1
        q = n_free(p)
        free = np.ones(q, dtype=bool) if self.beta_free is None else np.asarray(self.beta_free, dtype=bool)
        qf = int(free.sum())
        if free.shape != (q,):
            raise InvalidParameterError("beta_free has the wrong length")
        object.__setattr__(self, "a_m", a_m)
        object.__setattr__(self, "beta_free", free)
        object.__setattr__(self, "B_m", _spd(self.B_m, "B_m"))
        object.__setattr__(self, "B_V", _spd(self.B_V, "B_V"))
        object.__setattr__(self, "a_theta", np.asarray(self.a_theta, dtype=float).reshape(qf))
        object.__setattr__(self, "B_theta", _spd(np.asarray(self.B_theta, float).reshape(qf, qf), "B_theta"))
        object.__setattr__(self, "B_C", _spd(np.asarray(self.B_C, float).reshape(qf, qf), "B_C"))
        for name in ("a_s", "b_s", "nu"):
            vec = _positive(self.__dict__[name], name)
            if vec.shape != (p,):
                raise InvalidParameterError(f"{name} must have length p={p}")
            object.__setattr__(self, name, vec)
        if self.B_m.shape != (r, r) or self.B_V.shape != (r, r):
            raise InvalidParameterError("B_m and B_V must be (p+1)x(p+1)")
        if self.a_V <= r - 1 or (qf and self.a_C <= qf - 1):
            raise InvalidParameterError("inverse-Wishart degrees of freedom too small")
        if self.a_alpha <= 0 or self.b_alpha <= 0:
            raise InvalidParameterError("a_alpha and b_alpha must be positive")

    @property
    def p(self):
        return len(self.a_m) - 1

    @property
    def n_free_beta(self):
        return int(self.beta_free.sum())

    def restricted(self, beta_free):
        """Copy with a smaller set of free ``beta`` entries (sub-blocks of the theta/C priors)."""
        beta_free = np.asarray(beta_free, dtype=bool)
        if np.any(beta_free & ~self.beta_free):
            raise InvalidParameterError("cannot free entries that are pinned")
        keep = beta_free[self.beta_free]
        ix = np.ix_(keep, keep)
        return replace(
            self,
            beta_free=beta_free,
            a_theta=self.a_theta[keep],
            B_theta=self.B_theta[ix],
            B_C=self.B_C[ix],
            a_C=self.a_C - (len(keep) - keep.sum()),
        )

    def to_dict(self):
        out = {}
        for key, val in self.__dict__.items():
            out[key] = val.tolist() if isinstance(val, np.ndarray) else val
        return out


@dataclass(frozen=True)
class HyperState:
    """Current value of ``psi = (m, V, theta, C, s)``."""

    m: np.ndarray
    V: np.ndarray
    theta: np.ndarray
    C: np.ndarray
    s: np.ndarray
    prior: HyperPrior = field(repr=False)

    def __post_init__(self):
        prior = self.prior
        qf = prior.n_free_beta
        object.__setattr__(self, "m", np.asarray(self.m, dtype=float).reshape(prior.p + 1))
        object.__setattr__(self, "V", _spd(self.V, "V"))
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float).reshape(qf))
        object.__setattr__(self, "C", _spd(np.asarray(self.C, float).reshape(qf, qf), "C"))
        object.__setattr__(self, "s", _positive(self.s, "s").reshape(prior.p))

    @property
    def nu(self):
        return self.prior.nu

    @classmethod
    def at_prior_mean(cls, prior):
        """Initial ``psi`` at the hyperprior means."""
        r = prior.p + 1
        qf = prior.n_free_beta
        return cls(
            m=prior.a_m.copy(),
            V=prior.B_V / (prior.a_V - r - 1) if prior.a_V > r + 1 else prior.B_V.copy(),
            theta=prior.a_theta.copy(),
            C=prior.B_C / (prior.a_C - qf - 1) if prior.a_C > qf + 1 else prior.B_C.copy(),
            s=prior.a_s / prior.b_s,
            prior=prior,
        )

    def to_dict(self):
        return {
            "m": self.m.tolist(),
            "V": self.V.tolist(),
            "theta": self.theta.tolist(),
            "C": self.C.tolist(),
            "s": self.s.tolist(),
        }
