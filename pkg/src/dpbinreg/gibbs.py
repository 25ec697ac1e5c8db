"""Blocked Gibbs sampler for the DP mixture binary regression model.

One sweep updates, in order: latent responses ``z``, labels ``L``, atom
means, atom ``beta_tilde``, atom ``delta``, stick-breaking weights, the DP
precision ``alpha`` and finally ``psi``. Atom updates are batched over all
``N`` atoms; an empty component receives zero sufficient statistics, which
turns its full conditional into the centering distribution.

Labels are 0-based (``0..N-1``).
"""
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .errors import InvalidParameterError, NumericalDegeneracyError
from .hyper import HyperState
from .kernel import covariance, kernel_logpdf, n_free, precision, probit_coefficients, row_slice, unit_lower
from .mixture import MixtureState, log_stick_weights, sample_log_sticks, sample_prior_state
from .truncnorm import sample_sign_truncated

LOG_PN_FLOOR = np.log(1e-300)


@dataclass(frozen=True)
class LatentState:
    z: np.ndarray
    labels: np.ndarray


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 5000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    truncation: int = 50
    keep_latent: bool = False

    def __post_init__(self):
        if self.iterations < 1 or not 0 <= self.burn_in < self.iterations:
            raise InvalidParameterError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise InvalidParameterError("thin must be >= 1")
        if self.truncation < 2:
            raise InvalidParameterError("truncation must be >= 2")

    @property
    def n_saved(self):
        return len(range(self.burn_in, self.iterations, self.thin))


@dataclass
class ChainState:
    """Mutable state of a single chain."""

    weights: np.ndarray
    mu: np.ndarray
    beta_tilde: np.ndarray
    delta: np.ndarray
    alpha: float
    z: np.ndarray
    labels: np.ndarray
    hyper: HyperState
    log_pn_floored: int = 0

    @property
    def prior(self):
        return self.hyper.prior

    @property
    def n_atoms(self):
        return len(self.weights)

    def mixture(self):
        return MixtureState(self.weights, self.mu, self.beta_tilde, self.delta, self.alpha)

    def copy(self):
        return replace(
            self,
            weights=self.weights.copy(),
            mu=self.mu.copy(),
            beta_tilde=self.beta_tilde.copy(),
            delta=self.delta.copy(),
            z=self.z.copy(),
            labels=self.labels.copy(),
        )


def augmented(state, data):
    """Stack ``y* = (z, x)`` as an ``(n, p+1)`` array."""
    return np.column_stack([state.z, data.X])


def occupancy(labels, n_atoms):
    return np.bincount(labels, minlength=n_atoms)


def _draw_gaussian_from_precision(prec, linear, rng, what):
    """Batched draw from ``N(inv(prec) @ linear, inv(prec))``."""
    try:
        chol = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        for i, mat in enumerate(prec):
            if np.any(np.linalg.eigvalsh(mat) <= 0):
                raise NumericalDegeneracyError(f"{what}: conditional precision not SPD", atom=i) from None
        raise
    mean = np.linalg.solve(prec, linear[..., None])[..., 0]
    eps = rng.standard_normal(linear.shape)
    # chol^T x = eps  gives  x ~ N(0, inv(prec))
    return mean + np.linalg.solve(np.swapaxes(chol, -1, -2), eps[..., None])[..., 0]


def update_latent_z(state, data, rng):
    """Redraw every ``z_i`` from its truncated normal full conditional."""
    sigma = covariance(state.beta_tilde, state.delta)
    a, b, s = probit_coefficients(state.mu, sigma)
    lab = state.labels
    mean = a[lab] + np.einsum("ij,ij->i", data.X, b[lab])
    z = sample_sign_truncated(mean, s[lab], data.y == 1, rng)
    return LatentState(z, lab.copy())


def label_log_probs(state, data):
    """Unnormalized ``log p_l + log N(y*_i; mu_l, Sigma_l)``, shape ``(n, N)``."""
    ystar = augmented(state, data)
    with np.errstate(divide="ignore"):
        logw = np.log(state.weights)
    comp = kernel_logpdf(state.mu[None], state.beta_tilde[None], state.delta[None], ystar[:, None, :])
    return logw[None, :] + comp


def update_labels(state, data, rng):
    """Sample every ``L_i`` from its discrete full conditional (log-sum-exp normalized)."""
    logp = label_log_probs(state, data)
    top = logp.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        bad = int(np.flatnonzero(~np.isfinite(top[:, 0]))[0])
        raise NumericalDegeneracyError(f"all label probabilities vanish for observation {bad}")
    prob = np.exp(logp - top)
    cum = np.cumsum(prob, axis=1)
    u = rng.random(len(cum)) * cum[:, -1]
    labels = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(labels, state.n_atoms - 1)


def update_mu(state, data, rng):
    """Atom means: ``N((V^-1 + M Sigma^-1)^-1 (V^-1 m + Sigma^-1 sum y*), (V^-1 + M Sigma^-1)^-1)``."""
    hyper = state.hyper
    ystar = augmented(state, data)
    n_atoms = state.n_atoms
    counts = occupancy(state.labels, n_atoms)
    sums = np.zeros((n_atoms, ystar.shape[1]))
    np.add.at(sums, state.labels, ystar)
    v_inv = np.linalg.inv(hyper.V)
    sig_inv = precision(state.beta_tilde, state.delta)
    prec = v_inv[None] + counts[:, None, None] * sig_inv
    linear = (v_inv @ hyper.m)[None] + np.einsum("lij,lj->li", sig_inv, sums)
    return _draw_gaussian_from_precision(prec, linear, rng, "mu")


def _scatter(state, data):
    """Per-atom ``sum_i (y*_i - mu_l)(y*_i - mu_l)^T`` and occupancy counts."""
    resid = augmented(state, data) - state.mu[state.labels]
    outer = np.zeros((state.n_atoms, resid.shape[1], resid.shape[1]))
    np.add.at(outer, state.labels, resid[:, :, None] * resid[:, None, :])
    return outer


def beta_sufficient_stats(outer, delta):
    """Assemble ``sum_i T_i`` and ``sum_i T_i d_i`` from scatter matrices.

    Block ``k`` (row ``k`` of ``beta``) of ``sum_i T_i`` is
    ``scatter[:k, :k] / delta_k`` and the matching entries of
    ``sum_i T_i d_i`` are ``-scatter[:k, k] / delta_k``; ``d_i`` itself is
    never formed, so no division by a residual takes place.
    """
    n_atoms, r = delta.shape
    q = n_free(r - 1)
    t_sum = np.zeros((n_atoms, q, q))
    td_sum = np.zeros((n_atoms, q))
    for k in range(1, r):
        sl = row_slice(k)
        t_sum[:, sl, sl] = outer[:, :k, :k] / delta[:, k, None, None]
        td_sum[:, sl] = -outer[:, :k, k] / delta[:, k, None]
    return t_sum, td_sum


def update_beta_tilde(state, data, rng):
    """Free entries of every ``beta_tilde`` from their normal full conditional."""
    hyper = state.hyper
    free = state.prior.beta_free
    out = np.zeros_like(state.beta_tilde)
    if not free.any():
        return out
    t_sum, td_sum = beta_sufficient_stats(_scatter(state, data), state.delta)
    c_inv = np.linalg.inv(hyper.C)
    prec = c_inv[None] + t_sum[:, free][:, :, free]
    linear = (c_inv @ hyper.theta)[None] + td_sum[:, free]
    out[:, free] = _draw_gaussian_from_precision(prec, linear, rng, "beta_tilde")
    return out


def delta_conditional_params(state, data):
    """Inverse-gamma shape and scale of ``delta_2..delta_{p+1}`` for every atom."""
    resid = augmented(state, data) - state.mu[state.labels]
    beta = unit_lower(state.beta_tilde)[state.labels]
    rotated = np.einsum("ikj,ij->ik", beta, resid)
    sq = np.zeros((state.n_atoms, resid.shape[1]))
    np.add.at(sq, state.labels, rotated**2)
    counts = occupancy(state.labels, state.n_atoms)
    shape = state.hyper.nu[None, :] + 0.5 * counts[:, None]
    scale = state.hyper.s[None, :] + 0.5 * sq[:, 1:]
    return shape, scale


def update_delta(state, data, rng):
    """Redraw ``delta_{2..p+1}`` per atom; ``delta_1`` stays at 1."""
    shape, scale = delta_conditional_params(state, data)
    delta = np.ones_like(state.delta)
    delta[:, 1:] = scale / rng.gamma(shape, 1.0)
    return delta


def update_weights_and_alpha(state, rng):
    """Stick fractions ``beta(1 + M_l, alpha + sum_{j>l} M_j)``, then ``alpha | p_N``.

    Fractions are drawn in log space so that ``log p_N`` stays accurate
    when ``zeta`` is within rounding of one. Returns ``(weights, alpha,
    floored)`` where ``floored`` flags that ``p_N`` underflowed to zero as
    a float; ``log p_N`` itself is floored at ``log(1e-300)`` only if it
    is not finite.
    """
    counts = occupancy(state.labels, state.n_atoms)
    tail = np.cumsum(counts[::-1])[::-1]
    log_z, log_1mz = sample_log_sticks(1.0 + counts[:-1], state.alpha + tail[1:], rng)
    log_w = log_stick_weights(log_z, log_1mz)
    weights = np.exp(log_w)
    weights /= weights.sum()
    prior = state.prior
    log_pn = float(np.sum(log_1mz))
    floored = bool(weights[-1] == 0.0)
    if not np.isfinite(log_pn):
        log_pn = LOG_PN_FLOOR
    alpha = rng.gamma(prior.a_alpha + state.n_atoms - 1, 1.0 / (prior.b_alpha - log_pn))
    return weights, float(alpha), floored


def _inv_wishart(df, scale, rng):
    draw = stats.invwishart.rvs(df=df, scale=scale, random_state=rng)
    return np.atleast_2d(draw)


def update_hyper(state, rng):
    """Conjugate draws of ``m, V, theta, C, s`` given all ``N`` atoms."""
    hyper = state.hyper
    prior = hyper.prior
    n_atoms = state.n_atoms

    bm_inv = np.linalg.inv(prior.B_m)
    v_inv = np.linalg.inv(hyper.V)
    prec = bm_inv + n_atoms * v_inv
    lin = bm_inv @ prior.a_m + v_inv @ state.mu.sum(axis=0)
    m = _draw_gaussian_from_precision(prec[None], lin[None], rng, "m")[0]
    dev = state.mu - m
    V = _inv_wishart(prior.a_V + n_atoms, prior.B_V + dev.T @ dev, rng)

    theta, C = hyper.theta, hyper.C
    if prior.n_free_beta:
        bt = state.beta_tilde[:, prior.beta_free]
        bth_inv = np.linalg.inv(prior.B_theta)
        c_inv = np.linalg.inv(hyper.C)
        prec = bth_inv + n_atoms * c_inv
        lin = bth_inv @ prior.a_theta + c_inv @ bt.sum(axis=0)
        theta = _draw_gaussian_from_precision(prec[None], lin[None], rng, "theta")[0]
        dev = bt - theta
        C = _inv_wishart(prior.a_C + n_atoms, prior.B_C + dev.T @ dev, rng)

    shape = prior.a_s + n_atoms * prior.nu
    rate = prior.b_s + np.sum(1.0 / state.delta[:, 1:], axis=0)
    s = rng.gamma(shape, 1.0 / rate)
    return HyperState(m=m, V=V, theta=theta, C=C, s=s, prior=prior)


def sweep(state, data, rng):
    """One full Gibbs scan, mutating ``state`` in place."""
    latent = update_latent_z(state, data, rng)
    state.z = latent.z
    state.labels = update_labels(state, data, rng)
    state.mu = update_mu(state, data, rng)
    state.beta_tilde = update_beta_tilde(state, data, rng)
    state.delta = update_delta(state, data, rng)
    state.weights, state.alpha, floored = update_weights_and_alpha(state, rng)
    state.log_pn_floored += floored
    state.hyper = update_hyper(state, rng)
    return state


def initial_state(data, prior, n_atoms, rng, hyper=None, alpha=None):
    """Chain start: ``psi`` at its prior mean, ``G_N`` from the prior, labels from ``z = +-0.5``."""
    hyper = HyperState.at_prior_mean(prior) if hyper is None else hyper
    alpha = prior.a_alpha / prior.b_alpha if alpha is None else alpha
    mix = sample_prior_state(hyper, n_atoms, alpha, rng)
    z = np.where(data.y == 1, 0.5, -0.5)
    state = ChainState(
        weights=mix.weights,
        mu=mix.mu,
        beta_tilde=mix.beta_tilde,
        delta=mix.delta,
        alpha=alpha,
        z=z,
        labels=np.zeros(len(z), dtype=int),
        hyper=hyper,
    )
    state.labels = update_labels(state, data, rng)
    return state


@dataclass
class PosteriorDraws:
    """Saved post-burn-in draws of one or more chains, stacked along axis 0."""

    weights: np.ndarray
    mu: np.ndarray
    beta_tilde: np.ndarray
    delta: np.ndarray
    alpha: np.ndarray
    m: np.ndarray
    V: np.ndarray
    theta: np.ndarray
    C: np.ndarray
    s: np.ndarray
    n_occupied: np.ndarray
    iteration: np.ndarray
    chain: np.ndarray
    z: np.ndarray = None
    labels: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.alpha)

    @property
    def n_atoms(self):
        return self.weights.shape[1]

    @property
    def p(self):
        return self.mu.shape[2] - 1

    def state(self, index):
        return MixtureState(
            self.weights[index], self.mu[index], self.beta_tilde[index], self.delta[index], float(self.alpha[index])
        )

    def states(self):
        for i in range(len(self)):
            yield self.state(i)

    @classmethod
    def concatenate(cls, parts):
        first = parts[0]
        kwargs = {}
        for name in cls.__dataclass_fields__:
            if name == "metadata":
                continue
            vals = [getattr(d, name) for d in parts]
            kwargs[name] = None if vals[0] is None else np.concatenate(vals, axis=0)
        meta = dict(first.metadata)
        meta["chains"] = [d.metadata for d in parts]
        return cls(**kwargs, metadata=meta)


class _Recorder:
    def __init__(self, config, n, r, q, qf, p, chain):
        size = config.n_saved
        n_atoms = config.truncation
        self.chain = chain
        self.keep_latent = config.keep_latent
        self.i = 0
        self.arrays = {
            "weights": np.empty((size, n_atoms)),
            "mu": np.empty((size, n_atoms, r)),
            "beta_tilde": np.empty((size, n_atoms, q)),
            "delta": np.empty((size, n_atoms, r)),
            "alpha": np.empty(size),
            "m": np.empty((size, r)),
            "V": np.empty((size, r, r)),
            "theta": np.empty((size, qf)),
            "C": np.empty((size, qf, qf)),
            "s": np.empty((size, p)),
            "n_occupied": np.empty(size, dtype=int),
            "iteration": np.empty(size, dtype=int),
            "chain": np.full(size, chain, dtype=int),
        }
        if self.keep_latent:
            self.arrays["z"] = np.empty((size, n))
            self.arrays["labels"] = np.empty((size, n), dtype=int)

    def record(self, it, state):
        a, i = self.arrays, self.i
        a["weights"][i] = state.weights
        a["mu"][i] = state.mu
        a["beta_tilde"][i] = state.beta_tilde
        a["delta"][i] = state.delta
        a["alpha"][i] = state.alpha
        a["m"][i] = state.hyper.m
        a["V"][i] = state.hyper.V
        a["theta"][i] = state.hyper.theta
        a["C"][i] = state.hyper.C
        a["s"][i] = state.hyper.s
        a["n_occupied"][i] = len(np.unique(state.labels))
        a["iteration"][i] = it
        if self.keep_latent:
            a["z"][i] = state.z
            a["labels"][i] = state.labels
        self.i += 1


def run_chain(data, config, prior, hyper_init=None, rng=None, callback=None, chain=0):
    """Run one blocked Gibbs chain.

    Parameters
    ----------
    data : object with ``y`` (n,) in {0, 1} and ``X`` (n, p)
    config : SamplerConfig
    prior : HyperPrior
    hyper_init : HyperState, optional
        Starting ``psi``; defaults to the hyperprior means.
    rng : numpy.random.Generator, optional
        Defaults to ``np.random.default_rng(config.seed)``.
    callback : callable, optional
        ``callback(iteration, state)`` after every sweep.

    Returns
    -------
    PosteriorDraws
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    y = np.asarray(data.y)
    X = np.asarray(data.X, dtype=float)
    if X.ndim != 2 or X.shape[1] != prior.p or len(y) != len(X):
        raise InvalidParameterError("data shape does not match the prior dimension")
    state = initial_state(data, prior, config.truncation, rng, hyper=hyper_init)
    r, q = prior.p + 1, n_free(prior.p)
    rec = _Recorder(config, len(y), r, q, prior.n_free_beta, prior.p, chain)
    last_weight = 0.0
    for it in range(config.iterations):
        try:
            sweep(state, data, rng)
        except NumericalDegeneracyError as exc:
            exc.iteration = it
            raise NumericalDegeneracyError(str(exc), atom=exc.atom, iteration=it) from exc
        if callback is not None:
            callback(it, state)
        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            rec.record(it, state)
            last_weight += state.weights[-1]
    meta = {
        "seed": config.seed,
        "chain": chain,
        "truncation": config.truncation,
        "iterations": config.iterations,
        "burn_in": config.burn_in,
        "thin": config.thin,
        "mean_last_weight": last_weight / max(config.n_saved, 1),
        "log_pn_floored": state.log_pn_floored,
    }
    return PosteriorDraws(**rec.arrays, metadata=meta)


def run_chains(data, config, prior, n_chains=1, hyper_init=None):
    """Run ``n_chains`` independent chains with streams spawned from ``config.seed``."""
    seeds = np.random.SeedSequence(config.seed).spawn(n_chains)
    parts = [
        run_chain(data, config, prior, hyper_init, np.random.default_rng(seq), chain=c)
        for c, seq in enumerate(seeds)
    ]
    return parts[0] if n_chains == 1 else PosteriorDraws.concatenate(parts)
