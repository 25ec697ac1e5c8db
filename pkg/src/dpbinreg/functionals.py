"""Posterior functionals of ``G_N``.

Every function here takes one :class:`~dpbinreg.mixture.MixtureState`;
posterior uncertainty comes from mapping it over saved draws (see
:func:`over_draws`). Integrals over covariates use Riemann sums on uniform
grids spanning the mixture mean +- ``width`` mixture standard deviations.
"""
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr

from .errors import InvalidParameterError
from .kernel import probit_coefficients
from .mixture import joint_prob_y1_x, mean_absolute_fitness, mixture_density_x

DEFAULT_POINTS = 200
DEFAULT_WIDTH = 5.0
_CHUNK = 20_000


class QuadratureWarning(UserWarning):
    """A Riemann sum looks under-resolved."""


@dataclass(frozen=True)
class FunctionalGrid:
    """Functional values on a tensor grid, one row per posterior draw."""

    axes: list
    values: np.ndarray
    names: list = None

    def __post_init__(self):
        for ax in self.axes:
            if np.any(np.diff(ax) <= 0):
                raise InvalidParameterError("grid axes must be strictly increasing")

    @property
    def points(self):
        return tensor_points(self.axes)

    def summary(self, level=0.90):
        return summarize(self.values, level)


def tensor_points(axes):
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def summarize(values, level=0.90):
    """Posterior mean, median and equal-tailed band along axis 0."""
    values = np.asarray(values, dtype=float)
    lo, hi = 0.5 - level / 2, 0.5 + level / 2
    return {
        "mean": values.mean(axis=0),
        "median": np.median(values, axis=0),
        "lower": np.quantile(values, lo, axis=0),
        "upper": np.quantile(values, hi, axis=0),
    }


def covariate_moments(state):
    """Mixture mean and standard deviation of each covariate."""
    w = state.weights
    mean = w @ state.mu[:, 1:]
    second = w @ (np.diagonal(state.sigma, axis1=1, axis2=2)[:, 1:] + state.mu[:, 1:] ** 2)
    return mean, np.sqrt(np.maximum(second - mean**2, 0.0))


def default_axes(state, dims=None, n_points=DEFAULT_POINTS, width=DEFAULT_WIDTH):
    mean, sd = covariate_moments(state)
    dims = range(state.p) if dims is None else dims
    return [np.linspace(mean[j] - width * sd[j], mean[j] + width * sd[j], n_points) for j in dims]


def _cell_volume(axes):
    return float(np.prod([ax[1] - ax[0] for ax in axes]))


def _check_uniform(axes):
    for ax in axes:
        if len(ax) < 3 or not np.allclose(np.diff(ax), ax[1] - ax[0]):
            raise InvalidParameterError("Riemann grids must be uniform with at least 3 points")


def regression_curve(state, points, dims=None):
    """``Pr(y = 1 | x[dims]) = Pr(y = 1, x) / f(x)`` at each row of ``points``."""
    log_fx, log_pi = state.component_terms(points, dims)
    den = logsumexp(log_fx, axis=1)
    num = logsumexp(log_fx + log_pi, axis=1)
    with np.errstate(invalid="ignore"):
        out = np.exp(num - den)
    # far outside the support both terms underflow; the limit is undefined
    return np.clip(np.where(np.isfinite(den), out, np.nan), 0.0, 1.0)


def inverse_density(state, points, y_value, dims=None):
    """Covariate density given the response, ``f(x[dims] | y)``.

    ``Pr(y = 1)`` is the closed form ``sum_l p_l Phi(mu_l^z)``; marginal
    kernels over ``(z, x[dims])`` are exact normal sub-blocks.
    """
    if y_value not in (0, 1):
        raise InvalidParameterError("y_value must be 0 or 1")
    pr1 = mean_absolute_fitness(state)
    joint1 = joint_prob_y1_x(state, points, dims)
    if y_value == 1:
        mass, num = pr1, joint1
    else:
        mass, num = 1.0 - pr1, np.maximum(mixture_density_x(state, points, dims) - joint1, 0.0)
    if mass < 1e-12:
        warnings.warn(f"Pr(y={y_value}) is numerically zero", RuntimeWarning, stacklevel=2)
        return np.full(len(num), np.nan)
    return num / mass


def trait_mean_before(state, j):
    """``sum_l p_l mu_l^{x_j}``."""
    return float(state.weights @ state.mu[:, 1 + j])


def trait_mean_after(state, j, grid=None):
    """Mean of trait ``j`` among survivors, by a Riemann sum over ``grid``."""
    grid = default_axes(state, [j])[0] if grid is None else np.asarray(grid, dtype=float)
    _check_uniform([grid])
    joint = joint_prob_y1_x(state, grid[:, None], dims=[j])
    return float(np.sum(grid * joint) * (grid[1] - grid[0]) / mean_absolute_fitness(state))


def selection_differential(state, j, grid=None):
    """``xbar*_j - xbar_j``: shift of the trait mean produced by selection."""
    return trait_mean_after(state, j, grid) - trait_mean_before(state, j)


def density_terms(state, x):
    """Analytic values and covariate gradients of the mixture pieces.

    Returns a dict with ``joint`` = Pr(y=1, x), ``joint_grad``,
    ``fx`` = f(x), ``fx_grad`` and ``curve`` = Pr(y=1 | x), for the
    ``(m, p)`` points ``x``. Gradients have shape ``(m, p)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    mu, sigma = state.mu, state.sigma
    sxx = sigma[:, 1:, 1:]
    sxx_inv = np.linalg.inv(sxx)
    log_fx, log_pi = state.component_terms(x)
    wf = np.exp(log_fx)  # p_l N(x; mu_l^x, Sigma_l^xx), (m, N)
    a, b, s = probit_coefficients(mu, sigma)
    u = (a[None, :] + x @ b.T) / s[None, :]
    pi = ndtr(u)
    phi = np.exp(-0.5 * u**2) / np.sqrt(2.0 * np.pi)
    resid = x[:, None, :] - mu[None, :, 1:]
    # grad N(x) = -N(x) inv(Sigma_xx) (x - mu_x)
    score = -np.einsum("lij,mlj->mli", sxx_inv, resid)
    fx_grad_l = wf[:, :, None] * score
    joint_grad = np.einsum("ml,mli->mi", pi, fx_grad_l) + np.einsum("ml,li->mi", wf * phi / s[None, :], b)
    fx = wf.sum(axis=1)
    joint = (wf * pi).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        curve = np.where(fx > 0, joint / fx, 0.0)
    return {
        "joint": joint,
        "joint_grad": joint_grad,
        "fx": fx,
        "fx_grad": fx_grad_l.sum(axis=1),
        "curve": np.clip(curve, 0.0, 1.0),
    }


def selection_integrand(state, x):
    """The two pieces of ``f(x) dPr(y=1|x)/dx``.

    Returns ``(dPr(y=1,x)/dx, Pr(y=1|x) df(x)/dx)``; the integrand of the
    selection gradient is their difference.
    """
    terms = density_terms(state, x)
    return terms["joint_grad"], terms["curve"][:, None] * terms["fx_grad"]


def _grid_sum(state, axes, fn):
    """Sum ``fn(points)`` over the tensor grid in memory-bounded chunks."""
    pts = tensor_points(axes)
    total = None
    for start in range(0, len(pts), _CHUNK):
        part = fn(pts[start : start + _CHUNK])
        total = part if total is None else total + part
    return total


def _coarse(axes):
    return [ax[::2] for ax in axes]


def _gradient_sum(state, axes):
    def fn(pts):
        dj, cf = selection_integrand(state, pts)
        return (dj - cf).sum(axis=0)

    return _grid_sum(state, axes, fn) * _cell_volume(axes)


def _warn_if_unresolved(fine, coarse, tol, what):
    err = float(np.max(np.abs(np.asarray(fine) - np.asarray(coarse))))
    if err > tol:
        warnings.warn(f"{what}: estimated quadrature error {err:.2e} exceeds {tol:.1e}", QuadratureWarning, stacklevel=3)
    return err


def selection_gradient(state, axes=None, tol=1e-3, check=True):
    """Phenotype-weighted average gradient of the fitness surface.

    ``int dPr(y=1|x)/dx f(x) dx`` over a tensor grid (``axes``: one
    uniform axis per covariate). With ``check`` the sum is repeated on the
    grid with every other point and a :class:`QuadratureWarning` is issued
    when the two differ by more than ``tol``.
    """
    axes = default_axes(state) if axes is None else [np.asarray(a, dtype=float) for a in axes]
    _check_uniform(axes)
    grad = _gradient_sum(state, axes)
    if check:
        _warn_if_unresolved(grad, _gradient_sum(state, _coarse(axes)), tol, "selection gradient")
    return grad


def directional_selection_gradient(state, axes=None, tol=1e-3, check=True):
    """Selection gradient divided by mean absolute fitness."""
    return selection_gradient(state, axes, tol, check) / mean_absolute_fitness(state)


def _second_moments(state, axes, center_before, center_after):
    def fn(pts):
        fx = mixture_density_x(state, pts)
        joint = joint_prob_y1_x(state, pts)
        d0 = pts - center_before
        d1 = pts - center_after
        return np.stack([d0.T @ (d0 * fx[:, None]), d1.T @ (d1 * joint[:, None])])

    return _grid_sum(state, axes, fn) * _cell_volume(axes)


def stabilizing_selection_matrix(state, axes=None, tol=1e-3, check=True):
    """``P* - P + (xbar* - xbar)(xbar* - xbar)^T``.

    ``P`` is the covariate covariance under ``f(x)`` and ``P*`` the one
    under ``f(x | y = 1)``, both by Riemann sums over the tensor grid.
    """
    axes = default_axes(state) if axes is None else [np.asarray(a, dtype=float) for a in axes]
    _check_uniform(axes)
    pr1 = mean_absolute_fitness(state)
    before = np.array([trait_mean_before(state, j) for j in range(state.p)])
    after = np.array([trait_mean_after(state, j, axes[j]) for j in range(state.p)])
    shift = after - before

    def compute(ax):
        P, P_star = _second_moments(state, ax, before, after)
        out = P_star / pr1 - P + np.outer(shift, shift)
        return 0.5 * (out + out.T)

    out = compute(axes)
    if check:
        _warn_if_unresolved(out, compute(_coarse(axes)), tol, "stabilizing selection matrix")
    return out


def kernel_correlations(sigma):
    """Upper-triangle correlations ``corr(z, x_1), ..., corr(x_j, x_k)`` of a covariance."""
    sd = np.sqrt(np.diagonal(sigma, axis1=-2, axis2=-1))
    corr = sigma / (sd[..., :, None] * sd[..., None, :])
    rows, cols = np.triu_indices(sigma.shape[-1], 1)
    return corr[..., rows, cols]


def correlation_names(p):
    names = ["z"] + [f"x{j + 1}" for j in range(p)]
    rows, cols = np.triu_indices(p + 1, 1)
    return [f"corr({names[i]},{names[j]})" for i, j in zip(rows, cols)]


def posterior_predictive_correlations(draws, rng):
    """Per saved draw, pick one atom with probability ``p_l`` and report its kernel correlations."""
    out = []
    for state in draws.states():
        cum = np.cumsum(state.weights)
        idx = min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), state.n_atoms - 1)
        out.append(kernel_correlations(state.sigma[idx]))
    return np.array(out)


def over_draws(draws, fn):
    """Stack ``fn(state)`` over every saved draw."""
    return np.array([fn(state) for state in draws.states()])


def posterior_curves(draws, axes, dims):
    """Regression curve (``len(dims) == 1``) or surface on a fixed tensor grid for every draw."""
    pts = tensor_points(axes)
    values = over_draws(draws, lambda st: regression_curve(st, pts, dims))
    return FunctionalGrid(list(axes), values)


def selection_summary(draws, axes_fn=None, level=0.90, tol=1e-3):
    """Selection-analysis functionals for every draw, plus posterior summaries."""
    p = draws.p
    rows = {"mean_absolute_fitness": [], "differential": [], "gradient": [], "directional_gradient": [], "stabilizing": []}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", QuadratureWarning)
        for state in draws.states():
            axes = default_axes(state) if axes_fn is None else axes_fn(state)
            pr1 = mean_absolute_fitness(state)
            grad = selection_gradient(state, axes, tol)
            rows["mean_absolute_fitness"].append(pr1)
            rows["differential"].append([selection_differential(state, j, axes[j]) for j in range(p)])
            rows["gradient"].append(grad)
            rows["directional_gradient"].append(grad / pr1)
            rows["stabilizing"].append(stabilizing_selection_matrix(state, axes, tol))
    values = {k: np.array(v) for k, v in rows.items()}
    summary = {k: {s: np.asarray(x).tolist() for s, x in summarize(v, level).items()} for k, v in values.items()}
    summary["quadrature_warnings"] = len([w for w in caught if issubclass(w.category, QuadratureWarning)])
    return values, summary
