"""Brute-force oracles for tests.

Nothing here goes through the sampler's code paths: densities are written
out from their textbook forms with explicit inverses and determinants.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, gammaincc, gammaln

from .errors import InvalidParameterError


def normal_logpdf_explicit(y, mean, cov):
    """Multivariate normal log density with an explicit inverse and determinant."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    k = cov.shape[0]
    inv = np.linalg.inv(cov)
    resid = y - np.asarray(mean, dtype=float)
    quad = np.einsum("ni,ij,nj->n", resid, inv, resid)
    return -0.5 * (k * np.log(2 * np.pi) + np.log(np.linalg.det(cov)) + quad)


def inv_gamma_logpdf(x, shape, scale):
    x = np.asarray(x, dtype=float)
    return shape * np.log(scale) - gammaln(shape) - (shape + 1) * np.log(x) - scale / x


def inv_gamma_cdf(x, shape, scale):
    x = np.asarray(x, dtype=float)
    return gammaincc(shape, scale / np.maximum(x, 1e-300))


def std_normal_cdf(x):
    return 0.5 * (1.0 + erf(np.asarray(x, dtype=float) / np.sqrt(2.0)))


def _trapezoid_weights(axis):
    w = np.empty_like(axis)
    h = np.diff(axis)
    w[0], w[-1] = h[0] / 2, h[-1] / 2
    w[1:-1] = (h[:-1] + h[1:]) / 2
    return w


@dataclass(frozen=True)
class QuadratureTable:
    """A density tabulated on a 1-D or 2-D grid, normalized by the trapezoid rule."""

    axes: list
    density: np.ndarray

    def marginal(self, axis=0):
        if len(self.axes) == 1:
            return self.density
        other = 1 - axis
        w = _trapezoid_weights(self.axes[other])
        return np.tensordot(self.density, w, axes=([other], [0]))

    def cdf(self, axis=0):
        """Cumulative distribution of one coordinate, as a callable."""
        grid = self.axes[axis]
        dens = self.marginal(axis)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
        cum /= cum[-1]
        return lambda x: np.interp(x, grid, cum, left=0.0, right=1.0)

    def mean(self, axis=0):
        grid = self.axes[axis]
        return float(np.sum(grid * self.marginal(axis) * _trapezoid_weights(grid)))

    def total(self):
        w = _trapezoid_weights(self.axes[0])
        if len(self.axes) == 1:
            return float(self.density @ w)
        return float(w @ self.density @ _trapezoid_weights(self.axes[1]))


def quadrature_conditional(log_density, ranges, resolution=2001, clip_tol=1e-6):
    """Tabulate and normalize ``exp(log_density)`` over a 1-D or 2-D box.

    ``log_density`` takes one array per free parameter (broadcast grids).
    The box is checked by evaluating on a box extended by half its width on
    every side; if more than ``clip_tol`` of the mass falls outside the
    requested box an error asks for a wider range.
    """
    ranges = [tuple(map(float, r)) for r in ranges]
    if not 1 <= len(ranges) <= 2:
        raise InvalidParameterError("quadrature oracle supports one or two free parameters")

    def tabulate(rngs, res):
        axes = [np.linspace(lo, hi, res) for lo, hi in rngs]
        mesh = np.meshgrid(*axes, indexing="ij")
        # the extended box may leave the support (e.g. negative variances)
        with np.errstate(invalid="ignore", divide="ignore"):
            logd = np.asarray(log_density(*mesh), dtype=float)
        return axes, logd

    wide = [(lo - 0.5 * (hi - lo), hi + 0.5 * (hi - lo)) for lo, hi in ranges]
    wres = 2 * resolution - 1 if len(ranges) == 1 else resolution
    axes_w, logd_w = tabulate(wide, wres)
    axes, logd = tabulate(ranges, resolution)
    shift = max(np.nanmax(logd_w), np.nanmax(logd))
    dens_w = np.exp(np.where(np.isfinite(logd_w), logd_w - shift, -np.inf))
    dens = np.exp(np.where(np.isfinite(logd), logd - shift, -np.inf))
    inside = QuadratureTable(axes, dens).total()
    whole = QuadratureTable(axes_w, dens_w).total()
    if whole <= 0 or inside <= 0:
        raise InvalidParameterError("density has no mass on the grid")
    if (whole - inside) / whole > clip_tol:
        raise InvalidParameterError(
            f"range clips {(whole - inside) / whole:.2e} of the posterior mass; widen the range"
        )
    return QuadratureTable(axes, dens / inside)


def ks_distance(samples, cdf):
    """One-sample Kolmogorov-Smirnov statistic of ``samples`` against ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_critical(n, alpha=0.01):
    """Asymptotic KS critical value ``c(alpha) / sqrt(n)``."""
    return np.sqrt(-0.5 * np.log(alpha / 2.0)) / np.sqrt(n)


def finite_diff(fn, x, h=1e-5):
    """Central-difference gradient with step ``h * max(1, |x_j|)``.

    ``fn`` maps a 1-D point to a scalar or an array; the result stacks the
    partial derivatives along the last axis.
    """
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(len(x)):
        step = h * max(1.0, abs(x[j]))
        up, dn = x.copy(), x.copy()
        up[j] += step
        dn[j] -= step
        cols.append((np.asarray(fn(up)) - np.asarray(fn(dn))) / (up[j] - dn[j]))
    return np.stack(cols, axis=-1)


def batch_means_se(x, n_batches=50):
    """Monte Carlo standard error of a chain mean by non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    size = len(x) // n_batches
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))
