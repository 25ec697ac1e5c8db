"""
Recovering a non-probit regression curve
========================================

Simulate a latent response and one covariate from a two-component normal
mixture, keep only the sign of the latent response, and check how well the
mixture model recovers Pr(y = 1 | x) and the selection differential.
"""
import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from scipy.special import ndtr

from dpbinreg import PriorSketch, SamplerConfig, elicit_inverse_wishart, run_chain
from dpbinreg.functionals import posterior_curves, selection_differential
from dpbinreg.kernel import probit_coefficients

# %% the generating mixture: rows are (z, x)
weights = np.array([0.6, 0.4])
mu = np.array([[1.0, -1.0], [-1.0, 1.5]])
sigma = np.array([[[1.0, 0.6], [0.6, 1.0]], [[1.0, -0.3], [-0.3, 0.5]]])

rng = np.random.default_rng(1)
n = 300
labels = rng.choice(2, size=n, p=weights)
chol = np.linalg.cholesky(sigma)
zx = mu[labels] + np.einsum("nij,nj->ni", chol[labels], rng.standard_normal((n, 2)))


class Data:
    y = (zx[:, 0] > 0).astype(int)
    X = zx[:, 1:]


print(f"{n} observations, {Data.y.sum()} positives")


def true_curve(x):
    # mixture of probit curves weighted by the component densities of x
    a, b, s = probit_coefficients(mu, sigma)
    dens = weights * np.exp(-0.5 * (x[:, None] - mu[:, 1]) ** 2 / sigma[:, 1, 1]) / np.sqrt(sigma[:, 1, 1])
    return (dens * ndtr((a + x[:, None] * b[:, 0]) / s)).sum(axis=1) / dens.sum(axis=1)


# %% prior centred on the data range, then a single chain
prior = elicit_inverse_wishart(PriorSketch.from_data(Data.X))
draws = run_chain(Data, SamplerConfig(iterations=6000, burn_in=2000, thin=5, seed=1), prior)
print("posterior mean alpha:", draws.alpha.mean().round(2))
print("mean occupied clusters:", draws.n_occupied.mean().round(1))

# %% regression curve with a 90% band
grid = np.linspace(Data.X.min(), Data.X.max(), 80)
band = posterior_curves(draws, [grid], [0]).summary(0.90)
inside = (true_curve(grid) >= band["lower"]) & (true_curve(grid) <= band["upper"])
print(f"truth inside the band at {inside.mean():.0%} of grid points")

fig, ax = plt.subplots(figsize=(6, 4))
ax.fill_between(grid, band["lower"], band["upper"], alpha=0.3, label="90% band")
ax.plot(grid, band["mean"], label="posterior mean")
ax.plot(grid, true_curve(grid), "k--", label="truth")
ax.plot(Data.X[:, 0], Data.y, "|", color="grey")
ax.set_xlabel("x")
ax.set_ylabel("Pr(y = 1 | x)")
ax.legend()
fig.savefig("simulated_curve.png", dpi=120, bbox_inches="tight")

# %% selection differential E(x | y = 1) - E(x)
diffs = np.array([selection_differential(s, 0) for s in draws.states()])
print("selection differential: mean %.3f, 90%% interval (%.3f, %.3f)" % (diffs.mean(), *np.quantile(diffs, [0.05, 0.95])))
print("sample analogue:", (Data.X[Data.y == 1, 0].mean() - Data.X[:, 0].mean()).round(3))
