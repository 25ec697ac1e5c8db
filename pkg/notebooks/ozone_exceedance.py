"""
When does ozone exceed 70 ppb?
==============================

Daily New York ozone readings (May to September 1973) are turned into a
binary exceedance indicator and modelled jointly with solar radiation,
temperature and wind speed. Chains here are shorter than a real analysis
would use; raise ``ITERS`` for smoother curves.
"""
import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from dpbinreg import PriorSketch, SamplerConfig, elicit_inverse_wishart, load_ozone, run_chain
from dpbinreg.compare import fit_product_kernel, ppl_criterion
from dpbinreg.functionals import inverse_density, posterior_curves

ITERS = 6000
data = load_ozone(threshold=70.0)
print(data.describe())

# %% full kernel fit
prior = elicit_inverse_wishart(PriorSketch.from_data(data.X))
config = SamplerConfig(iterations=ITERS, burn_in=ITERS // 4, thin=5, seed=0)
draws = run_chain(data, config, prior)
print("clusters in use: %.1f on average" % draws.n_occupied.mean())

# %% one-covariate regression curves, other covariates integrated out
fig, axes = plt.subplots(1, 3, figsize=(12, 3.5), sharey=True)
for j, (ax, name) in enumerate(zip(axes, data.columns)):
    grid = np.linspace(data.X[:, j].min(), data.X[:, j].max(), 50)
    band = posterior_curves(draws, [grid], [j]).summary(0.90)
    ax.fill_between(grid, band["lower"], band["upper"], alpha=0.3)
    ax.plot(grid, band["mean"])
    ax.plot(data.X[:, j], data.y, "|", color="grey")
    ax.set_xlabel(name)
axes[0].set_ylabel("Pr(exceedance)")
fig.savefig("ozone_curves.png", dpi=120, bbox_inches="tight")

# %% inverse inference: temperature on exceedance and non-exceedance days
t = np.linspace(55, 100, 200)
fig, ax = plt.subplots(figsize=(5, 3.5))
for y_value in (0, 1):
    dens = np.mean([inverse_density(s, t[:, None], y_value, dims=[1]) for s in draws.states()], axis=0)
    ax.plot(t, dens, label=f"y = {y_value}")
ax.set_xlabel("temperature")
ax.legend()
fig.savefig("ozone_temperature_given_y.png", dpi=120, bbox_inches="tight")

# %% does the dependence between covariates matter? compare with a product kernel
product = fit_product_kernel(data, config, prior)
for label, d in (("full", draws), ("product", product)):
    r = ppl_criterion(d, data)
    print(f"{label:8s} G={r.G:.2f} P={r.P:.2f} D_inf={r.D(np.inf):.2f}")
