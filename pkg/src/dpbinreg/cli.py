"""Command line interface: ``dpbinreg {fit,predict,functionals,compare,prior-check}``.

Settings come from an optional ``key = value`` config file (keys are the
long flag names with dashes or underscores) and are overridden by flags.
Every output is written with 17 significant digits and carries a JSON
sidecar with the seed, a hash of the resolved settings and the package
version, so reruns with identical inputs give byte-identical files.
"""
import argparse
import configparser
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .compare import fit_product_kernel, ppl_criterion
from .data import (
    canonical_json,
    config_hash,
    ingest_csv,
    ozone_path,
    read_draws,
    read_prior,
    write_draws,
    write_table,
)
from .errors import ConfigError, DataError, InvalidParameterError, NumericalDegeneracyError
from .functionals import (
    correlation_names,
    posterior_curves,
    posterior_predictive_correlations,
    selection_summary,
    summarize,
)
from .gibbs import SamplerConfig, run_chains
from .prior import (
    PriorSketch,
    elicit_inverse_wishart,
    elicit_uniform_correlation,
    implied_base_distribution_check,
    prior_predictive_curves,
    summarize_curves,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
BUILTIN_OZONE = "builtin:ozone"

DEFAULTS = {
    "data": None,
    "response": "y",
    "covariates": None,
    "threshold": None,
    "standardize": False,
    "seed": 0,
    "chains": 1,
    "iters": 5000,
    "burnin": 1000,
    "thin": 1,
    "truncation": 50,
    "prior_approach": 2,
    "sim_budget": 100_000,
    "split": 0.5,
    "a_alpha": 2.0,
    "b_alpha": 1.0,
    "grid_points": 50,
    "functional_points": None,
    "draw_stride": 1,
    "level": 0.90,
    "prior_draws": 1000,
    "out": "out",
    "from": None,
}
INT_KEYS = {"seed", "chains", "iters", "burnin", "thin", "truncation", "prior_approach", "sim_budget",
            "grid_points", "functional_points", "draw_stride", "prior_draws"}
FLOAT_KEYS = {"split", "a_alpha", "b_alpha", "level"}
BOOL_KEYS = {"standardize"}


def _coerce(key, value):
    if value is None:
        return None
    try:
        if key in INT_KEYS:
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"setting {key!r} expects a number, got {value!r}") from None
    if key in BOOL_KEYS:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"setting {key!r} expects true/false, got {value!r}")
    if key == "covariates" and isinstance(value, str):
        return [c.strip() for c in value.split(",") if c.strip()]
    return value


def read_config_file(path):
    """Parse ``key = value`` lines (``#`` comments allowed, no section header needed)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string("[run]\n" + path.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    out = {}
    for key, value in parser["run"].items():
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise ConfigError(f"unknown setting {key!r} in {path}; known settings: {', '.join(sorted(DEFAULTS))}")
        out[key] = value.strip().strip('"').strip("'")
    return out


def resolve_settings(args):
    """Defaults, then the config file, then explicit flags."""
    settings = dict(DEFAULTS)
    if args.config:
        settings.update(read_config_file(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    settings = {k: _coerce(k, v) for k, v in settings.items()}
    _validate(settings)
    return settings


def _validate(s):
    if s["prior_approach"] not in (1, 2):
        raise ConfigError("prior-approach must be 1 or 2")
    for key in ("chains", "iters", "thin", "truncation", "grid_points", "draw_stride", "prior_draws"):
        if s[key] < 1:
            raise ConfigError(f"{key.replace('_', '-')} must be at least 1")
    if s["truncation"] < 2:
        raise ConfigError("truncation must be at least 2")
    if not 0 <= s["burnin"] < s["iters"]:
        raise ConfigError("burnin must be non-negative and smaller than iters")
    if not 0 < s["level"] < 1:
        raise ConfigError("level must lie in (0, 1)")
    if s["functional_points"] is not None and s["functional_points"] < 5:
        raise ConfigError("functional-points must be at least 5")


def load_dataset(s):
    if s["data"] is None:
        raise ConfigError(f"no data given; pass --data PATH (or --data {BUILTIN_OZONE})")
    path = ozone_path() if s["data"] == BUILTIN_OZONE else Path(s["data"])
    if not Path(path).is_file():
        raise DataError(f"data file {path} does not exist")
    return ingest_csv(path, s["response"], s["threshold"], s["covariates"], s["standardize"])


def build_prior(s, data):
    sketch = PriorSketch.from_data(data.X)
    if s["prior_approach"] == 1:
        if data.p != 1:
            raise ConfigError("prior-approach 1 supports a single covariate; use --prior-approach 2")
        result = elicit_uniform_correlation(sketch, s["sim_budget"], seed=s["seed"],
                                           a_alpha=s["a_alpha"], b_alpha=s["b_alpha"])
        return result.prior, sketch, {"k": list(result.k), "ks": result.ks}
    return elicit_inverse_wishart(sketch, s["split"], s["a_alpha"], s["b_alpha"]), sketch, {}


def sampler_config(s):
    return SamplerConfig(iterations=s["iters"], burn_in=s["burnin"], thin=s["thin"],
                         seed=s["seed"], truncation=s["truncation"])


def _meta(s, command, data=None, **extra):
    reproducible = {k: v for k, v in s.items() if k != "out"}
    meta = {
        "command": command,
        "version": __version__,
        "seed": s["seed"],
        "config_hash": config_hash(reproducible),
        "settings": reproducible,
    }
    if data is not None:
        meta["data"] = data.describe()
    meta.update(extra)
    return meta


def _write_json(path, obj):
    Path(path).write_text(canonical_json(obj))


def _write_csv(path, header, rows, meta):
    write_table(path, header, rows)
    _write_json(Path(path).with_suffix(".json"), meta)


def _out_dir(s):
    out = Path(s["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fit(s, data, prior):
    return run_chains(data, sampler_config(s), prior, s["chains"])


def _draws_for(s, data):
    """Load draws from ``--from`` or fit afresh."""
    if s["from"]:
        path = Path(s["from"])
        if path.is_dir():
            path = path / "draws.csv"
        if not path.is_file():
            raise ConfigError(f"no draws at {path}; run `dpbinreg fit` first")
        draws, meta = read_draws(path)
        if draws.p != data.p:
            raise ConfigError(f"draws have p={draws.p} but the data have p={data.p}")
        return draws, read_prior(meta)
    prior, _, _ = build_prior(s, data)
    return _fit(s, data, prior), prior


def _thin(draws, stride):
    if stride == 1:
        return draws
    idx = np.arange(0, len(draws), stride)
    fields = {}
    for name in draws.__dataclass_fields__:
        val = getattr(draws, name)
        fields[name] = val if name == "metadata" or val is None else val[idx]
    return type(draws)(**fields)


def cmd_fit(s):
    data = load_dataset(s)
    prior, sketch, elicitation = build_prior(s, data)
    draws = _fit(s, data, prior)
    out = _out_dir(s)
    meta = _meta(s, "fit", data, elicitation=elicitation)
    write_draws(draws, out / "draws.csv", prior, meta)
    rng = np.random.default_rng(s["seed"])
    corr = posterior_predictive_correlations(draws, rng)
    summary = {
        "n_draws": len(draws),
        "alpha": summarize(draws.alpha, s["level"]),
        "n_occupied": summarize(draws.n_occupied, s["level"]),
        "correlations": dict(zip(correlation_names(data.p), [
            {k: float(v[i]) for k, v in summarize(corr, s["level"]).items()} for i in range(corr.shape[1])
        ])),
        "mean_last_weight": float(np.mean([c.get("mean_last_weight", 0.0) for c in draws.metadata.get("chains", [draws.metadata])])),
    }
    _write_json(out / "fit_summary.json", {"meta": meta, "summary": summary})
    return out


def _axis(data, j, n):
    lo, hi = data.X[:, j].min(), data.X[:, j].max()
    return np.linspace(lo, hi, n)


def cmd_predict(s):
    """Marginal regression curves for every covariate, long format."""
    data = load_dataset(s)
    draws, _ = _draws_for(s, data)
    draws = _thin(draws, s["draw_stride"])
    rows = []
    for j in range(data.p):
        axis = _axis(data, j, s["grid_points"])
        grid = posterior_curves(draws, [axis], [j])
        summ = grid.summary(s["level"])
        original = data.to_original(np.column_stack([np.full(len(axis), data.X[:, k].mean()) if k != j else axis
                                                      for k in range(data.p)]))[:, j]
        for i in range(len(axis)):
            rows.append([j, axis[i], original[i], summ["mean"][i], summ["median"][i],
                         summ["lower"][i], summ["upper"][i]])
    out = _out_dir(s)
    header = ["covariate", "x", "x_original", "mean", "median", "lower", "upper"]
    meta = _meta(s, "predict", data, columns=data.columns, n_draws=len(draws))
    _write_csv(out / "curves.csv", header, rows, meta)
    return out


def _functional_points(s, p):
    if s["functional_points"] is not None:
        return s["functional_points"]
    return {1: 400, 2: 200, 3: 41}.get(p, 15)


def cmd_functionals(s):
    from .functionals import default_axes

    data = load_dataset(s)
    draws, _ = _draws_for(s, data)
    draws = _thin(draws, s["draw_stride"])
    npts = _functional_points(s, data.p)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, summary = selection_summary(draws, lambda st: default_axes(st, n_points=npts), s["level"])
    out = _out_dir(s)
    meta = _meta(s, "functionals", data, columns=data.columns, n_draws=len(draws), functional_points=npts)
    _write_json(out / "functionals.json", {"meta": meta, "summary": summary})
    return out


def cmd_compare(s):
    data = load_dataset(s)
    prior, _, _ = build_prior(s, data)
    full = _fit(s, data, prior)
    product = fit_product_kernel(data, sampler_config(s), prior, s["chains"])
    reports = {"full": ppl_criterion(full, data), "product_kernel": ppl_criterion(product, data)}
    out = _out_dir(s)
    meta = _meta(s, "compare", data)
    _write_json(out / "ppl.json", {"meta": meta, "report": {k: v.to_dict() for k, v in reports.items()}})
    rows = np.column_stack([np.arange(data.n), data.y, reports["full"].mean, reports["product_kernel"].mean])
    _write_csv(out / "ppl_predictive.csv", ["row", "y", "mean_full", "mean_product_kernel"], rows, meta)
    return out


def cmd_prior_check(s):
    data = load_dataset(s)
    prior, sketch, elicitation = build_prior(s, data)
    v = data.p + 3.0
    check = implied_base_distribution_check(v, np.diag(sketch.scale_diag), draws=s["sim_budget"], seed=s["seed"])
    axes, curves = prior_predictive_curves(prior, sketch, s["prior_draws"], s["truncation"],
                                           s["grid_points"], s["seed"])
    summ = summarize_curves(curves, s["level"])
    out = _out_dir(s)
    meta = _meta(s, "prior-check", data, columns=data.columns)
    _write_json(out / "prior_check.json", {"meta": meta, "prior": prior.to_dict(),
                                           "elicitation": elicitation, "implied_base": check})
    rows = [[j, axes[j][i], summ[j]["mean"][i], summ[j]["lower"][i], summ[j]["upper"][i]]
            for j in range(data.p) for i in range(len(axes[j]))]
    _write_csv(out / "prior_curves.csv", ["covariate", "x", "mean", "lower", "upper"], rows, meta)
    return out


COMMANDS = {
    "fit": (cmd_fit, "run the Gibbs sampler and write draws with metadata"),
    "predict": (cmd_predict, "posterior regression curves on covariate grids"),
    "functionals": (cmd_functionals, "selection differentials, gradients and stabilizing matrix"),
    "compare": (cmd_compare, "fit the full and product-kernel models and report predictive loss"),
    "prior-check": (cmd_prior_check, "hyperprior elicitation and prior predictive simulation"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="dpbinreg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, argument_default=None)
        p.add_argument("--data", help=f"CSV with a header row, or {BUILTIN_OZONE}")
        p.add_argument("--config", help="key = value settings file; flags override it")
        p.add_argument("--response", help="0/1 response column (default y)")
        p.add_argument("--covariates", help="comma-separated covariate columns (default: all others)")
        p.add_argument("--threshold", metavar="COL:VALUE", help="define y = 1{COL > VALUE}")
        p.add_argument("--standardize", action="store_const", const=True, help="center and scale covariates")
        p.add_argument("--seed", type=int)
        p.add_argument("--chains", type=int)
        p.add_argument("--iters", type=int)
        p.add_argument("--burnin", type=int)
        p.add_argument("--thin", type=int)
        p.add_argument("--truncation", type=int)
        p.add_argument("--prior-approach", dest="prior_approach", type=int, choices=(1, 2))
        p.add_argument("--sim-budget", dest="sim_budget", type=int)
        p.add_argument("--split", type=float)
        p.add_argument("--a-alpha", dest="a_alpha", type=float)
        p.add_argument("--b-alpha", dest="b_alpha", type=float)
        p.add_argument("--grid-points", dest="grid_points", type=int)
        p.add_argument("--functional-points", dest="functional_points", type=int)
        p.add_argument("--draw-stride", dest="draw_stride", type=int, help="use every k-th saved draw")
        p.add_argument("--level", type=float, help="posterior band level (default 0.90)")
        p.add_argument("--prior-draws", dest="prior_draws", type=int)
        p.add_argument("--from", dest="from", help="existing draws.csv (or its directory) instead of refitting")
        p.add_argument("--out", metavar="DIR")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = resolve_settings(args)
        out = COMMANDS[args.command][0](settings)
    except (ConfigError, InvalidParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalDegeneracyError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"wrote {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
