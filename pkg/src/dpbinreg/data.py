"""Dataset ingestion and on-disk formats for draws and reports."""
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError
from .gibbs import PosteriorDraws
from .hyper import HyperPrior

FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class Dataset:
    """Binary responses ``y`` with continuous covariates ``X``."""

    y: np.ndarray
    X: np.ndarray
    columns: list
    response: str = "y"
    center: np.ndarray = None
    scale: np.ndarray = None
    provenance: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        y = np.asarray(self.y)
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if X.shape[0] != len(y):
            raise DataError("y and X have different numbers of rows")
        if not np.all(np.isin(y, (0, 1))):
            raise DataError("responses must be 0 or 1")
        if len(y) < X.shape[1] + 2:
            raise DataError("need at least p + 2 observations")
        if not np.all(np.isfinite(X)):
            raise DataError("covariates contain non-finite values")
        object.__setattr__(self, "y", y.astype(int))
        object.__setattr__(self, "X", X)

    @property
    def n(self):
        return len(self.y)

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def standardized(self):
        return self.center is not None

    def to_original(self, X):
        """Map standardized covariates back to data units."""
        if not self.standardized:
            return np.asarray(X, dtype=float)
        return np.asarray(X, dtype=float) * self.scale + self.center

    def describe(self):
        return {
            "n": self.n,
            "p": self.p,
            "response": self.response,
            "columns": list(self.columns),
            "n_positive": int(self.y.sum()),
            "center": None if self.center is None else self.center.tolist(),
            "scale": None if self.scale is None else self.scale.tolist(),
            "x_min": self.X.min(axis=0).tolist(),
            "x_max": self.X.max(axis=0).tolist(),
            "provenance": self.provenance,
        }


def parse_threshold(rule):
    """``"COL:VALUE"`` -> ``(COL, VALUE)``."""
    if rule is None:
        return None
    col, sep, value = str(rule).rpartition(":")
    if not sep or not col:
        raise DataError(f"threshold rule {rule!r} is not of the form COL:VALUE")
    try:
        return col, float(value)
    except ValueError:
        raise DataError(f"threshold value {value!r} is not numeric") from None


def from_frame(frame, response="y", threshold=None, covariates=None, standardize=False, provenance=""):
    """Build a :class:`Dataset` from a data frame.

    ``threshold`` (``(column, value)`` or ``"COL:VALUE"``) defines
    ``y = 1{column > value}`` and drops that column from the covariates;
    otherwise ``response`` names an existing 0/1 column.
    """
    if isinstance(threshold, str):
        threshold = parse_threshold(threshold)
    frame = frame.copy()
    for col in frame.columns:
        converted = pd.to_numeric(frame[col], errors="coerce")
        bad = converted.isna() & frame[col].notna()
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DataError(f"non-numeric value {frame[col].iloc[row]!r} in row {row + 1}, column {col!r}")
        frame[col] = converted
    missing = frame.isna().to_numpy()
    if missing.any():
        row, col = np.argwhere(missing)[0]
        raise DataError(f"missing value in row {row + 1}, column {frame.columns[col]!r}")
    if threshold is not None:
        col, value = threshold
        if col not in frame.columns:
            raise DataError(f"threshold column {col!r} not found")
        y = (frame[col].to_numpy() > value).astype(int)
        response = f"{col}>{value:g}"
        drop = [col]
    else:
        if response not in frame.columns:
            raise DataError(f"response column {response!r} not found")
        y = frame[response].to_numpy()
        if not np.all(np.isin(y, (0, 1))):
            raise DataError(f"response column {response!r} must contain only 0 and 1")
        drop = [response]
    if covariates is None:
        covariates = [c for c in frame.columns if c not in drop]
    else:
        unknown = [c for c in covariates if c not in frame.columns]
        if unknown:
            raise DataError(f"unknown covariate columns {unknown}")
    X = frame[list(covariates)].to_numpy(dtype=float)
    center = scale = None
    if standardize:
        center = X.mean(axis=0)
        scale = X.std(axis=0, ddof=1)
        if np.any(scale <= 0):
            raise DataError("cannot standardize a constant column")
        X = (X - center) / scale
    return Dataset(y, X, list(covariates), response, center, scale, provenance)


def ingest_csv(path, response="y", threshold=None, covariates=None, standardize=False):
    """Read a CSV with a header row into a :class:`Dataset`."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return from_frame(frame, response, threshold, covariates, standardize, provenance=str(path))


def ozone_path():
    """Path of the bundled ozone table (111 days, New York, May to September 1973)."""
    return resources.files("dpbinreg") / "data" / "ozone.csv"


def load_ozone(threshold=70.0, standardize=False):
    """Ozone exceedance data: ``y = 1{ozone > threshold}``, covariates radiation, temperature, wind."""
    frame = pd.read_csv(ozone_path(), dtype=str)
    return from_frame(frame, threshold=("ozone", threshold), standardize=standardize, provenance="bundled ozone.csv")


# draws on disk: one CSV row per saved iteration plus a JSON sidecar


def draw_columns(n_atoms, p, qf, n_latent=0):
    r = p + 1
    q = p * (p + 1) // 2
    cols = ["chain", "iteration", "alpha", "n_occupied"]
    cols += [f"w[{l}]" for l in range(n_atoms)]
    cols += [f"mu[{l},{k}]" for l in range(n_atoms) for k in range(r)]
    cols += [f"beta_tilde[{l},{k}]" for l in range(n_atoms) for k in range(q)]
    cols += [f"delta[{l},{k}]" for l in range(n_atoms) for k in range(r)]
    cols += [f"m[{k}]" for k in range(r)]
    cols += [f"V[{i},{j}]" for i in range(r) for j in range(r)]
    cols += [f"theta[{k}]" for k in range(qf)]
    cols += [f"C[{i},{j}]" for i in range(qf) for j in range(qf)]
    cols += [f"s[{k}]" for k in range(p)]
    if n_latent:
        cols += [f"z[{i}]" for i in range(n_latent)]
        cols += [f"L[{i}]" for i in range(n_latent)]
    return cols


def _flat(draws):
    S = len(draws)
    parts = [
        draws.chain[:, None],
        draws.iteration[:, None],
        draws.alpha[:, None],
        draws.n_occupied[:, None],
        draws.weights,
        draws.mu.reshape(S, -1),
        draws.beta_tilde.reshape(S, -1),
        draws.delta.reshape(S, -1),
        draws.m,
        draws.V.reshape(S, -1),
        draws.theta.reshape(S, -1),
        draws.C.reshape(S, -1),
        draws.s,
    ]
    if draws.z is not None:
        parts += [draws.z, draws.labels]
    return np.hstack([np.asarray(p, dtype=float) for p in parts])


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj)}")


def config_hash(config):
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=_json_default).encode()).hexdigest()[:16]


def write_table(path, header, rows):
    """Write a numeric table with fixed 17-significant-digit formatting."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")


def write_draws(draws, path, prior, extra=None):
    """Write ``draws`` to ``path`` (CSV) and ``path`` with suffix ``.json`` (metadata)."""
    path = Path(path)
    n_latent = 0 if draws.z is None else draws.z.shape[1]
    cols = draw_columns(draws.n_atoms, draws.p, draws.theta.shape[1], n_latent)
    write_table(path, cols, _flat(draws))
    meta = {
        "n_atoms": draws.n_atoms,
        "p": draws.p,
        "n_free_beta": int(draws.theta.shape[1]),
        "beta_free": prior.beta_free.tolist(),
        "n_latent": n_latent,
        "n_draws": len(draws),
        "prior": prior.to_dict(),
        "sampler": draws.metadata,
    }
    meta.update(extra or {})
    path.with_suffix(".json").write_text(canonical_json(meta))
    return path


def read_prior(meta):
    d = dict(meta["prior"])
    return HyperPrior(**{k: (np.asarray(v) if isinstance(v, list) else v) for k, v in d.items()})


def read_draws(path):
    """Inverse of :func:`write_draws`; returns ``(draws, metadata)``."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    N, p, qf, nl = meta["n_atoms"], meta["p"], meta["n_free_beta"], meta["n_latent"]
    r, q = p + 1, p * (p + 1) // 2
    table = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
    S = len(table)
    pos = 0

    def take(width, shape):
        nonlocal pos
        out = table[:, pos : pos + width].reshape((S,) + shape)
        pos += width
        return out

    chain = take(1, ()).astype(int)
    iteration = take(1, ()).astype(int)
    alpha = take(1, ())
    n_occ = take(1, ()).astype(int)
    weights = take(N, (N,))
    mu = take(N * r, (N, r))
    bt = take(N * q, (N, q))
    delta = take(N * r, (N, r))
    m = take(r, (r,))
    V = take(r * r, (r, r))
    theta = take(qf, (qf,))
    C = take(qf * qf, (qf, qf))
    s = take(p, (p,))
    z = labels = None
    if nl:
        z = take(nl, (nl,))
        labels = take(nl, (nl,)).astype(int)
    draws = PosteriorDraws(
        weights, mu, bt, delta, alpha, m, V, theta, C, s, n_occ, iteration, chain, z, labels, meta.get("sampler", {})
    )
    return draws, meta
