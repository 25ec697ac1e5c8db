import json

import numpy as np
import pandas as pd
import pytest

from conftest import simple_prior
from dpbinreg.cli import EXIT_CONFIG, EXIT_DATA, main, read_config_file
from dpbinreg.data import from_frame, ingest_csv, load_ozone, parse_threshold, read_draws, write_draws
from dpbinreg.errors import ConfigError, DataError
from dpbinreg.gibbs import SamplerConfig, run_chain


@pytest.fixture
def small_csv(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(40, 2))
    y = (x[:, 0] + rng.normal(size=40) > 0).astype(int)
    path = tmp_path / "small.csv"
    pd.DataFrame({"y": y, "a": x[:, 0], "b": x[:, 1]}).to_csv(path, index=False)
    return path


def test_ozone_ingestion():
    data = load_ozone()
    raw = pd.read_csv(__import__("dpbinreg.data", fromlist=["ozone_path"]).ozone_path())
    assert data.n == 111 and data.p == 3
    assert list(raw.columns) == ["ozone", "radiation", "temperature", "wind"]
    assert data.y.sum() == int((raw["ozone"] > 70).sum()) == 24
    assert data.columns == ["radiation", "temperature", "wind"]


def test_missing_cell_named(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("y,a,b\n1,0.5,1.0\n0,,2.0\n1,0.1,0.3\n0,0.2,0.3\n")
    with pytest.raises(DataError, match=r"row 2, column 'a'"):
        ingest_csv(path)


def test_non_numeric_cell_named(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("y,a\n1,0.5\n0,abc\n1,0.1\n0,0.2\n")
    with pytest.raises(DataError, match=r"row 2, column 'a'"):
        ingest_csv(path)


def test_response_must_be_binary(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("y,a\n1,0.5\n2,0.1\n1,0.1\n0,0.2\n")
    with pytest.raises(DataError):
        ingest_csv(path)


def test_too_few_rows():
    with pytest.raises(DataError):
        from_frame(pd.DataFrame({"y": [0, 1], "a": [0.1, 0.2]}))


def test_standardization(small_csv):
    data = ingest_csv(small_csv, standardize=True)
    np.testing.assert_allclose(data.X.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(data.X.std(axis=0, ddof=1), 1.0, atol=1e-12)
    raw = pd.read_csv(small_csv)
    np.testing.assert_allclose(data.to_original(data.X), raw[["a", "b"]].to_numpy(), atol=1e-12)


def test_threshold_rule():
    assert parse_threshold("ozone:70") == ("ozone", 70.0)
    with pytest.raises(DataError):
        parse_threshold("ozone70")
    with pytest.raises(DataError):
        from_frame(pd.DataFrame({"a": [1.0, 2, 3, 4], "b": [1.0, 2, 3, 4]}), threshold="missing:1")


def test_draws_roundtrip(tmp_path, small_csv):
    data = ingest_csv(small_csv)
    prior = simple_prior(2)
    draws = run_chain(data, SamplerConfig(iterations=20, burn_in=5, truncation=4, keep_latent=True), prior)
    path = write_draws(draws, tmp_path / "d.csv", prior)
    back, meta = read_draws(path)
    for name in ("weights", "mu", "beta_tilde", "delta", "alpha", "V", "C", "z", "labels", "iteration"):
        np.testing.assert_array_equal(getattr(back, name), getattr(draws, name))
    assert meta["p"] == 2 and meta["beta_free"] == [True, True, True]


def test_config_file_and_override(tmp_path, small_csv):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"data = {small_csv}\niters = 30\nburnin = 10  # short\ntruncation = 5\nseed = 3\n")
    assert read_config_file(cfg)["iters"] == "30"
    out = tmp_path / "o"
    assert main(["fit", "--config", str(cfg), "--iters", "25", "--out", str(out)]) == 0
    meta = json.loads((out / "draws.json").read_text())
    assert meta["settings"]["iters"] == 25 and meta["settings"]["burnin"] == 10
    assert meta["n_draws"] == 15 and "config_hash" in meta and "version" in meta


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("itres = 3\n")
    with pytest.raises(ConfigError, match="itres"):
        read_config_file(cfg)


def test_exit_codes(tmp_path, small_csv, capsys):
    assert main(["fit", "--data", str(small_csv), "--burnin", "50", "--iters", "10", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["fit", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == EXIT_DATA
    assert main(["fit", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["fit", "--data", str(small_csv), "--prior-approach", "1", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "prior-approach 2" in capsys.readouterr().err


def _run_twice(tmp_path, args):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main(args + ["--out", str(out)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    return outs


def test_fit_deterministic(tmp_path, small_csv):
    a, b = _run_twice(tmp_path, ["fit", "--data", str(small_csv), "--iters", "40", "--burnin", "10",
                                 "--truncation", "6", "--chains", "2", "--seed", "9"])
    assert a.keys() == b.keys() == {"draws.csv", "draws.json", "fit_summary.json"}
    assert a == b


def test_predict_and_functionals_from_draws(tmp_path, small_csv):
    fit = tmp_path / "fit"
    base = ["--data", str(small_csv), "--seed", "1"]
    assert main(["fit", *base, "--iters", "30", "--burnin", "10", "--truncation", "5", "--out", str(fit)]) == 0
    assert main(["predict", *base, "--from", str(fit), "--grid-points", "7", "--out", str(tmp_path / "p")]) == 0
    curves = pd.read_csv(tmp_path / "p" / "curves.csv")
    assert len(curves) == 14 and curves["mean"].between(0, 1).all()
    assert main(["functionals", *base, "--from", str(fit), "--functional-points", "21", "--draw-stride", "5",
                 "--out", str(tmp_path / "f")]) == 0
    summ = json.loads((tmp_path / "f" / "functionals.json").read_text())["summary"]
    assert len(summ["gradient"]["mean"]) == 2


def test_functionals_vanish_without_coupling(tmp_path):
    rng = np.random.default_rng(1)
    x = rng.normal(size=30)
    csv = tmp_path / "d.csv"
    pd.DataFrame({"y": (rng.random(30) < 0.5).astype(int), "x": x}).to_csv(csv, index=False)
    from test_functionals import fixture_draws
    from dpbinreg.kernel import KernelAtom
    from dpbinreg.mixture import MixtureState

    st = MixtureState.from_atoms(np.array([1.0]), [KernelAtom(np.array([0.3, 0.0]), [0.0], [1.0, 1.5])])
    draws = fixture_draws([st] * 4)
    draws.m, draws.V, draws.theta, draws.C, draws.s = (np.zeros((4, 2)), np.tile(np.eye(2), (4, 1, 1)),
                                                       np.zeros((4, 1)), np.ones((4, 1, 1)), np.ones((4, 1)))
    write_draws(draws, tmp_path / "draws.csv", simple_prior(1))
    assert main(["functionals", "--data", str(csv), "--from", str(tmp_path), "--out", str(tmp_path / "f")]) == 0
    summ = json.loads((tmp_path / "f" / "functionals.json").read_text())["summary"]
    for key in ("differential", "gradient", "directional_gradient", "stabilizing"):
        assert np.max(np.abs(summ[key]["mean"])) < 1e-6


def test_prior_check_and_compare(tmp_path, small_csv):
    base = ["--data", str(small_csv), "--seed", "2", "--truncation", "5"]
    assert main(["prior-check", *base, "--prior-draws", "20", "--grid-points", "5", "--sim-budget", "20000",
                 "--out", str(tmp_path / "pc")]) == 0
    rep = json.loads((tmp_path / "pc" / "prior_check.json").read_text())
    assert rep["implied_base"]["delta"]["delta_2"] < 0.05
    assert main(["compare", *base, "--iters", "40", "--burnin", "10", "--out", str(tmp_path / "cmp")]) == 0
    report = json.loads((tmp_path / "cmp" / "ppl.json").read_text())["report"]
    assert set(report) == {"full", "product_kernel"}
