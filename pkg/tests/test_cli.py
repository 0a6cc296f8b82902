import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from weakpc.cli import main, read_matrix_csv, write_csv


def _write_panel(path, X, header=None):
    header = header or [f"s{j}" for j in range(X.shape[1])]
    write_csv(path, header, X)
    return path


def _read(path, skip=0):
    return read_matrix_csv(path, skip)


def test_estimate_rank_one_noiseless(tmp_path):
    X = np.outer([1.0, 2.0, -1.0, 0.5], [2.0, -1.0, 3.0])
    src = _write_panel(tmp_path / "x.csv", X)
    assert main(["estimate", "--input", str(src), "--rank", "1", "--out-dir", str(tmp_path / "o")]) == 0
    np.testing.assert_allclose(_read(tmp_path / "o" / "common.csv"), X, atol=1e-10)
    assert _read(tmp_path / "o" / "factors.csv").shape == (4, 1)
    assert _read(tmp_path / "o" / "eigenvalues.csv").shape == (1, 2)


def test_estimate_round_trip(tmp_path, rng):
    X = rng.standard_normal((25, 7))
    src = _write_panel(tmp_path / "x.csv", X)
    out = tmp_path / "o"
    assert main(["estimate", "--input", str(src), "--rank", "2", "--se", "--out-dir", str(out)]) == 0
    F = _read(out / "factors.csv")
    L = _read(out / "loadings.csv", skip=1)
    E = _read(out / "residuals.csv")
    np.testing.assert_allclose(F @ L.T + E, X, atol=1e-10)
    for name in ("factor_se.csv", "loading_se.csv", "common_se.csv"):
        assert (out / name).exists()


def test_estimate_standardize(tmp_path, rng):
    X = rng.standard_normal((12, 4)) * 5 + 3
    src = _write_panel(tmp_path / "x.csv", X)
    out = tmp_path / "o"
    assert main(["estimate", "--input", str(src), "--rank", "1", "--standardize", "--out-dir", str(out)]) == 0
    Z = _read(out / "common.csv") + _read(out / "residuals.csv")
    np.testing.assert_allclose(Z, (X - X.mean(0)) / X.std(0, ddof=1), atol=1e-10)


def test_estimate_usage_errors(tmp_path, capsys):
    src = _write_panel(tmp_path / "x.csv", np.ones((3, 2)) + np.eye(3, 2))
    assert main(["estimate", "--input", str(src), "--rank", "3", "--out-dir", str(tmp_path)]) == 2
    assert "rank" in capsys.readouterr().err
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n3,4,5\n")
    assert main(["estimate", "--input", str(tmp_path / "bad.csv"), "--rank", "1"]) == 2
    assert ":3:" in capsys.readouterr().err
    (tmp_path / "bad2.csv").write_text("a,b\n1,2\n3,4\n5,oops\n")
    assert main(["estimate", "--input", str(tmp_path / "bad2.csv"), "--rank", "1"]) == 2
    err = capsys.readouterr().err
    assert ":4:" in err and "oops" in err
    with pytest.raises(SystemExit) as exc:
        main(["estimate", "--rank", "1"])
    assert exc.value.code == 2


def test_estimate_runtime_failure(tmp_path):
    X = np.outer(np.arange(1.0, 7.0), [1.0, 2.0, 3.0])
    src = _write_panel(tmp_path / "x.csv", X)
    assert main(["estimate", "--input", str(src), "--rank", "2", "--se", "--out-dir", str(tmp_path)]) == 1


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(arrays(np.float64, (5, 3), elements=st.floats(-1e300, 1e300, allow_subnormal=True)))
def test_csv_round_trip(tmp_path, X):
    path = tmp_path / "rt.csv"
    write_csv(path, ["a", "b", "c"], X)
    Y = _read(path)
    np.testing.assert_array_equal(Y, X)


def _config(tmp_path, **kw):
    cfg = {
        "dgp": {"kind": "dgp1", "r": 3, "alphas": [1, 1 / 3, 1 / 6], "d2": [6, 5, 4]},
        "grid": [[30, 40]],
        "replications": 2,
        "seed": 3,
        "diagnostics": ["fit", "errors", "histograms"],
    }
    cfg.update(kw)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def test_simulate_minimal_and_deterministic(tmp_path):
    cfg = _config(tmp_path)
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path / "b"), "--threads", "3"]) == 0
    a, b = (tmp_path / "a" / "report.json").read_bytes(), (tmp_path / "b" / "report.json").read_bytes()
    assert a == b
    header = (tmp_path / "a" / "table.csv").read_text().splitlines()[0]
    assert header == "N,T,R2_F1,R2_L1,R2_F2,R2_L2,R2_F3,R2_L3,M_F,M_L,rho_bar"
    assert (tmp_path / "a" / "histograms.csv").read_text().startswith("N,T,side,j,bin_lo")
    rep = json.loads(a)
    assert rep["grid"][0]["replications"] == 2


def test_seed_flag_changes_output(tmp_path):
    cfg = _config(tmp_path)
    main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path / "a")])
    main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path / "b"), "--seed", "4"])
    assert (tmp_path / "a" / "report.json").read_bytes() != (tmp_path / "b" / "report.json").read_bytes()


@pytest.mark.parametrize(
    "patch, path",
    [
        ({"replications": 0}, "$.replications"),
        ({"grid": [[30, "x"]]}, "$.grid[0][1]"),
        ({"dgp": {"kind": "dgp1", "r": 2, "alphas": [1, 1], "d2": [3, 1], "extra": 1}}, "$.dgp"),
        ({"dgp": {"kind": "dgp1", "r": 2, "alphas": [1], "d2": [3, 1]}}, "$.dgp.alphas"),
        ({"diagnostics": ["bogus"]}, "$.diagnostics[0]"),
    ],
)
def test_schema_errors_named_by_path(tmp_path, capsys, patch, path):
    cfg = _config(tmp_path, **patch)
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2
    assert path in capsys.readouterr().err


def test_invalid_json(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert main(["simulate", "--config", str(p)]) == 2


def test_rates_synthetic(tmp_path):
    cfg = _config(tmp_path, grid=[[50, 100], [100, 100], [200, 100], [400, 100]],
                  synthetic={"a": 0.7, "c": 2.0})
    out = tmp_path / "r"
    assert main(["rates", "--config", str(cfg), "--out-dir", str(out)]) == 0
    res = json.loads((out / "rates.json").read_text())
    assert res["synthetic"]["slope"] == pytest.approx(-0.7, abs=1e-10)


def test_rates_coverage_favar_small(tmp_path):
    cfg = _config(tmp_path, grid=[[20, 30], [40, 30], [80, 30]],
                  dgp={"kind": "dgp2", "r": 2, "alphas": [1, 1], "d2": [3, 1], "sigma_rule": {"constant": 1}},
                  favar={"gamma": [1, 1], "beta": [1, 0]})
    assert main(["rates", "--config", str(cfg), "--out-dir", str(tmp_path / "r")]) == 0
    lines = (tmp_path / "r" / "rates.csv").read_text().splitlines()
    assert lines[0] == "measure,axis,slope,se,points" and len(lines) == 4
    assert main(["coverage", "--config", str(cfg), "--out-dir", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "coverage.csv").read_text().startswith("N,T,target,k,coverage")
    assert main(["favar", "--config", str(cfg), "--out-dir", str(tmp_path / "f")]) == 0
    rows = (tmp_path / "f" / "favar.csv").read_text().splitlines()
    assert rows[0] == "N,T,coef,mean,rejection_rate,coverage" and len(rows) == 1 + 3 * 4
