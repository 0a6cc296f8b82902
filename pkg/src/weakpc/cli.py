"""Command-line entry point: ``weakpc {estimate,simulate,rates,coverage,favar}``.

Exit codes: 0 success, 1 runtime failure, 2 usage, config or input error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import jsonschema
import numpy as np

from .dgp import DgpSpec, SigmaRule
from .favar import run_favar
from .inference import standard_errors
from .model import Panel, standardize_panel
from .montecarlo import (
    DIAGNOSTICS,
    ExperimentError,
    McConfig,
    log_log_slope,
    rate_axis,
    rate_slopes,
    run_experiment,
)
from .pce import pc_estimate

log = logging.getLogger("weakpc")


class UsageError(Exception):
    pass


_NUM_ARRAY = {"type": "array", "items": {"type": "number"}, "minItems": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["dgp", "grid", "replications"],
    "additionalProperties": False,
    "properties": {
        "dgp": {
            "type": "object",
            "required": ["kind", "r", "alphas", "d2"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["dgp1", "dgp2", "dgp1_nonorth"]},
                "r": {"type": "integer", "minimum": 1},
                "alphas": _NUM_ARRAY,
                "d2": _NUM_ARRAY,
                "sigma_rule": {
                    "oneOf": [
                        {"const": "match_common_sd"},
                        {
                            "type": "object",
                            "required": ["constant"],
                            "additionalProperties": False,
                            "properties": {"constant": {"type": "number", "minimum": 0}},
                        },
                    ]
                },
            },
        },
        "grid": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "array",
                "items": {"type": "integer", "minimum": 2},
                "minItems": 2,
                "maxItems": 2,
            },
        },
        "replications": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "diagnostics": {"type": "array", "items": {"enum": sorted(DIAGNOSTICS)}},
        "rotation_kind": {"enum": [None, "H0", "H1", "H2", "H3", "H4", "Hbar"]},
        "at": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
        "threads": {"type": "integer", "minimum": 1},
        "rate_axis": {"enum": ["n", "t"]},
        "synthetic": {
            "type": "object",
            "required": ["a"],
            "additionalProperties": False,
            "properties": {"a": {"type": "number"}, "c": {"type": "number", "exclusiveMinimum": 0}},
        },
        "favar": {
            "type": "object",
            "required": ["gamma", "beta"],
            "additionalProperties": False,
            "properties": {
                "gamma": _NUM_ARRAY,
                "beta": {"type": "array", "items": {"type": "number"}},
                "h": {"type": "integer", "minimum": 0},
                "noise_sd": {"type": "number", "minimum": 0},
                "rotation_kind": {"enum": ["H0", "H1", "H2", "H3", "H4", "Hbar"]},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]}},
            },
        },
    },
}


# ---------------------------------------------------------------- CSV I/O


def read_numeric_csv(path, skip_cols: int = 0) -> tuple:
    """Header and numeric body of a CSV; the first ``skip_cols`` columns are labels."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise UsageError(f"{path}: empty file") from None
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise UsageError(
                    f"{path}:{line}: expected {len(header)} fields, got {len(row)}"
                )
            cells = row[skip_cols:]
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                bad = next(c for c in cells if not _is_float(c))
                raise UsageError(f"{path}:{line}: non-numeric cell {bad!r}") from None
    X = np.array(rows, dtype=float).reshape(len(rows), len(header) - skip_cols)
    return [h.strip() for h in header], X


def read_panel_csv(path) -> tuple:
    """Read a header + numeric CSV panel (rows = time, columns = series)."""
    header, X = read_numeric_csv(path)
    if X.shape[0] < 2 or X.shape[1] < 2:
        raise UsageError(f"{path}: need at least 2 rows and 2 columns of data")
    if not np.all(np.isfinite(X)):
        raise UsageError(f"{path}: non-finite values")
    return header, X


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def read_matrix_csv(path, skip_cols: int = 0) -> np.ndarray:
    """Numeric matrix from a CSV written by this tool."""
    return read_numeric_csv(path, skip_cols)[1]


# ---------------------------------------------------------------- config


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    v = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = sorted(v.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise UsageError(f"config error at {e.json_path}: {e.message}")
    d = cfg["dgp"]
    for key in ("alphas", "d2"):
        if len(d[key]) != d["r"]:
            raise UsageError(f"config error at $.dgp.{key}: needs {d['r']} entries")


def build_config(cfg: dict, seed: Optional[int] = None, threads: Optional[int] = None) -> McConfig:
    d = cfg["dgp"]
    try:
        spec = DgpSpec(
            kind=d["kind"],
            r=d["r"],
            alphas=tuple(d["alphas"]),
            d2=tuple(d["d2"]),
            sigma_rule=SigmaRule.parse(d.get("sigma_rule", "match_common_sd")),
        )
        for n, t in cfg["grid"]:
            if spec.r > min(n, t):
                raise ValueError(f"r={spec.r} exceeds min(n, t) for grid point [{n}, {t}]")
        return McConfig(
            dgp=spec,
            grid=tuple(tuple(g) for g in cfg["grid"]),
            replications=cfg["replications"],
            diagnostics=frozenset(cfg.get("diagnostics", ["fit", "errors"])),
            rotation_kind=cfg.get("rotation_kind"),
            base_seed=seed if seed is not None else cfg.get("seed", 0),
            at=tuple(cfg["at"]) if "at" in cfg else None,
            threads=threads if threads is not None else cfg.get("threads", 1),
        )
    except ValueError as exc:
        raise UsageError(f"config error at $.dgp: {exc}") from exc


def _out_dir(args, cfg: Optional[dict]) -> Path:
    if args.out_dir:
        p = Path(args.out_dir)
    elif cfg and "outputs" in cfg and "dir" in cfg["outputs"]:
        p = Path(cfg["outputs"]["dir"])
    else:
        p = Path(".")
    p.mkdir(parents=True, exist_ok=True)
    return p


def _formats(cfg: dict) -> set:
    return set(cfg.get("outputs", {}).get("formats", ["csv", "json"]))


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- commands


def cmd_estimate(args) -> int:
    header, X = read_panel_csv(args.input)
    T, N = X.shape
    r = args.rank
    if r < 1 or r > min(N, T):
        raise UsageError(f"--rank {r} must lie in [1, min(N, T) = {min(N, T)}]")
    panel = Panel(X)
    out = _out_dir(args, None)
    if args.standardize:
        try:
            panel = standardize_panel(panel)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        write_csv(
            out / "standardization.csv",
            ["series", "mean", "sd"],
            zip(header, panel.series_means, panel.series_sds),
        )
    fit = pc_estimate(panel, r)
    fcols = [f"f{j + 1}" for j in range(r)]
    write_csv(out / "factors.csv", fcols, fit.factors)
    write_csv(out / "loadings.csv", ["series"] + [f"l{j + 1}" for j in range(r)],
              ([h] + list(row) for h, row in zip(header, fit.loadings)))
    write_csv(out / "common.csv", header, fit.common)
    write_csv(out / "residuals.csv", header, fit.residuals)
    write_csv(out / "eigenvalues.csv", ["j", "eig"], ([j + 1, e] for j, e in enumerate(fit.eig)))
    if fit.rank_deficient:
        log.warning("fit is rank deficient; standard errors unavailable")
    if args.se:
        if fit.rank_deficient:
            raise ExperimentError("cannot compute standard errors for a rank-deficient fit")
        f_se, l_se, c_se = standard_errors(fit)
        write_csv(out / "factor_se.csv", fcols, f_se)
        write_csv(out / "loading_se.csv", ["series"] + [f"l{j + 1}" for j in range(r)],
                  ([h] + list(row) for h, row in zip(header, l_se)))
        write_csv(out / "common_se.csv", header, c_se)
    return 0


def _write_report(out: Path, report, cfg: dict) -> None:
    fmts = _formats(cfg)
    if "json" in fmts:
        _dump_json(out / "report.json", report.to_json())
    if "csv" in fmts and "fit" in report.config.diagnostics:
        write_csv(out / "table.csv", report.table_header(), report.table_rows())
    if "histograms" in report.config.diagnostics:
        rows = []
        for g in report.results:
            for side in ("factor", "loading"):
                S = g.samples[f"hist_{side}"]
                for j in range(S.shape[1]):
                    counts, edges = np.histogram(S[:, j], bins=40)
                    for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                        rows.append([g.n, g.t, side, j + 1, lo, hi, int(c)])
        write_csv(out / "histograms.csv", ["N", "T", "side", "j", "bin_lo", "bin_hi", "count"], rows)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    mc = build_config(cfg, args.seed, args.threads)
    report = run_experiment(mc)
    _write_report(_out_dir(args, cfg), report, cfg)
    return 0


def cmd_rates(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    rows = []
    if "synthetic" in cfg:
        # self-test: errors injected exactly as c / x^a
        a, c = cfg["synthetic"]["a"], cfg["synthetic"].get("c", 1.0)
        axis = cfg.get("rate_axis") or rate_axis([tuple(g) for g in cfg["grid"]])
        x = [g[0] if axis == "n" else g[1] for g in cfg["grid"]]
        fit = log_log_slope(x, [c / xx**a for xx in x])
        rows.append(["synthetic", axis, fit.slope, fit.se, fit.points])
        result = {"synthetic": {"axis": axis, "slope": fit.slope, "se": fit.se}}
    else:
        mc = build_config(cfg, args.seed, args.threads)
        if "errors" not in mc.diagnostics:
            mc = McConfig(**{**mc.__dict__, "diagnostics": mc.diagnostics | {"errors"}})
        if len(mc.grid) < 3:
            raise UsageError("config error at $.grid: rates need >= 3 grid points")
        report = run_experiment(mc)
        axis = cfg.get("rate_axis") or rate_axis(mc.grid)
        slopes = rate_slopes(report, axis)
        result = {k: {"axis": axis, "slope": v.slope, "se": v.se, "points": v.points} for k, v in slopes.items()}
        rows += [[k, axis, v.slope, v.se, v.points] for k, v in slopes.items()]
        _write_report(out, report, cfg)
    write_csv(out / "rates.csv", ["measure", "axis", "slope", "se", "points"], rows)
    _dump_json(out / "rates.json", result)
    return 0


def cmd_coverage(args) -> int:
    cfg = load_config(args.config)
    mc = build_config(cfg, args.seed, args.threads)
    mc = McConfig(**{**mc.__dict__, "diagnostics": mc.diagnostics | {"coverage"}})
    report = run_experiment(mc)
    out = _out_dir(args, cfg)
    rows = []
    for g in report.results:
        cv = g.stats["coverage"]
        for k, v in enumerate(cv["factor"]):
            rows.append([g.n, g.t, "factor", k + 1, v])
        for k, v in enumerate(cv["loading"]):
            rows.append([g.n, g.t, "loading", k + 1, v])
        rows.append([g.n, g.t, "common", 0, cv["common"]])
    write_csv(out / "coverage.csv", ["N", "T", "target", "k", "coverage"], rows)
    _write_report(out, report, cfg)
    return 0


def cmd_favar(args) -> int:
    cfg = load_config(args.config)
    if "favar" not in cfg:
        raise UsageError("config error at $: 'favar' section is required")
    mc = build_config(cfg, args.seed, args.threads)
    fv = cfg["favar"]
    if len(fv["gamma"]) != mc.dgp.r:
        raise UsageError(f"config error at $.favar.gamma: needs {mc.dgp.r} entries")
    rows, results = [], []
    for n, t in mc.grid:
        spec = DgpSpec(mc.dgp.kind, mc.dgp.r, mc.dgp.alphas, mc.dgp.d2, n, t,
                       mc.dgp.sigma_rule, mc.base_seed)
        res = run_favar(spec, fv["gamma"], fv["beta"], fv.get("h", 0), fv.get("noise_sd", 1.0),
                        mc.replications, mc.threads, fv.get("rotation_kind", "H0"))
        results.append({"n": n, "t": t, **res})
        for name, m, rej, cov in zip(res["names"], res["mean_coef"], res["rejection_rate"], res["coverage"]):
            rows.append([n, t, name, m, rej, cov])
    out = _out_dir(args, cfg)
    write_csv(out / "favar.csv", ["N", "T", "coef", "mean", "rejection_rate", "coverage"], rows)
    _dump_json(out / "favar.json", results)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weakpc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="PC estimation of a CSV panel")
    e.add_argument("--input", required=True)
    e.add_argument("--rank", type=int, required=True)
    e.add_argument("--standardize", action="store_true")
    e.add_argument("--se", action="store_true", help="also write standard-error files")
    e.add_argument("--out-dir")
    e.set_defaults(func=cmd_estimate)

    for name, func, help_ in (
        ("simulate", cmd_simulate, "Monte Carlo fit tables"),
        ("rates", cmd_rates, "log-log convergence slopes"),
        ("coverage", cmd_coverage, "confidence-interval coverage"),
        ("favar", cmd_favar, "factor-augmented regression size"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True)
        s.add_argument("--seed", type=int)
        s.add_argument("--threads", type=int)
        s.add_argument("--out-dir")
        s.set_defaults(func=func)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ExperimentError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
