"""
``pgn`` command-line interface.

Exit codes: 0 success, 1 a validation gate failed, 2 matching infeasible,
3 invalid input (schema / JSON / arguments), 4 any other domain error.
Option precedence is command-line flag > ``--config`` file > built-in default.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import _json, bounds, levy, matching, radial, sampler, validation
from .errors import MatchInfeasible, PGNError, SchemaError

log = logging.getLogger("pgn")

EXIT_GATE, EXIT_INFEASIBLE, EXIT_SCHEMA, EXIT_DOMAIN = 1, 2, 3, 4

DEFAULTS = {
    "seed": 0,
    "threads": None,
    "order": "auto",
    "symmetric": False,
    "fallback_order": False,
    "format": "csv",
    "n": 100_000,
    "component": "pgn",
    "q": 10,
    "reference_factor": 100.0,
    "grid": "0.4,0.2,0.1,0.05",
    "c": 1.0,
    "r0": 1.0,
    "suite": "quick",
    "baseline": False,
    "log_level": "WARNING",
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "spec": {"type": ["object", "string"]},
        "params": {"type": ["object", "string"]},
        "r": {"type": "number", "exclusiveMinimum": 0},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "p": {"type": "number"},
        "order": {"enum": ["auto", "4", "5", "7", "9", 4, 5, 7, 9]},
        "symmetric": {"type": "boolean"},
        "fallback_order": {"type": "boolean"},
        "n": {"type": ["integer", "number", "string"]},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": ["integer", "null"], "minimum": 1},
        "format": {"enum": ["csv", "bin"]},
        "component": {"enum": ["pgn", "T", "Y", "delta"]},
        "sweep": {"type": "string"},
        "q": {"type": "integer", "minimum": 5},
        "reference_factor": {"type": "number", "exclusiveMinimum": 1},
        "grid": {"type": "string"},
        "a": {"type": "number"},
        "c": {"type": "number"},
        "r0": {"type": "number"},
        "suite": {"enum": ["quick", "full"]},
        "baseline": {"type": "boolean"},
        "out": {"type": "string"},
        "log_level": {"type": "string"},
    },
}


class InputError(PGNError):
    """Bad command-line or configuration input."""


# --------------------------------------------------------------------------
# helpers

def parse_count(text) -> int:
    v = float(text)
    if not (v >= 0 and v == int(v)):
        raise InputError(f"not a nonnegative integer count: {text!r}")
    return int(v)


def parse_sweep(text: str):
    """``name=start:end:logN`` -> (name, N log-spaced values from start to end)."""
    name, _, rng = text.partition("=")
    parts = rng.split(":")
    if not name or len(parts) != 3 or not parts[2].startswith("log"):
        raise InputError(f"sweep must look like r=0.5:0.001:log20, got {text!r}")
    try:
        start, end, count = float(parts[0]), float(parts[1]), int(parts[2][3:])
    except ValueError:
        raise InputError(f"bad sweep {text!r}") from None
    if start <= 0 or end <= 0 or count < 1:
        raise InputError("sweep endpoints must be > 0 and the count >= 1")
    return name, np.geomspace(start, end, count)


def _load_json(value, what):
    if isinstance(value, dict):
        return value
    try:
        return json.loads(Path(value).read_text())
    except FileNotFoundError:
        raise InputError(f"{what} file not found: {value}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{what} is not valid JSON: {exc}") from None


def load_measure(cfg) -> levy.LevyMeasure1D:
    if cfg.get("spec") is not None:
        return levy.measure_from_dict(_load_json(cfg["spec"], "spec"))
    if cfg.get("a") is not None:
        return levy.TruncStable(cfg["c"], cfg["a"], cfg["r0"])
    raise InputError("a Levy measure is required: --spec FILE or --a (truncated stable)")


def load_radial(cfg) -> radial.RadialLevySpec:
    if cfg.get("spec") is None:
        raise InputError("--spec FILE with a radial spec is required")
    return radial.RadialLevySpec.from_dict(_load_json(cfg["spec"], "radial spec"))


def need(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise InputError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def fit_from(cfg, measure, r):
    order = cfg["order"]
    return matching.fit(measure, r, order if order == "auto" else int(order), cfg["symmetric"],
                        cfg.get("p"), fallback=cfg["fallback_order"])


def write_text(out, text):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def write_json(out, doc):
    write_text(out, json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n")


def write_csv(out, header, rows):
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    finally:
        if out:
            fh.close()


def write_sidecar(out, command, cfg, extra):
    if not out:
        return
    doc = {"command": command, "config": cfg, "config_hash": _json.digest(cfg), "seed": cfg.get("seed")}
    doc.update(extra)
    Path(str(out) + ".meta.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# commands

def cmd_match(cfg):
    need(cfg, "r")
    measure = load_measure(cfg)
    params = fit_from(cfg, measure, cfg["r"])
    resid = validation.quadrature_match_check(measure, params)
    doc = params.to_dict()
    doc.update({"quadrature_residual": resid, "gate": matching.RESIDUAL_GATE,
                "config_hash": _json.digest(cfg), "measure": measure.to_dict()})
    write_json(cfg.get("out"), doc)
    return 0 if resid < matching.RESIDUAL_GATE else EXIT_GATE


def _emit_batch(cfg, command, batch, wall, extra=None):
    out = cfg.get("out")
    if cfg["format"] == "bin":
        if not out:
            raise InputError("--format bin needs --out")
        batch.to_binary(out)
    else:
        batch.to_csv(out) if out else batch.to_csv(sys.stdout)
    meta = {"spec_hash": batch.spec_hash, "n": batch.n, "d": batch.d, "wall_time_s": wall,
            "throughput_per_s": batch.n / wall if wall > 0 else None, "namespace": batch.namespace}
    meta.update(batch.meta)
    meta.update(extra or {})
    write_sidecar(out, command, cfg, meta)


def cmd_sample(cfg):
    measure = load_measure(cfg)
    if cfg.get("params") is not None:
        params = matching.MatchedParams.from_dict(_load_json(cfg["params"], "params"))
    else:
        need(cfg, "r")
        params = fit_from(cfg, measure, cfg["r"])
    n = parse_count(cfg["n"])
    t0 = time.perf_counter()
    if cfg["baseline"]:
        batch = sampler.sample_normal_baseline(measure, params.r, n, cfg["seed"], cfg["threads"],
                                               params.symmetric)
    else:
        batch = sampler.sample_pgn(measure, params.r, params, n, cfg["seed"], cfg["threads"])
    _emit_batch(cfg, "sample", batch, time.perf_counter() - t0, {"params": params.to_dict()})
    return 0


def cmd_mv_match(cfg):
    need(cfg, "tau")
    spec = load_radial(cfg)
    field = radial.radial_match(spec, cfg["tau"])
    resid = float(radial.calibration_residuals(field).max())
    mresid = float(radial.matching_residuals(field).max())
    S, _ = radial.sigma_tau(field)
    doc = field.to_dict()
    doc.update({"calibration_residual": resid, "matching_residual": mresid, "Sigma": S.tolist(),
                "config_hash": _json.digest(cfg)})
    write_json(cfg.get("out"), doc)
    return 0 if max(resid, mresid) < 1e-8 else EXIT_GATE


def cmd_mv_sample(cfg):
    need(cfg, "tau")
    field = radial.radial_match(load_radial(cfg), cfg["tau"])
    fn = {"pgn": radial.sample_mv_pgn, "T": radial.sample_T_tau, "Y": radial.sample_Y_tau,
          "delta": radial.sample_delta_tau}[cfg["component"]]
    n = parse_count(cfg["n"])
    t0 = time.perf_counter()
    batch = fn(field, n, cfg["seed"], cfg["threads"])
    _emit_batch(cfg, "mv-sample", batch, time.perf_counter() - t0,
                {"essup_B": field.essup_B, "essup_N": field.essup_N})
    return 0


def cmd_bound(cfg):
    measure = load_measure(cfg)
    if cfg.get("sweep"):
        name, grid = parse_sweep(cfg["sweep"])
        if name != "r":
            raise InputError("bound sweeps run over r")
    else:
        need(cfg, "r")
        grid = [cfg["r"]]
    rows, reports = [], []
    for r in grid:
        params = fit_from(cfg, measure, float(r))
        rep = bounds.dtv_bound_1d(measure, params)
        q = rep.q
        rows.append([float(r), rep.dtv_bound, rep.Qs[q - 1], rep.Qs[q], rep.Qs[q + 1]])
        reports.append(rep.to_dict())
    q = reports[0]["q"]
    if cfg.get("out") and str(cfg["out"]).endswith(".json"):
        write_json(cfg["out"], {"reports": reports, "config_hash": _json.digest(cfg)})
    else:
        write_csv(cfg.get("out"), ["r", "bound", f"Q{q - 1}", f"Q{q}", f"Q{q + 1}"], rows)
    write_sidecar(cfg.get("out"), "bound", cfg, {"rows": len(rows)})
    return 0


def cmd_mv_bound(cfg):
    spec = load_radial(cfg)
    if cfg.get("sweep"):
        name, grid = parse_sweep(cfg["sweep"])
        if name != "tau":
            raise InputError("mv-bound sweeps run over tau")
    else:
        need(cfg, "tau")
        grid = [cfg["tau"]]
    rows = []
    for tau in grid:
        field = radial.radial_match(spec, float(tau))
        _, A = radial.sigma_tau(field)
        rep = bounds.mv_integral_diag(field, A, cfg["q"])
        rows.append([float(tau), rep.moment_factor, rep.integral_diag, rep.tail_integral,
                     rep.bound_modulo_constant, int(rep.finite)])
    write_csv(cfg.get("out"), ["tau", "moment_factor", "integral", "tail_integral",
                               "bound_modulo_constant", "finite"], rows)
    write_sidecar(cfg.get("out"), "mv-bound", cfg, {"label": bounds.MvBoundReport.label})
    return 0


def rate_gates(res: validation.RateStudyResult, a: float | None) -> dict:
    gates = {
        "ordering": all(p < q for p, q in zip(res.dks_pgn, res.dks_normal)),
        "slope_gap": (res.slope_pgn - res.slope_normal) >= 0.5
        if math.isfinite(res.slope_pgn) and math.isfinite(res.slope_normal) else False,
        "noise_floor_ok": not res.noise_floor_flag,
    }
    if a is not None:
        gates["normal_slope"] = abs(res.slope_normal - a / 2) <= 0.15 \
            if math.isfinite(res.slope_normal) else False
    return gates


def cmd_rate(cfg):
    measure = load_measure(cfg)
    grid = [float(x) for x in str(cfg["grid"]).split(",")]
    res = validation.rate_study(measure, grid, parse_count(cfg["n"]), cfg["seed"],
                                cfg["reference_factor"], cfg["symmetric"], cfg["order"],
                                cfg["threads"], progress=log.info)
    gates = rate_gates(res, measure.a if isinstance(measure, levy.TruncStable) and not cfg["symmetric"] else None)
    out = cfg.get("out")
    summary = res.to_dict()
    summary.update({"gates": gates, "config_hash": _json.digest(cfg), "seed": cfg["seed"]})
    if out:
        res.to_csv(out)
        Path(str(out) + ".json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        write_sidecar(out, "rate", cfg, {})
    else:
        write_json(None, summary)
    return 0 if all(gates.values()) else EXIT_GATE


def _suite(full: bool, seed: int, threads) -> dict:
    results = {}
    worst = 0.0
    for a in (0.5, 1.0, 1.5):
        for r in (0.5, 0.1, 0.01):
            ts = levy.TruncStable(1.0, a, 1.0)
            for sym in (False, True):
                worst = max(worst, validation.quadrature_match_check(ts, matching.fit(ts, r, symmetric=sym)))
    results["matching_residual"] = {"value": worst, "pass": worst < 1e-9}
    n = 10**7 if full else 10**5
    ts = levy.TruncStable(1.0, 1.0, 1.0)
    params = matching.fit(ts, 1.0)
    batch = sampler.sample_pgn(ts, 1.0, params, n, seed, threads)
    ests = validation.empirical_cumulants(batch, 4)
    zs = [e.z(t) for e, t in zip(ests, (1.0, 0.5, 1 / 3))]
    results["mc_cumulants"] = {"z": zs, "pass": all(abs(z) < 5 for z in zs)}
    spec = radial.RadialLevySpec(radial.SphereMeasure.uniform(2), radial.AngularFunction.constant(1.0),
                                 radial.AngularFunction.constant(1.0), 1.0, True)
    field = radial.radial_match(spec, 0.3)
    rep = validation.mv_cov_check(field, 10**6 if full else 10**5, seed, threads)
    results["mv_covariance"] = {"max_abs_z_mean": rep["max_abs_z_mean"], "max_abs_z_cov": rep["max_abs_z_cov"],
                                "pass": rep["max_abs_z_mean"] < 5 and rep["max_abs_z_cov"] < 5}
    cal = float(radial.calibration_residuals(field).max())
    results["mv_calibration"] = {"value": cal, "pass": cal < 1e-8}
    return results


def cmd_validate(cfg):
    results = _suite(cfg["suite"] == "full", cfg["seed"], cfg["threads"])
    ok = all(v["pass"] for v in results.values())
    write_json(cfg.get("out"), {"suite": cfg["suite"], "results": results, "pass": ok,
                                "config_hash": _json.digest(cfg), "seed": cfg["seed"]})
    return 0 if ok else EXIT_GATE


def cmd_selftest(cfg):
    checks = {}
    ts = levy.TruncStable(1.0, 1.0, 1.0)
    p = matching.match5(ts, 1.0)
    checks["match5_example"] = abs(p.p - 4) < 1e-10 and abs(p.s - 1 / 12) < 1e-12
    checks["sym9_root"] = abs(matching.stable_p_sym(1.0) - (10 + math.sqrt(526)) / 2) < 1e-9
    b1 = sampler.sample_pgn(ts, 1.0, p, 1000, 7, 1).values
    b2 = sampler.sample_pgn(ts, 1.0, p, 1000, 7, 4).values
    checks["determinism"] = bool(np.array_equal(b1, b2))
    rep = bounds.dtv_bound_1d(ts, matching.fit(ts, 0.1))
    checks["bound_closed_form"] = abs(bounds.stable_closed_form(1, 1, 0.1, rep.Qs) / rep.dtv_bound - 1) < 1e-8
    checks["K_uniform"] = bool(np.allclose(radial.SphereMeasure.uniform(2).K(), np.eye(2) / 2))
    ok = all(checks.values())
    write_json(cfg.get("out"), {"checks": checks, "pass": ok})
    return 0 if ok else EXIT_GATE


COMMANDS = {
    "match": (cmd_match, "fit PGN parameters at radius r"),
    "sample": (cmd_sample, "draw Delta_r + T_r (or the normal baseline)"),
    "mv-match": (cmd_mv_match, "calibrate a radial (multivariate) field at scale tau"),
    "mv-sample": (cmd_mv_sample, "draw from the multivariate approximation"),
    "bound": (cmd_bound, "univariate total-variation bound (single r or sweep)"),
    "mv-bound": (cmd_mv_bound, "multivariate bound diagnostics (modulo the unknown constant)"),
    "rate": (cmd_rate, "KS rate study of PGN vs normal approximation"),
    "validate": (cmd_validate, "run the validation gates"),
    "selftest": (cmd_selftest, "fast internal consistency checks"),
}


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--config", help="JSON config (or a sidecar .meta.json); flags override it")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--threads", type=int, help="worker threads (default: $PGN_THREADS or 1)")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--log-level", dest="log_level", help="logging level (default WARNING)")

    measure = argparse.ArgumentParser(add_help=False, argument_default=S)
    measure.add_argument("--spec", help="Levy measure JSON file")
    measure.add_argument("--a", type=float, help="truncated stable index (instead of --spec)")
    measure.add_argument("--c", type=float, help="truncated stable intensity (default 1)")
    measure.add_argument("--r0", type=float, help="truncated stable cut-off (default 1)")

    fitting = argparse.ArgumentParser(add_help=False, argument_default=S)
    fitting.add_argument("--r", type=float, help="truncation radius")
    fitting.add_argument("--order", choices=["auto", "4", "5", "7", "9"], help="matching order (default auto)")
    fitting.add_argument("--p", type=float, help="Gamma exponent for orders 4 and 7")
    fitting.add_argument("--symmetric", action="store_true", help="approximate X1 - X2 (symmetric law)")
    fitting.add_argument("--fallback-order", dest="fallback_order", action="store_true",
                         help="on infeasibility, retry at order 4 (7) with a heuristic exponent")

    mv = argparse.ArgumentParser(add_help=False, argument_default=S)
    mv.add_argument("--spec", help="radial spec JSON file")
    mv.add_argument("--tau", type=float, help="Gaussian scale tau")

    out = argparse.ArgumentParser(add_help=False, argument_default=S)
    out.add_argument("--n", help="number of draws, e.g. 1e6 (default 100000)")
    out.add_argument("--format", choices=["csv", "bin"], help="batch format (default csv)")

    parser = argparse.ArgumentParser(prog="pgn", description="Poisson-Gamma-Normal small-jump approximation")
    sub = parser.add_subparsers(dest="command", required=True)
    parents = {
        "match": [common, measure, fitting],
        "sample": [common, measure, fitting, out],
        "mv-match": [common, mv],
        "mv-sample": [common, mv, out],
        "bound": [common, measure, fitting],
        "mv-bound": [common, mv],
        "rate": [common, measure],
        "validate": [common],
        "selftest": [common],
    }
    subs = {}
    for name, (_, help_) in COMMANDS.items():
        subs[name] = sub.add_parser(name, help=help_, parents=parents[name], argument_default=S)
    subs["sample"].add_argument("--params", help="fitted parameters JSON (from `match`)")
    subs["sample"].add_argument("--baseline", action="store_true", help="sample the normal baseline instead")
    subs["mv-sample"].add_argument("--component", choices=["pgn", "T", "Y", "delta"],
                                   help="which part to sample (default pgn)")
    subs["bound"].add_argument("--sweep", help="log sweep, e.g. r=0.5:0.001:log20")
    subs["mv-bound"].add_argument("--sweep", help="log sweep, e.g. tau=0.3:0.01:log10")
    subs["mv-bound"].add_argument("--q", type=int, help="order q (default 10)")
    subs["rate"].add_argument("--grid", help="comma-separated decreasing radii (default 0.4,0.2,0.1,0.05)")
    subs["rate"].add_argument("--n", help="draws per arm (default 100000)")
    subs["rate"].add_argument("--reference-factor", dest="reference_factor", type=float,
                              help="r_ref = min(grid)/factor (default 100)")
    subs["rate"].add_argument("--symmetric", action="store_true", help="symmetrized law")
    subs["rate"].add_argument("--order", choices=["auto", "4", "5", "7", "9"], help="matching order")
    subs["validate"].add_argument("--suite", choices=["quick", "full"], help="gate suite (default quick)")
    return parser


def resolve_config(ns: argparse.Namespace) -> tuple[str, dict]:
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    file_cfg = {}
    if getattr(ns, "config", None):
        doc = _load_json(ns.config, "config")
        if isinstance(doc, dict) and "command" in doc and "config" in doc:
            doc = doc["config"]
        doc = {k: v for k, v in doc.items() if v is not None}
        _json.validate(doc, CONFIG_SCHEMA, "config")
        file_cfg = doc
    cfg = dict(DEFAULTS)
    cfg.update(file_cfg)
    cfg.update(flags)
    for key in ("spec", "params"):  # embed file contents so the config hash covers them
        if isinstance(cfg.get(key), str):
            cfg[key] = _load_json(cfg[key], key)
    return ns.command, cfg


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        command, cfg = resolve_config(ns)
        logging.basicConfig(level=getattr(logging, str(cfg["log_level"]).upper(), logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[command][0](cfg)
    except MatchInfeasible as exc:
        print(f"pgn: matching infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SchemaError, InputError) as exc:
        print(f"pgn: invalid input: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except PGNError as exc:
        print(f"pgn: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
