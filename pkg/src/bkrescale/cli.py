"""Command-line driver.

    bkrescale run      --config CFG --out DIR [--k-profiles 20,40,80] [--phase-drift lambda]
    bkrescale sweep    --config CFG --param beta --values 0,0.5,1 --out DIR [--jobs N]
    bkrescale converge --config CFG --base-I 50 --out DIR

Exit codes: 0 blow-up, 1 usage/config/IO error, 2 no blow-up detected,
3 numeric failure. Files are the interface; progress goes to stderr.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import json
import math
import os
import sys
import tempfile
from dataclasses import fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import analysis
from .pde_core import ConfigError, EquationKind, RunConfig
from .rescaler import DegenerateProfile, SchedulingError, run
from .stepper import NumericalOverflow

EXIT_BLOWUP, EXIT_USAGE, EXIT_NO_BLOWUP, EXIT_NUMERIC = 0, 1, 2, 3

REQUIRED_KEYS = ("equation", "p", "beta", "gamma", "delta", "lambda_inv", "alpha",
                 "amplitude", "I", "tau_ratio", "K_max")
_INT_KEYS = {"lambda_inv", "I", "K_max", "step_cap"}
NUMERIC_ERRORS = (NumericalOverflow, DegenerateProfile, SchedulingError, AssertionError,
                  FloatingPointError)


# --- config ---------------------------------------------------------------------

def _parse_value(key: str, raw: str):
    if key == "equation":
        return EquationKind.parse(raw)
    if key == "symmetric":
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"symmetric: expected true/false, got {raw!r}")
    try:
        if key in _INT_KEYS:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def parse_config_text(text: str) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    values: Dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    for key in REQUIRED_KEYS:
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def format_config(config: RunConfig) -> str:
    lines = []
    for key, v in config.as_dict().items():
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = _fmt(v)
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"


# --- output -----------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(_fmt(v) for v in row))
    write_atomic(path, "\n".join(out) + "\n")


def write_json(path: Path, record: dict) -> None:
    write_atomic(path, json.dumps(record, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, EquationKind):
        return o.value
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _finite_or_none(x):
    return None if x is None or not math.isfinite(x) else x


# --- run ----------------------------------------------------------------------------

def _progress(lv) -> None:
    print(f"k={lv.k} n_k={lv.n_star} tau_star={lv.tau_star:.10g}", file=sys.stderr, flush=True)


def _profile_levels(requested: Optional[List[int]], K: int) -> List[int]:
    if requested is None:
        return [k for k in (10, 20, 40, 60, 80) if k <= K]
    bad = [k for k in requested if k < 1 or k > K]
    if bad:
        raise ConfigError(f"profile levels {bad} outside 1..{K}")
    return list(requested)


def write_run_outputs(stack, outcome, diag, out: Path, k_profiles=None, phase_drift="lambda") -> dict:
    """Emit the run's CSV tables and summary record; returns the summary."""
    cfg = stack.config
    out.mkdir(parents=True, exist_ok=True)
    done = [lv for lv in stack.levels if lv.tau_star is not None]
    write_csv(out / "tau_star.csv", ["k", "n_k", "tau_star", "xi_minus", "xi_plus"],
              [(lv.k, lv.n_star, lv.tau_star, lv.xi_minus, lv.xi_plus) for lv in done])
    summary = {
        "outcome": "blow-up" if outcome.blew_up else "no-blow-up",
        "K_reached": len(done) - 1,
        "config": cfg.as_dict(),
        "threshold_M": cfg.threshold,
        "tau_star_limit": analysis.tau_star_limit(cfg.p, cfg.threshold, cfg.lam),
        "asymmetric": diag.get("asymmetric", False),
    }
    if not outcome.blew_up:
        summary["step_cap_hit"] = outcome.step_cap_hit
        summary["stalled_level"] = outcome.level
        write_json(out / "summary.json", summary)
        return summary

    times = analysis.blowup_times(stack)
    summary.update(T_htau=times.partial, tail_bound=times.tail_bound, T_estimate=times.estimate)
    series = analysis.rate_series(stack)
    write_csv(out / "rate.csv", ["t", "T_minus_t", "sup_norm"],
              zip(series.t, series.T_minus_t, series.sup_norm))
    try:
        summary["rate_slope"] = analysis.blowup_rate_fit(series)
    except analysis.InsufficientData as exc:
        summary["rate_slope"] = None
        summary["rate_note"] = str(exc)

    errors = {}
    for k in _profile_levels(k_profiles, summary["K_reached"]):
        rep = analysis.rescaled_profile(stack, k, phase_drift=phase_drift)
        errors[str(k)] = rep.error_sup
        if cfg.is_complex:
            write_csv(out / f"profile_{k}.csv",
                      ["z", "computed", "predicted", "computed_phase", "predicted_phase"],
                      zip(rep.z, rep.computed, rep.predicted, rep.computed_phase, rep.predicted_phase))
            summary.setdefault("phase_error", {})[str(k)] = rep.phase_error
            summary.setdefault("theta", {})[str(k)] = float(np.angle(np.exp(1j * rep.theta)))
        else:
            write_csv(out / f"profile_{k}.csv", ["z", "computed", "predicted"],
                      zip(rep.z, rep.computed, rep.predicted))
    summary["profile_error"] = errors
    if cfg.is_complex:
        summary["phase_drift"] = phase_drift
        ks = [int(k) for k in errors]
        if len(ks) >= 2:
            choice = analysis.choose_phase_drift(stack, ks)
            summary["phase_drift_best_fit"] = choice["variant"]
            summary["phase_drift_spread"] = choice["spread"]
    write_json(out / "summary.json", summary)
    return summary


def execute(config: RunConfig, out: Path, k_profiles=None, phase_drift="lambda", progress=True):
    stack, outcome, diag = run(config, progress=_progress if progress else None)
    summary = write_run_outputs(stack, outcome, diag, out, k_profiles, phase_drift)
    return stack, outcome, summary


def cmd_run(args) -> int:
    config = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_atomic(out / "config.txt", format_config(config))
    _, outcome, _ = execute(config, out, args.k_profiles, args.phase_drift)
    return EXIT_BLOWUP if outcome.blew_up else EXIT_NO_BLOWUP


# --- sweep --------------------------------------------------------------------------

def _point_config(base: RunConfig, param: str, value) -> RunConfig:
    if param == "I":
        return base.replace(I=int(value))
    return base.replace(**{param: float(value)})


def _sweep_point(config: RunConfig, out: Path, phase_drift: str):
    """Run one sweep point; failures come back as a status string."""
    try:
        stack, outcome, summary = execute(config, out, [], phase_drift, progress=False)
    except NUMERIC_ERRORS as exc:
        return None, f"numeric failure: {exc}"
    status = "blow-up" if outcome.blew_up else "no-blow-up"
    return stack, status


def cmd_sweep(args) -> int:
    base = load_config(args.config)
    param = args.param
    if param not in ("beta", "delta", "I"):
        raise ConfigError("sweep parameter must be one of beta, delta, I")
    values = [float(v) if param != "I" else int(v) for v in args.values]
    calib = None
    if param == "beta":
        if base.is_complex:
            raise ConfigError("a beta sweep needs the heat equation")
        if 0.0 not in values:
            values.insert(0, 0.0)
        calib = 0.0
    elif param == "delta":
        if not base.is_complex:
            raise ConfigError("a delta sweep needs the cgl equation")
        calib = "calibration"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    points = [(f"{param}={_fmt(v)}", _point_config(base, param, v)) for v in values]
    if calib == "calibration":
        points.insert(0, ("calibration", base.replace(delta=0.0, gamma=0.0)))
    results = {}
    if args.jobs > 1:
        with cf.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futs = {name: pool.submit(_sweep_point, cfg, out / name, args.phase_drift) for name, cfg in points}
            for name, fut in futs.items():
                results[name] = fut.result()
    else:
        for name, cfg in points:
            results[name] = _sweep_point(cfg, out / name, args.phase_drift)
            print(f"{name}: {results[name][1]}", file=sys.stderr, flush=True)

    rows, records = [], []
    for (name, cfg), v in zip(points[-len(values):], values):
        stack, status = results[name]
        K = len(stack.tau_stars) - 1 if stack is not None else None
        records.append({"point": name, "status": status, "K_reached": K,
                        "tau_star_K": stack.tau_stars[-1] if stack is not None and K >= 0 else None})
    summary = {"param": param, "points": records}

    if calib is not None:
        ref_name = f"beta={_fmt(0.0)}" if param == "beta" else "calibration"
        ref_stack, ref_status = results[ref_name]
        reached = [len(s.tau_stars) - 1 for s, st in results.values() if s is not None and st == "blow-up"]
        K = min(reached) if reached else 0
        summary["K"] = K
        for (name, cfg), v in zip(points[-len(values):], values):
            stack, status = results[name]
            row = [v, None, None, analysis.b_theory_for(cfg)]
            if stack is not None and status == "blow-up" and ref_status == "blow-up":
                try:
                    if param == "beta":
                        rep = analysis.estimate_b_beta(stack, ref_stack, K)
                    else:
                        rep = analysis.estimate_b_cgl(stack, ref_stack, K)
                    row[1], row[2] = rep.xi_plus_K, rep.b_estimate
                    rec = next(r for r in records if r["point"] == name)
                    rec.update(zeta_K=_finite_or_none(rep.zeta_K), zeta_limit=rep.zeta_limit,
                               settled=rep.settled, ratio_change=rep.ratio_change,
                               near_singular=rep.near_singular)
                except (analysis.InsufficientData, ValueError) as exc:
                    next(r for r in records if r["point"] == name)["b_note"] = str(exc)
            rows.append(row)
        write_csv(out / "b_sweep.csv", ["param", "xi_plus_K", "b_estimate", "b_theory"], rows)

    write_csv(out / "sweep.csv", ["param", "K_reached", "tau_star_K"],
              [(v, r["K_reached"], r["tau_star_K"]) for v, r in zip(values, records)])
    write_json(out / "sweep_summary.json", summary)
    return EXIT_BLOWUP


# --- converge ----------------------------------------------------------------------

def cmd_converge(args) -> int:
    config = load_config(args.config)
    I = args.base_I
    if I < 2:
        raise ConfigError("base I must be at least 2")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = analysis.convergence_study(config, [I, 2 * I, 4 * I])
    except (ValueError, ZeroDivisionError, analysis.InsufficientData) as exc:
        raise ConfigError(str(exc)) from exc
    write_csv(out / "converge.csv", ["I", "t_end", "E1", "E2", "order"],
              [(I, res.t_end, res.E1, res.E2, res.order)])
    print(f"order={res.order:.6g} E1={res.E1:.6g} E2={res.E2:.6g}", file=sys.stderr)
    return EXIT_BLOWUP


# --- entry ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _int_list(text: str) -> List[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> List[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bkrescale", description="Rescaling solver for 1-D blow-up problems.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--phase-drift", choices=("alpha", "lambda"), default="lambda")

    p = sub.add_parser("run", help="single rescaling run")
    common(p)
    p.add_argument("--k-profiles", type=_int_list, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="parameter sweep with b-coefficient estimates")
    common(p)
    p.add_argument("--param", required=True, choices=("beta", "delta", "I"))
    p.add_argument("--values", required=True, type=_str_list)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("converge", help="triple-grid order study before the first rescale")
    common(p)
    p.add_argument("--base-I", dest="base_I", type=int, required=True)
    p.set_defaults(func=cmd_converge)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
