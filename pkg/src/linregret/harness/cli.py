"""Command line entry point: ``linregret run | sweep | report``.

Exit status is 0 on success, 2 for invalid configuration and 1 for any
runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..oracle import GapUndefinedError, solve_optimal
from .config import FORMATS, ConfigError, ExperimentConfig
from .diagnostics import DegenerateTraceError, count_gap_intervals, fit_regret_models
from .export import export, load_trace
from .runner import run_experiment, sweep, tune_beta_scale

log = logging.getLogger("linregret")

EXT = {"csv": "csv", "json": "json", "svg": "svg"}


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    kw = {}
    if args.seed:
        kw["seeds"] = tuple(args.seed)
    if args.out:
        kw["out_dir"] = args.out
    if args.format:
        kw["formats"] = tuple(args.format)
    if getattr(args, "episodes", None):
        kw["K"] = args.episodes
    return cfg.with_overrides(**kw).validate() if kw else cfg


def _fit_summary(trace) -> dict:
    try:
        fit = fit_regret_models(trace)
    except (ValueError, DegenerateTraceError) as exc:
        return {"error": str(exc)}
    return {"preferred": fit.preferred, "log_r2": fit.log_r2, "sqrt_r2": fit.sqrt_r2}


def _write_traces(cfg: ExperimentConfig, traces, stem: str) -> None:
    out = Path(cfg.out_dir)
    for t in traces:
        for fmt in cfg.formats:
            export(t, fmt, out / f"{stem}_seed{t.seed}.{EXT[fmt]}")


def cmd_run(args) -> int:
    cfg = _load_config(args)
    traces = run_experiment(cfg)
    _write_traces(cfg, traces, cfg.algorithm)
    for t in traces:
        print(f"{cfg.algorithm} seed={t.seed} K={t.K} regret={t.cum_regret[-1]:.6g} "
              f"optimism_violations={int(t.optimism_violations.sum())}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if args.c_beta:
        cfg = cfg.with_overrides(sweep_c_beta=tuple(args.c_beta)).validate()
    results = sweep(cfg)
    summary = {"algorithm": cfg.algorithm, "runs": []}
    for c, traces in results.items():
        _write_traces(cfg, traces, f"{cfg.algorithm}_c{c:g}")
        for t in traces:
            summary["runs"].append({"c_beta": c, "seed": t.seed,
                                    "cum_regret": float(t.cum_regret[-1]), **_fit_summary(t)})
    summary["tuned_c_beta"] = tune_beta_scale(results)
    path = Path(cfg.out_dir) / f"{cfg.algorithm}_sweep.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, sort_keys=True, indent=2))
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


def cmd_report(args) -> int:
    for p in args.traces:
        trace = load_trace(p)
        line = {"trace": str(p), "algorithm": trace.algorithm, "seed": trace.seed,
                "K": trace.K, "cum_regret": float(trace.cum_regret[-1]),
                "optimism_violations": int(trace.optimism_violations.sum()),
                "fit": _fit_summary(trace)}
        cfg_doc = trace.extras.get("config")
        if cfg_doc is not None:
            cfg = ExperimentConfig.from_dict(cfg_doc)
            sol = solve_optimal(cfg.build_env())
            try:
                counts = count_gap_intervals(trace, sol)
                line["peeling"] = {
                    "threshold_counts": counts.threshold_counts.tolist(),
                    "first_half": counts.first_half.tolist(),
                    "second_half": counts.second_half.tolist(),
                    "saturates": counts.saturates(trace.H),
                    "within_bounds": counts.within_bounds(),
                }
            except GapUndefinedError as exc:
                line["peeling"] = {"error": str(exc)}
            # reference line for the martingale concentration term 16 H^2 tau / 3
            tau = float(np.ceil(np.log(1.0 / trace.delta)))
            line["concentration_reference"] = 16 * trace.H ** 2 * tau / 3
        print(json.dumps(line, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="linregret", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="experiment config (JSON)")
        sp.add_argument("--seed", type=int, nargs="+", help="override run seeds")
        sp.add_argument("--out", help="override output directory")
        sp.add_argument("--format", nargs="+", choices=FORMATS, help="override output formats")
        sp.add_argument("--episodes", type=int, help="override K")

    sp = sub.add_parser("run", help="run every seed of one configuration")
    common(sp)
    sp.set_defaults(func=cmd_run)
    sp = sub.add_parser("sweep", help="grid over bonus scale and seeds")
    common(sp)
    sp.add_argument("--c-beta", type=float, nargs="+", help="bonus scales to sweep")
    sp.set_defaults(func=cmd_sweep)
    sp = sub.add_parser("report", help="summarize exported JSON traces")
    sp.add_argument("traces", nargs="+")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surface any runtime failure as exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
