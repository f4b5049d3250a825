"""Command-line harness.

Subcommands: ``run``, ``sweep``, ``needle-grid`` and ``oracle-check``.
Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 a failed
oracle check.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from .errors import ConfigurationError, QueryCacheError
from .harness.checks import run_oracle_checks
from .harness.config import RunConfig, load_config, parse_config
from .harness.experiment import (DEFAULT_DEPTHS, DEFAULT_LENGTHS, SWEEP_PARAMETERS, PolicySpec,
                                 needle_grid, run_experiment, sweep)
from .harness.report import emit_report, emit_table, write_json
from .model import build_toy_model

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK_FAILED = 0, 1, 2, 3

# flag -> engine field
ENGINE_FLAGS = {
    "block_size": "block_size",
    "num_blocks": "num_blocks",
    "num_repr": "num_repr",
    "local_window": "local_window",
    "chunk_size": "chunk_size",
    "hot_capacity": "hot_capacity",
}


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file with model/engine/policy/workload sections")
    p.add_argument("--beta", type=float)
    p.add_argument("--block-size", type=int)
    p.add_argument("--num-blocks", type=int)
    p.add_argument("--num-repr", type=int)
    p.add_argument("--local-window", type=int)
    p.add_argument("--chunk-size", type=int)
    p.add_argument("--hot-capacity", type=int)
    p.add_argument("--policy", choices=["qllm", "current-only", "local-only"])
    p.add_argument("--seed", type=int, help="workload seed")
    p.add_argument("--context-length", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--out-dir", default="querycache-out")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="querycache", description="Query-aware block memory on a seeded toy transformer.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one workload under one policy")
    _add_common(run)
    run.add_argument("--needle-depth", type=float)
    run.add_argument("--alignment", type=float)

    sw = sub.add_parser("sweep", help="sweep one engine parameter")
    _add_common(sw)
    sw.add_argument("--param", required=True, choices=SWEEP_PARAMETERS)
    sw.add_argument("--values", required=True,
                    help="comma-separated values; LBxNB pairs for block_size_x_num_blocks")

    grid = sub.add_parser("needle-grid", help="recall over context length x needle depth")
    _add_common(grid)
    grid.add_argument("--lengths", default=",".join(map(str, DEFAULT_LENGTHS)))
    grid.add_argument("--depths", default=",".join(map(str, DEFAULT_DEPTHS)))
    grid.add_argument("--alignment", type=float)

    oc = sub.add_parser("oracle-check", help="compare the mechanism against slow oracles")
    oc.add_argument("--seed", type=int, default=0)
    oc.add_argument("--prompts", type=int, default=50)
    oc.add_argument("--instances", type=int, default=1000)
    oc.add_argument("--traces", type=int, default=100)
    oc.add_argument("--out-dir", default="querycache-out")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config file first, then command-line overrides."""
    raw = load_config(args.config) if args.config else {}
    cfg = parse_config(raw)
    engine_changes = {field: getattr(args, flag) for flag, field in ENGINE_FLAGS.items()
                      if getattr(args, flag) is not None}
    if args.beta is not None:
        engine_changes["beta"] = args.beta
    if engine_changes.get("num_blocks", 0) > cfg.engine.hot_capacity and args.hot_capacity is None:
        engine_changes["hot_capacity"] = engine_changes["num_blocks"]
    engine = cfg.engine.with_(**engine_changes) if engine_changes else cfg.engine
    policy = cfg.policy
    if args.policy is not None or args.beta is not None:
        policy = PolicySpec(args.policy or policy.name,
                            args.beta if args.beta is not None else policy.beta)
    wl = {}
    for flag, field in (("seed", "seed"), ("context_length", "context_length"),
                        ("repetitions", "repetitions"), ("needle_depth", "needle_depth"),
                        ("alignment", "needle_alignment")):
        value = getattr(args, flag, None)
        if value is not None:
            wl[field] = value
    workload = replace(cfg.workload, **wl) if wl else cfg.workload
    return RunConfig(cfg.model, engine, policy, workload)


def _parse_values(param: str, text: str) -> list:
    out = []
    for item in filter(None, (t.strip() for t in text.split(","))):
        try:
            if param == "block_size_x_num_blocks":
                a, b = item.lower().split("x")
                out.append((int(a), int(b)))
            elif param == "beta":
                out.append(float(item))
            else:
                out.append(int(item))
        except ValueError:
            raise ConfigurationError(f"bad value {item!r} for --param {param}") from None
    return out


def _fmt(recall) -> str:
    return "n/a" if recall is None else f"{recall:.4f}"


def _cmd_run(args) -> int:
    cfg = resolve_config(args)
    model = build_toy_model(cfg.model)
    report = run_experiment(cfg.workload, cfg.policy, cfg.engine, model)
    emit_report(report, args.out_dir)
    recall = report.mean_recall
    print(f"policy={cfg.policy.name} beta={cfg.policy.to_dict()['beta']:g} "
          f"repetitions={len(report.repetitions)} mean_recall={_fmt(recall)} out={args.out_dir}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    values = _parse_values(args.param, args.values)
    model = build_toy_model(cfg.model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = sweep(args.param, values, cfg.engine, cfg.workload, model, cfg.policy)
    emit_table([r.to_dict() for r in rows], args.out_dir, "sweep", {"config": cfg.to_dict()})
    for r in rows:
        shown = "skipped: " + r.warning if r.skipped else f"mean_recall={_fmt(r.mean_recall)}"
        print(f"{args.param}={r.value} {shown}")
    return EXIT_OK


def _cmd_grid(args) -> int:
    cfg = resolve_config(args)
    try:
        lengths = [int(v) for v in args.lengths.split(",") if v.strip()]
        depths = [float(v) for v in args.depths.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad grid axis: {exc}") from None
    model = build_toy_model(cfg.model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = needle_grid(lengths, depths, cfg.workload, cfg.policy, cfg.engine, model)
    emit_table(rows, args.out_dir, "needle_grid", {"config": cfg.to_dict()})
    for r in rows:
        shown = "skipped" if r["skipped"] else _fmt(r["mean_recall"])
        print(f"length={r['context_length']} depth={r['needle_depth']:g} recall={shown}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    for name in ("prompts", "instances", "traces"):
        if getattr(args, name) < 1:
            raise ConfigurationError(f"--{name} must be >= 1")
    results = run_oracle_checks(args.seed, prompts=args.prompts, instances=args.instances,
                                traces=args.traces)
    passed = all(r.passed for r in results)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "oracle_check.json", {"seed": args.seed, "passed": passed,
                                           "checks": [r.to_dict() for r in results]})
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} cases={r.cases} {r.detail}")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "needle-grid": _cmd_grid,
            "oracle-check": _cmd_oracle}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QueryCacheError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
