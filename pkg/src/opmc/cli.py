"""Command-line entry point: ``opmc run|validate|presets``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ALL_FAILED = 2


def _load(args) -> bench.ExperimentConfig:
    cfg = bench.load_config(args.config)
    return bench.apply_overrides(
        cfg,
        seed=getattr(args, "seed", None),
        replications=getattr(args, "replications", None),
        workers=getattr(args, "workers", None),
    )


def cmd_run(args) -> int:
    try:
        cfg = _load(args)
    except bench.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out_dir = Path(args.out_dir) if args.out_dir else bench.default_out_dir(cfg)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: --out-dir: cannot create {out_dir} ({exc.strerror})", file=sys.stderr)
        return EXIT_INVALID

    results = bench.run_experiment(cfg)
    written = bench.write_outputs(cfg, results, out_dir)
    failed = sum(r.status != "ok" for r in results)
    print(f"{cfg.name}: {len(results) - failed}/{len(results)} runs completed")
    for row in bench.summarize(cfg, results):
        if row["runs"] == 0:
            print(f"  {row['method']:<14} all {row['failed']} runs failed")
            continue
        print(
            f"  {row['method']:<14} {row['quantity']:<14} rel_mse={row['rel_mse']:.4g} "
            f"mse={row['mse']:.4g} median_se={row['median_se']:.4g}"
        )
    for kind, path in written.items():
        print(f"  wrote {kind}: {path}")
    return EXIT_ALL_FAILED if failed == len(results) else EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = _load(args)
    except bench.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"{cfg.name}: valid ({cfg.experiment}, {len(cfg.methods)} methods, R = {cfg.replications})")
    print("target evaluations per run:")
    for name, budget in bench.budgets(cfg).items():
        parts = ", ".join(f"{k}={v}" for k, v in budget.items())
        print(f"  {name}: {parts}")
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in bench.list_presets():
        if args.json:
            print(json.dumps({name: bench.preset(name)}))
        else:
            print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="opmc", description="Population Monte Carlo benchmark harness.")
    p.add_argument("-v", "--verbose", action="store_true", help="log sampler warnings")
    sub = p.add_subparsers(dest="command", required=True)

    def overrides(sp):
        sp.add_argument("config", help="path to a JSON config, or a preset name")
        sp.add_argument("--seed", type=int, help="override base_seed")
        sp.add_argument("--replications", type=int, help="override replications")
        sp.add_argument("--workers", type=int, help="override worker count")

    run = sub.add_parser("run", help="execute an experiment and write result files")
    overrides(run)
    run.add_argument("--out-dir", help=f"output directory (default ${bench.OUT_DIR_ENV}/<name> or results/<name>)")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a config and print the per-run budget")
    overrides(val)
    val.set_defaults(func=cmd_validate)

    pre = sub.add_parser("presets", help="list built-in presets")
    pre.add_argument("--json", action="store_true", help="print each preset's full config")
    pre.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
