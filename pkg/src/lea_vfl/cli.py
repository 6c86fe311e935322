"""Command line: ``lea-vfl run|timing|validate|presets``.

Exit codes: 0 ok, 2 config error, 3 data error, 4 training diverged.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DataError, GuardError, TrainingDivergedError
from .experiment import (emit_report, list_presets, load_config, markdown_table, prepare,
                         run_experiment, run_timing_comparison)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4
EXT = {"json": "json", "csv": "csv", "md": "md"}

log = logging.getLogger("lea_vfl")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lea-vfl", description="Label enumeration attacks on simulated vertical FL.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log per-repetition progress")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one or more experiment configs")
    run.add_argument("configs", nargs="+", help="config file(s) or bundled preset name(s)")
    run.add_argument("--seed", type=int, help="base seed (repetition r uses seed + r)")
    run.add_argument("--reps", type=int, help="number of repetitions")
    run.add_argument("--workers", type=int, help="threads for the simulated-model sweep")
    run.add_argument("--out", default=".", help="output directory (default: .)")
    run.add_argument("--format", choices=sorted(EXT), default="json")

    timing = sub.add_parser("timing", help="time LEA against Binary-LEA on one config")
    timing.add_argument("config")
    timing.add_argument("--reps", type=int)
    timing.add_argument("--workers", type=int)

    val = sub.add_parser("validate", help="check a config and its data without running it")
    val.add_argument("config")

    sub.add_parser("presets", help="list bundled preset configs")
    return ap


def _overrides(args) -> dict:
    return {"seed": getattr(args, "seed", None), "repetitions": getattr(args, "reps", None),
            "workers": getattr(args, "workers", None)}


def cmd_run(args) -> int:
    cfgs = [load_config(c, **_overrides(args)) for c in args.configs]
    results = []
    for cfg in cfgs:
        def progress(r, rep, cfg=cfg):
            log.info("%s rep %d: naa=%s ca=%s asr=%s", cfg.name, r, rep.naa, rep.ca, rep.asr)
        results.append(run_experiment(cfg, progress))
    stem = cfgs[0].name if len(cfgs) == 1 else "results"
    path = emit_report(results, args.format, Path(args.out) / f"{stem}.{EXT[args.format]}")
    print(markdown_table(results), end="")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_timing(args) -> int:
    cfg = load_config(args.config, **_overrides(args))
    table = run_timing_comparison(cfg)
    for row in table["rows"]:
        print(f"{row['scheme']:<11} {row['n_simulated']:>4} models  {row['seconds']:9.4f} s  "
              f"asr {row['asr']:.3f}")
    print(f"binary_lea / lea time ratio: {table['ratio']:.3f}")
    print(json.dumps(table, sort_keys=True))
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    prep = prepare(cfg, cfg.seed)
    sizes = [p.features.shape[1] for p in prep.train_parties]
    print(f"ok: {cfg.name} [{cfg.config_hash()}] {cfg.dataset} n={cfg.n_classes} "
          f"parties={sizes} train={len(prep.train_labels)} test={len(prep.test_labels)}")
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in list_presets():
        print(name)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handler = {"run": cmd_run, "timing": cmd_timing, "validate": cmd_validate,
               "presets": cmd_presets}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print("config error:", file=sys.stderr)
        for p in exc.problems:
            print(f"  - {p}", file=sys.stderr)
        return EXIT_CONFIG
    except GuardError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
