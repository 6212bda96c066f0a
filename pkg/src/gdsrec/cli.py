"""Command-line runner.

Commands: prepare | train | eval | ablate | sweep | baseline | score.
Configuration comes from a ``key = value`` file (or a previous run's
manifest.json) plus repeatable ``--set key=value`` overrides. Exit codes:
0 success, 2 configuration error, 3 data error, 4 numerical divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import SWEEP_PARAMS, VARIANTS, resolve_config
from .errors import ConfigError, DataError, DivergenceError
from .runs import (Workspace, run_ablate, run_baseline, run_eval, run_score,
                   run_sweep, run_train)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value config file or a manifest.json")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override one config key (repeatable)")
    p.add_argument("--out", help="output directory (overrides out_dir)")
    p.add_argument("--seed", type=int, help="base random seed (overrides seed)")
    p.add_argument("--allow-off-grid", action="store_true",
                   help="accept hyper-parameters outside the supported grids")
    p.add_argument("--clip", action="store_true",
                   help="clip reported predictions into [1,5]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gdsrec",
        description="Train and evaluate the decentralized social recommender.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="parse inputs, cache tables and graphs")
    _add_common(p)

    p = sub.add_parser("train", help="train one configuration and evaluate it")
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint on the test split")
    _add_common(p)
    p.add_argument("--checkpoint", required=True,
                   help="checkpoint path prefix (the .bin/.json pair)")

    p = sub.add_parser("ablate", help="run one named model variant")
    _add_common(p)
    p.add_argument("--variant", required=True, choices=[v for v in VARIANTS if v != "full"])

    p = sub.add_parser("sweep", help="sweep delta, k, or alpha over its grid")
    _add_common(p)
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--repeats", type=int, help="seeds per grid value (overrides repeats)")

    p = sub.add_parser("baseline", help="train a matrix-factorization baseline")
    _add_common(p)
    p.add_argument("--model", required=True, choices=["pmf", "funksvd"])

    p = sub.add_parser("score", help="predict (user,item) pairs from a CSV")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pairs", required=True, help="CSV of user_id,item_id pairs")
    p.add_argument("--out-file", required=True, help="where to write predictions")

    return parser


def _resolve(args) -> "RunConfig":
    overrides = list(args.overrides)
    if args.out:
        overrides.append(f"out_dir={args.out}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.allow_off_grid:
        overrides.append("allow_off_grid=true")
    if args.clip:
        overrides.append("clip=true")
    if getattr(args, "repeats", None) is not None:
        overrides.append(f"repeats={args.repeats}")
    cfg = resolve_config(args.config, overrides)
    cfg.validate_grids()
    if not cfg.ratings:
        raise ConfigError("config must set 'ratings' (path to the ratings CSV)")
    return cfg


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        ws = Workspace(cfg)
        if args.command == "prepare":
            summary = ws.prepare()
            ws.write_manifest("prepare", {"summary": summary})
            print(f"prepared: {summary['n_ratings']} ratings, {summary['n_users']} users, "
                  f"{summary['n_items']} items, {summary['n_trust']} trust relations")
        elif args.command == "train":
            report = run_train(cfg, ws)
            print(f"test MAE {report.mae:.4f} RMSE {report.rmse:.4f} -> {ws.out}")
        elif args.command == "eval":
            report = run_eval(cfg, ws, args.checkpoint)
            print(f"test MAE {report.mae:.4f} RMSE {report.rmse:.4f} -> {ws.out}")
        elif args.command == "ablate":
            report = run_ablate(cfg, ws, args.variant)
            print(f"variant {args.variant}: test MAE {report.mae:.4f} "
                  f"RMSE {report.rmse:.4f} -> {ws.out}")
        elif args.command == "sweep":
            payload = run_sweep(cfg, ws, args.param)
            print(f"best {args.param} = {payload['best_value']} -> {ws.out}/sweep.csv")
        elif args.command == "baseline":
            report = run_baseline(cfg, ws, args.model)
            print(f"{args.model}: test MAE {report.mae:.4f} RMSE {report.rmse:.4f} -> {ws.out}")
        elif args.command == "score":
            n = run_score(cfg, ws, args.checkpoint, args.pairs, args.out_file)
            print(f"scored {n} pairs -> {args.out_file}")
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as e:
        print(f"divergence: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
