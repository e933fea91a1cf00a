"""Command-line entry point: ``searchcast <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline as P
from .exceptions import ConfigError, SearchcastError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _global_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="pipeline configuration (JSON)")
    p.add_argument("--out", type=Path, help="output directory (overrides paths.out_dir)")
    p.add_argument("--jobs", type=int, help="worker threads for model fitting")
    p.add_argument("--seed", type=int, help="random seed (synthetic data)")
    p.add_argument("--clamp-nonneg", action="store_true", help="clamp forecasts at zero")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="searchcast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "synth": "write a synthetic world (three input CSVs plus config.json)",
        "ingest-check": "load and validate the input files",
        "preprocess": "prune and filter the query panel; writes query_activity.csv",
        "select-features": "choose query lags; writes lag_table.csv",
        "forecast": "run the full backtest and write every report",
        "evaluate": "score a forecasts.csv against the truth feed",
        "report": "print the summary table of a finished run",
    }
    for name, text in specs.items():
        p = sub.add_parser(name, help=text, description=text)
        _global_flags(p)
        if name == "synth":
            p.add_argument("--weeks", type=int, help="number of weeks to simulate")
            p.add_argument("--snr", type=float, help="signal-to-noise ratio of signal queries")
        if name == "evaluate":
            p.add_argument("--forecasts", type=Path, help="forecast CSV (default: <out>/forecasts.csv)")
    return parser


def _load_config(args) -> P.PipelineConfig:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    cfg = P.PipelineConfig.from_json(args.config)
    return cfg.with_overrides(out_dir=args.out, jobs=args.jobs, seed=args.seed,
                              clamp_nonneg=args.clamp_nonneg)


def cmd_synth(args) -> int:
    from .synth import SynthConfig, generate, write_world

    if args.out is None:
        raise ConfigError("synth needs --out")
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.weeks is not None:
        kw["n_weeks"] = args.weeks
    if args.snr is not None:
        kw["snr"] = args.snr
    world = generate(SynthConfig(**kw))
    paths = write_world(world, args.out)
    if args.clamp_nonneg or args.jobs:
        cfg_path = paths["config"]
        data = json.loads(cfg_path.read_text(encoding="utf-8"))
        if args.clamp_nonneg:
            data["clamp_nonneg"] = True
        if args.jobs:
            data["jobs"] = args.jobs
        cfg_path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(paths)} files to {args.out}")
    return EXIT_OK


def cmd_ingest_check(args) -> int:
    cfg = _load_config(args)
    data = P.load_inputs(cfg)
    feed, truth, q = data.input_feed, data.truth_feed, data.queries
    print(f"input feed: {len(feed.dates)} days {feed.dates[0].date()}..{feed.dates[-1].date()}, "
          f"{len(feed.geos)} geos")
    print(f"truth feed: {len(truth.dates)} days {truth.dates[0].date()}..{truth.dates[-1].date()}")
    print(f"query panel: {len(q.queries)} queries, {len(q.dates)} days")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = _load_config(args)
    path = P.write_query_activity(cfg, P.load_inputs(cfg, need_truth=False))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_select_features(args) -> int:
    cfg = _load_config(args)
    path = P.write_lag_table(cfg, P.load_inputs(cfg, need_truth=False))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_forecast(args) -> int:
    cfg = _load_config(args)
    paths = P.run_backtest(cfg)
    print(f"wrote {len(paths)} files to {cfg.out_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    paths = P.evaluate_forecasts(cfg, args.forecasts)
    print(f"wrote {len(paths)} files to {cfg.out_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    import pandas as pd

    cfg = _load_config(args)
    path = cfg.out_dir / "scores_summary.csv"
    if not path.is_file():
        raise FileNotFoundError(f"scores summary not found: {path}")
    summary = pd.read_csv(path)
    with pd.option_context("display.width", 120, "display.max_rows", 200):
        print(summary.to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    sel = cfg.out_dir / "ensemble_selection.csv"
    if sel.is_file():
        print()
        print(pd.read_csv(sel).to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "ingest-check": cmd_ingest_check,
    "preprocess": cmd_preprocess,
    "select-features": cmd_select_features,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except P.StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except SearchcastError as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
