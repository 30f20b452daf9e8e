"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Every command appends a line to ``<out>/manifest.jsonl`` unless ``--dry-run``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import ConfigFile, load_config
from .errors import CheckpointError, ConfigError, GapcastError
from .experiment import build_report, evaluate_region, model_label, write_report
from .imaging import encode, export_triple
from .ingest import (ColumnMapping, build_gap_series, fit_regions, load_didi, load_external,
                     parse_trips, read_external, save_external, split_train_test, weather_vocabulary)
from .model import build, load_model, make_samples, predict, save_model, train
from .series import GapSeries, WindowBlock

log = logging.getLogger("gapcast")


class UsageError(Exception):
    """Bad invocation: exit code 2."""


@dataclass
class RunManifest:
    command: str
    config_path: str | None
    dataset_digest: str
    seed: int
    tool_version: str
    started: str
    finished: str
    inputs: list[str]
    outputs: list[str]


def file_digest(paths: Sequence[str | Path]) -> str:
    h = hashlib.sha256()
    for p in sorted(str(p) for p in paths):
        h.update(Path(p).name.encode())
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def verify_manifest(entry: dict) -> bool:
    """Recompute the input digest of a manifest entry and compare."""
    return file_digest(entry["inputs"]) == entry["dataset_digest"]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _require(path: str | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"{what} is required")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _settings(args) -> ConfigFile:
    cfg = load_config(_require(args.config, "config file")) if args.config else ConfigFile()
    if args.seed is not None:
        cfg.model = cfg.model.replace(seed=args.seed)
    return cfg


def _parse_time(text: str | None) -> datetime | None:
    if text is None:
        return None
    try:
        return datetime.fromisoformat(text)
    except ValueError:
        raise UsageError(f"not an ISO-8601 time: {text!r}") from None


# -- commands ---------------------------------------------------------------------

def cmd_ingest(args, settings: ConfigFile) -> tuple[list[Path], list[Path]]:
    if bool(args.trips) == bool(args.didi):
        raise UsageError("give exactly one of --trips or --didi")
    source = _require(args.trips or args.didi, "trips file" if args.trips else "gap file")
    weather = _require(args.weather, "weather file") if args.weather else None
    inputs = [source] + ([weather] if weather else [])
    bin_width = timedelta(minutes=args.bin_minutes)
    if args.dry_run:
        if args.trips:
            ColumnMapping.from_mapping(settings.columns)
        return inputs, []

    out = Path(args.out)
    series_dir = out / "series"
    series_dir.mkdir(parents=True, exist_ok=True)
    outputs: list[Path] = []
    if args.trips:
        mapping = ColumnMapping.from_mapping(settings.columns)
        with open(source, newline="") as fh:
            parsed = parse_trips(fh, mapping)
        if not parsed.events:
            raise GapcastError("no valid trip events")
        points = [(e.latitude, e.longitude) for e in parsed.events]
        regions = fit_regions(points, args.k, settings.model.seed)
        outputs.append(regions.save(out / "regions.txt"))
        span = None
        if args.start or args.end:
            if not (args.start and args.end):
                raise UsageError("--start and --end go together")
            span = (_parse_time(args.start), _parse_time(args.end))
        series = build_gap_series(parsed.events, regions, bin_width, span)
        log.info("%d events from %d rows (%d rejected) into %d regions",
                 len(parsed.events), parsed.rows, parsed.rejected, regions.k)
    else:
        with open(source, newline="") as fh:
            series = load_didi(fh, bin_width if args.bin_minutes_given else None)
    for rid in sorted(series):
        outputs.append(series[rid].save(series_dir))
    if weather:
        first = next(iter(series.values()))
        span = (first.start_time, first.end_time)
        with open(weather, newline="") as fh:
            records = load_external(fh, first.bin_width, span, settings.holidays)
        outputs.append(save_external(records, out / "external.csv"))
    return inputs, outputs


def _window_blocks(series: GapSeries, w: int, stride: int) -> list[WindowBlock]:
    # encoding needs no next-step target, so the final window is allowed
    return [WindowBlock.from_raw(series.values[o:o + w], o) for o in range(0, len(series) - w + 1, stride)]


def cmd_encode(args, settings: ConfigFile):
    path = _require(args.series, "series file")
    cfg = settings.model
    w = args.w or cfg.w
    epsilon = args.epsilon or cfg.epsilon
    series = GapSeries.load(path)
    if len(series) < w:
        raise UsageError(f"series {path} has {len(series)} bins; window length {w} needs at least {w}")
    blocks = _window_blocks(series, w, cfg.stride)
    first = args.window
    count = len(blocks) - first if args.count is None else args.count
    if not (0 <= first < len(blocks)) or count < 1 or first + count > len(blocks):
        raise UsageError(f"windows {first}..{first + count - 1} out of range; "
                         f"{path} has windows 0..{len(blocks) - 1}")
    if args.dry_run:
        return [path], []
    out = Path(args.out) / "images"
    out.mkdir(parents=True, exist_ok=True)
    formats = ("txt", "pgm") if args.format == "both" else (args.format,)
    written = []
    for block in blocks[first:first + count]:
        triple = encode(block, epsilon, args.raw_rec or cfg.rec_on_raw)
        written += export_triple(triple, out, series.region_id, block.origin_index, formats)
    return [path], written


def _load_records(path: str | None):
    return read_external(_require(path, "external file")) if path else None


def cmd_train(args, settings: ConfigFile):
    path = _require(args.series, "series file")
    cfg = settings.model
    if args.epochs is not None:
        cfg = cfg.replace(epochs=args.epochs)
    if cfg.use_external and not args.external:
        raise UsageError("config has use_external = true but no --external file was given")
    inputs = [path] + ([Path(args.external)] if args.external else [])
    records = _load_records(args.external)
    if args.dry_run:
        return inputs, []
    series = GapSeries.load(path)
    vocab = weather_vocabulary(records) if (records and cfg.use_external) else None
    samples = make_samples(series, cfg, records, vocab)
    train_set, _ = split_train_test(samples)
    model = build(cfg, vocab)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / f"{args.name}_training_log.csv"
    try:
        train(model, train_set)
    finally:
        with open(log_path, "w") as fh:
            fh.write("epoch,loss\n")
            for i, loss in enumerate(model.training_log, start=1):
                fh.write(f"{i},{loss!r}\n")
    meta = {"region_id": series.region_id, "label": model_label(cfg)}
    manifest = save_model(model, out / args.name, meta)
    return inputs, [manifest, manifest.with_suffix(".bin"), log_path]


def cmd_predict(args, settings: ConfigFile):
    stem = Path(args.checkpoint)
    _require(str(stem.with_suffix(".json")), "checkpoint")
    path = _require(args.series, "series file")
    records = _load_records(args.external)
    if args.dry_run:
        return [path], []
    model = load_model(stem, settings.model if args.config else None)
    series = GapSeries.load(path)
    if len(series) < model.config.w:
        raise UsageError(f"series {path} has {len(series)} bins; the model needs at least {model.config.w}")
    record = None
    t = series.end_time
    if records is not None:
        record = next((r for r in records if r.bin_time == t), None)
    if model.config.use_external and record is None:
        raise GapcastError(f"no external record for bin {t.isoformat()}")
    value = predict(model, series, record)
    print(f"{series.region_id},{t.isoformat()},{value!r}")
    return [path], []


def cmd_evaluate(args, settings: ConfigFile):
    paths = [_require(p, "series file") for p in args.series]
    stems = [Path(c) for c in args.checkpoint]
    for stem in stems:
        _require(str(stem.with_suffix(".json")), "checkpoint")
    records = _load_records(args.external)
    inputs = paths + ([Path(args.external)] if args.external else [])
    if args.dry_run:
        return inputs, []
    models = {}
    for stem in stems:
        model = load_model(stem, settings.model if args.config else None)
        label = model_label(model.config)
        if label in models:
            label = f"{label}-{stem.name}"
        if model.config.use_external and records is None:
            raise UsageError(f"checkpoint {stem} needs --external data")
        models[label] = model
    results = []
    for path in paths:
        results.append(evaluate_region(GapSeries.load(path), models, records, args.ar_order))
    first = next(iter(models.values()))
    logs = {r.region_id: {label: list(m.training_log) for label, m in models.items()} for r in results}
    report = build_report(first.config, ",".join(p.stem for p in paths), file_digest(inputs), results, logs)
    out = Path(args.out)
    report_path = write_report(report, results, out, svg=args.svg)
    outputs = [report_path] + sorted((out / "curves").glob("*"))
    if args.svg:
        outputs.append(out / "rmse.svg")
    for label, value in report["rmse"].items():
        print(f"{label}\t{value:.6f}")
    return inputs, outputs


COMMANDS = {
    "ingest": cmd_ingest,
    "encode": cmd_encode,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
}


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags; SUPPRESS keeps them from resetting
    # values given before the subcommand name
    def default(value):
        return argparse.SUPPRESS if suppress else value

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=default(None),
                        help="INI config file ([gapcast], [columns], [calendar])")
    common.add_argument("--seed", type=int, default=default(None), help="overrides the config seed")
    common.add_argument("--out", default=default("."), help="output directory (default: current)")
    common.add_argument("--dry-run", action="store_true", default=default(False),
                        help="validate inputs, write nothing")
    common.add_argument("-v", "--verbose", action="store_true", default=default(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    parser = argparse.ArgumentParser(prog="gapcast", parents=[_global_flags(suppress=False)],
                                     description="Supply-demand gap forecasting from imaged time series.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="trip or gap records -> per-region series")
    p.add_argument("--trips", help="delimited trip file; columns from the [columns] config section")
    p.add_argument("--didi", help="pre-computed region,timestamp,gap file")
    p.add_argument("--weather", help="timestamp,weather_token,temperature_c file")
    p.add_argument("--k", type=int, default=17, help="number of regions (default 17)")
    p.add_argument("--bin-minutes", type=int, default=None, help="bin width in minutes (default 10)")
    p.add_argument("--start", help="ISO start of the binning span")
    p.add_argument("--end", help="ISO end (exclusive) of the binning span")

    p = sub.add_parser("encode", parents=[common], help="write GASF/GADF/REC images of windows")
    p.add_argument("--series", required=True)
    p.add_argument("--w", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--window", type=int, default=0, help="first window index")
    p.add_argument("--count", type=int, help="number of windows (default: all remaining)")
    p.add_argument("--format", choices=("txt", "pgm", "both"), default="txt")
    p.add_argument("--raw-rec", action="store_true", help="recurrence plot on unscaled values")

    p = sub.add_parser("train", parents=[common], help="train on the first 85%% of windows")
    p.add_argument("--series", required=True)
    p.add_argument("--external")
    p.add_argument("--epochs", type=int)
    p.add_argument("--name", default="model", help="checkpoint stem (default: model)")

    p = sub.add_parser("predict", parents=[common], help="forecast the bin after the series")
    p.add_argument("--checkpoint", required=True, help="checkpoint stem or .json path")
    p.add_argument("--series", required=True)
    p.add_argument("--external")

    p = sub.add_parser("evaluate", parents=[common], help="test-split RMSE against baselines")
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--series", action="append", required=True)
    p.add_argument("--external")
    p.add_argument("--ar-order", type=int)
    p.add_argument("--svg", action="store_true", help="also emit SVG charts")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "ingest":
        args.bin_minutes_given = args.bin_minutes is not None
        if args.bin_minutes is None:
            args.bin_minutes = 10
    started = _now()
    try:
        settings = _settings(args)
        inputs, outputs = COMMANDS[args.command](args, settings)
    except (UsageError, ConfigError, CheckpointError) as exc:
        print(f"gapcast {args.command}: {exc}", file=sys.stderr)
        return 2
    except (GapcastError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"gapcast {args.command}: {msg}", file=sys.stderr)
        return 1
    if not args.dry_run:
        entry = RunManifest(args.command, args.config, file_digest(inputs), settings.model.seed,
                            __version__, started, _now(), [str(p) for p in inputs],
                            [str(p) for p in outputs])
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "manifest.jsonl", "a") as fh:
            fh.write(json.dumps(entry.__dict__, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
