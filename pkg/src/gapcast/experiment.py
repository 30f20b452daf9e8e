"""End-to-end runs: train both model modes, score them and the baselines, write the report."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .baselines import ar_predict, fit_ar, persistence_at, rmse
from .config import ForecastConfig
from .ingest import TRAIN_FRACTION, ExternalRecord, Vocabulary, split_train_test, weather_vocabulary
from .model import GapForecaster, build, make_samples, train
from .plots import bar_chart, line_chart
from .series import GapSeries

log = logging.getLogger(__name__)

BASELINE_MODE = "gapcast-baseline"
MAIN_MODE = "gapcast-main"
PERSISTENCE = "persistence"


def model_label(config: ForecastConfig) -> str:
    label = MAIN_MODE if config.use_external else BASELINE_MODE
    return label if config.use_residual else label + "-plain"


@dataclass
class Dataset:
    series: dict[str, GapSeries]
    external: list[ExternalRecord] | None = None
    name: str = "dataset"

    def digest(self) -> str:
        h = hashlib.sha256()
        for rid in sorted(self.series):
            h.update(rid.encode())
            h.update(self.series[rid].to_csv_string().encode())
        for r in self.external or ():
            h.update(f"{r.bin_time.isoformat()},{r.day_type},{r.weather},{r.temperature!r}\n".encode())
        return h.hexdigest()


@dataclass
class RegionResult:
    region_id: str
    timestamps: list[str]
    actual: np.ndarray
    target_indices: np.ndarray
    predictions: dict[str, np.ndarray] = field(default_factory=dict)
    split: dict = field(default_factory=dict)


def split_region(series: GapSeries, config: ForecastConfig, external=None,
                 weather_vocab: Vocabulary | None = None):
    samples = make_samples(series, config, external, weather_vocab)
    train_set, test_set = split_train_test(samples)
    split = {
        "n_train": len(train_set),
        "n_test": len(test_set),
        "max_train_target_index": max(s.target_index for s in train_set),
        "min_test_target_index": min(s.target_index for s in test_set),
    }
    return train_set, test_set, split


def evaluate_region(series: GapSeries, models: Mapping[str, GapForecaster],
                    external=None, ar_order: int | None = None) -> RegionResult:
    """Score trained models plus persistence and AR(p) on the same chronological test split."""
    result = None
    for label, model in models.items():
        _, test_set, split = split_region(series, model.config, external, model.weather_vocab)
        idx = np.array([s.target_index for s in test_set])
        if result is None:
            result = RegionResult(series.region_id, [series.time_at(i).isoformat() for i in idx],
                                  series.values[idx].copy(), idx, split=split)
        elif split != result.split:
            raise ValueError(f"model {label} uses a different split than the others")
        result.predictions[label] = model.predict_samples(test_set)
    if result is None:
        raise ValueError("evaluate_region needs at least one model")
    idx = result.target_indices
    result.predictions[PERSISTENCE] = persistence_at(series, idx)
    p = ar_order or next(iter(models.values())).config.w
    train_end = result.split["min_test_target_index"]
    if train_end > p + 1:
        intercept, coefs = fit_ar(series.values[:train_end], p)
        result.predictions[f"ar{p}"] = ar_predict(series, intercept, coefs, idx)
    return result


def _region_models(config: ForecastConfig, series: GapSeries, external, weather_vocab,
                   ablation: bool) -> dict[str, GapForecaster]:
    variants = [config.replace(use_external=False)]
    if ablation:
        variants.append(config.replace(use_external=False, use_residual=False))
    if external:
        variants.append(config.replace(use_external=True))
    models = {}
    for cfg in variants:
        train_set, _, _ = split_region(series, cfg, external, weather_vocab)
        model = build(cfg, weather_vocab if cfg.use_external else None)
        log.info("training %s on region %s (%d samples)", model_label(cfg), series.region_id, len(train_set))
        models[model_label(cfg)] = train(model, train_set)
    return models


def build_report(config: ForecastConfig, dataset_name: str, digest: str,
                 results: Sequence[RegionResult], training_logs: Mapping[str, Mapping[str, list]],
                 status: str = "complete", error: str | None = None) -> dict:
    pooled: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {}
    for r in results:
        for label, pred in r.predictions.items():
            pooled.setdefault(label, []).append((r.actual, pred))
    table = {label: rmse(np.concatenate([a for a, _ in pairs]), np.concatenate([p for _, p in pairs]))
             for label, pairs in pooled.items()}
    report = {
        "tool_version": __version__,
        "dataset": dataset_name,
        "dataset_digest": digest,
        "seed": config.seed,
        "config": config.to_dict(),
        "train_fraction": TRAIN_FRACTION,
        "status": status,
        "rmse": table,
        "regions": {r.region_id: {"split": r.split,
                                  "rmse": {k: rmse(r.actual, p) for k, p in r.predictions.items()}}
                    for r in results},
        "training_log": training_logs,
    }
    if error:
        report["error"] = error
    return report


def write_report(report: dict, results: Sequence[RegionResult], out_dir: str | Path,
                 svg: bool = False) -> Path:
    """``report.json`` plus ``curves/<region>_<model>.csv`` (timestamp,actual,predicted)."""
    out = Path(out_dir)
    curves = out / "curves"
    curves.mkdir(parents=True, exist_ok=True)
    for r in results:
        for label, pred in r.predictions.items():
            with open(curves / f"{r.region_id}_{label}.csv", "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["timestamp", "actual", "predicted"])
                for t, a, p in zip(r.timestamps, r.actual, pred):
                    writer.writerow([t, repr(float(a)), repr(float(p))])
        if svg:
            (curves / f"{r.region_id}.svg").write_text(
                line_chart({"actual": r.actual, **r.predictions}, f"Region {r.region_id}: actual vs prediction"))
    if svg and report.get("rmse"):
        (out / "rmse.svg").write_text(bar_chart(report["rmse"], "Test RMSE by model"))
    path = out / "report.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return path


def run_experiment(config: ForecastConfig, dataset: Dataset, out_dir: str | Path | None = None,
                   ar_order: int | None = None, ablation: bool = False, svg: bool = False) -> dict:
    """Train baseline-mode (and, with external data, main-mode) models per region and score them.

    Persistence and AR baselines use the identical chronological split. With
    ``out_dir`` the report is written there, including partial results if a
    region fails.
    """
    weather_vocab = weather_vocabulary(dataset.external) if dataset.external else None
    results: list[RegionResult] = []
    logs: dict[str, dict[str, list]] = {}
    digest = dataset.digest()
    try:
        for rid in sorted(dataset.series):
            series = dataset.series[rid]
            models = _region_models(config, series, dataset.external, weather_vocab, ablation)
            logs[rid] = {label: list(m.training_log) for label, m in models.items()}
            results.append(evaluate_region(series, models, dataset.external, ar_order))
    except Exception as exc:
        if out_dir is not None:
            partial = build_report(config, dataset.name, digest, results, logs, "failed", repr(exc))
            write_report(partial, results, out_dir, svg)
        raise
    report = build_report(config, dataset.name, digest, results, logs)
    if out_dir is not None:
        write_report(report, results, out_dir, svg)
    return report
