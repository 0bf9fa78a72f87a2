"""End-to-end experiment driver.

One fold = build inter-city splits, train or tune the requested model,
evaluate on the held-out test windows, and write all artifacts (summary and
curve CSVs, metadata breakdowns, checkpoint or tuned parameters, run
manifest) into a run directory named by spec hash + timestamp. Three-fold
runs additionally emit the unweighted mean report. Saved checkpoints can be
evaluated on external track files without any parameter update, which a
weight checksum asserts.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._version import __version__
from .baselines import (
    KalmanParams,
    cv_cs_forecast,
    default_param_grid,
    lkf_forecast_window,
    lkf_tune,
    load_param_grid,
    save_param_grid,
)
from .core import Forecast, METADATA_FIELDS, ObservationWindow, Track
from .data import (
    FlowFeatureStore,
    SplitConfig,
    extract_windows,
    filter_short_tracks,
    load_tracks,
    make_splits,
)
from .encdec import (
    Model,
    TrainConfig,
    TrainLog,
    forecast_windows,
    load_checkpoint,
    save_checkpoint,
    synthetic_flow_feature,
    train,
)
from .errors import FlowFeatureError, MofcastError
from .metrics import (
    MetricReport,
    WindowEvaluation,
    aggregate,
    breakdown,
    evaluate_window,
    write_curve_csv,
    write_summary_csv,
)

logger = logging.getLogger(__name__)

MODEL_KINDS = ("cv_cs", "lkf", "encdec")
N_FOLDS = 3


@dataclass(frozen=True)
class ExperimentSpec:
    tracks: str
    splits: str
    fold: int
    model: str
    out_dir: str
    flow_features: str | None = None
    synthetic_flow: bool = False
    lkf_grid: str | None = None
    stride: int = 1
    min_track_frames: int = 90
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"unknown model {self.model!r}, expected one of {MODEL_KINDS}")
        if self.fold not in range(N_FOLDS):
            raise ValueError(f"fold must be in 0..{N_FOLDS - 1}, got {self.fold}")

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(dataclasses.asdict(self), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentSpec":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        train_raw = raw.pop("train", {})
        return cls(train=TrainConfig(**train_raw), **raw)

    def hash(self) -> str:
        payload = json.dumps(dataclasses.asdict(self), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


@dataclass
class FoldResult:
    report: MetricReport
    run_dir: Path
    fold: int
    checkpoint_path: Path | None = None
    train_log: TrainLog | None = None
    lkf_params: KalmanParams | None = None
    evaluations: list[WindowEvaluation] = field(default_factory=list)


def _make_run_dir(base: Path, spec_hash: str) -> Path:
    base.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    candidate = base / f"run-{spec_hash[:10]}-{stamp}"
    suffix = 0
    while candidate.exists():
        suffix += 1
        candidate = base / f"run-{spec_hash[:10]}-{stamp}-{suffix}"
    candidate.mkdir()
    return candidate


def _write_manifest(run_dir: Path, spec: ExperimentSpec, wall_clock: float) -> None:
    manifest = {
        "spec_hash": spec.hash(),
        "seed": spec.train.seed,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "wall_clock_seconds": round(wall_clock, 3),
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def attach_flow_features(
    windows: list[ObservationWindow],
    store: FlowFeatureStore | None,
    synthetic: bool,
    flow_dim: int,
) -> list[ObservationWindow]:
    if store is None and not synthetic:
        return windows
    out = []
    for w in windows:
        if store is not None:
            vec = store.get(w.source)
        else:
            vec = synthetic_flow_feature(w, dim=flow_dim)
        out.append(dataclasses.replace(w, flow_feature=vec))
    return out


def _windows_for(tracks: Sequence[Track], stride: int) -> list[ObservationWindow]:
    windows: list[ObservationWindow] = []
    for track in sorted(tracks, key=lambda t: t.key):
        windows.extend(extract_windows(track, stride=stride))
    return windows


def _audit_cities(split, fold: int) -> None:
    overlap = split.train_cities & split.holdout_cities
    if overlap:
        raise MofcastError(f"city audit failed for fold {fold}: {sorted(overlap)} on both sides")
    logger.info(
        "fold %d city audit: train=%s holdout=%s (disjoint)",
        fold,
        sorted(split.train_cities),
        sorted(split.holdout_cities),
    )


def _write_reports(
    run_dir: Path,
    model_id: str,
    report: MetricReport,
    evals: list[WindowEvaluation],
) -> None:
    write_summary_csv([report], run_dir / "summary.csv", model_id=model_id)
    write_curve_csv(report, run_dir / "curves.csv")
    for fld in METADATA_FIELDS:
        if all(ev.metadata and fld in ev.metadata for ev in evals):
            write_summary_csv(breakdown(evals, fld), run_dir / f"breakdown_{fld}.csv", model_id=model_id)


def _write_train_log(log: TrainLog, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "learning_rate", "train_loss", "val_ade"])
        for row in log.rows():
            writer.writerow([row["epoch"], row["learning_rate"], row["train_loss"], row["val_ade"]])
        writer.writerow(["best_epoch", log.best_epoch, "", ""])


def weights_checksum(model: Model) -> str:
    digest = hashlib.sha256()
    digest.update(model.stats.mean.tobytes())
    digest.update(model.stats.std.tobytes())
    for name, tensor in model.params.tensors().items():
        digest.update(name.encode("utf-8"))
        digest.update(np.ascontiguousarray(tensor).tobytes())
    return digest.hexdigest()


def run_fold(spec: ExperimentSpec) -> FoldResult:
    """Train/tune on one fold's train+val cities, evaluate on the held-out test windows."""
    started = time.perf_counter()
    run_dir = _make_run_dir(Path(spec.out_dir), spec.hash())
    spec.to_file(run_dir / "spec.json")

    try:
        tracks = filter_short_tracks(load_tracks(spec.tracks), spec.min_track_frames)
        split_config = SplitConfig.from_file(spec.splits)
        split = make_splits(tracks, split_config, spec.fold)
        _audit_cities(split, spec.fold)

        train_windows = _windows_for(split.train, spec.stride)
        val_windows = _windows_for(split.val, spec.stride)
        test_windows = _windows_for(split.test, spec.stride)
        logger.info(
            "fold %d windows: train=%d val=%d test=%d",
            spec.fold, len(train_windows), len(val_windows), len(test_windows),
        )
        if not test_windows:
            raise MofcastError(f"fold {spec.fold}: no test windows after filtering")

        checkpoint_path = None
        train_log = None
        lkf_params = None

        if spec.model == "cv_cs":
            forecasts = [cv_cs_forecast(w) for w in test_windows]
        elif spec.model == "lkf":
            grid = load_param_grid(spec.lkf_grid) if spec.lkf_grid else default_param_grid()
            save_param_grid(grid, run_dir / "lkf_grid.json")
            if not val_windows:
                raise MofcastError(f"fold {spec.fold}: no validation windows to tune the LKF on")
            tuned = lkf_tune(val_windows, grid)
            tuned.params.to_file(run_dir / "lkf_params.json")
            with (run_dir / "lkf_grid_table.csv").open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["process_noise_pos", "process_noise_vel", "observation_noise",
                                 "initial_velocity_variance", "val_ade"])
                for params, ade in tuned.table:
                    writer.writerow([params.process_noise_pos, params.process_noise_vel,
                                     params.observation_noise, params.initial_velocity_variance,
                                     f"{ade:.6f}"])
            lkf_params = tuned.params
            forecasts = [lkf_forecast_window(w, tuned.params) for w in test_windows]
        else:  # encdec
            model_config = spec.train.model_config()
            store = FlowFeatureStore.open(spec.flow_features) if spec.flow_features else None
            if model_config.uses_flow:
                if store is None and not spec.synthetic_flow:
                    raise FlowFeatureError(
                        f"variant {model_config.variant!r} needs --flow-features or synthetic flow"
                    )
                train_windows = attach_flow_features(train_windows, store, spec.synthetic_flow, model_config.flow_dim)
                val_windows = attach_flow_features(val_windows, store, spec.synthetic_flow, model_config.flow_dim)
                test_windows = attach_flow_features(test_windows, store, spec.synthetic_flow, model_config.flow_dim)
            trained = train(train_windows, val_windows, spec.train)
            train_log = trained.log
            _write_train_log(trained.log, run_dir / "train_log.csv")
            checkpoint_path = run_dir / "checkpoint.mofc"
            save_checkpoint(trained.model, checkpoint_path)
            forecasts = forecast_windows(trained.model, test_windows)

        evals = [
            evaluate_window(f, w.future, metadata=w.metadata)
            for f, w in zip(forecasts, test_windows)
        ]
        report = aggregate(evals)
        _write_reports(run_dir, spec.model, report, evals)
        return FoldResult(
            report=report,
            run_dir=run_dir,
            fold=spec.fold,
            checkpoint_path=checkpoint_path,
            train_log=train_log,
            lkf_params=lkf_params,
            evaluations=evals,
        )
    finally:
        _write_manifest(run_dir, spec, time.perf_counter() - started)


@dataclass
class AllFoldsResult:
    per_fold: list[FoldResult]
    mean: MetricReport


def mean_report(reports: Sequence[MetricReport]) -> MetricReport:
    """Unweighted arithmetic mean of reports, metric by metric."""
    if not reports:
        raise ValueError("no reports to average")
    disp = np.mean([r.displacement_curve for r in reports], axis=0)
    ious = np.mean([r.iou_curve for r in reports], axis=0)
    return MetricReport(
        ade=float(np.mean([r.ade for r in reports])),
        fde=float(np.mean([r.fde for r in reports])),
        aiou=float(np.mean([r.aiou for r in reports])),
        fiou=float(np.mean([r.fiou for r in reports])),
        displacement_curve=disp,
        iou_curve=ious,
        n_windows=int(sum(r.n_windows for r in reports)),
        group_key="mean-of-folds",
    )


def run_all_folds(spec: ExperimentSpec) -> AllFoldsResult:
    """Run folds 0..2 with the same spec; any fold failure aborts, keeping
    the completed folds' artifacts on disk."""
    per_fold = []
    for fold in range(N_FOLDS):
        per_fold.append(run_fold(dataclasses.replace(spec, fold=fold)))
    mean = mean_report([r.report for r in per_fold])
    write_summary_csv(
        [r.report for r in per_fold] + [mean],
        Path(spec.out_dir) / "folds_summary.csv",
        model_id=spec.model,
    )
    return AllFoldsResult(per_fold=per_fold, mean=mean)


def cross_eval(
    checkpoint: str | Path,
    tracks_path: str | Path,
    out_dir: str | Path | None = None,
    stride: int = 1,
    min_track_frames: int = 90,
    flow_features: str | Path | None = None,
    synthetic_flow: bool = False,
    batch_size: int = 512,
) -> MetricReport:
    """Evaluate a frozen checkpoint on an external track file.

    No parameter update can occur; a before/after checksum of the weights
    asserts it.
    """
    model = load_checkpoint(checkpoint)
    checksum_before = weights_checksum(model)

    tracks = filter_short_tracks(load_tracks(tracks_path), min_track_frames)
    windows = _windows_for(tracks, stride)
    if not windows:
        raise MofcastError(f"{tracks_path}: no windows after filtering")
    if model.config.uses_flow:
        store = FlowFeatureStore.open(flow_features) if flow_features else None
        if store is None and not synthetic_flow:
            raise FlowFeatureError(
                f"checkpoint variant {model.config.variant!r} needs flow features absent in the "
                "external data; re-evaluate with a bb_only checkpoint or provide --flow-features"
            )
        windows = attach_flow_features(windows, store, synthetic_flow, model.config.flow_dim)

    forecasts = forecast_windows(model, windows, batch_size=batch_size)
    evals = [evaluate_window(f, w.future, metadata=w.metadata) for f, w in zip(forecasts, windows)]
    report = aggregate(evals)

    checksum_after = weights_checksum(model)
    if checksum_before != checksum_after:
        raise MofcastError("cross_eval mutated the checkpoint weights (checksum mismatch)")

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_reports(out, "encdec", report, evals)
    return report


def forecasts_to_tracks(forecasts: Sequence[Forecast]) -> list[Track]:
    """Re-express forecasts in the track file format for overlay plotting.

    Each forecast becomes one track starting at anchor_frame + 1; track ids
    are renumbered sequentially so (video_id, track_id) stays unique even
    when several windows of one source track are forecast.
    """
    return [
        Track(
            video_id=f.source.video_id,
            track_id=i,
            start_frame=f.source.anchor_frame + 1,
            boxes=f.boxes,
            metadata=None,
        )
        for i, f in enumerate(forecasts)
    ]
