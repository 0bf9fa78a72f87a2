"""Command-line interface.

Every subcommand is deterministic given its flags and seed (with the
deterministic flag on); machine-readable artifacts go to the output
directory, a short human summary goes to stdout. Exit codes: 0 success,
1 usage error, 2 data/validation error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from ._version import __version__
from .baselines import KalmanParams, cv_cs_forecast, lkf_forecast_window
from .core import ObservationWindow
from .data import (
    KINDS,
    SplitConfig,
    extract_windows,
    filter_short_tracks,
    load_flow_magnitudes,
    load_tracks,
    make_splits,
    motion_filter_clips,
    synth_generate,
    write_tracks,
)
from .encdec import (
    GradSample,
    TrainConfig,
    assemble_arrays,
    forecast_windows,
    grad_check_detailed,
    init_params,
    load_checkpoint,
)
from .errors import MofcastError
from .harness import (
    ExperimentSpec,
    cross_eval,
    forecasts_to_tracks,
    run_all_folds,
    run_fold,
)
from .metrics import MetricReport, aggregate, evaluate_window, write_curve_csv, write_summary_csv

logger = logging.getLogger(__name__)

GRADCHECK_TOLERANCE = 1e-4


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_io_flags(p: argparse.ArgumentParser, *, tracks: bool = True, out: bool = True):
    if tracks:
        p.add_argument("--tracks", required=True, help="track CSV file")
    if out:
        p.add_argument("--out", default="runs", help="output directory (default: runs)")


def _add_split_flags(p: argparse.ArgumentParser, required: bool = True):
    p.add_argument("--splits", required=required, help="split config JSON file")
    p.add_argument("--fold", type=int, default=0, help="fold index in 0..2 (default: 0)")
    p.add_argument("--all-folds", action="store_true", help="run folds 0..2 and average")


def _add_window_flags(p: argparse.ArgumentParser):
    p.add_argument("--stride", type=int, default=1, help="window stride (default: 1)")
    p.add_argument("--min-frames", type=int, default=90, help="minimum track length (default: 90)")


def _add_flow_flags(p: argparse.ArgumentParser):
    p.add_argument("--flow-features", help="flow-feature sidecar index CSV")
    p.add_argument(
        "--synthetic-flow",
        action="store_true",
        help="derive flow features from the windows themselves (desk-scale testing)",
    )


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--variant", default="bb_only", choices=("bb_only", "of_only", "both"))
    p.add_argument("--hidden", type=int, default=512, help="GRU hidden units (default: 512)")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=1024)
    p.add_argument("--lr", type=float, default=1e-3, help="initial learning rate (default: 1e-3)")
    p.add_argument("--beta", type=float, default=1.0, help="smooth-L1 seam in px (default: 1.0)")
    p.add_argument("--flow-dim", type=int, default=2048)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--deterministic",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="bit-reproducible training (default: on)",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="mofcast", description=__doc__)
    parser.add_argument("--version", action="version", version=f"mofcast {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic tracks")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--n", type=int, required=True, help="number of tracks")
    p.add_argument("--noise", type=float, default=0.0, help="per-frame Gaussian noise sigma in px")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--frames", type=int, help="fixed track length (default: random 120..180)")
    p.add_argument("--out", required=True, help="output track CSV file")

    p = sub.add_parser("prepare", help="filter tracks, build windows, emit stats")
    _add_io_flags(p)
    _add_window_flags(p)
    p.add_argument("--splits", help="optional split config for per-split window counts")
    p.add_argument("--fold", type=int, default=0)

    p = sub.add_parser("clip-filter", help="select low-motion clips from a flow-magnitude file")
    p.add_argument("--flow-magnitudes", required=True)
    p.add_argument("--threshold", type=float, default=1.5)
    p.add_argument("--clip-frames", type=int, default=600)
    p.add_argument("--out", default="runs")

    p = sub.add_parser("train", help="train the encoder-decoder model on one fold")
    _add_io_flags(p)
    _add_split_flags(p)
    _add_window_flags(p)
    _add_flow_flags(p)
    _add_train_flags(p)

    p = sub.add_parser("tune-lkf", help="grid-tune the Kalman filter on one fold")
    _add_io_flags(p)
    _add_split_flags(p)
    _add_window_flags(p)
    p.add_argument("--grid", help="JSON grid of KalmanParams (default: stock 27-point grid)")

    p = sub.add_parser("eval", help="evaluate a model on a track file or fold test split")
    _add_io_flags(p)
    p.add_argument("--model", required=True, choices=("cv_cs", "lkf", "encdec"))
    p.add_argument("--checkpoint", help="encdec checkpoint file")
    p.add_argument("--params", help="tuned KalmanParams JSON (for --model lkf)")
    p.add_argument("--splits", help="optional: restrict to the fold's test split")
    p.add_argument("--fold", type=int, default=0)
    _add_window_flags(p)
    _add_flow_flags(p)

    p = sub.add_parser("cross-eval", help="evaluate a frozen checkpoint on an external track file")
    _add_io_flags(p)
    p.add_argument("--checkpoint", required=True)
    _add_window_flags(p)
    _add_flow_flags(p)

    p = sub.add_parser("forecast", help="emit per-window predictions as a track-format file")
    _add_io_flags(p)
    p.add_argument("--model", required=True, choices=("cv_cs", "lkf", "encdec"))
    p.add_argument("--checkpoint")
    p.add_argument("--params")
    _add_window_flags(p)
    _add_flow_flags(p)

    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", default="bb_only", choices=("bb_only", "of_only", "both"))
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--coords", type=int, default=50, help="sampled coordinates per group")
    p.add_argument("--samples", type=int, default=3, help="number of seeded samples")
    p.add_argument("--tolerance", type=float, default=GRADCHECK_TOLERANCE)

    return parser


def _print_report(report: MetricReport, label: str) -> None:
    print(
        f"{label}: ADE {report.ade:.2f} px  FDE {report.fde:.2f} px  "
        f"AIOU {report.aiou:.3f}  FIOU {report.fiou:.3f}  ({report.n_windows} windows)"
    )


def _all_windows(args) -> list[ObservationWindow]:
    tracks = filter_short_tracks(load_tracks(args.tracks), args.min_frames)
    if getattr(args, "splits", None):
        config = SplitConfig.from_file(args.splits)
        tracks = list(make_splits(tracks, config, args.fold).test)
    windows = []
    for track in sorted(tracks, key=lambda t: t.key):
        windows.extend(extract_windows(track, stride=args.stride))
    if not windows:
        raise MofcastError(f"{args.tracks}: no windows after filtering")
    return windows


def _model_forecasts(args, windows):
    """Forecast the windows with the requested model; returns (windows, forecasts)."""
    if args.model == "cv_cs":
        return windows, [cv_cs_forecast(w) for w in windows]
    if args.model == "lkf":
        if not args.params:
            raise MofcastError("--model lkf needs --params (run tune-lkf first)")
        params = KalmanParams.from_file(args.params)
        return windows, [lkf_forecast_window(w, params) for w in windows]
    if not args.checkpoint:
        raise MofcastError("--model encdec needs --checkpoint")
    model = load_checkpoint(args.checkpoint)
    if model.config.uses_flow:
        from .data import FlowFeatureStore
        from .harness import attach_flow_features

        store = FlowFeatureStore.open(args.flow_features) if args.flow_features else None
        if store is None and not args.synthetic_flow:
            raise MofcastError(
                f"checkpoint variant {model.config.variant!r} needs --flow-features or --synthetic-flow"
            )
        windows = attach_flow_features(windows, store, args.synthetic_flow, model.config.flow_dim)
    return windows, forecast_windows(model, windows)


def _cmd_synth(args) -> int:
    tracks = synth_generate(args.kind, args.n, args.noise, args.seed, n_frames=args.frames)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_tracks(tracks, out)
    n_boxes = sum(len(t) for t in tracks)
    print(f"wrote {len(tracks)} {args.kind} tracks ({n_boxes} boxes) to {out}")
    return 0


def _cmd_prepare(args) -> int:
    all_tracks = load_tracks(args.tracks)
    kept = filter_short_tracks(all_tracks, args.min_frames)
    windows = []
    for track in sorted(kept, key=lambda t: t.key):
        windows.extend(extract_windows(track, stride=args.stride))
    stats = {
        "tracks_in": len(all_tracks),
        "tracks_kept": len(kept),
        "tracks_dropped": len(all_tracks) - len(kept),
        "windows": len(windows),
        "stride": args.stride,
        "min_frames": args.min_frames,
    }
    if args.splits:
        config = SplitConfig.from_file(args.splits)
        split = make_splits(kept, config, args.fold)
        for side, tracks in (("train", split.train), ("val", split.val), ("test", split.test)):
            n = sum(len(extract_windows(t, stride=args.stride)) for t in tracks)
            stats[f"windows_{side}"] = n
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tracks(kept, out / "filtered_tracks.csv")
    (out / "prepare_stats.json").write_text(json.dumps(stats, indent=2) + "\n", encoding="utf-8")
    print(
        f"kept {stats['tracks_kept']}/{stats['tracks_in']} tracks, "
        f"{stats['windows']} windows (stride {args.stride}); stats in {out / 'prepare_stats.json'}"
    )
    return 0


def _cmd_clip_filter(args) -> int:
    per_video = load_flow_magnitudes(args.flow_magnitudes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    total = 0
    with (out / "clips.csv").open("w", newline="", encoding="utf-8") as fh:
        fh.write("video_id,start_frame,end_frame\n")
        for video_id in sorted(per_video):
            for clip in motion_filter_clips(per_video[video_id], args.threshold, args.clip_frames):
                fh.write(f"{video_id},{clip.start_frame},{clip.end_frame}\n")
                total += 1
    print(f"selected {total} clips from {len(per_video)} videos -> {out / 'clips.csv'}")
    return 0


def _spec_from_args(args, model: str) -> ExperimentSpec:
    train_config = TrainConfig(
        learning_rate=getattr(args, "lr", 1e-3),
        batch_size=getattr(args, "batch", 1024),
        epochs=getattr(args, "epochs", 20),
        beta=getattr(args, "beta", 1.0),
        seed=getattr(args, "seed", 0),
        hidden=getattr(args, "hidden", 512),
        variant=getattr(args, "variant", "bb_only"),
        flow_dim=getattr(args, "flow_dim", 2048),
        deterministic=getattr(args, "deterministic", True),
    )
    return ExperimentSpec(
        tracks=args.tracks,
        splits=args.splits,
        fold=args.fold,
        model=model,
        out_dir=args.out,
        flow_features=getattr(args, "flow_features", None),
        synthetic_flow=getattr(args, "synthetic_flow", False),
        lkf_grid=getattr(args, "grid", None),
        stride=args.stride,
        min_track_frames=args.min_frames,
        train=train_config,
    )


def _run_spec(args, model: str) -> int:
    spec = _spec_from_args(args, model)
    if args.all_folds:
        result = run_all_folds(spec)
        for fold_result in result.per_fold:
            _print_report(fold_result.report, f"{model} fold {fold_result.fold}")
        _print_report(result.mean, f"{model} mean over folds")
    else:
        fold_result = run_fold(spec)
        _print_report(fold_result.report, f"{model} fold {spec.fold} test")
        if fold_result.checkpoint_path:
            print(f"checkpoint: {fold_result.checkpoint_path}")
        if fold_result.lkf_params:
            print(f"tuned params: {fold_result.lkf_params}")
        print(f"artifacts: {fold_result.run_dir}")
    return 0


def _cmd_eval(args) -> int:
    windows, forecasts = _model_forecasts(args, _all_windows(args))
    evals = [evaluate_window(f, w.future, metadata=w.metadata) for f, w in zip(forecasts, windows)]
    report = aggregate(evals)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_summary_csv([report], out / "summary.csv", model_id=args.model)
    write_curve_csv(report, out / "curves.csv")
    _print_report(report, args.model)
    return 0


def _cmd_cross_eval(args) -> int:
    report = cross_eval(
        args.checkpoint,
        args.tracks,
        out_dir=args.out,
        stride=args.stride,
        min_track_frames=args.min_frames,
        flow_features=args.flow_features,
        synthetic_flow=args.synthetic_flow,
    )
    _print_report(report, "cross-eval")
    return 0


def _cmd_forecast(args) -> int:
    _, forecasts = _model_forecasts(args, _all_windows(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "forecasts.csv"
    write_tracks(forecasts_to_tracks(forecasts), path)
    print(f"wrote {len(forecasts)} forecast tracks to {path}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .data import synth_generate_mixed
    from .encdec import FeatureStats, compute_feature_stats

    config = TrainConfig(hidden=args.hidden, variant=args.variant, seed=args.seed).model_config()
    worst = 0.0
    for i in range(args.samples):
        tracks = synth_generate_mixed(("turning", "accelerating"), 2, 1.0, args.seed + i, n_frames=91)
        windows = [w for t in tracks for w in extract_windows(t)]
        if config.uses_flow:
            from .encdec import synthetic_flow_feature

            windows = [
                dataclasses.replace(w, flow_feature=synthetic_flow_feature(w, config.flow_dim))
                for w in windows
            ]
        arrays = assemble_arrays(windows, config)
        stats = (
            compute_feature_stats(arrays.features) if config.uses_boxes else FeatureStats.identity()
        )
        # Random output layer: the training default (zeros) blocks gradient
        # flow upstream and would make the check vacuous.
        params = init_params(config, args.seed + i, zero_output=False)
        sample = GradSample(features=arrays.features, flow=arrays.flow, targets=arrays.targets)
        detailed = grad_check_detailed(
            params, stats, sample, epsilon=args.epsilon, coords_per_group=args.coords, seed=args.seed + i
        )
        sample_worst = max(detailed.values())
        worst = max(worst, sample_worst)
        print(f"sample {i}: max relative error {sample_worst:.3e}")
        for name in sorted(detailed):
            logger.info("  %-14s %.3e", name, detailed[name])
    print(f"max relative error over {args.samples} samples: {worst:.3e} (tolerance {args.tolerance:g})")
    if worst >= args.tolerance:
        print("gradient check FAILED", file=sys.stderr)
        return 2
    print("gradient check passed")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    handlers = {
        "synth": _cmd_synth,
        "prepare": _cmd_prepare,
        "clip-filter": _cmd_clip_filter,
        "train": lambda a: _run_spec(a, "encdec"),
        "tune-lkf": lambda a: _run_spec(a, "lkf"),
        "eval": _cmd_eval,
        "cross-eval": _cmd_cross_eval,
        "forecast": _cmd_forecast,
        "gradcheck": _cmd_gradcheck,
    }
    try:
        return handlers[args.command](args)
    except (MofcastError, ValueError, OSError) as exc:
        print(f"mofcast {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
