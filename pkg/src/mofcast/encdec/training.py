"""Mini-batch training with an adaptive-moment optimizer and a halving
learning-rate schedule.

Targets are the residuals of the ground-truth boxes relative to the CV-CS
extrapolation, in raw pixels; encoder inputs are standardized with stats
computed on the training windows only. Because the output layer starts at
zero, epoch 0 (the untrained model) scores exactly like the CV-CS baseline,
and it participates in best-epoch selection: training can only be accepted
if it beats that.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..baselines import cv_cs_extrapolate
from ..core import ObservationWindow
from ..errors import FlowFeatureError, TrainingDivergedError
from .features import FeatureStats, box_features, compute_feature_stats
from .model import Model, ModelConfig, ModelParams, forward_batch, init_params, loss_and_gradients


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    lr_halving_epochs: int = 5
    batch_size: int = 1024
    epochs: int = 20
    beta: float = 1.0  # smooth-L1 seam, in pixels
    seed: int = 0
    hidden: int = 512
    variant: str = "bb_only"
    flow_dim: int = 2048
    fc_activation: bool = True
    deterministic: bool = True

    def __post_init__(self):
        for name in ("learning_rate", "beta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"TrainConfig.{name} must be > 0")
        for name in ("lr_halving_epochs", "batch_size", "epochs", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"TrainConfig.{name} must be >= 1")

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            variant=self.variant,  # type: ignore[arg-type]
            hidden=self.hidden,
            flow_dim=self.flow_dim,
            fc_activation=self.fc_activation,
        )

    def lr_at_epoch(self, epoch: int) -> float:
        """Learning rate for a 1-indexed epoch: halved every ``lr_halving_epochs``."""
        return self.learning_rate * 0.5 ** ((epoch - 1) // self.lr_halving_epochs)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    learning_rate: float
    train_loss: float
    val_ade: float


@dataclass
class TrainLog:
    initial_val_ade: float
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0  # 0 means the untrained model was never beaten

    def rows(self) -> list[dict]:
        out = [{"epoch": 0, "learning_rate": 0.0, "train_loss": math.nan, "val_ade": self.initial_val_ade}]
        out += [
            {"epoch": r.epoch, "learning_rate": r.learning_rate, "train_loss": r.train_loss, "val_ade": r.val_ade}
            for r in self.epochs
        ]
        return out


@dataclass(frozen=True)
class TrainResult:
    model: Model
    log: TrainLog


class Adam:
    """Adaptive-moment estimation with the standard defaults."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in tensors.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class WindowArrays:
    """Vectorized view of a window list: features, flow, CV base, targets, truth."""

    features: np.ndarray | None  # (N, p, 8)
    flow: np.ndarray | None      # (N, F)
    base: np.ndarray             # (N, q, 4) CV-CS extrapolation
    gt: np.ndarray               # (N, q, 4)

    @property
    def targets(self) -> np.ndarray:
        return self.gt - self.base

    def __len__(self) -> int:
        return self.base.shape[0]


def assemble_arrays(windows: Sequence[ObservationWindow], config: ModelConfig) -> WindowArrays:
    if not windows:
        raise ValueError("window list is empty")
    horizon = windows[0].horizon
    for w in windows:
        if w.horizon != horizon:
            raise ValueError("all windows must share one horizon")
    features = np.stack([box_features(w) for w in windows]) if config.uses_boxes else None
    flow = None
    if config.uses_flow:
        missing = [w.source for w in windows if w.flow_feature is None]
        if missing:
            raise FlowFeatureError(
                f"{len(missing)} windows lack flow features (variant {config.variant!r}), e.g. {missing[0]}"
            )
        flow = np.stack([w.flow_feature for w in windows])
    base = np.stack([cv_cs_extrapolate(w) for w in windows])
    gt = np.stack([w.future_array() for w in windows])
    return WindowArrays(features=features, flow=flow, base=base, gt=gt)


def _validation_ade(params: ModelParams, stats: FeatureStats, arrays: WindowArrays, batch_size: int) -> float:
    n = len(arrays)
    err_sum = 0.0
    for lo in range(0, n, batch_size):
        sl = slice(lo, min(lo + batch_size, n))
        feats = None if arrays.features is None else arrays.features[sl]
        flow = None if arrays.flow is None else arrays.flow[sl]
        cache = forward_batch(params, stats, feats, flow, horizon=arrays.base.shape[1])
        pred = arrays.base[sl] + cache.residuals
        delta = pred[:, :, :2] - arrays.gt[sl][:, :, :2]
        err_sum += float(np.sqrt((delta**2).sum(axis=2)).sum())
    return err_sum / (n * arrays.base.shape[1])


@contextlib.contextmanager
def _single_threaded_blas():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        yield
        return
    with threadpool_limits(limits=1):
        yield


def train(
    train_windows: Sequence[ObservationWindow],
    val_windows: Sequence[ObservationWindow],
    config: TrainConfig,
) -> TrainResult:
    """Train end to end; returns the parameters of the best-validation epoch.

    Deterministic for a fixed config and seed: parameter init and batch order
    come from independent seeded streams, and the deterministic flag pins
    BLAS to one thread so repeated runs produce bit-identical checkpoints.
    """
    if not train_windows:
        raise ValueError("training set is empty")
    if not val_windows:
        raise ValueError("validation set is empty")

    model_config = config.model_config()
    ss = np.random.SeedSequence(config.seed)
    init_rng, shuffle_rng = (np.random.default_rng(s) for s in ss.spawn(2))

    train_arrays = assemble_arrays(train_windows, model_config)
    val_arrays = assemble_arrays(val_windows, model_config)
    stats = (
        compute_feature_stats(train_arrays.features)
        if model_config.uses_boxes
        else FeatureStats.identity()
    )
    targets = train_arrays.targets

    ctx = _single_threaded_blas() if config.deterministic else contextlib.nullcontext()
    with ctx:
        params = init_params(model_config, init_rng)
        optimizer = Adam()

        initial_val_ade = _validation_ade(params, stats, val_arrays, config.batch_size)
        log = TrainLog(initial_val_ade=initial_val_ade)
        best_params = params.copy()
        best_ade = initial_val_ade

        n = len(train_arrays)
        for epoch in range(1, config.epochs + 1):
            lr = config.lr_at_epoch(epoch)
            order = shuffle_rng.permutation(n)
            loss_sum = 0.0
            for lo in range(0, n, config.batch_size):
                idx = order[lo : lo + config.batch_size]
                feats = None if train_arrays.features is None else train_arrays.features[idx]
                flow = None if train_arrays.flow is None else train_arrays.flow[idx]
                loss, grads = loss_and_gradients(
                    params, stats, feats, flow, targets[idx], beta=config.beta
                )
                if not math.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}", log=log
                    )
                optimizer.step(params.tensors(), grads, lr)
                loss_sum += loss * idx.size
            val_ade = _validation_ade(params, stats, val_arrays, config.batch_size)
            log.epochs.append(
                EpochRecord(epoch=epoch, learning_rate=lr, train_loss=loss_sum / n, val_ade=val_ade)
            )
            if val_ade < best_ade:
                best_ade = val_ade
                best_params = params.copy()
                log.best_epoch = epoch

    return TrainResult(model=Model(params=best_params, stats=stats), log=log)
