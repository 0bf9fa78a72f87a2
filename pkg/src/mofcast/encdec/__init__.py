"""Recurrent encoder-decoder forecaster: features, model, training, checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .features import (
    FEATURE_DIM,
    FeatureStats,
    box_features,
    compute_feature_stats,
    destandardize,
    standardize,
    synthetic_flow_feature,
)
from .gradcheck import GradSample, grad_check, grad_check_detailed
from .gru import GRUParams, gru_backward, gru_cell, gru_forward
from .loss import smooth_l1, smooth_l1_grad
from .model import (
    BOX_CODE_DIM,
    ENCDEC_MODEL_ID,
    Model,
    ModelConfig,
    ModelParams,
    VARIANTS,
    backward_batch,
    decode,
    encode,
    forecast_windows,
    forward_batch,
    init_params,
    loss_and_gradients,
    residuals_to_boxes,
)
from .training import Adam, EpochRecord, TrainConfig, TrainLog, TrainResult, assemble_arrays, train

__all__ = [
    "Adam",
    "BOX_CODE_DIM",
    "ENCDEC_MODEL_ID",
    "EpochRecord",
    "FEATURE_DIM",
    "FeatureStats",
    "GRUParams",
    "GradSample",
    "Model",
    "ModelConfig",
    "ModelParams",
    "TrainConfig",
    "TrainLog",
    "TrainResult",
    "VARIANTS",
    "assemble_arrays",
    "backward_batch",
    "box_features",
    "compute_feature_stats",
    "decode",
    "destandardize",
    "encode",
    "forecast_windows",
    "forward_batch",
    "grad_check",
    "grad_check_detailed",
    "gru_backward",
    "gru_cell",
    "gru_forward",
    "init_params",
    "load_checkpoint",
    "loss_and_gradients",
    "residuals_to_boxes",
    "save_checkpoint",
    "smooth_l1",
    "smooth_l1_grad",
    "standardize",
    "synthetic_flow_feature",
    "train",
]
