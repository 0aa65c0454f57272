"""Learned per-scene CRF prediction.

Pooled spatio-temporal deep features feed a small GRU regression head
with temporal hysteresis pooling; one model per target CRF.  The
output is the shared entry-CRF predictions JSON that the ladder
construction toolchain consumes.
"""
from .features import (
    BACKBONES,
    DEFAULT_BACKBONES,
    DEFAULT_T,
    BackboneSpec,
    FeatureSequence,
    build_pretrained_modules,
    center_frame_range,
    combine_features,
    combined_shape,
    downsample,
    extract_features,
    load_features,
    pool_feature_maps,
    save_features,
    synthetic_features,
)
from .losses import (
    WORST_CORRELATION_LOSS,
    LossTerms,
    plcc_loss,
    soft_rank,
    srcc_loss,
    total_loss,
)
from .model import CrfPredictor, PredictorConfig, hysteresis_pool
from .predict import (
    PREDICTIONS_FORMAT,
    PREDICTIONS_VERSION,
    TARGETS,
    clamp_crf,
    predict_scene,
    predict_scenes,
    write_predictions,
)
from .training import (
    TrainingDiverged,
    TrainResult,
    load_model,
    mean_absolute_error,
    predict_value,
    save_model,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "BACKBONES",
    "DEFAULT_BACKBONES",
    "DEFAULT_T",
    "BackboneSpec",
    "CrfPredictor",
    "FeatureSequence",
    "LossTerms",
    "PREDICTIONS_FORMAT",
    "PREDICTIONS_VERSION",
    "PredictorConfig",
    "TARGETS",
    "TrainResult",
    "TrainingDiverged",
    "WORST_CORRELATION_LOSS",
    "build_pretrained_modules",
    "center_frame_range",
    "clamp_crf",
    "combine_features",
    "combined_shape",
    "downsample",
    "extract_features",
    "hysteresis_pool",
    "load_features",
    "load_model",
    "mean_absolute_error",
    "plcc_loss",
    "pool_feature_maps",
    "predict_scene",
    "predict_scenes",
    "predict_value",
    "save_features",
    "save_model",
    "soft_rank",
    "srcc_loss",
    "synthetic_features",
    "total_loss",
    "train",
]
