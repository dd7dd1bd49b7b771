from .network import (
    ExtractorConfig,
    LocalizerModel,
    ModelConfig,
    forward,
    load_model,
    mse_loss,
    save_model,
)
from .training import TrainConfig, TrainReport, TrainingError, train
from .assigner import RegionAssigner, predict_region_then_locate

__all__ = [
    "ExtractorConfig",
    "LocalizerModel",
    "ModelConfig",
    "forward",
    "load_model",
    "mse_loss",
    "save_model",
    "TrainConfig",
    "TrainReport",
    "TrainingError",
    "train",
    "RegionAssigner",
    "predict_region_then_locate",
]
