"""Toy U-Net segmentation model, training loop, and checkpoint format."""

from gridsal.segnet.model import UNetLite
from gridsal.segnet.checkpoint import save_checkpoint, load_checkpoint, CheckpointError
from gridsal.segnet.train import TrainConfig, TrainingDiverged, train, predict, predict_batch

__all__ = [
    "UNetLite",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
    "TrainConfig",
    "TrainingDiverged",
    "train",
    "predict",
    "predict_batch",
]
