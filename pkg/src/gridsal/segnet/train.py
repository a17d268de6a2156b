"""Training loop: cross entropy + RMSProp with a two-stage learning rate.

The desk-scale default (15 epochs, batch 32, 1e-3 dropping to 1e-4 for the
last fifth) trains one width-16 net in minutes on a single core; the
original full-scale schedule (50 epochs, batch 100, drop after epoch 40)
is reachable by overriding the fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from gridsal.diffcore import RMSProp, Tensor, cross_entropy
from gridsal.segnet.model import UNetLite


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 15
    batch_size: int = 32
    lr: float = 1e-3
    lr_final: float = 1e-4
    lr_switch: float = 0.8  # fraction of epochs after which lr_final applies
    seed: int = 0
    width: int = 16
    growth: float = 1.5
    dataset_path: str = ""
    miou_floor: float = 0.55

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0 or self.lr_final <= 0:
            raise ValueError("learning rates must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def train(images: np.ndarray, labels: np.ndarray, config: TrainConfig,
          log=None) -> tuple[UNetLite, list[float]]:
    """Train a fresh UNetLite on (M, 64, 64) images / integer labels.

    Returns the model and per-epoch mean losses. Raises TrainingDiverged on
    a non-finite loss.
    """
    if len(images) == 0:
        raise ValueError("empty training set")
    if labels.max() >= 11:
        raise ValueError("labels must be < 11")
    model = UNetLite(width=config.width, growth=config.growth, seed=config.seed)
    model.set_trainable(True)
    opt = RMSProp(model.params, lr=config.lr)
    rng = np.random.default_rng(config.seed)
    switch_epoch = math.ceil(config.epochs * config.lr_switch)

    m = len(images)
    history: list[float] = []
    for epoch in range(config.epochs):
        opt.lr = config.lr if epoch < switch_epoch else config.lr_final
        order = rng.permutation(m)
        total, batches = 0.0, 0
        for start in range(0, m, config.batch_size):
            idx = order[start : start + config.batch_size]
            x = Tensor(images[idx][:, None].astype(np.float32))
            y = labels[idx].astype(np.int64)
            probs = model.forward(x)
            loss = cross_entropy(probs, y)
            val = loss.item()
            if not np.isfinite(val):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} step {batches} (lr={opt.lr})"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += val
            batches += 1
        history.append(total / batches)
        if log is not None:
            log(f"epoch {epoch + 1}/{config.epochs}: loss {history[-1]:.4f}")
    return model, history


def predict(model: UNetLite, image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dense prediction for one image.

    Accepts (64, 64), (1, 64, 64) or (1, 1, 64, 64); returns the softmax map
    (n_classes, H, W) and the argmax label map (H, W). Ties resolve to the
    lowest class id.
    """
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None, None]
    elif arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[0] != 1:
        raise ValueError("predict expects a single image")
    probs = _forward_inference(model, arr)[0]
    return probs, probs.argmax(axis=0).astype(np.uint8)


def predict_batch(model: UNetLite, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Softmax maps for (M, 64, 64) images, batched for throughput."""
    out = []
    for start in range(0, len(images), batch_size):
        chunk = images[start : start + batch_size].astype(np.float32)[:, None]
        out.append(_forward_inference(model, chunk))
    return np.concatenate(out, axis=0)


def _forward_inference(model: UNetLite, arr: np.ndarray) -> np.ndarray:
    was_trainable = next(iter(model.params.values())).requires_grad
    if was_trainable:
        model.set_trainable(False)
    try:
        return model.forward(Tensor(arr)).data
    finally:
        if was_trainable:
            model.set_trainable(True)
