"""Focal loss with class-balancing weights.

The loss for a sample of class y with ground-truth probability p_y is
``-alpha[y] * (1 - p_y)**gamma * log(p_y)``; gamma focuses training on
hard examples and alpha reweights classes. The batch reduction is the
mean, so the learning rate stays comparable across batch sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from abexrat import backends
from abexrat.errors import ConfigError, DataError

ALPHA_MODES = ("uniform", "inverse_frequency", "explicit")

# Floor applied to p_t inside the log; prevents -inf on saturated softmax.
PT_FLOOR = 1e-12


@dataclass
class FocalConfig:
    """Focusing parameter and per-class weights.

    `alpha` is the resolved weight vector; for mode "inverse_frequency"
    it is computed from training-split class counts via resolve_alpha().
    """

    gamma: float = 3.0
    alpha_mode: str = "inverse_frequency"
    alpha: np.ndarray | None = None

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if self.alpha_mode not in ALPHA_MODES:
            raise ConfigError(
                f"alpha_mode must be one of {ALPHA_MODES}, got {self.alpha_mode!r}"
            )
        if self.alpha is not None:
            self.alpha = np.asarray(self.alpha, dtype=np.float64)
            if self.alpha.ndim != 1 or not np.all(self.alpha > 0):
                raise ConfigError("alpha must be a 1-D vector of positive weights")
        if self.alpha_mode == "explicit" and self.alpha is None:
            raise ConfigError("alpha_mode 'explicit' requires an alpha vector")


def class_alpha_weights(counts: np.ndarray, mode: str) -> np.ndarray:
    """Per-class weights from training counts.

    uniform: all ones. inverse_frequency: N / (C * N_c), rescaled to mean
    1 so it reweights classes without changing the effective learning
    rate on balanced data.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if counts.ndim != 1 or counts.size == 0:
        raise DataError("counts must be a nonempty 1-D vector")
    if np.any(counts <= 0):
        raise DataError("every class must have at least one sample")
    if mode == "uniform":
        return np.ones(counts.size, dtype=np.float64)
    if mode == "inverse_frequency":
        n, c = counts.sum(), counts.size
        alpha = n / (c * counts.astype(np.float64))
        return alpha / alpha.mean()
    raise ConfigError(f"cannot derive weights from counts for mode {mode!r}")


def resolve_alpha(cfg: FocalConfig, counts: np.ndarray) -> FocalConfig:
    """Return a config whose alpha vector is concrete for these counts."""
    if cfg.alpha_mode == "explicit":
        if cfg.alpha.size != np.asarray(counts).size:
            raise ConfigError(
                f"explicit alpha has {cfg.alpha.size} entries for "
                f"{np.asarray(counts).size} classes"
            )
        return cfg
    return replace(cfg, alpha=class_alpha_weights(counts, cfg.alpha_mode))


def focal_loss_batch(
    logits: np.ndarray, labels: np.ndarray, cfg: FocalConfig
) -> tuple[float, np.ndarray]:
    """Mean focal loss and its exact gradient w.r.t. the logits."""
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.ndim != 1 or logits.shape[0] != labels.shape[0]:
        raise DataError(
            f"inconsistent shapes: logits {logits.shape}, labels {labels.shape}"
        )
    if logits.shape[0] == 0:
        raise DataError("empty batch")
    n_classes = logits.shape[1]
    if labels.min() < 0 or labels.max() >= n_classes:
        raise DataError(f"labels must lie in [0, {n_classes})")
    alpha = cfg.alpha
    if alpha is None:
        if cfg.alpha_mode == "uniform":
            alpha = np.ones(n_classes, dtype=np.float64)
        else:
            raise ConfigError(
                f"alpha_mode {cfg.alpha_mode!r} requires a resolved alpha vector"
            )
    if alpha.shape[0] != n_classes:
        raise DataError(f"alpha has {alpha.shape[0]} entries for {n_classes} classes")
    loss, dlogits = backends.active().focal_grad_batch(
        logits, labels, np.ascontiguousarray(alpha), float(cfg.gamma), PT_FLOOR
    )
    return loss, dlogits
