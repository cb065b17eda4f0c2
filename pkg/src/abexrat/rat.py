"""Stochastically gated adversarial training on input embeddings.

Each batch first takes a standard focal-loss step; with probability
`p_rat` (an independent, seeded Bernoulli stream) the batch additionally
trains on inputs perturbed by epsilon along the per-sample L2-normalized
input gradient. The perturbation is treated as a constant: no gradient
flows through its construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from abexrat import backends
from abexrat.errors import ConfigError, DataError, NumericError
from abexrat.mlp import MlpParams, ParamGrads
from abexrat.objective import FocalConfig, focal_loss_batch
from abexrat.rngs import stream

# Gradients with L2 norm at or below this are treated as zero (no
# perturbation) instead of dividing by float noise.
GRAD_TOL = 1e-12


@dataclass
class RatConfig:
    """Adversarial-batch probability, perturbation size and schedule seed.

    `schedule_seed=None` derives the Bernoulli stream from the training
    seed; setting it pins the schedule independently of everything else.
    """

    p_rat: float = 0.5
    epsilon: float = 0.1
    schedule_seed: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.p_rat <= 1.0:
            raise ConfigError(f"p_rat must lie in [0, 1], got {self.p_rat}")
        if self.epsilon <= 0.0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass
class BatchLossRecord:
    """Losses of one batch; loss_total = loss_std + k * loss_adv."""

    loss_std: float
    loss_adv: float | None
    k: int
    loss_total: float


class BernoulliSchedule:
    """Seeded Bernoulli(p) stream deciding which batches go adversarial.

    Dedicated generator: consuming it never shifts any other stream, so a
    p=0 run is bit-identical to a run with the gate disabled.
    """

    def __init__(self, p: float, seed: int):
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"Bernoulli probability must lie in [0, 1], got {p}")
        self.p = float(p)
        self._gen = stream(seed, "schedule")

    def next(self) -> int:
        # random() < p is exact for p in {0, 1}: draws lie in [0, 1).
        return 1 if self._gen.random() < self.p else 0


def fgm_perturb(input_grad: np.ndarray, epsilon: float) -> np.ndarray:
    """epsilon * g / ||g||_2, or zero when ||g||_2 <= GRAD_TOL."""
    g = np.asarray(input_grad, dtype=np.float64)
    if g.ndim != 1:
        raise DataError(f"input gradient must be 1-D, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite input gradient")
    return backends.active().fgm_rows(
        np.ascontiguousarray(g[None, :]), float(epsilon), GRAD_TOL
    )[0]


def fgm_perturb_rows(input_grads: np.ndarray, epsilon: float) -> np.ndarray:
    """Per-sample FGM perturbations for a batch of input gradients."""
    g = np.ascontiguousarray(input_grads, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite input gradient")
    return backends.active().fgm_rows(g, float(epsilon), GRAD_TOL)


def rat_batch_loss(
    params: MlpParams,
    X: np.ndarray,
    y: np.ndarray,
    focal: FocalConfig,
    rat: RatConfig,
    k: int,
) -> tuple[BatchLossRecord, ParamGrads]:
    """Combined batch loss and the summed parameter gradients.

    With k=0 this is exactly one focal-loss step on the clean inputs.
    With k=1 the per-sample input gradients of the standard loss build the
    perturbed batch, whose gradients are accumulated onto the clean ones
    in fixed order.
    """
    if k not in (0, 1):
        raise ConfigError(f"k must be 0 or 1, got {k}")
    be = backends.active()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] != params.d:
        raise DataError(f"batch has shape {X.shape}, expected (B, {params.d})")

    z1, a1, logits = be.forward_batch(params.w1, params.b1, params.w2, params.b2, X)
    loss_std, dlogits = focal_loss_batch(logits, y, focal)
    dw1, db1, dw2, db2, dx = be.backward_batch(
        params.w1, params.w2, X, z1, a1, dlogits, k == 1
    )
    grads = ParamGrads(dw1, db1, dw2, db2)

    if k == 0:
        return BatchLossRecord(loss_std, None, 0, loss_std), grads

    if not np.all(np.isfinite(dx)):
        raise NumericError("non-finite input gradient in adversarial step")
    X_adv = X + be.fgm_rows(dx, float(rat.epsilon), GRAD_TOL)
    z1a, a1a, logits_adv = be.forward_batch(
        params.w1, params.b1, params.w2, params.b2, X_adv
    )
    loss_adv, dlogits_adv = focal_loss_batch(logits_adv, y, focal)
    aw1, ab1, aw2, ab2, _ = be.backward_batch(
        params.w1, params.w2, X_adv, z1a, a1a, dlogits_adv, False
    )
    grads.add(ParamGrads(aw1, ab1, aw2, ab2))
    return BatchLossRecord(loss_std, loss_adv, 1, loss_std + loss_adv), grads
