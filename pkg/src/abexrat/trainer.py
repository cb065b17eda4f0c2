"""Training loop: seeded batching, Adam updates, best-epoch selection.

Every number a run reports is a deterministic function of (config, data,
seed). Model selection maximizes validation macro-F1, earliest epoch on
ties; there is no early stopping, learning-rate schedule or weight decay.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from abexrat import backends
from abexrat.dataset import Dataset, class_counts
from abexrat.errors import ConfigError, DataError, NumericError
from abexrat.metrics import macro_f1
from abexrat.mlp import MlpParams, ParamGrads, init_params, predict_batch
from abexrat.objective import FocalConfig, resolve_alpha
from abexrat.rat import BernoulliSchedule, RatConfig, rat_batch_loss
from abexrat.rngs import stream

HISTORY_FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden_width: int = 256
    focal: FocalConfig = field(default_factory=FocalConfig)
    rat: RatConfig = field(default_factory=RatConfig)
    enable_rat: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.hidden_width < 1:
            raise ConfigError(f"hidden_width must be >= 1, got {self.hidden_width}")
        if self.seed < 0:
            raise ConfigError(f"seed must be nonnegative, got {self.seed}")


def train_config_from_dict(doc: dict) -> TrainConfig:
    """Build a TrainConfig from a decoded config document.

    Keys mirror the dataclass fields exactly; unknown keys are an error so
    a typo'd experiment knob cannot silently fall back to a default.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a single object")
    doc = dict(doc)
    focal_doc = doc.pop("focal", {})
    rat_doc = doc.pop("rat", {})
    top_fields = {f.name for f in fields(TrainConfig)} - {"focal", "rat"}
    unknown = set(doc) - top_fields
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    for sub_name, sub_doc, known in (
        ("focal", focal_doc, {"gamma", "alpha_mode", "alpha"}),
        ("rat", rat_doc, {"p_rat", "epsilon", "schedule_seed"}),
    ):
        if not isinstance(sub_doc, dict):
            raise ConfigError(f"config key {sub_name!r} must be an object")
        bad = set(sub_doc) - known
        if bad:
            raise ConfigError(f"unknown config keys {sorted(bad)} under {sub_name!r}")
    try:
        return TrainConfig(
            focal=FocalConfig(**focal_doc), rat=RatConfig(**rat_doc), **doc
        )
    except TypeError as exc:
        raise ConfigError(f"malformed config document: {exc}") from exc


def load_train_config(path) -> TrainConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    return train_config_from_dict(doc)


@dataclass
class EpochRecord:
    epoch: int
    mean_loss_total: float
    adversarial_batch_fraction: float
    val_macro_f1: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord]
    best_epoch: int

    @property
    def best_val_macro_f1(self) -> float:
        return self.epochs[self.best_epoch - 1].val_macro_f1

    def save(self, path) -> None:
        """Line-per-epoch log plus a final summary line."""
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.epochs:
                fh.write(json.dumps(asdict(rec), sort_keys=True))
                fh.write("\n")
            fh.write(
                json.dumps(
                    {
                        "best_epoch": self.best_epoch,
                        "best_val_macro_f1": self.best_val_macro_f1,
                        "format_version": HISTORY_FORMAT_VERSION,
                    },
                    sort_keys=True,
                )
            )
            fh.write("\n")


class AdamState:
    """First/second moment buffers for every parameter array."""

    def __init__(self, params: MlpParams):
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]


def make_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Seeded permutation of range(n) cut into ceil(n/batch_size) batches."""
    if n < 1:
        raise DataError("cannot batch an empty dataset")
    perm = rng.permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def adam_step(
    params: MlpParams,
    grads: ParamGrads,
    state: AdamState,
    lr: float,
    betas: tuple[float, float],
    eps: float,
    t: int,
) -> MlpParams:
    """One bias-corrected Adam update (in place); t is 1-based."""
    if t < 1:
        raise ConfigError(f"step index must be >= 1, got {t}")
    be = backends.active()
    for g in grads.arrays():
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient; aborting run")
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        be.adam_update(p, g, m, v, float(lr), betas[0], betas[1], float(eps), int(t))
    return params


def _prepare(train: Dataset, val: Dataset, cfg: TrainConfig):
    if len(train) == 0 or len(val) == 0:
        raise DataError("train and validation splits must be nonempty")
    vocab = train.label_vocab()
    if len(vocab) < 2:
        raise DataError("training needs at least 2 classes")
    extra = set(val.label_vocab()) - set(vocab)
    if extra:
        raise DataError(f"validation labels {sorted(extra)} missing from training set")
    X_train, y_train = train.to_matrices(vocab)
    X_val, y_val = val.to_matrices(vocab)
    if X_train.shape[1] != X_val.shape[1]:
        raise DataError(
            f"embedding dimension mismatch: train {X_train.shape[1]}, "
            f"val {X_val.shape[1]}"
        )
    counts = np.asarray(
        [class_counts(train).counts[lab] for lab in vocab], dtype=np.int64
    )
    focal = resolve_alpha(cfg.focal, counts)
    return vocab, X_train, y_train, X_val, y_val, focal


def train_run(
    train: Dataset, val: Dataset, cfg: TrainConfig
) -> tuple[MlpParams, TrainHistory]:
    """Full training run; returns parameters from the best epoch."""
    vocab, X_train, y_train, X_val, y_val, focal = _prepare(train, val, cfg)
    params = init_params(cfg.seed, X_train.shape[1], cfg.hidden_width, len(vocab))
    state = AdamState(params)
    schedule = BernoulliSchedule(
        cfg.rat.p_rat,
        cfg.rat.schedule_seed if cfg.rat.schedule_seed is not None else cfg.seed,
    )
    records: list[EpochRecord] = []
    best_f1 = -1.0
    best_epoch = 0
    best_params = params.copy()
    t = 0
    for epoch in range(1, cfg.epochs + 1):
        batches = make_batches(
            len(train), cfg.batch_size, stream(cfg.seed, "shuffle", epoch)
        )
        loss_sum = 0.0
        adv_batches = 0
        for idx in batches:
            k = schedule.next() if cfg.enable_rat else 0
            record, grads = rat_batch_loss(
                params, X_train[idx], y_train[idx], focal, cfg.rat, k
            )
            t += 1
            adam_step(
                params,
                grads,
                state,
                cfg.learning_rate,
                (cfg.adam_beta1, cfg.adam_beta2),
                cfg.adam_eps,
                t,
            )
            loss_sum += record.loss_total
            adv_batches += record.k
        val_f1 = macro_f1(y_val, predict_batch(params, X_val), len(vocab))
        records.append(
            EpochRecord(
                epoch=epoch,
                mean_loss_total=loss_sum / len(batches),
                adversarial_batch_fraction=adv_batches / len(batches),
                val_macro_f1=val_f1,
            )
        )
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_epoch = epoch
            best_params = params.copy()
    return best_params, TrainHistory(records, best_epoch)
