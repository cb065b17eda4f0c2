"""One-hidden-layer relu classifier with exact forward/backward passes.

The backward pass also yields the gradient with respect to the input,
which the adversarial perturbation step consumes. All arithmetic runs in
float64; model files store weights at 32-bit precision.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass

import numpy as np

from abexrat import backends
from abexrat.errors import DataError, DimensionError, NumericError
from abexrat.rngs import stream

MODEL_FORMAT_VERSION = 1

# Guard against absurd allocations from typo'd dimensions.
_MAX_PARAM_COUNT = 1 << 30


@dataclass
class MlpParams:
    """Classifier parameters: two affine layers around a relu."""

    w1: np.ndarray  # (h, d)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (C, h)
    b2: np.ndarray  # (C,)
    seed: int = 0

    @property
    def d(self) -> int:
        return self.w1.shape[1]

    @property
    def h(self) -> int:
        return self.w1.shape[0]

    @property
    def n_classes(self) -> int:
        return self.w2.shape[0]

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2)

    def copy(self) -> "MlpParams":
        return MlpParams(
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(), self.seed
        )


@dataclass
class ParamGrads:
    """Gradients matching MlpParams layout."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2)

    def add(self, other: "ParamGrads") -> "ParamGrads":
        """Accumulate `other` into self (fixed order keeps runs bit-stable)."""
        self.w1 += other.w1
        self.b1 += other.b1
        self.w2 += other.w2
        self.b2 += other.b2
        return self


@dataclass
class ForwardCache:
    """Intermediates of one forward pass, consumed by backward()."""

    x: np.ndarray
    z1: np.ndarray
    a1: np.ndarray
    logits: np.ndarray


def init_params(seed: int, d: int, h: int, n_classes: int) -> MlpParams:
    """He-style initialization: N(0, 2/fan_in) weights, zero biases.

    Deterministic function of (seed, d, h, n_classes) via the "init"
    random stream.
    """
    for name, dim in (("d", d), ("h", h), ("C", n_classes)):
        if not isinstance(dim, (int, np.integer)) or dim < 1:
            raise DimensionError(f"dimension {name} must be a positive integer, got {dim!r}")
    if h * d + n_classes * h > _MAX_PARAM_COUNT:
        raise DimensionError(f"dimensions overflow: d={d}, h={h}, C={n_classes}")
    gen = stream(seed, "init")
    w1 = gen.normal(0.0, math.sqrt(2.0 / d), size=(h, d))
    w2 = gen.normal(0.0, math.sqrt(2.0 / h), size=(n_classes, h))
    return MlpParams(w1, np.zeros(h), w2, np.zeros(n_classes), seed=int(seed))


def forward(params: MlpParams, x: np.ndarray) -> ForwardCache:
    """Single-sample forward pass; pure function of (params, x)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != params.d:
        raise DimensionError(f"input has shape {x.shape}, expected ({params.d},)")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite input to forward pass")
    z1, a1, logits = backends.active().forward_batch(
        params.w1, params.b1, params.w2, params.b2, np.ascontiguousarray(x[None, :])
    )
    return ForwardCache(x=x, z1=z1[0], a1=a1[0], logits=logits[0])


def backward(
    params: MlpParams, cache: ForwardCache, dlogits: np.ndarray
) -> tuple[ParamGrads, np.ndarray]:
    """Exact gradients w.r.t. every parameter and the input.

    `dlogits` is the gradient of the scalar loss w.r.t. the logits; the
    relu subgradient at exactly zero is zero.
    """
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.shape != (params.n_classes,):
        raise DimensionError(
            f"dlogits has shape {dlogits.shape}, expected ({params.n_classes},)"
        )
    dw1, db1, dw2, db2, dx = backends.active().backward_batch(
        params.w1,
        params.w2,
        np.ascontiguousarray(cache.x[None, :]),
        np.ascontiguousarray(cache.z1[None, :]),
        np.ascontiguousarray(cache.a1[None, :]),
        np.ascontiguousarray(dlogits[None, :]),
        True,
    )
    return ParamGrads(dw1, db1, dw2, db2), dx[0]


def forward_batch(params: MlpParams, X: np.ndarray) -> np.ndarray:
    """Logits for a batch (B, d) -> (B, C)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.d:
        raise DimensionError(f"batch has shape {X.shape}, expected (B, {params.d})")
    _, _, logits = backends.active().forward_batch(
        params.w1, params.b1, params.w2, params.b2, X
    )
    return logits


def predict(params: MlpParams, x: np.ndarray) -> int:
    """Argmax class; ties resolve to the lowest class index."""
    return int(np.argmax(forward(params, x).logits))


def predict_batch(params: MlpParams, X: np.ndarray) -> np.ndarray:
    return np.argmax(forward_batch(params, X), axis=1)


def stable_softmax(logits: np.ndarray) -> np.ndarray:
    """Max-shifted softmax along the last axis."""
    logits = np.asarray(logits, dtype=np.float64)
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _encode(arr: np.ndarray) -> str:
    return base64.b64encode(arr.astype("<f4").tobytes(order="C")).decode("ascii")


def _decode(text: str, shape: tuple[int, ...]) -> np.ndarray:
    raw = base64.b64decode(text.encode("ascii"))
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise DataError(f"weight blob has {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)


def save_params(params: MlpParams, path, labels: list[str] | None = None) -> None:
    """Write the model document (weights as base64 little-endian float32).

    `labels` optionally records the training label vocabulary so that
    evaluation can index classes without guessing.
    """
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "d": params.d,
        "h": params.h,
        "C": params.n_classes,
        "seed": params.seed,
        "w1": _encode(params.w1),
        "b1": _encode(params.b1),
        "w2": _encode(params.w2),
        "b2": _encode(params.b2),
    }
    if labels is not None:
        doc["labels"] = list(labels)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_params(path) -> tuple[MlpParams, list[str] | None]:
    """Read a model document; returns (params, labels-or-None)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise DataError(f"unsupported model format in {path}")
    try:
        d, h, C = int(doc["d"]), int(doc["h"]), int(doc["C"])
        params = MlpParams(
            w1=_decode(doc["w1"], (h, d)),
            b1=_decode(doc["b1"], (h,)),
            w2=_decode(doc["w2"], (C, h)),
            b2=_decode(doc["b2"], (C,)),
            seed=int(doc.get("seed", 0)),
        )
    except KeyError as exc:
        raise DataError(f"model file {path} is missing field {exc}") from exc
    labels = doc.get("labels")
    if labels is not None:
        if not isinstance(labels, list) or len(labels) != C:
            raise DataError(f"model file {path} has a malformed labels field")
        labels = [str(lab) for lab in labels]
    return params, labels
