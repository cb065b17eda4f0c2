"""Seeded generator of imbalanced, embedding-like classification data.

Desk-scale stand-in for real report corpora: class means are scaled
random unit vectors, samples are noisy copies renormalized to the unit
sphere. The default profile mirrors a seven-category long tail where
minority classes are learnable but undersampled, so augmentation and
robust-training effects are observable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from abexrat.dataset import AugmentationPlan, Dataset, Sample
from abexrat.errors import DataError, NumericError
from abexrat.rngs import stream

# Default benchmark profile: a seven-class long tail whose minority
# classes are learnable but undersampled. The dimension concentrates
# random class means to near-equal spacing, so every seed lands in the
# regime where rebalancing and robust training visibly matter.
DEFAULT_CLASS_COUNTS = (1000, 500, 250, 120, 60, 30, 15)
DEFAULT_DIM = 64
DEFAULT_SEPARATION = 1.0
DEFAULT_NOISE = 0.3
DEFAULT_JITTER_SIGMA = 0.05


@dataclass
class SynthSpec:
    class_counts: tuple[int, ...] = DEFAULT_CLASS_COUNTS
    dim: int = DEFAULT_DIM
    separation: float = DEFAULT_SEPARATION
    noise: float = DEFAULT_NOISE
    seed: int = 0

    def __post_init__(self):
        self.class_counts = tuple(int(c) for c in self.class_counts)
        if len(self.class_counts) < 2:
            raise DataError("need at least 2 classes")
        if any(c < 3 for c in self.class_counts):
            raise DataError("every class needs >= 3 samples (stratification)")
        if self.dim < 1:
            raise DataError(f"dim must be >= 1, got {self.dim}")
        if self.separation <= 0 or self.noise <= 0:
            raise DataError("separation and noise must be > 0")


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise NumericError("degenerate zero vector while normalizing")
    return m / norms


def generate_synthetic(spec: SynthSpec) -> Dataset:
    """Deterministic dataset with exactly the requested per-class counts."""
    gen = stream(spec.seed, "synth")
    n_classes = len(spec.class_counts)
    means = spec.separation * _unit_rows(gen.standard_normal((n_classes, spec.dim)))
    samples: list[Sample] = []
    for c, count in enumerate(spec.class_counts):
        label = f"class_{c}"
        points = _unit_rows(
            means[c] + spec.noise * gen.standard_normal((count, spec.dim))
        )
        for i in range(count):
            samples.append(
                Sample(id=f"{label}-{i:05d}", label=label, embedding=points[i])
            )
    return Dataset(samples)


def jitter_augment(
    train: Dataset,
    plan: AugmentationPlan,
    sigma: float = DEFAULT_JITTER_SIGMA,
    seed: int = 0,
) -> Dataset:
    """Embedding-space pseudo-augmentation: jittered, renormalized copies.

    Follows the same count/label/lineage contract as provider-backed text
    augmentation, for datasets that carry embeddings instead of text.
    """
    if sigma <= 0:
        raise DataError(f"jitter sigma must be > 0, got {sigma}")
    ids = {s.id for s in train}
    planned = set(plan.per_sample)
    if planned != ids:
        raise DataError("plan does not match dataset (sample ids differ)")
    gen = stream(seed, "synth")
    originals = list(train)
    synthetic: list[Sample] = []
    for s in originals:
        copies = plan.per_sample[s.id]
        if copies == 0:
            continue
        if s.embedding is None:
            raise DataError(f"sample {s.id!r} has no embedding to jitter")
        base = s.embedding.astype(np.float64)
        noise = gen.standard_normal((copies, base.shape[0]))
        points = _unit_rows(base + sigma * noise)
        for i in range(copies):
            synthetic.append(
                Sample(
                    id=f"{s.id}-aug-{i}",
                    label=s.label,
                    embedding=points[i],
                    origin="synthetic",
                    parent_id=s.id,
                )
            )
    return Dataset(originals + synthetic, split=train.split)
