"""Labeled-sample model, dataset files, splits and augmentation budgets.

Dataset files are line-delimited JSON, one record per line. Embedding
components are serialized as the shortest decimal that round-trips at
32-bit precision, so save/load is bit-exact for float32 vectors. Records
written by `split` carry a "split" tag that downstream commands use to
refuse augmenting validation or test data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from abexrat.errors import DataError
from abexrat.rngs import stream

ORIGINS = ("original", "synthetic")
SPLIT_TAGS = ("train", "val", "test")

_RECORD_FIELDS = {
    "id",
    "label",
    "text",
    "abstract",
    "embedding",
    "origin",
    "parent_id",
    "split",
}

# Largest-remainder ties go to val, then test, then train.
_SPLIT_PRIORITY = {"train": 2, "val": 0, "test": 1}


@dataclass(eq=False)
class Sample:
    """One labeled record, optionally carrying an embedding and lineage."""

    id: str
    label: str
    text: str | None = None
    abstract: str | None = None
    embedding: np.ndarray | None = None
    origin: str = "original"
    parent_id: str | None = None


class Dataset:
    """Immutable-by-convention collection of samples plus a split tag."""

    def __init__(self, samples: list[Sample], split: str | None = None):
        if split is not None and split not in SPLIT_TAGS:
            raise DataError(f"unknown split tag {split!r}")
        self.samples = list(samples)
        self.split = split
        self._validate()

    def _validate(self):
        seen: set[str] = set()
        ids = None
        dim = None
        for s in self.samples:
            if s.id in seen:
                raise DataError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)
            if s.origin not in ORIGINS:
                raise DataError(f"sample {s.id!r}: unknown origin {s.origin!r}")
            if s.origin == "synthetic":
                if s.parent_id is None:
                    raise DataError(f"synthetic sample {s.id!r} has no parent_id")
                if ids is None:
                    ids = {t.id for t in self.samples}
                if s.parent_id not in ids:
                    raise DataError(
                        f"synthetic sample {s.id!r}: parent {s.parent_id!r} not in dataset"
                    )
            if s.embedding is not None:
                if s.embedding.ndim != 1:
                    raise DataError(f"sample {s.id!r}: embedding must be 1-D")
                if dim is None:
                    dim = s.embedding.shape[0]
                elif s.embedding.shape[0] != dim:
                    raise DataError(
                        f"sample {s.id!r}: embedding dimension {s.embedding.shape[0]} "
                        f"!= {dim}"
                    )

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i: int) -> Sample:
        return self.samples[i]

    @property
    def dim(self) -> int | None:
        for s in self.samples:
            if s.embedding is not None:
                return s.embedding.shape[0]
        return None

    def label_vocab(self) -> list[str]:
        """Canonical class order: lexicographic over distinct labels."""
        return sorted({s.label for s in self.samples})

    def to_matrices(self, vocab: list[str]) -> tuple[np.ndarray, np.ndarray]:
        """(X float64, y int64) with labels indexed against `vocab`."""
        index = {lab: i for i, lab in enumerate(vocab)}
        X = np.empty((len(self.samples), self.dim or 0), dtype=np.float64)
        y = np.empty(len(self.samples), dtype=np.int64)
        for i, s in enumerate(self.samples):
            if s.embedding is None:
                raise DataError(f"sample {s.id!r} has no embedding")
            if s.label not in index:
                raise DataError(f"sample {s.id!r}: label {s.label!r} not in vocabulary")
            X[i] = s.embedding
            y[i] = index[s.label]
        return np.ascontiguousarray(X), y


@dataclass
class ClassStats:
    """Per-label counts in canonical (lexicographic) order."""

    counts: dict[str, int]
    n_total: int
    n_classes: int


@dataclass
class AugmentationPlan:
    """Synthetic-generation budget: class totals and per-sample counts."""

    multiplier: float
    per_class: dict[str, int]
    per_sample: dict[str, int]

    def save(self, path) -> None:
        doc = {
            "format_version": 1,
            "multiplier": self.multiplier,
            "per_class": self.per_class,
            "per_sample": self.per_sample,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(path) -> "AugmentationPlan":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read plan file {path}: {exc}") from exc
        try:
            return AugmentationPlan(
                multiplier=float(doc["multiplier"]),
                per_class={str(k): int(v) for k, v in doc["per_class"].items()},
                per_sample={str(k): int(v) for k, v in doc["per_sample"].items()},
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise DataError(f"malformed plan file {path}: {exc}") from exc


def class_counts(ds: Dataset) -> ClassStats:
    """Exact per-label counts, labels sorted lexicographically."""
    counts: dict[str, int] = {}
    for s in ds:
        counts[s.label] = counts.get(s.label, 0) + 1
    ordered = {lab: counts[lab] for lab in sorted(counts)}
    return ClassStats(ordered, n_total=len(ds), n_classes=len(ordered))


def _apportion(n: int, ratios: tuple[int, int, int]) -> tuple[int, int, int]:
    """Largest-remainder split counts for one class (exact integer math)."""
    total = sum(ratios)
    names = ("train", "val", "test")
    floors = {nm: (n * r) // total for nm, r in zip(names, ratios)}
    remainders = {nm: (n * r) % total for nm, r in zip(names, ratios)}
    leftover = n - sum(floors.values())
    order = sorted(names, key=lambda nm: (-remainders[nm], _SPLIT_PRIORITY[nm]))
    for nm in order[:leftover]:
        floors[nm] += 1
    return floors["train"], floors["val"], floors["test"]


def stratified_split(
    ds: Dataset, ratios: tuple[int, int, int] = (8, 1, 1), seed: int = 0
) -> tuple[Dataset, Dataset, Dataset]:
    """Per-class seeded shuffle + largest-remainder 8:1:1 apportionment.

    Every class needs at least 3 samples. The three outputs are disjoint,
    cover the dataset, and carry split tags.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise DataError(f"invalid split ratios {ratios!r}")
    by_label: dict[str, list[int]] = {}
    for i, s in enumerate(ds):
        by_label.setdefault(s.label, []).append(i)
    gen = stream(seed, "split")
    assigned: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    for label in sorted(by_label):
        idxs = by_label[label]
        if len(idxs) < 3:
            raise DataError(
                f"class {label!r} has only {len(idxs)} samples; need >= 3 to stratify"
            )
        perm = gen.permutation(len(idxs))
        shuffled = [idxs[j] for j in perm]
        n_tr, n_va, n_te = _apportion(len(idxs), ratios)
        assigned["train"].extend(shuffled[:n_tr])
        assigned["val"].extend(shuffled[n_tr : n_tr + n_va])
        assigned["test"].extend(shuffled[n_tr + n_va :])
    out = []
    for tag in ("train", "val", "test"):
        picked = sorted(assigned[tag])
        out.append(Dataset([ds[i] for i in picked], split=tag))
    return tuple(out)


def augmentation_plan(stats: ClassStats, multiplier: float = 1.0) -> AugmentationPlan:
    """Class-inverse budget: lift every class to round(m * max count).

    Per-sample counts within a class differ by at most one; samples in
    lexicographic id order receive the extras first.
    """
    if stats.n_classes == 0:
        raise DataError("cannot plan augmentation for an empty dataset")
    if multiplier <= 0:
        raise DataError(f"multiplier must be > 0, got {multiplier}")
    target = math.floor(multiplier * max(stats.counts.values()) + 0.5)
    per_class = {
        label: max(0, target - n_c) for label, n_c in stats.counts.items()
    }
    return AugmentationPlan(
        multiplier=float(multiplier), per_class=per_class, per_sample={}
    )


def plan_for_dataset(ds: Dataset, multiplier: float = 1.0) -> AugmentationPlan:
    """Augmentation plan with per-sample counts filled in for `ds`."""
    stats = class_counts(ds)
    plan = augmentation_plan(stats, multiplier)
    by_label: dict[str, list[str]] = {}
    for s in ds:
        by_label.setdefault(s.label, []).append(s.id)
    per_sample: dict[str, int] = {}
    for label, ids in by_label.items():
        total = plan.per_class[label]
        n_c = len(ids)
        base, extra = divmod(total, n_c)
        for rank, sid in enumerate(sorted(ids)):
            per_sample[sid] = base + (1 if rank < extra else 0)
    plan.per_sample = per_sample
    return plan


def _float32_repr(value: np.float32) -> str:
    """Shortest decimal string that round-trips the float32 exactly."""
    return str(value)


def _sample_to_line(s: Sample, split: str | None) -> str:
    parts = [f'"id":{json.dumps(s.id, ensure_ascii=False)}']
    parts.append(f'"label":{json.dumps(s.label, ensure_ascii=False)}')
    if s.text is not None:
        parts.append(f'"text":{json.dumps(s.text, ensure_ascii=False)}')
    if s.abstract is not None:
        parts.append(f'"abstract":{json.dumps(s.abstract, ensure_ascii=False)}')
    if s.embedding is not None:
        emb = s.embedding.astype(np.float32)
        if not np.all(np.isfinite(emb)):
            raise DataError(f"sample {s.id!r}: embedding has non-finite entries")
        parts.append('"embedding":[' + ",".join(_float32_repr(v) for v in emb) + "]")
    parts.append(f'"origin":{json.dumps(s.origin)}')
    if s.parent_id is not None:
        parts.append(f'"parent_id":{json.dumps(s.parent_id, ensure_ascii=False)}')
    if split is not None:
        parts.append(f'"split":{json.dumps(split)}')
    return "{" + ",".join(parts) + "}"


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in ds:
            fh.write(_sample_to_line(s, ds.split))
            fh.write("\n")


def _parse_record(obj, lineno: int) -> tuple[Sample, str | None]:
    if not isinstance(obj, dict):
        raise DataError(f"line {lineno}: record is not an object")
    unknown = set(obj) - _RECORD_FIELDS
    if unknown:
        raise DataError(f"line {lineno}: unknown fields {sorted(unknown)}")
    for req in ("id", "label"):
        if not isinstance(obj.get(req), str) or not obj[req]:
            raise DataError(f"line {lineno}: missing or invalid {req!r}")
    embedding = None
    if obj.get("embedding") is not None:
        raw = obj["embedding"]
        if not isinstance(raw, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw
        ):
            raise DataError(f"line {lineno}: embedding must be an array of numbers")
        embedding = np.asarray(raw, dtype=np.float32)
        if not np.all(np.isfinite(embedding)):
            raise DataError(f"line {lineno}: embedding has non-finite entries")
    for opt in ("text", "abstract", "parent_id"):
        if obj.get(opt) is not None and not isinstance(obj[opt], str):
            raise DataError(f"line {lineno}: field {opt!r} must be a string")
    origin = obj.get("origin", "original")
    if origin not in ORIGINS:
        raise DataError(f"line {lineno}: unknown origin {origin!r}")
    split = obj.get("split")
    if split is not None and split not in SPLIT_TAGS:
        raise DataError(f"line {lineno}: unknown split tag {split!r}")
    sample = Sample(
        id=obj["id"],
        label=obj["label"],
        text=obj.get("text"),
        abstract=obj.get("abstract"),
        embedding=embedding,
        origin=origin,
        parent_id=obj.get("parent_id"),
    )
    return sample, split


def load_dataset(path) -> Dataset:
    """Parse a dataset file, reporting the offending line on any defect."""
    samples: list[Sample] = []
    split: str | None = None
    dim: int | None = None
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open dataset file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: malformed record: {exc}") from exc
            sample, tag = _parse_record(obj, lineno)
            if samples and tag != split:
                raise DataError(f"line {lineno}: mixed split tags in one file")
            split = tag
            if sample.embedding is not None:
                if dim is None:
                    dim = sample.embedding.shape[0]
                elif sample.embedding.shape[0] != dim:
                    raise DataError(
                        f"line {lineno}: embedding has length "
                        f"{sample.embedding.shape[0]}, expected {dim}"
                    )
            samples.append(sample)
    try:
        return Dataset(samples, split=split)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc
