import numpy as np
import pytest

from abexrat.dataset import class_counts, plan_for_dataset
from abexrat.errors import DataError
from abexrat.synthbench import SynthSpec, generate_synthetic, jitter_augment


def test_counts_match_spec_exactly():
    spec = SynthSpec(class_counts=(1000, 15), dim=8, seed=1)
    stats = class_counts(generate_synthetic(spec))
    assert stats.counts == {"class_0": 1000, "class_1": 15}


def test_deterministic():
    spec = SynthSpec(class_counts=(20, 10), dim=6, seed=42)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    for x, y in zip(a, b):
        assert x.id == y.id and np.array_equal(x.embedding, y.embedding)


def test_unit_norm_embeddings():
    ds = generate_synthetic(SynthSpec(class_counts=(30, 30), dim=12, seed=3))
    for s in ds:
        assert abs(np.linalg.norm(s.embedding) - 1.0) <= 1e-9


def test_near_noiseless_data_is_linearly_separable():
    # nearest-class-mean (a linear rule on the sphere) must be perfect
    ds = generate_synthetic(
        SynthSpec(class_counts=(10, 10), dim=16, separation=1.0, noise=0.01, seed=0)
    )
    X = np.stack([s.embedding for s in ds])
    labels = [s.label for s in ds]
    vocab = sorted(set(labels))
    means = np.stack(
        [X[[i for i, l in enumerate(labels) if l == v]].mean(axis=0) for v in vocab]
    )
    pred = np.argmax(X @ means.T, axis=1)
    truth = np.array([vocab.index(l) for l in labels])
    assert np.array_equal(pred, truth)


def test_spec_validation():
    with pytest.raises(DataError):
        SynthSpec(class_counts=(10,))
    with pytest.raises(DataError):
        SynthSpec(class_counts=(10, 2))
    with pytest.raises(DataError):
        SynthSpec(class_counts=(10, 10), dim=0)
    with pytest.raises(DataError):
        SynthSpec(class_counts=(10, 10), noise=0.0)


class TestJitter:
    def _dataset(self):
        return generate_synthetic(SynthSpec(class_counts=(8, 4), dim=10, seed=5))

    def test_count_identity_and_balance(self):
        ds = self._dataset()
        plan = plan_for_dataset(ds, 1.0)
        out = jitter_augment(ds, plan, sigma=0.05, seed=0)
        assert len(out) == len(ds) + sum(plan.per_class.values())
        assert class_counts(out).counts == {"class_0": 8, "class_1": 8}

    def test_labels_and_lineage(self):
        ds = self._dataset()
        out = jitter_augment(ds, plan_for_dataset(ds, 1.0), seed=0)
        parents = {s.id: s for s in ds}
        for s in out:
            if s.origin == "synthetic":
                assert s.parent_id in parents
                assert s.label == parents[s.parent_id].label
                assert "-aug-" in s.id
                assert abs(np.linalg.norm(s.embedding) - 1.0) <= 1e-9

    def test_deterministic(self):
        ds = self._dataset()
        plan = plan_for_dataset(ds, 1.0)
        a = jitter_augment(ds, plan, seed=9)
        b = jitter_augment(ds, plan, seed=9)
        for x, y in zip(a, b):
            assert x.id == y.id and np.array_equal(x.embedding, y.embedding)

    def test_plan_mismatch_rejected(self):
        ds = self._dataset()
        other = generate_synthetic(SynthSpec(class_counts=(5, 5), dim=10, seed=1))
        with pytest.raises(DataError):
            jitter_augment(ds, plan_for_dataset(other, 1.0), seed=0)
