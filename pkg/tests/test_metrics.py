import numpy as np
import pytest

from abexrat.errors import DataError
from abexrat.metrics import (
    aggregate_scores,
    confusion_matrix,
    evaluate,
    macro_f1,
    per_class_prf,
    row_normalize,
)
from oracles import aggregate_by_counting, confusion_by_counting, prf_by_counting


def test_confusion_perfect_predictions():
    y = np.array([0, 1, 2, 1, 0])
    conf = confusion_matrix(y, y, 3)
    assert np.array_equal(conf, np.diag([2, 2, 1]))


def test_confusion_hand_case():
    conf = confusion_matrix(np.array([0, 0, 1]), np.array([0, 1, 1]), 2)
    assert conf.tolist() == [[1, 1], [0, 1]]


def test_confusion_rejects_out_of_range():
    with pytest.raises(DataError):
        confusion_matrix(np.array([0, 2]), np.array([0, 0]), 2)


def test_row_normalize_rows_sum_to_one():
    conf = confusion_matrix(np.array([0, 0, 1, 2]), np.array([0, 1, 1, 0]), 4)
    norm = row_normalize(conf)
    sums = norm.sum(axis=1)
    for c in range(4):
        if conf[c].sum() > 0:
            assert abs(sums[c] - 1.0) <= 1e-12
        else:
            assert sums[c] == 0.0


def test_prf_hand_case():
    p, r, f1, support = per_class_prf(np.array([[1, 1], [0, 1]]))
    assert p[0] == 1.0 and r[0] == 0.5 and abs(f1[0] - 2 / 3) <= 1e-12
    assert p[1] == 0.5 and r[1] == 1.0 and abs(f1[1] - 2 / 3) <= 1e-12
    assert support.tolist() == [2, 1]


def test_prf_perfect_diagonal():
    p, r, f1, _ = per_class_prf(np.diag([3, 1, 5]))
    assert np.all(p == 1) and np.all(r == 1) and np.all(f1 == 1)


def test_prf_absent_class_is_zero():
    conf = np.array([[2, 0, 0], [1, 1, 0], [0, 0, 0]])
    p, r, f1, support = per_class_prf(conf)
    assert p[2] == r[2] == f1[2] == 0.0 and support[2] == 0


def test_aggregate_hand_case():
    p = np.array([1.0, 0.0])
    r = np.array([1.0, 0.0])
    f1 = np.array([1.0, 0.0])
    support = np.array([9, 1])
    macro, weighted = aggregate_scores(p, r, f1, support)
    assert weighted.f1 == pytest.approx(0.9, abs=1e-15)
    assert macro.f1 == pytest.approx(0.5, abs=1e-15)


def test_aggregate_identical_scores():
    p = r = f1 = np.array([0.7, 0.7, 0.7])
    macro, weighted = aggregate_scores(p, r, f1, np.array([5, 50, 500]))
    assert macro.f1 == pytest.approx(weighted.f1, abs=1e-15)


def test_aggregate_single_class():
    macro, weighted = aggregate_scores(
        np.array([0.8]), np.array([0.6]), np.array([0.7]), np.array([4])
    )
    assert macro.f1 == weighted.f1 == 0.7


def test_aggregate_rejects_empty_support():
    with pytest.raises(DataError):
        aggregate_scores(np.zeros(2), np.zeros(2), np.zeros(2), np.array([0, 0]))


def test_matches_counting_oracle():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        C = int(rng.integers(2, 8))
        n = int(rng.integers(1, 201))
        true = rng.integers(0, C, size=n)
        pred = rng.integers(0, C, size=n)
        report = evaluate(true, pred, [f"c{i}" for i in range(C)])
        assert report.confusion.tolist() == confusion_by_counting(true, pred, C)
        oracle_rows = prf_by_counting(true, pred, C)
        for got, want in zip(report.per_class, oracle_rows):
            assert abs(got.precision - want[0]) <= 1e-12
            assert abs(got.recall - want[1]) <= 1e-12
            assert abs(got.f1 - want[2]) <= 1e-12
            assert got.support == want[3]
        macro, weighted = aggregate_by_counting(oracle_rows)
        assert abs(report.macro.f1 - macro[2]) <= 1e-12
        assert abs(report.weighted.precision - weighted[0]) <= 1e-12
        assert abs(report.weighted.recall - weighted[1]) <= 1e-12
        assert abs(report.weighted.f1 - weighted[2]) <= 1e-12


def test_class_permutation_leaves_aggregates_unchanged():
    rng = np.random.default_rng(17)
    C, n = 5, 120
    true = rng.integers(0, C, size=n)
    pred = rng.integers(0, C, size=n)
    base = evaluate(true, pred, [f"c{i}" for i in range(C)])
    perm = rng.permutation(C)
    inv = np.argsort(perm)
    permuted = evaluate(inv[true], inv[pred], [f"c{i}" for i in range(C)])
    assert base.macro.f1 == pytest.approx(permuted.macro.f1, abs=1e-12)
    assert base.weighted.f1 == pytest.approx(permuted.weighted.f1, abs=1e-12)


def test_macro_f1_includes_zero_support_classes():
    # vocabulary has 3 classes; only 2 appear
    true = np.array([0, 1, 0])
    pred = np.array([0, 1, 1])
    assert macro_f1(true, pred, 3) == pytest.approx((2 / 3 + 2 / 3 + 0.0) / 3)


def test_report_files(tmp_path):
    report = evaluate(np.array([0, 1, 1]), np.array([0, 1, 0]), ["neg", "pos"])
    rp = tmp_path / "report.json"
    cp = tmp_path / "confusion.csv"
    report.save(rp)
    report.save_confusion_csv(cp)
    import json

    doc = json.loads(rp.read_text())
    assert doc["labels"] == ["neg", "pos"]
    assert doc["confusion"] == report.confusion.tolist()
    assert {"precision", "recall", "f1"} <= set(doc["macro"])
    lines = cp.read_text().strip().split("\n")
    assert lines[0] == "label,neg,pos"
    assert lines[1].startswith("neg,")
