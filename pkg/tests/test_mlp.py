import json
import math

import numpy as np
import pytest

from abexrat.errors import DataError, DimensionError, NumericError
from abexrat.mlp import (
    MlpParams,
    backward,
    forward,
    forward_batch,
    init_params,
    load_params,
    predict,
    predict_batch,
    save_params,
    stable_softmax,
)
from oracles import finite_diff_grad, max_rel_err


def test_init_deterministic():
    a = init_params(7, 4, 8, 3)
    b = init_params(7, 4, 8, 3)
    for x, y in zip(a.arrays(), b.arrays()):
        assert np.array_equal(x, y)


def test_init_different_seeds_differ():
    a = init_params(7, 4, 8, 3)
    b = init_params(8, 4, 8, 3)
    assert not np.array_equal(a.w1, b.w1)


def test_init_biases_zero():
    p = init_params(123, 5, 6, 4)
    assert np.all(p.b1 == 0) and np.all(p.b2 == 0)


def test_init_weight_scale():
    # stated initializer: per-layer stddev sqrt(2/fan_in)
    p = init_params(7, 4, 8, 3)
    target = math.sqrt(2.0 / 4.0)
    assert abs(p.w1.std(ddof=1) - target) <= 0.25 * target


@pytest.mark.parametrize("bad", [(0, 8, 3), (4, 0, 3), (4, 8, 0), (-1, 8, 3)])
def test_init_rejects_bad_dims(bad):
    with pytest.raises(DimensionError):
        init_params(0, *bad)


def test_forward_zero_params(backend):
    p = MlpParams(np.zeros((3, 2)), np.zeros(3), np.zeros((2, 3)), np.zeros(2))
    cache = forward(p, np.array([1.0, -2.0]))
    assert np.all(cache.logits == 0.0)


def test_forward_identity_config(backend):
    eye = np.eye(3)
    p = MlpParams(eye.copy(), np.zeros(3), eye.copy(), np.zeros(3))
    x = np.array([0.5, 0.0, 2.0])
    assert np.array_equal(forward(p, x).logits, x)


def test_forward_matches_matrix_oracle(backend):
    p = init_params(3, 2, 2, 2)
    x = np.array([1.0, -1.0])
    cache = forward(p, x)
    # independent arithmetic: explicit loops, no numpy matmul
    z1 = [sum(p.w1[j][i] * x[i] for i in range(2)) + p.b1[j] for j in range(2)]
    a1 = [max(v, 0.0) for v in z1]
    logits = [sum(p.w2[c][j] * a1[j] for j in range(2)) + p.b2[c] for c in range(2)]
    assert np.max(np.abs(cache.logits - np.array(logits))) <= 1e-12


def test_forward_is_pure(backend):
    p = init_params(1, 4, 5, 3)
    x = np.linspace(-1, 1, 4)
    c1, c2 = forward(p, x), forward(p, x)
    assert np.array_equal(c1.logits, c2.logits)
    assert np.array_equal(c1.z1, c2.z1)


def test_forward_rejects_bad_input():
    p = init_params(0, 3, 4, 2)
    with pytest.raises(DimensionError):
        forward(p, np.zeros(4))
    with pytest.raises(NumericError):
        forward(p, np.array([1.0, np.nan, 0.0]))


def test_backward_zero_dlogits(backend):
    p = init_params(5, 3, 4, 2)
    cache = forward(p, np.array([0.3, -0.2, 1.0]))
    grads, dx = backward(p, cache, np.zeros(2))
    assert all(np.all(g == 0) for g in grads.arrays())
    assert np.all(dx == 0)


def test_backward_shape_check():
    p = init_params(5, 3, 4, 2)
    cache = forward(p, np.array([0.3, -0.2, 1.0]))
    with pytest.raises(DimensionError):
        backward(p, cache, np.zeros(3))


def test_backward_finite_differences(backend):
    # scalar loss = r . logits, so dlogits = r
    rng = np.random.default_rng(42)
    for trial in range(5):
        d, h, C = rng.integers(2, 6), rng.integers(2, 6), rng.integers(2, 5)
        p = init_params(int(rng.integers(1000)), int(d), int(h), int(C))
        x = rng.normal(size=int(d))
        r = rng.normal(size=int(C))
        grads, dx = backward(p, forward(p, x), r)

        def loss():
            return float(r @ forward(p, x).logits)

        for analytic, arr in zip(grads.arrays(), p.arrays()):
            assert max_rel_err(analytic, finite_diff_grad(loss, arr)) <= 1e-5
        assert max_rel_err(dx, finite_diff_grad(loss, x)) <= 1e-5


def test_backward_linear_case(backend):
    # relu stays in its identity region, so input_grad = w1^T w2^T dlogits
    rng = np.random.default_rng(3)
    d = 4
    w2 = rng.normal(size=(3, d))
    p = MlpParams(np.eye(d), np.zeros(d), w2, np.zeros(3))
    x = rng.uniform(0.5, 1.5, size=d)
    dlogits = rng.normal(size=3)
    _, dx = backward(p, forward(p, x), dlogits)
    oracle = [
        sum(w2[c][i] * dlogits[c] for c in range(3)) for i in range(d)
    ]
    assert np.max(np.abs(dx - np.array(oracle))) <= 1e-12


def test_predict_tie_breaks_low_index(backend):
    p = MlpParams(np.zeros((2, 2)), np.zeros(2), np.zeros((3, 2)), np.array([0.3, 0.3, 0.1]))
    assert predict(p, np.array([5.0, -5.0])) == 0


def test_predict_argmax(backend):
    p = MlpParams(np.zeros((2, 2)), np.zeros(2), np.zeros((3, 2)), np.array([-1.0, 5.0, 2.0]))
    assert predict(p, np.zeros(2)) == 1


def test_predict_all_zero_params(backend):
    p = MlpParams(np.zeros((3, 2)), np.zeros(3), np.zeros((4, 3)), np.zeros(4))
    for x in (np.array([1.0, 2.0]), np.array([-3.0, 0.0])):
        assert predict(p, x) == 0


def test_predict_batch_matches_single(backend):
    p = init_params(11, 4, 6, 3)
    X = np.random.default_rng(0).normal(size=(10, 4))
    batch = predict_batch(p, X)
    assert list(batch) == [predict(p, x) for x in X]


def test_stable_softmax_extreme_logits():
    logits = np.array([1e4, -1e4, 0.0, 9.5e3])
    probs = stable_softmax(logits)
    assert np.all(np.isfinite(probs)) and np.all(probs >= 0)
    assert abs(probs.sum() - 1.0) <= 1e-9


def test_forward_batch_matches_stacked_singles(backend):
    p = init_params(9, 5, 7, 4)
    X = np.random.default_rng(1).normal(size=(6, 5))
    L = forward_batch(p, X)
    singles = np.stack([forward(p, x).logits for x in X])
    assert np.max(np.abs(L - singles)) <= 1e-12


def test_model_file_round_trip(tmp_path):
    p = init_params(21, 6, 9, 4)
    path = tmp_path / "model.json"
    save_params(p, path, labels=["a", "b", "c", "d"])
    loaded, labels = load_params(path)
    assert labels == ["a", "b", "c", "d"]
    # bit-exact at 32-bit precision
    for orig, back in zip(p.arrays(), loaded.arrays()):
        assert np.array_equal(orig.astype(np.float32), back.astype(np.float32))
    path2 = tmp_path / "model2.json"
    save_params(loaded, path2, labels=labels)
    assert path.read_bytes() == path2.read_bytes()


def test_model_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("not json")
    with pytest.raises(DataError):
        load_params(path)
    path.write_text(json.dumps({"format_version": 99}))
    with pytest.raises(DataError):
        load_params(path)


def test_model_file_rejects_short_blob(tmp_path):
    p = init_params(2, 3, 3, 2)
    path = tmp_path / "model.json"
    save_params(p, path)
    doc = json.loads(path.read_text())
    doc["w1"] = doc["w1"][: len(doc["w1"]) // 2]
    path.write_text(json.dumps(doc))
    with pytest.raises(DataError):
        load_params(path)
