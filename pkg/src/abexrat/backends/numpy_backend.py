"""Reference NumPy implementation of the training kernels.

This is the fallback backend and the semantic reference for the compiled
one: both expose the same five functions with identical contracts. All
arrays are float64 and C-contiguous; labels are int64.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def forward_batch(w1, b1, w2, b2, X):
    """Hidden pre-activations, relu activations and logits for a batch.

    Shapes: w1 (h,d), b1 (h,), w2 (C,h), b2 (C,), X (B,d).
    Returns (Z1 (B,h), A1 (B,h), logits (B,C)).
    """
    Z1 = X @ w1.T + b1
    A1 = np.maximum(Z1, 0.0)
    logits = A1 @ w2.T + b2
    return Z1, A1, logits


def backward_batch(w1, w2, X, Z1, A1, dlogits, need_dx):
    """Exact gradients of a scalar loss with logit-gradient `dlogits`.

    The relu subgradient at exactly zero is zero. Returns
    (dw1, db1, dw2, db2, dX) with dX None unless `need_dx`.
    """
    dw2 = dlogits.T @ A1
    db2 = dlogits.sum(axis=0)
    dA1 = dlogits @ w2
    dZ1 = np.where(Z1 > 0.0, dA1, 0.0)
    dw1 = dZ1.T @ X
    db1 = dZ1.sum(axis=0)
    dX = dZ1 @ w1 if need_dx else None
    return dw1, db1, dw2, db2, dX


def focal_grad_batch(logits, labels, alpha, gamma, pt_floor):
    """Mean focal loss over a batch and its exact logit gradient.

    Per sample: -alpha[y] * (1 - p_y)**gamma * log(max(p_y, pt_floor)),
    with p from a max-shifted softmax. The floor applies inside the log
    only, and the gradient is of the expression as written.
    """
    B = logits.shape[0]
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    p = e / e.sum(axis=1, keepdims=True)
    rows = np.arange(B)
    pt = p[rows, labels]
    a = alpha[labels]
    u = 1.0 - pt
    log_ptf = np.log(np.maximum(pt, pt_floor))
    ug = u**gamma
    loss = float(np.mean(-a * ug * log_ptf))

    # dL/dp_t; the log term contributes only where the floor is inactive,
    # and u**(gamma-1) needs a guard at u == 0 (limit is 0 there).
    dl_dpt = np.where(pt > pt_floor, -a * ug / np.maximum(pt, pt_floor), 0.0)
    if gamma > 0.0:
        t1 = np.zeros_like(u)
        pos = u > 0.0
        t1[pos] = u[pos] ** (gamma - 1.0)
        dl_dpt = dl_dpt + a * gamma * t1 * log_ptf

    coef = dl_dpt * pt / B
    dlogits = -coef[:, None] * p
    dlogits[rows, labels] += coef
    return loss, dlogits


def fgm_rows(grads, epsilon, tol):
    """Scale each row to L2 norm `epsilon`; rows with norm <= tol become 0."""
    norms = np.sqrt((grads * grads).sum(axis=1))
    safe = np.where(norms > tol, norms, 1.0)
    scale = np.where(norms > tol, epsilon / safe, 0.0)
    return grads * scale[:, None]


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, t):
    """One bias-corrected Adam step, updating param/m/v in place."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    param -= lr * mhat / (np.sqrt(vhat) + eps)
