# Compiled training kernels: BLAS dgemm for the matrix products plus fused
# C loops for activations, focal loss, FGM scaling and Adam updates. Mirrors
# numpy_backend exactly; see that module for the contracts.

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, pow, sqrt
from scipy.linalg.cython_blas cimport dgemm

NAME = "cython"


cdef inline void _rm_gemm(bint trans_a, bint trans_b, int m, int n, int k,
                          double* a, int a_cols, double* b, int b_cols,
                          double* c) noexcept nogil:
    # Row-major C(m,n) = op(A) @ op(B) via column-major BLAS: compute
    # C^T = op(B)^T @ op(A)^T. Leading dimensions are the stored column
    # counts of each row-major array.
    cdef char ta = 84 if trans_a else 78  # 'T' / 'N'
    cdef char tb = 84 if trans_b else 78
    cdef double one = 1.0, zero = 0.0
    dgemm(&tb, &ta, &n, &m, &k, &one, b, &b_cols, a, &a_cols, &zero, c, &n)


def forward_batch(double[:, ::1] w1, double[::1] b1,
                  double[:, ::1] w2, double[::1] b2,
                  double[:, ::1] X):
    cdef int B = X.shape[0], d = X.shape[1]
    cdef int h = w1.shape[0], C = w2.shape[0]
    Z1_arr = np.empty((B, h), dtype=np.float64)
    A1_arr = np.empty((B, h), dtype=np.float64)
    L_arr = np.empty((B, C), dtype=np.float64)
    cdef double[:, ::1] Z1 = Z1_arr, A1 = A1_arr, L = L_arr
    cdef int n, j, c
    cdef double z
    with nogil:
        _rm_gemm(False, True, B, h, d, &X[0, 0], d, &w1[0, 0], d, &Z1[0, 0])
        for n in range(B):
            for j in range(h):
                z = Z1[n, j] + b1[j]
                Z1[n, j] = z
                A1[n, j] = z if z > 0.0 else 0.0
        _rm_gemm(False, True, B, C, h, &A1[0, 0], h, &w2[0, 0], h, &L[0, 0])
        for n in range(B):
            for c in range(C):
                L[n, c] += b2[c]
    return Z1_arr, A1_arr, L_arr


def backward_batch(double[:, ::1] w1, double[:, ::1] w2,
                   double[:, ::1] X, double[:, ::1] Z1, double[:, ::1] A1,
                   double[:, ::1] dlogits, bint need_dx):
    cdef int B = X.shape[0], d = X.shape[1]
    cdef int h = w1.shape[0], C = w2.shape[0]
    dw1_arr = np.empty((h, d), dtype=np.float64)
    db1_arr = np.zeros(h, dtype=np.float64)
    dw2_arr = np.empty((C, h), dtype=np.float64)
    db2_arr = np.zeros(C, dtype=np.float64)
    dz1_arr = np.empty((B, h), dtype=np.float64)
    dx_arr = np.empty((B, d), dtype=np.float64) if need_dx else None
    cdef double[:, ::1] dw1 = dw1_arr, dw2 = dw2_arr, dZ1 = dz1_arr
    cdef double[::1] db1 = db1_arr, db2 = db2_arr
    cdef double[:, ::1] dX
    cdef int n, j, c
    if need_dx:
        dX = dx_arr
    with nogil:
        # dW2 = dlogits^T @ A1 ; db2 = column sums of dlogits
        _rm_gemm(True, False, C, h, B, &dlogits[0, 0], C, &A1[0, 0], h, &dw2[0, 0])
        for n in range(B):
            for c in range(C):
                db2[c] += dlogits[n, c]
        # dZ1 = (dlogits @ W2) gated by relu mask; db1 = column sums
        _rm_gemm(False, False, B, h, C, &dlogits[0, 0], C, &w2[0, 0], h, &dZ1[0, 0])
        for n in range(B):
            for j in range(h):
                if Z1[n, j] <= 0.0:
                    dZ1[n, j] = 0.0
                db1[j] += dZ1[n, j]
        _rm_gemm(True, False, h, d, B, &dZ1[0, 0], h, &X[0, 0], d, &dw1[0, 0])
        if need_dx:
            _rm_gemm(False, False, B, d, h, &dZ1[0, 0], h, &w1[0, 0], d, &dX[0, 0])
    return dw1_arr, db1_arr, dw2_arr, db2_arr, dx_arr


def focal_grad_batch(double[:, ::1] logits, cnp.int64_t[::1] labels,
                     double[::1] alpha, double gamma, double pt_floor):
    cdef int B = logits.shape[0], C = logits.shape[1]
    dl_arr = np.empty((B, C), dtype=np.float64)
    cdef double[:, ::1] D = dl_arr
    cdef int n, c, y
    cdef double m, s, pt, a, u, ptf, log_ptf, ug, dl_dpt, coef, loss = 0.0
    with nogil:
        for n in range(B):
            y = <int> labels[n]
            m = logits[n, 0]
            for c in range(1, C):
                if logits[n, c] > m:
                    m = logits[n, c]
            s = 0.0
            for c in range(C):
                D[n, c] = exp(logits[n, c] - m)
                s += D[n, c]
            for c in range(C):
                D[n, c] /= s  # D temporarily holds softmax probabilities
            pt = D[n, y]
            a = alpha[y]
            u = 1.0 - pt
            ptf = pt if pt > pt_floor else pt_floor
            log_ptf = log(ptf)
            ug = pow(u, gamma)
            loss += -a * ug * log_ptf
            dl_dpt = -a * ug / ptf if pt > pt_floor else 0.0
            if gamma > 0.0 and u > 0.0:
                dl_dpt += a * gamma * pow(u, gamma - 1.0) * log_ptf
            coef = dl_dpt * pt / B
            for c in range(C):
                D[n, c] = -coef * D[n, c]
            D[n, y] += coef
        loss /= B
    return loss, dl_arr


def fgm_rows(double[:, ::1] grads, double epsilon, double tol):
    cdef int B = grads.shape[0], d = grads.shape[1]
    out_arr = np.empty((B, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef int n, i
    cdef double s, scale
    with nogil:
        for n in range(B):
            s = 0.0
            for i in range(d):
                s += grads[n, i] * grads[n, i]
            s = sqrt(s)
            scale = epsilon / s if s > tol else 0.0
            for i in range(d):
                out[n, i] = grads[n, i] * scale
    return out_arr


def adam_update(param, grad, m_state, v_state,
                double lr, double beta1, double beta2, double eps, long t):
    cdef double[::1] p = param.reshape(-1)
    cdef double[::1] g = grad.reshape(-1)
    cdef double[::1] m = m_state.reshape(-1)
    cdef double[::1] v = v_state.reshape(-1)
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double c1 = 1.0 - pow(beta1, <double> t)
    cdef double c2 = 1.0 - pow(beta2, <double> t)
    cdef double mhat, vhat
    with nogil:
        for i in range(n):
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
            mhat = m[i] / c1
            vhat = v[i] / c2
            p[i] -= lr * mhat / (sqrt(vhat) + eps)
