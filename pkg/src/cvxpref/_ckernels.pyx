# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same contracts as ``cvxpref._kernels_py``.

Dense products go through BLAS (``dgemm``/``dgemv`` from scipy); masking,
sign flips and the PCG vector updates are fused C loops over preallocated
buffers, so a whole PCG solve runs without Python-level allocation. Results
are reproducible run to run but not bit-identical to the numpy backend.
"""

import numpy as np

from libc.math cimport exp, log1p, sqrt
from scipy.linalg.cython_blas cimport dgemm, dgemv

name = "cython"


cdef void _gemm(bint trans_a, bint trans_b, int M, int N, int K, double alpha,
                const double* A, int lda, const double* B, int ldb,
                double beta, double* C) noexcept nogil:
    # row-major C (M x N) = alpha * op(A) op(B) + beta * C, via the
    # column-major identity C^T = op(B)^T op(A)^T
    cdef char ta = b"t" if trans_a else b"n"
    cdef char tb = b"t" if trans_b else b"n"
    cdef int ldc = N
    if M == 0 or N == 0:
        return
    dgemm(&tb, &ta, &N, &M, &K, &alpha, <double*>B, &ldb, <double*>A, &lda, &beta, C, &ldc)


cdef void _gemv(bint trans, int M, int N, double alpha, const double* A,
                const double* x, double beta, double* y) noexcept nogil:
    # row-major y = alpha * op(A) x + beta * y with A (M x N)
    cdef char t = b"n" if trans else b"t"
    cdef int one = 1, lda = N
    if M == 0 or N == 0:
        return
    dgemv(&t, &N, &M, &alpha, <double*>A, &lda, <double*>x, &one, &beta, y, &one)


cdef struct Work:
    double* W   # (P, d) v - w differences, or masked products
    double* Z   # (n, P) projections X W^T
    double* r   # (n,)


cdef void _f_apply_into(const double[:, ::1] X, const double[:, ::1] mask,
                        const double[:, ::1] U, Work w, double* out) noexcept nogil:
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], P = mask.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(P):
        for k in range(d):
            w.W[i * d + k] = U[i, k] - U[P + i, k]
    _gemm(False, True, <int>n, <int>P, <int>d, 1.0, &X[0, 0], <int>d, w.W, <int>d, 0.0, w.Z)
    for j in range(n):
        acc = 0.0
        for i in range(P):
            acc = acc + mask[j, i] * w.Z[j * P + i]
        out[j] = acc


cdef void _f_adjoint_into(const double[:, ::1] X, const double[:, ::1] mask,
                          const double* r, double scale, Work w, double[:, ::1] out) noexcept nogil:
    # out[:P] += scale * (mask * r)^T X and out[P:] -= the same
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], P = mask.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double v
    for j in range(n):
        for i in range(P):
            w.Z[j * P + i] = mask[j, i] * r[j]
    _gemm(True, False, <int>P, <int>d, <int>n, scale, w.Z, <int>P, &X[0, 0], <int>d, 0.0, w.W)
    for i in range(P):
        for k in range(d):
            v = w.W[i * d + k]
            out[i, k] += v
            out[P + i, k] -= v


cdef class _Buffers:
    cdef object W_arr, Z_arr, r_arr
    cdef Work w

    def __cinit__(self, Py_ssize_t n, Py_ssize_t d, Py_ssize_t P):
        self.W_arr = np.empty(max(P * d, 1), dtype=np.float64)
        self.Z_arr = np.empty(max(n * P, 1), dtype=np.float64)
        self.r_arr = np.empty(max(n, 1), dtype=np.float64)
        cdef double[::1] W = self.W_arr, Z = self.Z_arr, r = self.r_arr
        self.w.W = &W[0]
        self.w.Z = &Z[0]
        self.w.r = &r[0]


def f_apply(const double[:, ::1] X, const double[:, ::1] mask, const double[:, ::1] U):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], P = mask.shape[1]
    cdef _Buffers buf = _Buffers(n, d, P)
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    if n and d and P:
        _f_apply_into(X, mask, U, buf.w, &o[0])
    return out


def f_adjoint(const double[:, ::1] X, const double[:, ::1] mask, const double[::1] r):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], P = mask.shape[1]
    cdef _Buffers buf = _Buffers(n, d, P)
    out = np.zeros((2 * P, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    if n and d and P:
        _f_adjoint_into(X, mask, &r[0], 1.0, buf.w, o)
    return out


def g_apply(const double[:, ::1] X, const double[:, ::1] sign, const double[:, ::1] U):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], P = sign.shape[1]
    cdef Py_ssize_t g, j, p
    out = np.zeros((2 * P, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    if n and d and P:
        _gemm(False, True, <int>(2 * P), <int>n, <int>d, 1.0, &U[0, 0], <int>d, &X[0, 0], <int>d, 0.0, &o[0, 0])
        for g in range(2 * P):
            p = g if g < P else g - P
            for j in range(n):
                o[g, j] *= sign[j, p]
    return out


def g_adjoint(const double[:, ::1] X, const double[:, ::1] sign, const double[:, ::1] S):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], P = sign.shape[1]
    cdef Py_ssize_t g, j, p
    out = np.zeros((2 * P, d), dtype=np.float64)
    W_arr = np.empty((2 * P, n), dtype=np.float64)
    cdef double[:, ::1] o = out, W = W_arr
    if n and d and P:
        for g in range(2 * P):
            p = g if g < P else g - P
            for j in range(n):
                W[g, j] = S[g, j] * sign[j, p]
        _gemm(False, False, <int>(2 * P), <int>d, <int>n, 1.0, &W[0, 0], <int>n, &X[0, 0], <int>d, 0.0, &o[0, 0])
    return out


cdef void _normal_into(const double[:, ::1] X, const double[:, ::1] mask,
                       const double[:, ::1] gram, const double[:, ::1] U, double rho,
                       Work w, double[:, ::1] o) noexcept nogil:
    cdef Py_ssize_t d = X.shape[1], G = U.shape[0]
    cdef Py_ssize_t g, k
    for g in range(G):
        for k in range(d):
            o[g, k] = U[g, k]
    # o = rho * U gram + rho * U
    _gemm(False, False, <int>G, <int>d, <int>d, rho, &U[0, 0], <int>d, &gram[0, 0], <int>d, rho, &o[0, 0])
    if X.shape[0] and mask.shape[1]:
        _f_apply_into(X, mask, U, w, w.r)
        _f_adjoint_into(X, mask, w.r, 2.0, w, o)


def normal_apply(const double[:, ::1] X, const double[:, ::1] mask,
                 const double[:, ::1] gram, const double[:, ::1] U, double rho):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], P = mask.shape[1]
    cdef _Buffers buf = _Buffers(n, d, P)
    out = np.zeros((2 * P, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    if d and P:
        _normal_into(X, mask, gram, U, rho, buf.w, o)
    return out


cdef double _dot(const double[:, ::1] a, const double[:, ::1] b) noexcept nogil:
    cdef Py_ssize_t g, k
    cdef double acc = 0.0
    for g in range(a.shape[0]):
        for k in range(a.shape[1]):
            acc = acc + a[g, k] * b[g, k]
    return acc


def normal_pcg(const double[:, ::1] X, const double[:, ::1] mask,
               const double[:, ::1] gram, double rho,
               const double[:, ::1] rhs, const double[:, ::1] x0,
               const double[:, ::1] inv_diag, double threshold, Py_ssize_t max_iters):
    """Jacobi PCG on ``normal_apply``; same contract as ``_kernels_py.normal_pcg``."""
    cdef Py_ssize_t G = rhs.shape[0], d = rhs.shape[1], n = X.shape[0]
    cdef Py_ssize_t g, k, it = 0
    cdef int status = 1
    cdef double rnorm, best_r, rz, rz_new, curv, alpha, beta

    x_arr = np.array(x0, dtype=np.float64)
    best_arr = np.empty((G, d), dtype=np.float64)
    r_arr = np.empty((G, d), dtype=np.float64)
    z_arr = np.empty((G, d), dtype=np.float64)
    p_arr = np.empty((G, d), dtype=np.float64)
    ap_arr = np.empty((G, d), dtype=np.float64)
    cdef _Buffers buf = _Buffers(n, d, mask.shape[1])
    cdef Work w = buf.w
    cdef double[:, ::1] x = x_arr, best = best_arr, r = r_arr, z = z_arr, p = p_arr, ap = ap_arr
    if G == 0 or d == 0:
        return x_arr, 0, 0.0, 0

    with nogil:
        _normal_into(X, mask, gram, x, rho, w, ap)
        for g in range(G):
            for k in range(d):
                r[g, k] = rhs[g, k] - ap[g, k]
        rnorm = sqrt(_dot(r, r))
        best[:, :] = x
        best_r = rnorm
        if rnorm <= threshold:
            status = 0
        else:
            for g in range(G):
                for k in range(d):
                    z[g, k] = r[g, k] * inv_diag[g, k]
                    p[g, k] = z[g, k]
            rz = _dot(r, z)
            while it < max_iters:
                _normal_into(X, mask, gram, p, rho, w, ap)
                curv = _dot(p, ap)
                if not curv > 0.0:
                    status = 2
                    break
                alpha = rz / curv
                for g in range(G):
                    for k in range(d):
                        x[g, k] += alpha * p[g, k]
                        r[g, k] -= alpha * ap[g, k]
                it += 1
                rnorm = sqrt(_dot(r, r))
                if rnorm <= threshold:
                    # recurrences drift; confirm against the true residual
                    _normal_into(X, mask, gram, x, rho, w, ap)
                    for g in range(G):
                        for k in range(d):
                            r[g, k] = rhs[g, k] - ap[g, k]
                    rnorm = sqrt(_dot(r, r))
                    if rnorm <= threshold:
                        status = 0
                        break
                if rnorm < best_r:
                    best[:, :] = x
                    best_r = rnorm
                for g in range(G):
                    for k in range(d):
                        z[g, k] = r[g, k] * inv_diag[g, k]
                rz_new = _dot(r, z)
                beta = rz_new / rz
                for g in range(G):
                    for k in range(d):
                        p[g, k] = z[g, k] + beta * p[g, k]
                rz = rz_new
    if status == 1:
        return best_arr, it, best_r, status
    return x_arr, it, rnorm, status


def group_shrink(const double[:, ::1] Z, double tau):
    cdef Py_ssize_t G = Z.shape[0], d = Z.shape[1]
    cdef Py_ssize_t g, k
    cdef double nrm, s
    out = np.empty((G, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    for g in range(G):
        nrm = 0.0
        for k in range(d):
            nrm = nrm + Z[g, k] * Z[g, k]
        nrm = sqrt(nrm)
        s = 1.0 - tau / nrm if nrm > tau else 0.0
        for k in range(d):
            o[g, k] = s * Z[g, k]
    return out


cdef inline double _softplus(double z) noexcept nogil:
    if z > 0.0:
        return z + log1p(exp(-z))
    return log1p(exp(z))


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def logistic_loss_grad(const double[:, ::1] A, const double[::1] labels,
                       const double[::1] theta, double beta, double gamma):
    cdef Py_ssize_t N = A.shape[0], m = A.shape[1]
    cdef Py_ssize_t j
    cdef double z, loss = 0.0
    grad = np.zeros(m, dtype=np.float64)
    margin_arr = np.zeros(N, dtype=np.float64)
    cdef double[::1] gv = grad, t = margin_arr
    if N == 0:
        return float("nan"), grad
    if m:
        _gemv(False, <int>N, <int>m, 1.0, &A[0, 0], &theta[0], 0.0, &t[0])
    for j in range(N):
        z = -beta * labels[j] * t[j] + gamma
        loss = loss + _softplus(z)
        t[j] = -beta * labels[j] * _sigmoid(z)
    if m:
        _gemv(True, <int>N, <int>m, 1.0 / N, &A[0, 0], &t[0], 0.0, &gv[0])
    return loss / N, grad
