# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-sample kernels; same contracts as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fabs, sqrt
from libc.string cimport memmove

cnp.import_array()


def unfold(double[:, ::1] H, double[::1] hist, double[::1] y, double[:, ::1] A,
           double[:, ::1] A_inv, double delta, double alpha):
    cdef Py_ssize_t K = H.shape[0], M = H.shape[1], i, j
    cdef double acc
    v_arr = np.empty(K)
    e_arr = np.empty(K)
    g_arr = np.empty(K)
    vb_arr = np.empty(K)
    cdef double[::1] v = v_arr, e = e_arr, g = g_arr, vb = vb_arr
    cdef double[64] w
    cdef double[64] vp
    if K > 64:
        raise ValueError("unfold kernel supports K <= 64")
    for i in range(K):
        acc = 0.0
        for j in range(M):
            acc += H[i, j] * hist[j]
        vp[i] = acc - 0.5
        acc = y[i] - vp[i]
        w[i] = acc - delta * floor(acc / delta)
    for i in range(K):
        acc = 0.0
        for j in range(K):
            acc += A[i, j] * w[j]
        g[i] = acc - delta * floor(acc / delta + 0.5)
    for i in range(K):
        acc = 0.0
        for j in range(K):
            acc += A_inv[i, j] * g[j]
        e[i] = acc
        v[i] = vp[i] + acc
        vb[i] = (v[i] + 0.5) / alpha
    return v_arr, e_arr, g_arr, vb_arr


def lms_push(double[:, ::1] H, double mu, double[::1] e, double[::1] hist, double[::1] vbar):
    cdef Py_ssize_t K = H.shape[0], M = H.shape[1], i, j
    cdef double c
    for i in range(K):
        c = mu * e[i]
        for j in range(M):
            H[i, j] += c * hist[j]
    _push(hist, vbar)


cdef inline void _push(double[::1] hist, double[::1] vbar):
    cdef Py_ssize_t K = vbar.shape[0], M = hist.shape[0], i
    if M > K:
        memmove(&hist[K], &hist[0], (M - K) * sizeof(double))
    for i in range(K):
        hist[i] = vbar[i]


def push(double[::1] hist, double[::1] vbar):
    _push(hist, vbar)


def ew_cov_update(double[:, ::1] S, double[::1] e, double lam):
    cdef Py_ssize_t K = S.shape[0], i, j
    cdef double b = 1.0 - lam
    for i in range(K):
        for j in range(K):
            S[i, j] = lam * S[i, j] + b * e[i] * e[j]


def lll_gram(sigma, double delta):
    L_arr = np.linalg.cholesky(np.asarray(sigma, dtype=float))
    cdef double[:, ::1] L = np.ascontiguousarray(L_arr)
    cdef Py_ssize_t n = L.shape[0], i, j, k, l, c
    mu_arr = np.zeros((n, n))
    bn_arr = np.empty(n)
    U_arr = np.eye(n, dtype=np.int64)
    cdef double[:, ::1] mu = mu_arr
    cdef double[::1] bnorm = bn_arr
    cdef long long[:, ::1] U = U_arr
    cdef double m, B, t
    cdef long long ti
    cdef long guard = 0
    for i in range(n):
        bnorm[i] = L[i, i] * L[i, i]
        for j in range(i):
            mu[i, j] = L[i, j] / L[j, j]
    k = 1
    while k < n:
        guard += 1
        if guard > 100000:
            raise RuntimeError("LLL did not terminate")
        _red(mu, U, k, k - 1, n)
        m = mu[k, k - 1]
        if bnorm[k] < (delta - m * m) * bnorm[k - 1]:
            B = bnorm[k] + m * m * bnorm[k - 1]
            mu[k, k - 1] = m * bnorm[k - 1] / B
            bnorm[k] = bnorm[k - 1] * bnorm[k] / B
            bnorm[k - 1] = B
            for c in range(n):
                ti = U[k, c]
                U[k, c] = U[k - 1, c]
                U[k - 1, c] = ti
            for j in range(k - 1):
                t = mu[k, j]
                mu[k, j] = mu[k - 1, j]
                mu[k - 1, j] = t
            for i in range(k + 1, n):
                t = mu[i, k]
                mu[i, k] = mu[i, k - 1] - m * t
                mu[i, k - 1] = t + mu[k, k - 1] * mu[i, k]
            k = k - 1 if k > 1 else 1
        else:
            for l in range(k - 2, -1, -1):
                _red(mu, U, k, l, n)
            k += 1
    return U_arr


cdef inline void _red(double[:, ::1] mu, long long[:, ::1] U, Py_ssize_t k, Py_ssize_t l,
                      Py_ssize_t n):
    cdef long long q
    cdef Py_ssize_t c, i
    if fabs(mu[k, l]) > 0.5:
        q = <long long> floor(mu[k, l] + 0.5)
        for c in range(n):
            U[k, c] -= q * U[l, c]
        mu[k, l] -= q
        for i in range(l):
            mu[k, i] -= q * mu[l, i]
