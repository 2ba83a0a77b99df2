"""Pure numpy/Python kernels (fallback when the compiled extension is absent).

Signatures and in-place semantics match ``_ckernels.pyx`` exactly.
"""
import math

import numpy as np


def unfold(H, hist, y, A, A_inv, delta, alpha):
    """Predict, fold the residual and IF-decode one frame.

    Returns ``(v_hat, e_hat, g_tilde, vbar_hat)``.
    """
    vp = H @ hist - 0.5
    w = y - vp
    w -= delta * np.floor(w / delta)
    t = A @ w
    g = t - delta * np.floor(t / delta + 0.5)
    e = A_inv @ g
    v = vp + e
    return v, e, g, (v + 0.5) / alpha


def lms_push(H, mu, e, hist, vbar):
    """``H += mu * outer(e, hist)`` then shift ``vbar`` into the newest slot."""
    H += mu * np.outer(e, hist)
    K = vbar.shape[0]
    hist[K:] = hist[:-K].copy()
    hist[:K] = vbar


def push(hist, vbar):
    K = vbar.shape[0]
    hist[K:] = hist[:-K].copy()
    hist[:K] = vbar


def ew_cov_update(S, e, lam):
    """Exponentially weighted outer-product accumulation, in place."""
    S *= lam
    S += (1.0 - lam) * np.outer(e, e)


def lll_gram(sigma, delta):
    """LLL-reduce the lattice with Gram matrix ``sigma``.

    Works on the Gram-Schmidt data taken from the Cholesky factor, so no
    basis is ever formed.  Returns the unimodular transform ``U`` (int64)
    whose rows are the reduced integer coefficient vectors.
    """
    L = np.linalg.cholesky(sigma)
    n = L.shape[0]
    d = np.diag(L)
    bnorm = [float(v * v) for v in d]
    mu = [[float(L[i, j] / d[j]) if j < i else 0.0 for j in range(n)] for i in range(n)]
    U = [[1 if i == j else 0 for j in range(n)] for i in range(n)]

    def red(k, l):
        if abs(mu[k][l]) > 0.5:
            q = int(math.floor(mu[k][l] + 0.5))
            Uk, Ul = U[k], U[l]
            for c in range(n):
                Uk[c] -= q * Ul[c]
            mu[k][l] -= q
            mk, ml = mu[k], mu[l]
            for i in range(l):
                mk[i] -= q * ml[i]

    k = 1
    guard = 0
    while k < n:
        guard += 1
        if guard > 100000:
            raise RuntimeError("LLL did not terminate")
        red(k, k - 1)
        m = mu[k][k - 1]
        if bnorm[k] < (delta - m * m) * bnorm[k - 1]:
            B = bnorm[k] + m * m * bnorm[k - 1]
            mu[k][k - 1] = m * bnorm[k - 1] / B
            bnorm[k] = bnorm[k - 1] * bnorm[k] / B
            bnorm[k - 1] = B
            U[k], U[k - 1] = U[k - 1], U[k]
            for j in range(k - 1):
                mu[k][j], mu[k - 1][j] = mu[k - 1][j], mu[k][j]
            for i in range(k + 1, n):
                t = mu[i][k]
                mu[i][k] = mu[i][k - 1] - m * t
                mu[i][k - 1] = t + mu[k][k - 1] * mu[i][k]
            k = max(1, k - 1)
        else:
            for l in range(k - 2, -1, -1):
                red(k, l)
            k += 1
    return np.array(U, dtype=np.int64)
