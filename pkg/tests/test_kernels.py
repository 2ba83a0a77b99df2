import os
import subprocess
import sys

import numpy as np
import pytest

from modadc import _kernels

py = _kernels.get_backend("python")
try:
    cy = _kernels.get_backend("cython")
except ImportError:
    cy = None

needs_cython = pytest.mark.skipif(cy is None, reason="compiled extension not built")


def test_unknown_backend():
    with pytest.raises(ValueError):
        _kernels.get_backend("fortran")


def test_env_var_forces_fallback():
    env = dict(os.environ, MODADC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import modadc; print(modadc.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_lll_unimodular_and_reduced(kernels):
    rng = np.random.default_rng(0)
    for K in (2, 5, 9):
        B = rng.normal(size=(K, K))
        S = B @ B.T + 1e-3 * np.eye(K)
        U = kernels.lll_gram(S, 0.99)
        assert U.dtype == np.int64
        assert abs(round(np.linalg.det(U.astype(float)))) == 1
        # size reduction and Lovasz condition on the reduced Gram matrix
        G = U @ S @ U.T
        L = np.linalg.cholesky(G)
        mu = L / np.diag(L)[None, :]
        assert np.all(np.abs(np.tril(mu, -1)) <= 0.5 + 1e-9)
        b2 = np.diag(L) ** 2
        for k in range(1, K):
            assert b2[k] >= (0.99 - mu[k, k - 1] ** 2) * b2[k - 1] * (1 - 1e-9)


def _state(rng, K, p):
    H = rng.normal(size=(K, K * p)) * 0.1
    hist = rng.normal(size=K * p)
    A = np.eye(K)
    A[1, 0] = 1.0
    Ainv = np.linalg.inv(A)
    return H, hist, A, Ainv


@needs_cython
def test_unfold_backends_agree():
    rng = np.random.default_rng(1)
    for _ in range(50):
        K, p = 3, 4
        H, hist, A, Ainv = _state(rng, K, p)
        y = rng.uniform(0, 1024, size=K)
        a = py.unfold(H.copy(), hist.copy(), y, A, Ainv, 1024.0, 7.0)
        b = cy.unfold(H.copy(), hist.copy(), y, A, Ainv, 1024.0, 7.0)
        for u, w in zip(a, b):
            np.testing.assert_allclose(u, w, rtol=1e-12, atol=1e-12)


@needs_cython
def test_lms_push_and_cov_backends_agree():
    rng = np.random.default_rng(2)
    K, p = 4, 3
    H, hist, _, _ = _state(rng, K, p)
    e, vbar = rng.normal(size=K), rng.normal(size=K)
    H1, h1, H2, h2 = H.copy(), hist.copy(), H.copy(), hist.copy()
    py.lms_push(H1, 0.01, e, h1, vbar)
    cy.lms_push(H2, 0.01, e, h2, vbar)
    np.testing.assert_allclose(H1, H2, rtol=1e-14)
    np.testing.assert_array_equal(h1, h2)
    S1 = np.eye(K)
    S2 = np.eye(K)
    py.ew_cov_update(S1, e, 0.9)
    cy.ew_cov_update(S2, e, 0.9)
    np.testing.assert_allclose(S1, S2, rtol=1e-14)
    np.testing.assert_allclose(S1, 0.9 * np.eye(K) + 0.1 * np.outer(e, e), rtol=1e-14)


@needs_cython
def test_lll_backends_agree():
    rng = np.random.default_rng(3)
    for _ in range(200):
        K = int(rng.integers(2, 8))
        B = rng.normal(size=(K, K))
        S = B @ B.T + 1e-2 * np.eye(K)
        np.testing.assert_array_equal(py.lll_gram(S, 0.99), cy.lll_gram(S, 0.99))
