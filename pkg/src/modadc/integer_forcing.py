"""Integer-forcing matrices for decoding folded prediction errors.

The IF objective for an integer matrix ``A`` with rows ``a_k`` is
``max_k a_k^T sigma a_k``; ``sigma_max`` is its square root.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import IllConditionedError, InvalidArgumentError, ModAdcError, UnsupportedError
from .modchannel import ModConfig

__all__ = [
    "IfState",
    "if_exhaustive",
    "if_lll",
    "if_identity",
    "if_decode",
    "overload_bound",
    "canonicalize",
]

@dataclass
class IfState:
    A: np.ndarray
    A_inv: np.ndarray
    sigma: np.ndarray
    sigma_max: float
    r_if: float

    @classmethod
    def from_matrix(cls, A, sigma):
        A = np.asarray(A, dtype=np.int64)
        sigma = np.asarray(sigma, dtype=float)
        forms = _row_forms(A, sigma)
        A_inv = np.linalg.inv(A.astype(float))
        det = round(np.linalg.det(A.astype(float)))
        if abs(det) == 1:
            A_inv = np.round(A_inv)
        smax2 = float(forms.max())
        return cls(A, A_inv, sigma, math.sqrt(smax2), 0.5 * math.log2(smax2))

    @property
    def A_float(self):
        return self.A.astype(float)


def _row_forms(A, sigma):
    A = np.asarray(A, dtype=float)
    return np.einsum("ki,ij,kj->k", A, sigma, A)


def _check_sigma(sigma):
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise InvalidArgumentError(f"sigma must be square, got shape {sigma.shape}")
    if not np.all(np.isfinite(sigma)):
        raise InvalidArgumentError("sigma must be finite")
    return 0.5 * (sigma + sigma.T)


def _sign_normalize(a):
    nz = np.flatnonzero(a)
    if nz.size and a[nz[0]] < 0:
        return -a
    return a


def canonicalize(A, sigma):
    """Sort rows by ascending form (ties: larger lexicographic first) and fix signs."""
    A = np.array([_sign_normalize(np.asarray(r, dtype=np.int64)) for r in A])
    forms = _row_forms(A, sigma)
    scale = max(float(np.max(np.abs(forms))), 1e-300)
    keys = [(round(f / scale, 9), tuple(-v for v in r)) for f, r in zip(forms, A.tolist())]
    order = sorted(range(len(keys)), key=keys.__getitem__)
    return A[order]


def if_identity(sigma):
    """IF state with ``A = I`` (per-channel centered-mod decoding)."""
    sigma = _check_sigma(sigma)
    return IfState.from_matrix(np.eye(sigma.shape[0], dtype=np.int64), sigma)


def _candidates(bounds):
    """All integer rows in the box ``|a_i| <= bounds[i]`` with first nonzero entry positive."""
    axes = [np.arange(-b, b + 1, dtype=np.int64) for b in bounds]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(bounds))
    nz = grid != 0
    first = np.argmax(nz, axis=1)
    lead = grid[np.arange(len(grid)), first]
    return grid[nz.any(axis=1) & (lead > 0)]


def _exhaustive(sigma, bounds, cap=math.inf):
    K = sigma.shape[0]
    cands = _candidates(bounds)
    forms = _row_forms(cands, sigma)
    keep = forms <= cap
    cands, forms = cands[keep], forms[keep]
    scale = max(float(np.max(forms, initial=0.0)), 1e-300)
    keys = [(round(f / scale, 9), tuple(-v for v in r)) for f, r in zip(forms, cands.tolist())]
    order = sorted(range(len(cands)), key=keys.__getitem__)
    # greedy over an ordered matroid minimizes the largest selected weight
    chosen = []
    for idx in order:
        trial = chosen + [cands[idx]]
        if np.linalg.matrix_rank(np.array(trial, dtype=float)) == len(trial):
            chosen = trial
            if len(chosen) == K:
                break
    if len(chosen) < K:
        raise ModAdcError("no nonsingular integer matrix in the search box")
    return np.array(chosen)


def if_exhaustive(sigma, bound=None):
    """Exact IF matrix by enumerating integer rows.

    With an explicit ``bound`` the search covers entries in ``[-bound, bound]``
    and is exact within that box only.  With ``bound=None`` the box is
    certified: every row of an optimal matrix has ``a^T sigma a <= t`` for
    the LLL objective ``t``, hence ``|a_i| <= sqrt(t * inv(sigma)_ii)``.
    Only for ``K <= 4``.
    """
    sigma = _check_sigma(sigma)
    K = sigma.shape[0]
    if K > 4:
        raise UnsupportedError(f"exhaustive IF search supports K <= 4, got K={K}")
    if bound is not None:
        if bound < 1:
            raise InvalidArgumentError(f"bound must be >= 1, got {bound}")
        A = _exhaustive(sigma, [int(bound)] * K)
    else:
        work = _regularized_cholesky_ok(sigma)
        t = if_lll(work).sigma_max ** 2 * (1 + 1e-9)
        inv_diag = np.diag(np.linalg.inv(work))
        bounds = [max(1, int(math.floor(math.sqrt(t * d)))) for d in inv_diag]
        A = _exhaustive(sigma, bounds, cap=t)
    return IfState.from_matrix(canonicalize(A, sigma), sigma)


def _regularized_cholesky_ok(sigma):
    try:
        np.linalg.cholesky(sigma)
        return sigma
    except np.linalg.LinAlgError:
        pass
    K = sigma.shape[0]
    eps = 1e-9 * max(np.trace(sigma), 1e-300) / K
    reg = sigma + eps * np.eye(K)
    try:
        np.linalg.cholesky(reg)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError("sigma is not positive definite after regularization") from exc
    return reg


def if_lll(sigma, lll_delta=0.99):
    """IF matrix from LLL reduction of the lattice with Gram matrix ``sigma``.

    The returned ``A`` is unimodular with rows in ascending form order.
    """
    if not 0.25 < lll_delta < 1:
        raise InvalidArgumentError(f"lll_delta must lie in (0.25, 1), got {lll_delta}")
    sigma = _check_sigma(sigma)
    work = _regularized_cholesky_ok(sigma)
    U = _kernels.lll_gram(np.ascontiguousarray(work), float(lll_delta))
    return IfState.from_matrix(canonicalize(U, sigma), sigma)


def if_decode(w, ifs: IfState, cfg: ModConfig):
    """Estimate the prediction error from the folded residual ``w``.

    ``g = [A w] mod delta`` is centered and mapped back through ``A^-1``.
    Exact whenever every ``|a_k . e| < delta/2``.
    """
    delta = cfg.delta
    t = ifs.A_float @ np.asarray(w, dtype=float)
    g = t - delta * np.floor(t / delta + 0.5)
    return ifs.A_inv @ g


def overload_bound(r_if, bits, K):
    """Union bound ``min(1, 2K exp(-1.5 * 2**(2(R - r_if))))`` on overload."""
    expo = -1.5 * 2.0 ** (2.0 * (bits - r_if))
    return min(1.0, 2.0 * K * math.exp(expo))
