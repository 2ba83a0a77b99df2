"""Linear prediction of the unfolded vector process.

Two routes to the same K x Kp matrix filter:

* :func:`lmmse_filter` solves the block-Toeplitz normal equations from known
  autocorrelations (oracle decoder).
* :class:`PredictorState` learns it online with LMS on standardized past
  estimates (blind decoder).

Column ordering of every filter is ``[lag 1 | lag 2 | ... | lag p]``.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from . import _kernels
from .errors import DivergenceError, IllConditionedError, InvalidArgumentError, WarmupError
from .sources import AutocorrSeq

__all__ = ["DITHER_VAR", "unfolded_autocov", "lmmse_filter", "PredictorState", "default_mu"]

DITHER_VAR = 1.0 / 12.0
_MAX_COND = 1e13


def unfolded_autocov(acorr: AutocorrSeq, alpha, lag):
    """Autocovariance of ``v = alpha*x + z`` at ``lag``."""
    Rv = alpha**2 * acorr.at(lag)
    if lag == 0:
        Rv = Rv + DITHER_VAR * np.eye(Rv.shape[0])
    return Rv


def block_toeplitz(acorr: AutocorrSeq, alpha, p):
    """Covariance of the stacked past ``[v_{n-1}; ...; v_{n-p}]``."""
    K = acorr.R.shape[1]
    T = np.empty((K * p, K * p))
    for i in range(p):
        for j in range(p):
            # E[v_{n-1-i} v_{n-1-j}^T] = R_v[j - i]
            T[i * K:(i + 1) * K, j * K:(j + 1) * K] = unfolded_autocov(acorr, alpha, j - i)
    return T


def lmmse_filter(acorr: AutocorrSeq, alpha, p):
    """Optimal order-``p`` matrix predictor of ``v_n`` and its error covariance.

    Returns ``(H_opt, sigma_p)``.  ``H_opt`` acts on the mean-removed past
    ``v_[n] + 1/2``.  Raises :class:`IllConditionedError` when the
    block-Toeplitz covariance is numerically singular.
    """
    if p < 1:
        raise InvalidArgumentError(f"order p must be >= 1, got {p}")
    if acorr.max_lag < p:
        raise InvalidArgumentError(f"autocorrelation covers {acorr.max_lag} lags, need {p}")
    if not alpha > 0:
        raise InvalidArgumentError(f"alpha must be positive, got {alpha}")
    T = block_toeplitz(acorr, alpha, p)
    C = np.hstack([unfolded_autocov(acorr, alpha, lag) for lag in range(1, p + 1)])
    cond = np.linalg.cond(T)
    if not np.isfinite(cond) or cond > _MAX_COND:
        raise IllConditionedError(f"block-Toeplitz covariance has condition {cond:.3g}", cond)
    H = scipy.linalg.solve(T, C.T, assume_a="pos").T
    sigma = unfolded_autocov(acorr, alpha, 0) - H @ C.T
    sigma = 0.5 * (sigma + sigma.T)
    return H, sigma


def default_mu(mu0, K, p, power):
    """Normalized LMS step ``mu0 / (K*p*power)``."""
    return mu0 / (K * p * max(power, 1e-300))


class PredictorState:
    """LMS-adapted matrix filter plus the history of standardized estimates.

    The step size is ``mu0 / (K*p*P)`` with ``P`` the running mean square of
    the standardized estimates pushed so far.

    ``history`` is a flat ``K*p`` vector, newest frame first, so it is the
    regressor ``vec([vbar_{n-1} ... vbar_{n-p}])`` directly.
    """

    def __init__(self, K, p, mu0=0.2, H=None):
        self.K = int(K)
        self.p = int(p)
        self.mu0 = float(mu0)
        self.H = np.zeros((self.K, self.K * self.p)) if H is None else np.array(H, dtype=float)
        if self.H.shape != (self.K, self.K * self.p):
            raise InvalidArgumentError(f"H must be {self.K}x{self.K * self.p}, got {self.H.shape}")
        self.history = np.zeros(self.K * self.p)
        self.filled = 0
        # running mean of squared standardized entries, for the step size
        self._pow_sum = 0.0
        self._pow_cnt = 0

    @property
    def ready(self):
        return self.filled >= self.p

    @property
    def power(self):
        return self._pow_sum / self._pow_cnt if self._pow_cnt else 1.0

    @property
    def mu(self):
        return default_mu(self.mu0, self.K, self.p, self.power)

    def push(self, vbar, count_power=True):
        """Store a new standardized estimate as the lag-1 frame."""
        self.advance(vbar, None, count_power)

    def advance(self, vbar, err=None, count_power=True):
        """Optional LMS step with ``err`` on the current history, then push ``vbar``.

        ``count_power=False`` keeps ``vbar`` out of the step-size power estimate.
        """
        vbar = np.ascontiguousarray(vbar, dtype=float)
        if err is not None:
            if not self.ready:
                raise WarmupError(f"history holds {self.filled} of {self.p} frames")
            err = np.ascontiguousarray(err, dtype=float)
            if not math.isfinite(float(err.sum())):
                raise DivergenceError("non-finite prediction error in LMS update")
            _kernels.lms_push(self.H, self.mu, err, self.history, vbar)
        else:
            _kernels.push(self.history, vbar)
        self.filled = min(self.filled + 1, self.p)
        if count_power:
            self._pow_sum += float(vbar @ vbar) / self.K
            self._pow_cnt += 1

    def predict(self):
        """Linear estimate ``H @ history - 1/2`` of the next unfolded frame."""
        if not self.ready:
            raise WarmupError(f"history holds {self.filled} of {self.p} frames")
        return self.H @ self.history - 0.5

    def lms_update(self, err, mu=None):
        """Rank-one LMS step ``H += mu * err * history^T``."""
        if not self.ready:
            raise WarmupError(f"history holds {self.filled} of {self.p} frames")
        err = np.asarray(err, dtype=float)
        if not np.all(np.isfinite(err)):
            raise DivergenceError("non-finite prediction error in LMS update")
        self.H += (self.mu if mu is None else mu) * np.outer(err, self.history)

    def rescale(self, factor):
        """Scale the filter after a resolution change; history is untouched."""
        if not factor > 0:
            raise InvalidArgumentError(f"rescale factor must be positive, got {factor}")
        self.H *= factor

    def snapshot(self):
        return self.H.copy()
