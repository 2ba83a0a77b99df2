"""Oracle and blind spatiotemporal modulo unfolding.

The oracle decoder knows the input statistics and the true past of the
unfolded signal.  The blind decoder knows neither: it learns the predictor
with LMS on its own standardized estimates, re-derives the integer-forcing
matrix from the empirical error covariance, raises the resolution parameter
while the transformed errors stay small, and falls back to ``alpha0`` when
an overload is detected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DivergenceError, InvalidArgumentError
from .integer_forcing import IfState, if_decode, if_identity, if_lll
from .modchannel import ModConfig, mod_center, mod_reduce
from .prediction import PredictorState

__all__ = [
    "DecodeRecord",
    "AdaptState",
    "BlindConfig",
    "BlindDecoder",
    "oracle_step",
    "oracle_run",
    "resolution_update",
    "overload_detect",
    "startup_overload_detect",
]


@dataclass
class DecodeRecord:
    n: int
    v_hat: np.ndarray
    x_hat: np.ndarray
    e_hat: np.ndarray
    alpha: float
    overload_flagged: bool = False
    reset_occurred: bool = False


def oracle_step(y, past_v, H_opt, ifs: IfState, alpha, cfg: ModConfig):
    """One step of oracle unfolding given the true past ``past_v`` (``p x K``, newest first).

    ``alpha`` is accepted for interface symmetry; the filter already encodes it.
    """
    past = np.asarray(past_v, dtype=float).reshape(-1)
    v_lmmse = H_opt @ (past + 0.5) - 0.5
    w = mod_reduce(np.asarray(y, dtype=float) - v_lmmse, cfg.delta)
    return v_lmmse + if_decode(w, ifs, cfg)


def oracle_run(y, v, H_opt, ifs: IfState, cfg: ModConfig):
    """Vectorized oracle decoding of a whole ``(N, K)`` stream.

    Sample ``n`` uses the true ``v[n-p:n]`` as its past.  The first ``p``
    rows have no full past and are returned as NaN.
    """
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    N, K = y.shape
    p = H_opt.shape[1] // K
    v_hat = np.full((N, K), np.nan)
    if N <= p:
        return v_hat
    # regressor rows: [v_{n-1}, ..., v_{n-p}] for n = p..N-1
    reg = np.hstack([v[p - 1 - j:N - 1 - j] for j in range(p)]) + 0.5
    v_lmmse = reg @ H_opt.T - 0.5
    w = y[p:] - v_lmmse
    w -= cfg.delta * np.floor(w / cfg.delta)
    t = w @ ifs.A_float.T
    g = t - cfg.delta * np.floor(t / cfg.delta + 0.5)
    v_hat[p:] = v_lmmse + g @ ifs.A_inv.T
    return v_hat


def resolution_update(sigma_max_hat, alpha, kappa, delta, delta_alpha, alpha0, alpha_max):
    """Resolution step; returns ``(new_alpha, filter_factor, increased)``.

    Increase by ``1/delta_alpha`` when ``kappa * sigma_max_hat < delta/2``,
    otherwise decrease by ``delta_alpha``; equality counts as a decrease.
    """
    up = kappa * sigma_max_hat < 0.5 * delta
    new = alpha / delta_alpha if up else alpha * delta_alpha
    new = min(max(new, alpha0), alpha_max)
    return new, new / alpha, up


def overload_detect(vbar_hat, sq_sum, count, n):
    """Outlier test ``|vbar^k| > sqrt(2 * var_k * ln n)`` for any channel.

    ``sq_sum`` / ``count`` is the running second moment of earlier clean
    standardized estimates.
    """
    if count < 1 or n < 2:
        return False
    var = np.asarray(sq_sum) / count
    thr = np.sqrt(2.0 * var * math.log(n))
    return bool(np.any(np.abs(vbar_hat) > thr))


def startup_overload_detect(vbar_hat, sq_sum, count, kappa_s=10.0, min_count=32):
    """Conservative transition-phase rule: flag beyond ``kappa_s`` running RMS.

    Silent until ``min_count`` clean samples have been accumulated.
    """
    if count < min_count:
        return False
    rms = np.sqrt(np.asarray(sq_sum) / count)
    return bool(np.any(np.abs(vbar_hat) > kappa_s * rms))


@dataclass
class BlindConfig:
    """Tunables of the blind decoder; defaults match the reference-scale setup (K=10, R=10)."""

    p: int = 30
    kappa: float = 7.0
    delta_alpha: float = 0.95
    Ls: int | None = None
    Ns: int | None = None
    alpha0: float | None = None
    alpha_max: float = 1e9
    mu0: float = 0.2
    lll_delta: float = 0.99
    if_mode: str = "lll"
    kappa_s: float = 10.0

    def resolved(self, K, delta):
        """Copy with ``Ls = 2.5p``, ``Ns = 10 Ls`` and ``alpha0 = delta/(5K)`` filled in."""
        Ls = self.Ls if self.Ls is not None else int(round(2.5 * self.p))
        Ns = self.Ns if self.Ns is not None else 10 * Ls
        a0 = self.alpha0 if self.alpha0 is not None else delta / (5.0 * K)
        out = BlindConfig(**{**self.__dict__, "Ls": Ls, "Ns": Ns, "alpha0": a0})
        out.validate()
        return out

    def validate(self):
        if self.p < 1:
            raise InvalidArgumentError("p must be >= 1")
        if not 0 < self.delta_alpha < 1:
            raise InvalidArgumentError("delta_alpha must lie in (0, 1)")
        if self.kappa <= 0 or self.mu0 <= 0:
            raise InvalidArgumentError("kappa and mu0 must be positive")
        if self.Ls is not None and self.Ls < 1:
            raise InvalidArgumentError("Ls must be >= 1")
        if self.if_mode not in ("lll", "identity"):
            raise InvalidArgumentError(f"unknown if_mode {self.if_mode!r}")


@dataclass
class AdaptState:
    """Resolution-control and overload-detection state."""

    alpha: float
    alpha0: float
    delta_alpha: float
    kappa: float
    Ls: int
    Ns: int
    K: int
    g_window: np.ndarray = field(init=False)
    g_count: int = 0
    g_pos: int = 0
    since_update: int = 0
    startup_left: int = 0
    vbar_sq_sum: np.ndarray = field(init=False)
    vbar_count: int = 0
    cov_sum: np.ndarray = field(init=False)
    cov_weight: float = 0.0
    refresh_counter: int = 0

    def __post_init__(self):
        self.g_window = np.zeros((self.Ls, self.K))
        self.vbar_sq_sum = np.zeros(self.K)
        self.cov_sum = np.zeros((self.K, self.K))

    def push_g(self, g):
        self.g_window[self.g_pos] = g
        self.g_pos = (self.g_pos + 1) % self.Ls
        self.g_count = min(self.g_count + 1, self.Ls)

    def clear_window(self):
        self.g_count = 0
        self.g_pos = 0
        self.since_update = 0

    def sigma_max_hat(self):
        g = self.g_window[: self.g_count]
        return float(np.sqrt(np.max(np.mean(g * g, axis=0))))

    def sigma_hat(self):
        if self.cov_weight <= 0:
            return None
        S = self.cov_sum / self.cov_weight
        return 0.5 * (S + S.T)


class BlindDecoder:
    """Causal blind decoder for ``K`` parallel mod-ADCs.

    Feed one folded frame at a time to :meth:`step`; the returned record
    carries the estimate and the resolution parameter to use for it.  The
    caller must sample the *next* frame with :attr:`alpha`.
    """

    def __init__(self, K, cfg: ModConfig, params: BlindConfig | None = None):
        self.K = int(K)
        self.cfg = cfg
        self.params = (params or BlindConfig()).resolved(self.K, cfg.delta)
        P = self.params
        self.predictor = PredictorState(self.K, P.p, P.mu0)
        self.adapt = AdaptState(
            alpha=P.alpha0, alpha0=P.alpha0, delta_alpha=P.delta_alpha, kappa=P.kappa,
            Ls=P.Ls, Ns=P.Ns, K=self.K,
        )
        self.adapt.startup_left = max(P.p, P.Ns)
        self.ifs = if_identity(np.eye(self.K))
        self._A = np.ascontiguousarray(self.ifs.A_float)
        self._Ainv = np.ascontiguousarray(self.ifs.A_inv)
        self.lam = 1.0 - 1.0 / (4.0 * P.Ls)
        self.refresh_every = 4 * P.Ls
        self.n = 0
        self.resets = 0
        self.on_refresh = None

    @property
    def alpha(self):
        return self.adapt.alpha

    def _set_if(self, ifs):
        self.ifs = ifs
        self._A = np.ascontiguousarray(ifs.A_float)
        self._Ainv = np.ascontiguousarray(ifs.A_inv)
        if self.on_refresh is not None:
            self.on_refresh(self.n, ifs)

    def refresh_if(self):
        """Recompute the IF matrix from the current error-covariance estimate."""
        if self.params.if_mode != "lll":
            return
        S = self.adapt.sigma_hat()
        if S is None or self.adapt.cov_weight < 1e-3:
            return
        if not np.all(np.isfinite(S)):
            raise DivergenceError(f"error covariance diverged at n={self.n}")
        self._set_if(if_lll(S, self.params.lll_delta))

    def _reset(self):
        ad = self.adapt
        factor = ad.alpha0 / ad.alpha
        self.predictor.rescale(factor)
        ad.cov_sum *= factor * factor
        ad.alpha = ad.alpha0
        ad.clear_window()
        ad.refresh_counter = 0
        ad.startup_left = ad.Ns
        self.resets += 1

    def step(self, y):
        """Decode one folded frame ``y`` (values in ``[0, delta)``)."""
        ad = self.adapt
        pr = self.predictor
        delta = self.cfg.delta
        self.n += 1
        n = self.n
        alpha = ad.alpha
        y = np.ascontiguousarray(y, dtype=float)
        startup = ad.startup_left > 0
        e = g = None
        if startup or not pr.ready:
            v_hat = mod_center(y, delta)
            vbar = (v_hat + 0.5) / alpha
            if pr.ready:
                e = v_hat - pr.predict()
                g = self._A @ e
        else:
            v_hat, e, g, vbar = _kernels.unfold(pr.H, pr.history, y, self._A, self._Ainv, delta, alpha)
        # a non-finite filter surfaces here one step later, through the prediction
        if not math.isfinite(float(v_hat.sum()) + (float(e.sum()) if e is not None else 0.0)):
            raise DivergenceError(f"non-finite estimate at n={n}")

        if startup:
            flagged = startup_overload_detect(vbar, ad.vbar_sq_sum, ad.vbar_count, self.params.kappa_s)
        else:
            flagged = overload_detect(vbar, ad.vbar_sq_sum, ad.vbar_count, n)

        pr.advance(vbar, e if not flagged else None, count_power=not flagged)
        if not flagged:
            ad.vbar_sq_sum += vbar * vbar
            ad.vbar_count += 1

        record = DecodeRecord(n, v_hat, vbar, e, alpha, flagged, flagged)
        if flagged:
            self._reset()
            if startup:
                ad.startup_left = self.params.Ns
            return record

        if e is not None:
            _kernels.ew_cov_update(ad.cov_sum, e, self.lam)
            ad.cov_weight = self.lam * ad.cov_weight + (1.0 - self.lam)
            ad.refresh_counter += 1
            ad.push_g(g)
            ad.since_update += 1
            if ad.refresh_counter % self.refresh_every == 0:
                self.refresh_if()
        if startup:
            ad.startup_left -= 1
        elif ad.since_update >= ad.Ls and ad.g_count >= ad.Ls:
            new, factor, _ = resolution_update(
                ad.sigma_max_hat(), alpha, ad.kappa, delta, ad.delta_alpha, ad.alpha0,
                self.params.alpha_max,
            )
            ad.clear_window()
            if new != alpha:
                ad.alpha = new
                pr.rescale(factor)
                ad.cov_sum *= factor * factor
                self.refresh_if()
        return record
