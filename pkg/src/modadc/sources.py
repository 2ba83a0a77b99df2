"""Correlated vector sources: noisy mixtures of bandlimited Gaussian signals.

``x_n = gamma @ s_n + xi_n`` where every ``s_k`` is white Gaussian noise passed
through a unit-energy windowed-sinc bandpass filter, and ``xi_n`` is white
Gaussian noise with variance ``noise_var``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import InvalidArgumentError

__all__ = [
    "DEFAULT_BANDS",
    "SourceModel",
    "AutocorrSeq",
    "design_bandpass",
    "generate",
    "analytic_autocorr",
    "snr_db_to_noise_var",
]

DEFAULT_BANDS = ((0.055, 0.105), (0.155, 0.205), (0.255, 0.305), (0.355, 0.405))
DEFAULT_FIR_LEN = 255


def snr_db_to_noise_var(snr_db):
    """SNR is defined as 1/noise_var for unit-variance sources."""
    return 10.0 ** (-float(snr_db) / 10.0)


def design_bandpass(band, length=DEFAULT_FIR_LEN):
    """Hamming-windowed sinc bandpass with unit energy.

    ``band`` is ``(f_lo, f_hi)`` in cycles/sample.  ``f_lo <= 0`` gives a
    lowpass, ``f_hi >= 0.5`` a highpass and the full band ``(0, 0.5)`` an
    impulse.  Unit energy makes the response to unit white noise unit
    variance.
    """
    f_lo, f_hi = float(band[0]), float(band[1])
    if length % 2 != 1 or length < 63:
        raise InvalidArgumentError(f"filter length must be odd and >= 63, got {length}")
    if f_hi - f_lo < 0.01:
        raise InvalidArgumentError(f"band {band!r} is narrower than 0.01")
    lo = f_lo > 0.0
    hi = f_hi < 0.5
    if not lo and not hi:
        taps = np.zeros(length)
        taps[length // 2] = 1.0
        return taps
    if lo and hi:
        taps = signal.firwin(length, [f_lo, f_hi], pass_zero=False, window="hamming", fs=1.0)
    elif hi:
        taps = signal.firwin(length, f_hi, window="hamming", fs=1.0)
    else:
        taps = signal.firwin(length, f_lo, pass_zero=False, window="hamming", fs=1.0)
    return taps / np.sqrt(np.sum(taps**2))


@dataclass
class SourceModel:
    """Mixing matrix, source bands and noise level of the input process."""

    gamma: np.ndarray
    noise_var: float
    bands: tuple = DEFAULT_BANDS
    fir_len: int = DEFAULT_FIR_LEN
    seed: int = 0
    taps: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.gamma = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        self.bands = tuple((float(a), float(b)) for a, b in self.bands)
        if len(self.bands) != self.gamma.shape[1]:
            raise InvalidArgumentError(
                f"{len(self.bands)} bands for {self.gamma.shape[1]} sources"
            )
        for f_lo, f_hi in self.bands:
            if not 0.0 <= f_lo < f_hi <= 0.5:
                raise InvalidArgumentError(f"band ({f_lo}, {f_hi}) outside [0, 0.5]")
        if not self.noise_var >= 0:
            raise InvalidArgumentError(f"noise_var must be non-negative, got {self.noise_var}")
        self.taps = np.stack([design_bandpass(b, self.fir_len) for b in self.bands])

    @property
    def K(self):
        return self.gamma.shape[0]

    @property
    def Ks(self):
        return self.gamma.shape[1]

    @classmethod
    def random(cls, K, Ks, snr_db, seed=0, bands=None, fir_len=DEFAULT_FIR_LEN):
        """Draw the mixing matrix i.i.d. standard Gaussian from ``seed``.

        ``bands`` defaults to the first ``Ks`` entries of :data:`DEFAULT_BANDS`.
        """
        if bands is None:
            if Ks > len(DEFAULT_BANDS):
                raise InvalidArgumentError(f"no default bands for Ks={Ks}; pass bands")
            bands = DEFAULT_BANDS[:Ks]
        rng = np.random.default_rng(seed)
        gamma = rng.standard_normal((K, Ks))
        return cls(gamma, snr_db_to_noise_var(snr_db), bands, fir_len, seed)

    def channel_variance(self):
        """Per-channel variance of ``x``."""
        return np.sum(self.gamma**2, axis=1) + self.noise_var


@dataclass
class AutocorrSeq:
    """``R[l][i, j] = E[x^i_n x^j_{n-l}]`` for ``l = 0..L``; shape ``(L+1, K, K)``."""

    R: np.ndarray

    @property
    def max_lag(self):
        return self.R.shape[0] - 1

    def at(self, lag):
        """Autocorrelation at any integer lag, using ``R[-l] = R[l].T``."""
        if lag < 0:
            return self.R[-lag].T
        return self.R[lag]


def generate(model: SourceModel, n_samples, seed=None, return_sources=False):
    """Draw ``n_samples`` frames of ``x``; returns an ``(n_samples, K)`` array.

    The first ``fir_len`` filtered samples are discarded so the output is
    stationary.  ``seed`` defaults to ``model.seed``.
    """
    n_samples = int(n_samples)
    if n_samples < 0:
        raise InvalidArgumentError("n_samples must be non-negative")
    rng = np.random.default_rng(model.seed if seed is None else seed)
    T = model.fir_len
    white = rng.standard_normal((model.Ks, n_samples + T - 1 + T))
    s = np.empty((n_samples, model.Ks))
    for k in range(model.Ks):
        full = np.convolve(white[k], model.taps[k], mode="valid")
        s[:, k] = full[T:]
    noise = rng.standard_normal((n_samples, model.K)) * np.sqrt(model.noise_var)
    x = s @ model.gamma.T + noise
    if return_sources:
        return x, s
    return x


def analytic_autocorr(model: SourceModel, max_lag):
    """Exact autocorrelation of ``x`` up to ``max_lag`` from the FIR taps."""
    max_lag = int(max_lag)
    if max_lag < 0:
        raise InvalidArgumentError("max_lag must be non-negative")
    T = model.fir_len
    rs = np.zeros((model.Ks, max_lag + 1))
    for k in range(model.Ks):
        h = model.taps[k]
        for lag in range(min(max_lag, T - 1) + 1):
            rs[k, lag] = np.dot(h[: T - lag], h[lag:])
    G = model.gamma
    R = np.einsum("ik,kl,jk->lij", G, rs, G)
    R[0] += model.noise_var * np.eye(model.K)
    return AutocorrSeq(R)
