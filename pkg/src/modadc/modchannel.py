"""Modular arithmetic and the (R, alpha) mod-ADC channel.

The decoders work with the real-valued channel y = [alpha*x + z] mod 2^R,
z ~ Unif((-1, 0]).  The integer word :func:`modadc_quantize` is provided
for wire-level tests only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "ModConfig",
    "mod_reduce",
    "mod_center",
    "modadc_quantize",
    "channel_sample",
    "mod_shift",
]


@dataclass(frozen=True)
class ModConfig:
    """Bit budget of one mod-ADC; ``delta`` is the modulo range 2**bits."""

    bits: int
    delta: float = field(init=False)

    def __post_init__(self):
        if isinstance(self.bits, bool) or int(self.bits) != self.bits:
            raise InvalidArgumentError(f"bits must be an integer, got {self.bits!r}")
        if not 1 <= self.bits <= 62:
            raise InvalidArgumentError(f"bits must lie in [1, 62], got {self.bits}")
        object.__setattr__(self, "bits", int(self.bits))
        object.__setattr__(self, "delta", float(2 ** int(self.bits)))


def _check_delta(delta):
    d = np.asarray(delta, dtype=float)
    if not np.all(np.isfinite(d) & (d > 0)):
        raise InvalidArgumentError(f"delta must be positive and finite, got {delta!r}")


def mod_reduce(x, delta):
    """Return ``x - delta*floor(x/delta)``, in ``[0, delta)``.

    Works elementwise on arrays; scalars in give a float back.
    """
    _check_delta(delta)
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("mod_reduce requires finite input")
    out = arr - delta * np.floor(arr / delta)
    # x/delta can underflow to -0, and x just below a multiple of delta can
    # round up to delta itself
    out = np.where(out < 0, out + delta, out)
    out = np.where(out >= delta, out - delta, out)
    if out.ndim == 0:
        return float(out)
    return out


def mod_center(x, delta):
    """Centered modulo, result in ``[-delta/2, delta/2)``."""
    _check_delta(delta)
    half = 0.5 * delta
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("mod_center requires finite input")
    out = mod_reduce(arr + half, delta) - half
    return out


def modadc_quantize(x, alpha, cfg: ModConfig, dither=0.0) -> int:
    """Output word of an (R, alpha) mod-ADC: ``floor(alpha*x - dither) mod 2**R``.

    ``dither`` must lie in (-1, 0].  With ``dither = 0`` this is the plain
    ``[floor(alpha*x)] mod 2**R`` converter.
    """
    for name, val in (("x", x), ("alpha", alpha), ("dither", dither)):
        if not math.isfinite(val):
            raise InvalidArgumentError(f"{name} must be finite, got {val!r}")
    if alpha <= 0:
        raise InvalidArgumentError(f"alpha must be positive, got {alpha!r}")
    if not -1.0 < dither <= 0.0:
        raise InvalidArgumentError(f"dither must lie in (-1, 0], got {dither!r}")
    word = math.floor(alpha * x - dither)
    return int(word % (1 << cfg.bits))


def channel_sample(x, alpha, cfg: ModConfig, rng: np.random.Generator, dither=None):
    """Pass one frame (or a ``(N, K)`` block) through the stochastic channel.

    Returns ``(y, v)`` where ``v = alpha*x + z`` is the unfolded signal and
    ``y = v mod 2**R``.  ``v`` is ground truth for bookkeeping; decoders must
    not read it.  ``dither`` forces ``z`` (used by tests); otherwise
    ``z = -u`` with ``u ~ U[0, 1)``.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("channel input must be finite")
    if not (np.isfinite(alpha) and alpha > 0):
        raise InvalidArgumentError(f"alpha must be positive, got {alpha!r}")
    if dither is None:
        z = -rng.random(x.shape)
    else:
        z = np.broadcast_to(np.asarray(dither, dtype=float), x.shape)
    v = alpha * x + z
    y = mod_reduce(v, cfg.delta)
    return np.asarray(y, dtype=float), v


def mod_shift(y, cfg: ModConfig):
    """Modulo-shifted observation: centered mod of ``y`` in ``[0, delta)``."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(y >= cfg.delta) or not np.all(np.isfinite(y)):
        raise InvalidArgumentError("mod_shift input must lie in [0, delta)")
    return mod_center(y, cfg.delta)
