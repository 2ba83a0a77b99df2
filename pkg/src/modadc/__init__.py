"""Simulation laboratory for banks of parallel modulo ADCs.

Oracle and blind spatiotemporal unfolding decoders, integer-forcing
solvers, LMS prediction, seeded source models and an experiment harness.
"""
from ._kernels import BACKEND
from .decoders import BlindConfig, BlindDecoder, DecodeRecord, oracle_run, oracle_step
from .errors import (
    ConfigError,
    DivergenceError,
    IllConditionedError,
    InvalidArgumentError,
    ModAdcError,
    UnsupportedError,
    WarmupError,
)
from .integer_forcing import IfState, if_decode, if_exhaustive, if_identity, if_lll, overload_bound
from .modchannel import ModConfig, channel_sample, mod_center, mod_reduce, mod_shift, modadc_quantize
from .prediction import PredictorState, lmmse_filter
from .sources import AutocorrSeq, SourceModel, analytic_autocorr, design_bandpass, generate

__version__ = "0.1.0"
