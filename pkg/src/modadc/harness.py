"""Seeded experiment orchestration, baselines, metrics and CSV output."""
from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .decoders import BlindConfig, BlindDecoder, oracle_run
from .errors import ConfigError, DivergenceError, ModAdcError
from .integer_forcing import if_identity, if_lll
from .modchannel import ModConfig, mod_reduce
from .prediction import lmmse_filter
from .sources import DEFAULT_BANDS, SourceModel, analytic_autocorr, generate

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

MODES = ("oracle", "blind", "tmod", "standard_adc")
SWEEP_COLUMNS = (
    "mode", "R", "snr_db", "mse_db", "err_prob", "final_alpha", "resets", "seed", "slb_db", "error",
)
TRACE_COLUMNS = ("n", "alpha", "sq_err", "overload", "reset")


@dataclass
class ExperimentConfig:
    mode: str = "blind"
    N: int = 100_000
    seed: int = 1
    R: int = 10
    K: int = 10
    Ks: int = 4
    snr_db: float = 30.0
    bands: tuple | None = None
    fir_len: int = 255
    p: int = 30
    mu0: float = 0.2
    kappa: float = 7.0
    delta_alpha: float = 0.95
    Ls: int | None = None
    Ns: int | None = None
    alpha0_factor: float = 5.0
    alpha0: float | None = None
    lll_delta: float = 0.99
    oracle_alpha: float | None = None
    oracle_margin_bits: float | None = None
    loading: float = 4.0
    sweep_modes: tuple = ("blind", "tmod", "standard_adc")
    sweep_R: tuple = ()
    sweep_snr_db: tuple = ()
    workers: int = 1

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        for m in self.sweep_modes:
            if m not in MODES:
                raise ConfigError(f"unknown sweep mode {m!r}")
        positive = {
            "N": self.N, "K": self.K, "Ks": self.Ks, "p": self.p, "mu0": self.mu0,
            "kappa": self.kappa, "alpha0_factor": self.alpha0_factor, "loading": self.loading,
            "fir_len": self.fir_len, "workers": self.workers,
        }
        for name, val in positive.items():
            if not val > 0:
                raise ConfigError(f"{name} must be positive, got {val!r}")
        if not 1 <= self.R <= 62:
            raise ConfigError(f"R must lie in [1, 62], got {self.R}")
        if not 0 < self.delta_alpha < 1:
            raise ConfigError(f"delta_alpha must lie in (0, 1), got {self.delta_alpha}")
        if self.bands is None and self.Ks > len(DEFAULT_BANDS):
            raise ConfigError(f"Ks={self.Ks} needs explicit bands")
        if self.bands is not None and len(self.bands) != self.Ks:
            raise ConfigError(f"{len(self.bands)} bands given for Ks={self.Ks}")
        for name in ("alpha0", "oracle_alpha", "Ls", "Ns"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ConfigError(f"{name} must be positive, got {val!r}")
        return self

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def to_dict(self):
        return dataclasses.asdict(self)


# TOML section -> {toml key: field name}
_SECTIONS = {
    "experiment": {"mode": "mode", "N": "N", "seed": "seed", "R": "R", "workers": "workers"},
    "source": {"K": "K", "Ks": "Ks", "snr_db": "snr_db", "bands": "bands", "fir_len": "fir_len"},
    "decoder": {
        "p": "p", "mu0": "mu0", "kappa": "kappa", "delta_alpha": "delta_alpha", "Ls": "Ls",
        "Ns": "Ns", "alpha0_factor": "alpha0_factor", "alpha0": "alpha0", "lll_delta": "lll_delta",
    },
    "oracle": {"alpha": "oracle_alpha", "margin_bits": "oracle_margin_bits"},
    "baseline": {"loading": "loading"},
    "sweep": {"modes": "sweep_modes", "R": "sweep_R", "snr_db": "sweep_snr_db"},
}


def config_from_dict(doc):
    kw = {}
    for section, body in doc.items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, val in body.items():
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            kw[_SECTIONS[section][key]] = val
    for name in ("sweep_modes", "sweep_R", "sweep_snr_db"):
        if name in kw:
            kw[name] = tuple(kw[name])
    if kw.get("bands") is not None:
        kw["bands"] = tuple(tuple(b) for b in kw["bands"])
    try:
        cfg = ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def load_config(path):
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return config_from_dict(doc)


@dataclass
class RunSummary:
    mode: str
    R: int
    snr_db: float
    seed: int
    mse_db: float
    err_prob: float
    final_alpha: float
    resets: int
    settled_alpha: float = float("nan")
    n_errors: int = 0
    rate: float = field(init=False)

    def __post_init__(self):
        self.rate = float(self.R)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class RunResult:
    summary: RunSummary
    alpha: np.ndarray | None = None
    sq_err: np.ndarray | None = None
    overload: np.ndarray | None = None
    reset: np.ndarray | None = None
    model: SourceModel | None = None

    def trace_rows(self):
        for n in range(self.alpha.shape[0]):
            yield (n + 1, self.alpha[n], self.sq_err[n], int(self.overload[n]), int(self.reset[n]))


def derive_seed(master_seed, *parts):
    """Order-free per-point seed: a hash of the master seed and the point's labels."""
    text = "|".join([str(int(master_seed))] + [repr(p) for p in parts])
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


def build_model(cfg: ExperimentConfig):
    """Source model; the mixing matrix depends on the master seed only."""
    return SourceModel.random(
        cfg.K, cfg.Ks, cfg.snr_db, seed=derive_seed(cfg.seed, "gamma"),
        bands=cfg.bands, fir_len=cfg.fir_len,
    )


def blind_config(cfg: ExperimentConfig, if_mode="lll"):
    delta = 2.0**cfg.R
    alpha0 = cfg.alpha0 if cfg.alpha0 is not None else delta / (cfg.alpha0_factor * cfg.K)
    return BlindConfig(
        p=cfg.p, kappa=cfg.kappa, delta_alpha=cfg.delta_alpha, Ls=cfg.Ls, Ns=cfg.Ns,
        alpha0=alpha0, mu0=cfg.mu0, lll_delta=cfg.lll_delta, if_mode=if_mode,
    )


def sigma_max_at(acorr, alpha, p, if_mode="lll", lll_delta=0.99):
    _, sigma = lmmse_filter(acorr, alpha, p)
    ifs = if_lll(sigma, lll_delta) if if_mode == "lll" else if_identity(sigma)
    return ifs.sigma_max


def theoretical_alpha(acorr, p, R, kappa, if_mode="lll", lll_delta=0.99, lo=1e-3, hi=1e7):
    """Resolution where ``kappa * sigma_max(alpha) = delta / 2`` (bisection in log alpha)."""
    target = 0.5 * 2.0**R / kappa
    a, b = math.log(lo), math.log(hi)
    if sigma_max_at(acorr, lo, p, if_mode, lll_delta) >= target:
        raise ModAdcError("no resolution satisfies the steady-state condition")
    for _ in range(60):
        mid = 0.5 * (a + b)
        if sigma_max_at(acorr, math.exp(mid), p, if_mode, lll_delta) < target:
            a = mid
        else:
            b = mid
    return math.exp(a)


def alpha_for_margin(acorr, p, R, margin_bits, lll_delta=0.99):
    """Largest alpha with ``R - R_IF(alpha) >= margin_bits``."""
    kappa = 0.5 * 2.0**margin_bits
    return theoretical_alpha(acorr, p, R, kappa, "lll", lll_delta)


def mse_db(sq_err):
    return 10.0 * math.log10(float(np.mean(sq_err)))


def _tail(N):
    return max(1, N // 4)


def standard_adc_quantize(x, R, loading, std):
    """Mid-rise uniform quantizer with ``2**R`` levels over ``+-loading*std``, saturating."""
    x = np.asarray(x, dtype=float)
    std = np.broadcast_to(np.asarray(std, dtype=float), x.shape[-1:])
    top = loading * std
    levels = 2**R
    q = 2.0 * top / levels
    idx = np.clip(np.floor((x + top) / q), 0, levels - 1)
    return (idx + 0.5) * q - top


def standard_adc_analytic_mse(R, loading, std):
    """Granular plus clipping distortion of :func:`standard_adc_quantize` on N(0, std^2)."""
    top = loading * std
    q = 2.0 * top / 2**R
    a = np.arange(2**R) * q - top
    b = a + q
    m = a + q / 2
    dist = stats.norm(scale=std)
    s2 = std * std
    Fa, Fb, fa, fb = dist.cdf(a), dist.cdf(b), dist.pdf(a), dist.pdf(b)
    # E[(X - m)^2 ; a < X < b] for a centered normal, per cell
    m1 = s2 * (fa - fb)
    m2 = s2 * (Fb - Fa) - s2 * (b * fb - a * fa)
    granular = float(np.sum(m2 - 2 * m * m1 + m * m * (Fb - Fa)))
    edge = top - q / 2
    clip, _ = integrate.quad(lambda t: (t - edge) ** 2 * dist.pdf(t), top, np.inf)
    return granular + 2.0 * clip


def standard_adc_baseline(x, R, loading, std, cfg: ExperimentConfig | None = None):
    """Per-channel standard ADC distortion on ``x``; returns a :class:`RunSummary`."""
    xq = standard_adc_quantize(x, R, loading, std)
    sq = np.mean((xq - x) ** 2, axis=1)
    tail = sq[-_tail(len(sq)):]
    return RunSummary(
        mode="standard_adc", R=R, snr_db=cfg.snr_db if cfg else float("nan"),
        seed=cfg.seed if cfg else 0, mse_db=mse_db(tail), err_prob=0.0,
        final_alpha=float("nan"), resets=0,
    ), sq


def _signal(cfg, model):
    src_seed = derive_seed(cfg.seed, "source", cfg.mode, cfg.R, cfg.snr_db)
    chan_seed = derive_seed(cfg.seed, "channel", cfg.mode, cfg.R, cfg.snr_db)
    x = generate(model, cfg.N, seed=src_seed)
    u = np.random.default_rng(chan_seed).random(x.shape)
    return x, u, src_seed


def run_oracle(cfg: ExperimentConfig, model=None, x=None, u=None, alpha=None):
    model = model or build_model(cfg)
    if x is None:
        x, u, _ = _signal(cfg, model)
    acorr = analytic_autocorr(model, cfg.p)
    if alpha is None:
        if cfg.oracle_alpha is not None:
            alpha = cfg.oracle_alpha
        elif cfg.oracle_margin_bits is not None:
            alpha = alpha_for_margin(acorr, cfg.p, cfg.R, cfg.oracle_margin_bits, cfg.lll_delta)
        else:
            alpha = theoretical_alpha(acorr, cfg.p, cfg.R, cfg.kappa, "lll", cfg.lll_delta)
    mcfg = ModConfig(cfg.R)
    H, sigma = lmmse_filter(acorr, alpha, cfg.p)
    ifs = if_lll(sigma, cfg.lll_delta)
    v = alpha * x - u
    y = mod_reduce(v, mcfg.delta)
    v_hat = oracle_run(y, v, H, ifs, mcfg)
    p = cfg.p
    v_hat[:p] = v[:p]  # warmup: the oracle is handed the first p samples
    bad = np.max(np.abs(v_hat - v), axis=1) > 1e-6
    x_hat = (v_hat + 0.5) / alpha
    sq = np.mean((x_hat - x) ** 2, axis=1)
    N = cfg.N
    summary = RunSummary(
        mode="oracle", R=cfg.R, snr_db=cfg.snr_db, seed=cfg.seed,
        mse_db=mse_db(sq[max(p, N - _tail(N)):]), err_prob=float(bad[p:].mean()) if N > p else 0.0,
        final_alpha=float(alpha), resets=0, settled_alpha=float(alpha), n_errors=int(bad.sum()),
    )
    return RunResult(summary, np.full(N, alpha), sq, np.zeros(N, bool), np.zeros(N, bool), model)


def run_blind(cfg: ExperimentConfig, model=None, x=None, u=None, if_mode="lll", on_refresh=None,
              inject=None):
    """Closed-loop blind decoding: the decoder's alpha drives the next channel sample.

    ``inject`` maps a time index to an additive disturbance on that input frame.
    """
    model = model or build_model(cfg)
    if x is None:
        x, u, _ = _signal(cfg, model)
    mcfg = ModConfig(cfg.R)
    bc = blind_config(cfg, if_mode)
    std = np.sqrt(model.channel_variance())
    bc.alpha_max = 2.0**40 / (6.0 * float(std.max()))
    dec = BlindDecoder(cfg.K, mcfg, bc)
    dec.on_refresh = on_refresh
    N = x.shape[0]
    alpha = np.empty(N)
    v_true = np.empty_like(x)
    v_hat = np.empty_like(x)
    x_hat = np.empty_like(x)
    flag = np.zeros(N, bool)
    delta = mcfg.delta
    status = None
    for n in range(N):
        a = dec.alpha
        xn = x[n] if inject is None or n not in inject else x[n] + inject[n]
        v = a * xn - u[n]
        y = v - delta * np.floor(v / delta)
        try:
            rec = dec.step(y)
        except DivergenceError as exc:
            status = exc
            N = n
            break
        alpha[n] = a
        flag[n] = rec.overload_flagged
        v_true[n] = v
        v_hat[n] = rec.v_hat
        x_hat[n] = rec.x_hat
    alpha, flag = alpha[:N], flag[:N]
    bad = np.max(np.abs(v_hat[:N] - v_true[:N]), axis=1, initial=0.0) > 1e-6
    sq = np.mean((x_hat[:N] - x[:N]) ** 2, axis=1)
    tail = slice(N - _tail(N), N)
    log_a = np.log(alpha[tail]) if N else np.array([np.nan])
    summary = RunSummary(
        mode="blind" if if_mode == "lll" else "tmod", R=cfg.R, snr_db=cfg.snr_db, seed=cfg.seed,
        mse_db=mse_db(sq[tail]) if N else float("nan"),
        err_prob=float(bad.mean()) if N else 0.0, final_alpha=float(dec.alpha), resets=dec.resets,
        settled_alpha=float(np.exp(np.mean(log_a))), n_errors=int(bad.sum()),
    )
    result = RunResult(summary, alpha, sq, flag, flag.copy(), model)
    if status is not None:
        status.partial = result
        raise status
    return result


def run_experiment(cfg: ExperimentConfig, trace_path=None, on_refresh=None):
    """Run one configured experiment; optionally stream the per-step trace to CSV."""
    cfg.validate()
    model = build_model(cfg)
    try:
        if cfg.mode == "standard_adc":
            x, _, _ = _signal(cfg, model)
            summary, sq = standard_adc_baseline(
                x, cfg.R, cfg.loading, np.sqrt(model.channel_variance()), cfg
            )
            N = len(sq)
            result = RunResult(summary, np.full(N, np.nan), sq, np.zeros(N, bool),
                               np.zeros(N, bool), model)
        elif cfg.mode == "oracle":
            result = run_oracle(cfg, model)
        else:
            result = run_blind(cfg, model, if_mode="lll" if cfg.mode == "blind" else "identity",
                               on_refresh=on_refresh)
    except DivergenceError as exc:
        if trace_path is not None and getattr(exc, "partial", None) is not None:
            write_trace(exc.partial, trace_path)
        raise
    if trace_path is not None:
        write_trace(result, trace_path)
    return result


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_trace(result: RunResult, path):
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in result.trace_rows():
            w.writerow([_fmt(v) for v in row])


def manifest(cfg: ExperimentConfig, model: SourceModel):
    return {
        "config": cfg.to_dict(),
        "gamma_seed": model.seed,
        "gamma": model.gamma.tolist(),
        "bands": [list(b) for b in model.bands],
        "noise_var": model.noise_var,
    }


def _sweep_point(args):
    cfg, mode, R, snr = args
    point = cfg.replace(mode=mode, R=int(R), snr_db=float(snr))
    seed = derive_seed(cfg.seed, "source", mode, point.R, point.snr_db)
    row = {"mode": mode, "R": int(R), "snr_db": float(snr), "seed": seed, "slb_db": None,
           "error": None}
    try:
        s = run_experiment(point).summary
        row.update(mse_db=s.mse_db, err_prob=s.err_prob, final_alpha=s.final_alpha, resets=s.resets)
    except (ModAdcError, np.linalg.LinAlgError) as exc:
        log.warning("sweep point %s R=%s snr=%s failed: %s", mode, R, snr, exc)
        row.update(mse_db=None, err_prob=None, final_alpha=None, resets=None,
                   error=f"{type(exc).__name__}: {exc}")
    return row


def rd_sweep(cfg: ExperimentConfig, csv_path=None, workers=None):
    """Run every (mode, R, SNR) grid point independently; returns a list of row dicts."""
    Rs = cfg.sweep_R or (cfg.R,)
    snrs = cfg.sweep_snr_db or (cfg.snr_db,)
    modes = cfg.sweep_modes
    if not modes:
        raise ConfigError("sweep needs at least one mode")
    grid = [(cfg, m, R, s) for m in modes for R in Rs for s in snrs]
    workers = workers or cfg.workers
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, grid))
    else:
        rows = [_sweep_point(g) for g in grid]
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            write_sweep(rows, fh)
    return rows


def write_sweep(rows, fh):
    w = _writer(fh)
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in SWEEP_COLUMNS])


def format_table(rows):
    out = io.StringIO()
    out.write(f"{'mode':<13}{'R':>4}{'SNR':>7}{'MSE dB':>10}{'P(err)':>11}{'alpha':>11}{'resets':>8}\n")
    for r in rows:
        if r.get("error"):
            out.write(f"{r['mode']:<13}{r['R']:>4}{r['snr_db']:>7.1f}  failed: {r['error']}\n")
            continue
        out.write(
            f"{r['mode']:<13}{r['R']:>4}{r['snr_db']:>7.1f}{r['mse_db']:>10.2f}"
            f"{r['err_prob']:>11.2e}{r['final_alpha']:>11.4g}{r['resets']:>8d}\n"
        )
    return out.getvalue()


def emit_signal_dump(model: SourceModel, N, path, seed=None):
    """Write ``N`` raw input frames as CSV, one row per sample, 17 significant digits."""
    x = generate(model, N, seed=seed) if N > 0 else np.empty((0, model.K))
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow([f"x{k + 1}" for k in range(model.K)])
        for row in x:
            w.writerow([repr(float(v)) for v in row])
    return x


def read_signal_dump(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) <= 1:
        return np.empty((0, len(rows[0]) if rows else 0))
    return np.array([[float(v) for v in r] for r in rows[1:]])


def read_matrix_csv(path):
    """Square matrix from CSV; a non-numeric first row is taken as a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        rows = rows[1:]
    M = np.array([[float(v) for v in r] for r in rows])
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError(f"{path}: expected a square matrix, got shape {M.shape}")
    return M


def write_matrix_csv(M, path):
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        for row in np.atleast_2d(M):
            w.writerow([_fmt(v) for v in row])


def save_manifest(cfg, model, path):
    with open(path, "w") as fh:
        json.dump(manifest(cfg, model), fh, indent=2, sort_keys=True)
        fh.write("\n")
