import math

import numpy as np
import pytest

from blindloop import Loop, small_cfg
from modadc.decoders import (
    BlindConfig,
    BlindDecoder,
    oracle_run,
    oracle_step,
    overload_detect,
    resolution_update,
    startup_overload_detect,
)
from modadc.integer_forcing import if_identity, if_lll, overload_bound
from modadc.modchannel import ModConfig, mod_reduce
from modadc.prediction import lmmse_filter
from modadc.sources import AutocorrSeq


def ar1_stream(n, a, alpha, seed):
    from scipy import signal

    rng = np.random.default_rng(seed)
    x = signal.lfilter([1.0], [1.0, -a], rng.standard_normal(n + 500) * math.sqrt(1 - a * a))[500:]
    v = alpha * x - rng.random(n)
    return x[:, None], v[:, None]


def test_oracle_step_exact_prediction():
    cfg = ModConfig(8)
    H = np.array([[1.0]])
    past = np.array([[10.0]])
    v = H @ (past[0] + 0.5) - 0.5
    out = oracle_step(mod_reduce(v, cfg.delta), past, H, if_identity(np.eye(1)), 1.0, cfg)
    np.testing.assert_allclose(out, v, atol=1e-12)


def test_oracle_scalar_ar_zero_errors():
    cfg = ModConfig(8)
    acorr = AutocorrSeq(np.array([[[1.0]], [[0.9]]]))
    alpha = 4.0
    H, S = lmmse_filter(acorr, alpha, 1)
    ifs = if_identity(S)
    assert cfg.bits - ifs.r_if >= 3
    assert overload_bound(ifs.r_if, cfg.bits, 1) < 1e-30
    _, v = ar1_stream(10**5, 0.9, alpha, seed=4)
    y = mod_reduce(v, cfg.delta)
    v_hat = oracle_run(y, v, H, ifs, cfg)
    assert np.all(np.isnan(v_hat[:1]))
    assert np.max(np.abs(v_hat[1:] - v[1:])) <= 1e-6


def test_oracle_step_and_run_agree():
    cfg = ModConfig(6)
    acorr = AutocorrSeq(np.array([[[1.0]], [[0.9]], [[0.75]]]))
    H, S = lmmse_filter(acorr, 3.0, 2)
    ifs = if_identity(S)
    _, v = ar1_stream(200, 0.9, 3.0, seed=1)
    y = mod_reduce(v, cfg.delta)
    batch = oracle_run(y, v, H, ifs, cfg)
    for n in range(2, 200):
        one = oracle_step(y[n], v[n - 1::-1][:2], H, ifs, 3.0, cfg)
        np.testing.assert_allclose(one, batch[n], atol=1e-9)


def test_oracle_adversarial_overload():
    cfg = ModConfig(4)
    H = np.zeros((1, 1))
    v = np.array([9.0])
    out = oracle_step(mod_reduce(v, cfg.delta), np.array([[0.0]]), H, if_identity(np.eye(1)), 1.0, cfg)
    err = out[0] - v[0]
    assert err != 0 and err % cfg.delta == 0


def test_resolution_update_examples():
    new, f, up = resolution_update(1.0, 10.0, 7.0, 1024.0, 0.95, 1.0, 1e9)
    assert up and new == pytest.approx(10 / 0.95) and f == pytest.approx(1 / 0.95)
    new, f, up = resolution_update(100.0, 10.0, 7.0, 1024.0, 0.95, 1.0, 1e9)
    assert not up and new == pytest.approx(9.5) and f == pytest.approx(0.95)
    # equality is treated as no increase
    _, _, up = resolution_update(512.0 / 7.0 * (1 + 1e-15), 10.0, 7.0, 1024.0, 0.95, 1.0, 1e9)
    assert not up
    _, _, up = resolution_update(2.5, 10.0, 2.0, 10.0, 0.95, 1.0, 1e9)
    assert not up
    # clamps
    new, f, _ = resolution_update(100.0, 1.0, 7.0, 1024.0, 0.95, 1.0, 1e9)
    assert new == 1.0 and f == 1.0
    new, _, _ = resolution_update(0.0, 1e9, 7.0, 1024.0, 0.95, 1.0, 1e9)
    assert new == 1e9


def test_overload_detect_examples():
    n = math.e**3
    sig2 = 4.0
    assert overload_detect(np.array([100 * 2.0]), np.array([sig2 * 10]), 10, n)
    thr = math.sqrt(2 * sig2 * math.log(n))
    assert thr == pytest.approx(2.0 * math.sqrt(6))
    assert not overload_detect(np.array([0.999 * thr]), np.array([sig2 * 10]), 10, n)
    assert overload_detect(np.array([1.001 * thr]), np.array([sig2 * 10]), 10, n)
    assert not overload_detect(np.zeros(3), np.ones(3), 5, 1000)
    assert not overload_detect(np.array([1e9]), np.ones(1), 0, 1000)


def test_startup_rule():
    assert not startup_overload_detect(np.array([1e6]), np.array([31.0]), 31)
    assert startup_overload_detect(np.array([10.01]), np.array([32.0]), 32)
    assert not startup_overload_detect(np.array([9.99]), np.array([32.0]), 32)


def test_overload_detect_false_positive_rate():
    rng = np.random.default_rng(8)
    K, N = 10, 10**5
    vb = rng.standard_normal((N, K))
    sq = np.zeros(K)
    hits = 0
    for n in range(1, N + 1):
        if overload_detect(vb[n - 1], sq, n - 1, n):
            hits += 1
        sq += vb[n - 1] ** 2
    assert hits / N <= 1e-3


def test_blind_config_defaults():
    bc = BlindConfig().resolved(10, 1024.0)
    assert bc.Ls == 75 and bc.Ns == 750
    assert bc.alpha0 == pytest.approx(1024 / 50)


def _loop_with_records(N=20000, steps=None, **kw):
    lp = Loop(small_cfg(N=N, **kw))
    lp.keep_records = True
    lp.run(N if steps is None else steps)
    return lp


@pytest.fixture(scope="module")
def clean_loop():
    return _loop_with_records()


def test_startup_is_degenerate_modulo(clean_loop):
    lp = clean_loop
    Ns = lp.dec.params.Ns
    assert not lp.bad[:Ns].any()
    assert np.all(lp.alpha[:Ns] == lp.dec.params.alpha0)


def test_exact_recovery_and_error_decomposition(clean_loop):
    lp = clean_loop
    ok = ~lp.bad
    assert ok.mean() > 0.999
    for (rec, v, x), good in zip(lp.records, ok):
        assert rec.x_hat.tobytes() == ((rec.v_hat + 0.5) / rec.alpha).tobytes()
        if good:
            assert np.max(np.abs(rec.v_hat - v)) <= 1e-6
            z = v - rec.alpha * x
            np.testing.assert_allclose(rec.x_hat - x, (z + 0.5) / rec.alpha, atol=1e-9)


def test_mse_matches_dither_floor(clean_loop):
    lp = clean_loop
    tail = slice(len(lp.records) * 3 // 4, None)
    sq = [np.mean((r.x_hat - x) ** 2) for r, _, x in lp.records[tail]]
    want = np.mean(1.0 / (12.0 * lp.alpha[tail] ** 2))
    assert abs(10 * math.log10(np.mean(sq) / want)) < 0.5


def test_alpha_steps_between_resets(clean_loop):
    lp = clean_loop
    Ls = lp.dec.params.Ls
    da = lp.dec.params.delta_alpha
    a = lp.alpha
    changes = np.flatnonzero(a[1:] != a[:-1]) + 1
    last = 0
    for c in changes:
        if lp.flag[c - 1]:
            assert a[c] == lp.dec.params.alpha0
        else:
            ratio = a[c] / a[c - 1]
            assert math.isclose(ratio, da, rel_tol=1e-12) or math.isclose(ratio, 1 / da, rel_tol=1e-12)
            assert c - last >= Ls
        last = c


def test_causality_prefix():
    # same input stream, decoding stopped early
    full = _loop_with_records(N=3000)
    part = _loop_with_records(N=3000, steps=1800)
    assert len(part.records) == 1800
    for (a, _, _), (b, _, _) in zip(full.records, part.records):
        assert a.v_hat.tobytes() == b.v_hat.tobytes()
        assert a.alpha == b.alpha and a.overload_flagged == b.overload_flagged


def test_reset_examples():
    dec = BlindDecoder(2, ModConfig(10), BlindConfig(p=2, alpha0=3.0))
    dec.predictor.H[:] = 1.5
    dec._reset()
    assert dec.alpha == 3.0
    np.testing.assert_array_equal(dec.predictor.H, 1.5)
    dec.adapt.alpha = 24.0
    dec._reset()
    assert dec.alpha == 3.0
    np.testing.assert_array_equal(dec.predictor.H, 1.5 / 8)
    assert dec.adapt.g_count == 0 and dec.adapt.refresh_counter == 0
    assert dec.adapt.startup_left == dec.params.Ns
