import csv
import json
import math

import numpy as np
import pytest

from modadc import cli, harness
from modadc.errors import ConfigError
from modadc.harness import (
    ExperimentConfig,
    config_from_dict,
    derive_seed,
    emit_signal_dump,
    load_config,
    read_signal_dump,
    standard_adc_analytic_mse,
    standard_adc_quantize,
)
from modadc.sources import SourceModel, generate

SMALL = """
[experiment]
mode = "{mode}"
N = {N}
seed = 4
R = 10
[source]
K = 3
Ks = 2
[decoder]
p = 6
mu0 = {mu0}
"""


def write_cfg(tmp_path, mode="blind", N=4000, mu0=0.2, name="c.toml"):
    path = tmp_path / name
    path.write_text(SMALL.format(mode=mode, N=N, mu0=mu0))
    return str(path)


def test_config_sections_round_trip(tmp_path):
    cfg = load_config(write_cfg(tmp_path))
    assert (cfg.mode, cfg.N, cfg.seed, cfg.K, cfg.Ks, cfg.p) == ("blind", 4000, 4, 3, 2, 6)
    doc = {"oracle": {"margin_bits": 4}, "baseline": {"loading": 3.0},
           "sweep": {"R": [6, 8], "modes": ["oracle"]}}
    cfg = config_from_dict(doc)
    assert cfg.oracle_margin_bits == 4 and cfg.loading == 3.0
    assert cfg.sweep_R == (6, 8) and cfg.sweep_modes == ("oracle",)


@pytest.mark.parametrize("doc", [
    {"experiment": {"mode": "fast"}},
    {"experiment": {"N": 0}},
    {"experiment": {"colour": 1}},
    {"nonsense": {}},
    {"decoder": {"delta_alpha": 1.5}},
    {"source": {"Ks": 9}},
    {"experiment": {"R": 70}},
])
def test_config_errors(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_malformed_and_missing_config(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[experiment\nN=")
    with pytest.raises(ConfigError):
        load_config(str(bad))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.toml"))


def test_derive_seed_is_order_free_and_distinct():
    a = derive_seed(1, "blind", 10, 30.0)
    assert a == derive_seed(1, "blind", 10, 30.0)
    assert len({a, derive_seed(2, "blind", 10, 30.0), derive_seed(1, "tmod", 10, 30.0),
                derive_seed(1, "blind", 8, 30.0)}) == 4


def test_standard_adc_geometry():
    q = 2 * 4.0 / 2**3
    out = standard_adc_quantize(np.zeros((5, 1)), 3, 4.0, 1.0)
    np.testing.assert_allclose(np.mean(out**2), (q / 2) ** 2)
    # saturation at the outermost levels
    out = standard_adc_quantize(np.array([[100.0], [-100.0]]), 3, 4.0, 1.0)
    np.testing.assert_allclose(out[:, 0], [4 - q / 2, -4 + q / 2])


def test_standard_adc_high_rate_limit():
    # loading 8 makes clipping negligible, leaving the granular q^2/12
    R = 16
    q = 2 * 8.0 / 2**R
    assert standard_adc_analytic_mse(R, 8.0, 1.0) == pytest.approx(q * q / 12, rel=1e-3)


@pytest.mark.parametrize("R, loading", [(10, 4.0), (4, 2.0), (3, 1.0)])
def test_standard_adc_matches_analytic(R, loading):
    x = np.random.default_rng(R).standard_normal((10**6, 1)) * 1.7
    mse = np.mean((standard_adc_quantize(x, R, loading, 1.7) - x) ** 2)
    assert mse == pytest.approx(standard_adc_analytic_mse(R, loading, 1.7), rel=0.05)


@pytest.mark.parametrize("R, loading, N", [(6, 4.0, 400000), (10, 3.0, 2000000)])
def test_run_standard_adc_mode_matches_analytic(R, loading, N):
    # the trailing window must hold enough clipped samples of the narrowband input
    cfg = ExperimentConfig(mode="standard_adc", N=N, K=3, Ks=2, R=R, loading=loading)
    res = harness.run_experiment(cfg)
    std = np.sqrt(res.model.channel_variance())
    want = np.mean([standard_adc_analytic_mse(R, loading, s) for s in std])
    got = 10 ** (res.summary.mse_db / 10)
    assert got == pytest.approx(want, rel=0.05)


def test_oracle_mode_error_free_with_margin():
    cfg = ExperimentConfig(mode="oracle", N=20000, K=3, Ks=2, R=8, p=8, oracle_margin_bits=4)
    res = harness.run_experiment(cfg)
    assert res.summary.err_prob == 0.0
    assert res.summary.mse_db == pytest.approx(
        10 * math.log10(1 / (12 * res.summary.final_alpha**2)), abs=0.3)


def test_dump_signal_shapes_and_round_trip(tmp_path):
    m = SourceModel.random(2, 2, 30, seed=3)
    empty = tmp_path / "e.csv"
    emit_signal_dump(m, 0, str(empty))
    assert empty.read_text() == "x1,x2\n"
    path = tmp_path / "s.csv"
    x = emit_signal_dump(m, 100, str(path), seed=5)
    rows = list(csv.reader(open(path)))
    assert len(rows) == 101 and all(len(r) == 2 for r in rows)
    back = read_signal_dump(str(path))
    assert back.tobytes() == x.tobytes()
    assert back.tobytes() == generate(m, 100, seed=5).tobytes()
    assert b"\r\n" not in path.read_bytes()


def test_cli_success_and_outputs(tmp_path, capsys):
    cfgp = write_cfg(tmp_path)
    trace = tmp_path / "t.csv"
    man = tmp_path / "m.json"
    rc = cli.main(["simulate", "--config", cfgp, "--trace", str(trace), "--manifest", str(man), "--json"])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["mode"] == "blind" and 0 <= summary["err_prob"] <= 1
    head = trace.read_text().splitlines()
    assert head[0] == "n,alpha,sq_err,overload,reset" and len(head) == 4001
    doc = json.loads(man.read_text())
    assert np.array(doc["gamma"]).shape == (3, 2)


def test_cli_seed_and_mode_flags(tmp_path, capsys):
    cfgp = write_cfg(tmp_path)
    assert cli.main(["simulate", "--config", cfgp, "--mode", "tmod", "--seed", "9", "--json",
                     "--samples", "2000"]) == 0
    s = json.loads(capsys.readouterr().out)
    assert (s["mode"], s["seed"]) == ("tmod", 9)


def test_cli_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[decoder]\nfoo = 1\n")
    assert cli.main(["simulate", "--config", str(bad)]) == 1
    assert cli.main(["simulate", "--config", str(tmp_path / "none.toml")]) == 1


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_cli_divergence_exit_code_keeps_partial_trace(tmp_path):
    cfgp = write_cfg(tmp_path, mu0=1000.0)
    trace = tmp_path / "t.csv"
    assert cli.main(["simulate", "--config", cfgp, "--trace", str(trace)]) == 2
    lines = trace.read_text().splitlines()
    assert lines[0].startswith("n,") and 1 < len(lines) < 4001


def test_cli_dump_signal(tmp_path):
    cfgp = write_cfg(tmp_path)
    out = tmp_path / "x.csv"
    assert cli.main(["dump-signal", "--config", cfgp, "--samples", "50", "--out", str(out)]) == 0
    assert read_signal_dump(str(out)).shape == (50, 3)


def test_cli_if_solve(tmp_path, capsys):
    path = tmp_path / "s.csv"
    harness.write_matrix_csv(np.array([[1.0, 0.9], [0.9, 1.0]]), str(path))
    assert cli.main(["if-solve", str(path), "--method", "exhaustive", "--bound", "3"]) == 0
    out = capsys.readouterr().out
    assert "sigma_max = 1" in out and "R_IF = 0" in out
    assert cli.main(["if-solve", str(path)]) == 0
    path.write_text("1,2,3\n4,5,6\n")
    assert cli.main(["if-solve", str(path)]) == 1


def test_sweep_isolation_and_csv(tmp_path):
    base = ExperimentConfig(N=3000, K=3, Ks=2, p=6, sweep_modes=("blind", "standard_adc"),
                            sweep_R=(8, 10))
    out = tmp_path / "sw.csv"
    rows = harness.rd_sweep(base, csv_path=str(out))
    solo = harness.rd_sweep(base.replace(sweep_modes=("blind",), sweep_R=(10,)))
    both = {(r["mode"], r["R"]): r for r in rows}
    assert both[("blind", 10)] == solo[0]
    header = out.read_text().splitlines()[0].split(",")
    assert header[:8] == ["mode", "R", "snr_db", "mse_db", "err_prob", "final_alpha", "resets", "seed"]
    assert len(rows) == 4 and all(r["error"] is None for r in rows)


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_sweep_records_failures_and_continues():
    base = ExperimentConfig(N=3000, K=3, Ks=2, p=6, mu0=1000.0,
                            sweep_modes=("blind", "standard_adc"))
    rows = harness.rd_sweep(base)
    assert rows[0]["error"].startswith("DivergenceError")
    assert rows[1]["error"] is None and rows[1]["mse_db"] is not None
    assert "failed" in harness.format_table(rows)


def test_sweep_parallel_matches_serial():
    base = ExperimentConfig(N=2000, K=3, Ks=2, p=6, sweep_modes=("blind", "tmod"),
                            sweep_R=(8, 10))
    assert harness.rd_sweep(base, workers=2) == harness.rd_sweep(base, workers=1)
