import csv
import json
import math
import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ramsey_noise import ConfigError, NumericalError, RamseyProtocol, ramsey_probability
from ramsey_noise import cli


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    lines = [line for line in path.read_text().splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


EC_SMALL = {
    "noise": {"kind": "exp_correlated", "D_corr": 6.51, "tau_corr": 20.0},
    "run": {"N": 4000, "R": 6, "seed": 3},
    "analysis": {"k_max": 8, "triple_lags": [[1, 4], [2, 5]]},
    "outputs": {"prefix": "ec"},
}


def test_compare_columns_and_summary(tmp_path):
    assert cli.main(["compare", write(tmp_path, EC_SMALL), "--out-dir", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "ec_compare.csv")
    assert list(rows[0]) == ["k", "r2_theory", "r2_sim", "r2_stderr", "r3_theory", "r3_sim", "r3_stderr"]
    assert len(rows) == 8 and rows[0]["r3_theory"] != "" and rows[5]["r3_theory"] == ""
    summary = json.loads((tmp_path / "o" / "ec_summary.json").read_text())
    assert summary["config"]["run"]["seed"] == 3
    assert summary["results"]["r1"]["theory"] == pytest.approx(0.826, abs=1e-3)
    assert "pass" in summary["results"]


def test_outputs_embed_config_and_seed(tmp_path):
    cli.main(["simulate", write(tmp_path, EC_SMALL), "--out-dir", str(tmp_path), "--seed", "9"])
    head = (tmp_path / "ec_estimates.csv").read_text().splitlines()[:2]
    assert head[0].startswith("# config: ")
    assert json.loads(head[0][len("# config: "):])["run"]["seed"] == 9
    assert head[1] == "# seed: 9"


def test_analytic_empty_noise(tmp_path):
    cfg = {"noise": {"kind": "none"}, "outputs": {"prefix": "empty"}}
    assert cli.main(["analytic", write(tmp_path, cfg), "--out-dir", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "empty_analytic.csv")
    assert len(rows) == 1 and rows[0]["quantity"] == "r1"
    assert float(rows[0]["value"]) == pytest.approx(float(ramsey_probability(0.0, RamseyProtocol())))


def test_reruns_are_byte_identical(tmp_path):
    cfg = {**EC_SMALL, "outputs": {"prefix": "ec", "save_bits": True}}
    path = write(tmp_path, cfg)
    for d in ("a", "b"):
        assert cli.main(["compare", path, "--out-dir", str(tmp_path / d)]) == 0
    for name in ("ec_compare.csv", "ec_compare_bits.npy", "ec_summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize(
    "cfg",
    [
        {"noise": {"kind": "bogus"}},
        {"noise": {"kind": "none"}, "extra": 1},
        {"noise": {"kind": "exp_correlated", "D_corr": 1.0}},
        {"noise": {"kind": "none"}, "protocol": {"t_R": 1.0, "t_cyc": 0.5}},
        {"noise": {"kind": "none"}, "run": {"dt": 0.5}},
        {"noise": {"kind": "none"}, "analysis": {"triple_lags": [[3, 2]]}},
        {"noise": {"kind": "tls", "tls": [{"V": 0.1, "W01": 0, "W10": 0}]}},
    ],
)
def test_invalid_configs_exit_2(tmp_path, cfg, capsys):
    assert cli.main(["simulate", write(tmp_path, cfg), "--out-dir", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_unreadable_config_exit_2(tmp_path):
    assert cli.main(["simulate", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert cli.main(["simulate", str(tmp_path / "bad.json")]) == 2


def test_resource_cap_exit_3(tmp_path, capsys):
    cfg = {"noise": {"kind": "tls_ladder", "n_tls": 2, "V": 0.2}, "run": {"N": 10**6, "R": 10**4}}
    assert cli.main(["simulate", write(tmp_path, cfg), "--out-dir", str(tmp_path)]) == 3
    assert "resource cap" in capsys.readouterr().err


def test_numerical_failure_exit_4(tmp_path, monkeypatch, capsys):
    def failing(sc, out):
        raise NumericalError("quadrature did not converge")

    monkeypatch.setitem(cli.RUNNERS, "analytic", failing)
    cfg = {"noise": {"kind": "none"}}
    assert cli.main(["analytic", write(tmp_path, cfg), "--out-dir", str(tmp_path)]) == 4
    assert "numerical failure" in capsys.readouterr().err


def test_scenario_mismatch_rejected(tmp_path):
    cfg = {**EC_SMALL, "scenario": "analytic"}
    assert cli.main(["compare", write(tmp_path, cfg), "--out-dir", str(tmp_path)]) == 2
    assert cli.main(["run", write(tmp_path, cfg), "--out-dir", str(tmp_path)]) == 0


def test_config_round_trip():
    cfg = cli.resolve_config(EC_SMALL, "compare")
    again = cli.resolve_config(json.loads(json.dumps(cfg)))
    assert again == cfg


noise_blocks = st.one_of(
    st.just({"kind": "none"}),
    st.builds(lambda n, v: {"kind": "tls_ladder", "n_tls": n, "V": v}, st.integers(0, 5), st.floats(-1, 1)),
    st.builds(lambda d, t: {"kind": "exp_correlated", "D_corr": d, "tau_corr": t}, st.floats(0, 10), st.floats(0.1, 100)),
    st.builds(lambda d, w, f0: {"kind": "one_over_f", "D_fl": d, "omega_min": w, "f0": f0},
              st.floats(0.01, 1), st.floats(1e-5, 1e-2), st.one_of(st.none(), st.floats(0.01, 1))),
)


@settings(max_examples=40, deadline=None)
@given(noise_blocks, st.integers(1, 10**6), st.integers(0, 2**31), st.sampled_from(cli.SCENARIOS))
def test_config_round_trip_property(noise, N, seed, scenario):
    raw = {"noise": noise, "run": {"N": N, "seed": seed}}
    cfg = cli.resolve_config(raw, scenario)
    assert cli.resolve_config(json.loads(json.dumps(cfg))) == cfg


def test_physical_invariants_checked_at_parse():
    with pytest.raises(ConfigError):
        cli.resolve_config({"noise": {"kind": "modulation", "a_p": 0.1, "omega_p": 0.0}})
    with pytest.raises(ConfigError):
        cli.resolve_config({"noise": {"kind": "composite", "parts": [
            {"kind": "white", "D_w": 1.0}, {"kind": "exp_correlated", "D_corr": 1.0, "tau_corr": 2.0}]}})


def test_distribution_scenario(tmp_path):
    cfg = {
        "noise": {"kind": "tls_ladder", "n_tls": 4, "V": 0.2, "n0": 7},
        "run": {"N": 10_000, "R": 4, "seed": 1},
        "analysis": {"M": 100},
        "outputs": {"prefix": "d"},
    }
    assert cli.main(["distribution", write(tmp_path, cfg), "--out-dir", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "d_distribution.csv")
    assert list(rows[0]) == ["m", "fraction", "p_sim", "p_binomial", "p_static"]
    assert sum(float(r["p_sim"]) for r in rows) == pytest.approx(1.0)


def test_spectrum_scenario(tmp_path):
    omega_p = 2 * math.pi * 0.01 / 3.0
    cfg = {
        "noise": {"kind": "modulation", "a_p": 0.1, "omega_p": omega_p},
        "run": {"N": 2000, "R": 4},
        "outputs": {"prefix": "s"},
    }
    assert cli.main(["spectrum", write(tmp_path, cfg), "--out-dir", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "s_summary.json").read_text())
    assert summary["scenario"] == "spectrum"


def test_reproduce_unknown_target():
    with pytest.raises(SystemExit):
        cli.main(["reproduce", "fig99"])
    with pytest.raises(ConfigError):
        cli.reproduce("fig99", "out")


def test_reproduce_small_target(tmp_path):
    assert cli.main(["reproduce", "fig3", "--cycles", "3000", "--reps", "4", "--out-dir", str(tmp_path)]) == 0
    index = json.loads((tmp_path / "fig3" / "index.json").read_text())
    assert index["target"] == "fig3" and "ec" in index["datasets"]
    assert (tmp_path / "fig3" / "ec_compare.csv").exists()


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, {"noise": {"kind": "none"}, "outputs": {"prefix": "m"}})
    proc = subprocess.run(
        [sys.executable, "-m", "ramsey_noise", "analytic", cfg, "--out-dir", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.strip().endswith("m_summary.json")
