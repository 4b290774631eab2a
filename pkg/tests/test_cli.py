import json

import pytest

from mmqueue.cli import main
from mmqueue.config import parse_config
from mmqueue.errors import ConfigError

MM1 = {"model": {"Q": [[0.0]], "lambda": [0.8], "c": [1.0], "service": [{"kind": "exp", "mu": 1.0}]}}

SMALL_DPS = {
    "dps": {
        "Q": [[-1.0, 1.0], [2.0, -2.0]],
        "lambda": [0.9, 1.2],
        "c": [1.0, 2.0],
        "alpha": [[0.7, 0.2], [0.3, 0.8]],
        "mu": [1.0, 2.0],
        "g": [2.0, 1.0],
    },
    "load": 0.5,
    "horizon": 100000,
    "seed": 3,
}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(tmp_path, mode, cfg, *extra):
    out = tmp_path / "out"
    code = main([mode, "--config", write(tmp_path, cfg), "--out", str(out), *extra])
    return code, out


def test_analyze_mm1(tmp_path):
    code, out = run(tmp_path, "analyze", MM1)
    assert code == 0
    rec = json.loads((out / "analyze.json").read_text())
    assert rec["rho_inf"] == pytest.approx(0.8)
    assert rec["ew_ht"] == pytest.approx(1.0)
    assert rec["law_mean"] == pytest.approx(1.0)
    assert rec["ew"] is None and rec["ew_note"] == "requires p0"
    header = (out / "analyze.csv").read_text().splitlines()[0]
    assert header == "run_id,quantity,class,state,value,half_width"


def test_analyze_with_p0(tmp_path):
    code, out = run(tmp_path, "analyze", {**MM1, "p0": [0.2]})
    assert code == 0
    assert json.loads((out / "analyze.json").read_text())["ew"] == pytest.approx(4.0)


def test_analyze_dps_example(tmp_path):
    cfg = {"dps": {"Q": [[0.0]], "lambda": [0.6], "c": [1.0], "alpha": [[1 / 3], [2 / 3]],
                   "mu": [1.0, 2.0], "g": [2.0, 1.0]}}
    code, out = run(tmp_path, "analyze", cfg)
    assert code == 0
    rec = json.loads((out / "analyze.json").read_text())
    assert rec["collapse"]["ex_mean"] == pytest.approx(1.5, rel=1e-12)
    assert rec["collapse"]["workload_mean"] == pytest.approx(0.75, rel=1e-12)


def test_config_error_exit(tmp_path):
    code, _ = run(tmp_path, "analyze", {"model": {"Q": [[0.0]]}})
    assert code == 2
    assert main(["analyze", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["analyze", "--config", str(bad)]) == 2


def test_mode_mismatch(tmp_path):
    code, _ = run(tmp_path, "simulate", {**MM1, "mode": "analyze"})
    assert code == 2


def test_model_error_exit(tmp_path):
    cfg = {"model": {"Q": [[-1.0, 1.0], [0.0, 0.0]], "lambda": [1, 1], "c": [1, 1],
                     "service": [{"kind": "exp", "mu": 1.0}] * 2}}
    code, _ = run(tmp_path, "analyze", cfg)
    assert code == 3
    unstable = {"model": {**MM1["model"], "lambda": [1.5]}}
    code, _ = run(tmp_path, "simulate", unstable)
    assert code == 3


def test_parse_config_checks():
    with pytest.raises(ConfigError):
        parse_config({**MM1, "n_values": [10, 10]}, "ht-sweep")
    with pytest.raises(ConfigError):
        parse_config({**MM1, "horizon": 10, "warmup": 20}, "simulate")
    with pytest.raises(ConfigError):
        parse_config({**MM1, "n_values": [1, 5]}, "ht-sweep")
    with pytest.raises(ConfigError):
        parse_config({**MM1, "batches": 5}, "simulate")
    with pytest.raises(ConfigError):
        parse_config({**MM1, "bogus": 1}, "simulate")
    cfg = parse_config(MM1, "ht-sweep")
    assert cfg.n_values == [10, 50, 100, 200]


def test_seed_precedence(tmp_path, monkeypatch, capsys):
    cfg = {**MM1, "horizon": 2000}
    monkeypatch.setenv("MMQUEUE_SEED", "17")
    monkeypatch.setenv("MMQUEUE_OUT", str(tmp_path / "env_out"))
    path = write(tmp_path, cfg)
    assert main(["simulate", "--config", path]) == 0
    assert json.loads((tmp_path / "env_out" / "simulate.json").read_text())["seed"] == 17
    assert main(["simulate", "--config", path, "--seed", "5"]) == 0
    assert json.loads((tmp_path / "env_out" / "simulate.json").read_text())["seed"] == 5
    monkeypatch.setenv("MMQUEUE_SEED", "x")
    assert main(["simulate", "--config", path]) == 2


def test_validate_passes(tmp_path):
    code, out = run(tmp_path, "validate", SMALL_DPS)
    rec = json.loads((out / "validate.json").read_text())
    assert code == 0, rec["checks"]
    names = {c["check"] for c in rec["checks"]}
    assert names == {"empty_probability_identity", "rate_conservation", "weighted_moments",
                     "work_conservation"}


def test_validate_single_state_ps(tmp_path):
    cfg = {"dps": {"Q": [[0.0]], "lambda": [0.6], "c": [1.0], "alpha": [[1.0]], "mu": [1.0], "g": [1.0]},
           "horizon": 200000, "seed": 1}
    code, _ = run(tmp_path, "validate", cfg)
    assert code == 0


def test_validate_detects_corrupted_mu(tmp_path):
    code, out = run(tmp_path, "validate", {**SMALL_DPS, "check_mu": [1.3, 2.0]})
    assert code == 4
    checks = {c["check"]: c["passed"] for c in json.loads((out / "validate.json").read_text())["checks"]}
    assert checks["rate_conservation"] is False


def test_validate_workload_model(tmp_path):
    code, _ = run(tmp_path, "validate", {**MM1, "load": 0.5, "horizon": 100000})
    assert code == 0


def test_sweep_partial_failure(tmp_path):
    # 20 samples cannot feed the distributional diagnostics, every N fails
    cfg = {**MM1, "n_values": [2, 3], "horizon": 50, "snapshots": 20}
    code, out = run(tmp_path, "ht-sweep", cfg)
    assert code == 4
    rec = json.loads((out / "ht_sweep.json").read_text())
    assert rec["partial"] is True
    assert [r["N"] for r in rec["rows"]] == [2, 3]
    assert all(r["status"].startswith("error") for r in rec["rows"])


def test_sweep_unstable_base_runs(tmp_path):
    cfg = {"model": {**MM1["model"], "lambda": [3.0]}, "n_values": [2, 4], "horizon": 2000,
           "snapshots": 2000}
    code, out = run(tmp_path, "ht-sweep", cfg)
    assert code == 0
    rows = json.loads((out / "ht_sweep.json").read_text())["rows"]
    assert rows[0]["predicted_mean"] == rows[1]["predicted_mean"] == pytest.approx(1.0)


@pytest.mark.parametrize("mode, cfg", [
    ("simulate", {**SMALL_DPS, "horizon": 20000}),
    ("ht-sweep", {**MM1, "n_values": [2, 4], "horizon": 2000, "snapshots": 2000, "replications": 2}),
    ("validate", {**SMALL_DPS, "horizon": 20000}),
])
def test_byte_identical(tmp_path, mode, cfg):
    path = write(tmp_path, cfg)
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        main([mode, "--config", path, "--out", str(out)])
        outs.append(out)
    for f in outs[0].iterdir():
        assert f.read_bytes() == (outs[1] / f.name).read_bytes()


@pytest.mark.parametrize("name", ["two_state_workload", "two_state_sweep", "two_class_dps",
                                  "two_class_dps_sweep"])
def test_shipped_configs_parse(name):
    from pathlib import Path

    raw = json.loads((Path(__file__).parent.parent / "configs" / f"{name}.json").read_text())
    for mode in ("analyze", "simulate", "ht-sweep", "validate"):
        parse_config(raw, mode)
