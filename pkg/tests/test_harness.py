import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from knightian.harness.audit import audit_run, read_record
from knightian.harness.cli import EXIT_AUDIT, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, kr_query, main
from knightian.harness.config import ConfigError, parse_config
from knightian.harness.environments import AdversarialEnvironment, allowed_set, next_symbol_kr
from knightian.harness.runner import decile_stats, fmt, run_experiment
from knightian.models import CopyKernels, KernelModel, NoisySensorModel
from knightian.observation import AlphabetSchedule

SMALL = {
    "name": "small",
    "alphabet": 2,
    "horizon": 2,
    "models": [
        {"name": "copy", "kind": "kernel", "kernels": {"family": "copy", "steps": "odd"}},
        {"name": "sensor", "kind": "noisy-sensor", "p_min": 0.1, "steps": "even"},
    ],
    "ladder": [1, 2],
    "b_max": 8,
    "environment": {"kind": "adversarial-in-model"},
    "steps": 40,
    "seed": 3,
}


def write_cfg(tmp_path, raw, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw))
    return p


def with_(**kw):
    raw = json.loads(json.dumps(SMALL))
    raw.update(kw)
    return raw


# -- config --------------------------------------------------------------------------------


def test_parse_small_config():
    cfg = parse_config(with_())
    assert [m.name for m in cfg.models] == ["copy", "sensor"]
    assert cfg.ladder == (1, 2) and cfg.environment.params["candidates"] == 64


@pytest.mark.parametrize("bad", [
    {"stepz": 3},
    {"ladder": []},
    {"ladder": [0]},
    {"b_max": 0},
    {"steps": 0},
    {"seed": -1},
    {"solver": {"tau0": -1}},
    {"solver": {"speed": 1}},
    {"metric": {"kind": "hamming"}},
    {"models": [{"kind": "kernel", "kernels": {"family": "copy", "steps": "prime"}}]},
    {"models": [{"kind": "noisy-sensor", "p_min": 0.7}]},
    {"models": [{"kind": "mystery"}]},
    {"models": [{"name": "a", "kind": "noisy-sensor", "p_min": 0.1}] * 2},
    {"environment": {"kind": "adversarial-in-model", "models": ["nobody"]}},
    {"environment": {"kind": "kernel-sampler", "kernels": [{"family": "copy"}], "fallback": [0.6, 0.6]}},
    {"environment": {"kind": "explicit-measure"}},
    {"environment": {"kind": "weather"}},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        parse_config(with_(**bad))


def test_conflicting_models_rejected_for_adversary():
    # copy forces a point mass on odd steps, the sensor needs both symbols there
    raw = with_(models=[SMALL["models"][0], {"name": "s", "kind": "noisy-sensor", "p_min": 0.2, "steps": "all"}])
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_empty_model_bound_rejected():
    raw = with_(models=[{"name": "f", "kind": "finite-family", "length": 1, "vertices": []}],
                environment={"kind": "kernel-sampler", "kernels": [{"family": "copy"}]})
    with pytest.raises(ConfigError):
        parse_config(raw)


# -- environments ------------------------------------------------------------------------------


def test_adversary_stays_in_model_and_is_far():
    sched = AlphabetSchedule(2, 2)
    models = [KernelModel(CopyKernels("odd"), "copy"), NoisySensorModel(0.1, "even", "sensor")]
    env = AdversarialEnvironment(sched, models, 64)
    rng = np.random.default_rng(0)
    assert np.allclose(allowed_set(models, (1,), sched).point, [0, 1])

    class Step:
        class forecast:
            @staticmethod
            def next_symbol_probs():
                return np.array([0.7, 0.3])

    p = env.conditional((0, 0), Step, rng)
    assert env.violation((0, 0), p) == 0.0
    assert p[1] == pytest.approx(0.9)
    assert next_symbol_kr(p, [0.7, 0.3]) == pytest.approx(1.2 / 3)


# -- runs and records ---------------------------------------------------------------------------


def test_run_record_is_deterministic_and_audited(tmp_path):
    cfg = parse_config(with_())
    a = run_experiment(cfg).to_csv()
    b = run_experiment(parse_config(with_())).to_csv()
    assert a == b
    c = run_experiment(parse_config(with_()), seed=4).to_csv()
    assert c != a
    rec = run_experiment(cfg)
    csv_path, _ = rec.write(tmp_path)
    report = audit_run(csv_path)
    assert report.passed, [c.line() for c in report.checks if not c.passed]
    header, cols = read_record(csv_path)
    assert header[:4] == ["n", "symbol", "forecast_next", "forecast_weights"]
    assert len(cols["n"]) == 40


def test_float_format_roundtrips():
    x = 0.1 + 0.2
    assert float(fmt(x)) == x
    assert fmt(True) == "1" and fmt(np.int64(3)) == "3"


def test_decile_stats():
    s = decile_stats(np.r_[np.full(10, 1.0), np.full(80, 0.5), np.full(10, 0.2)])
    assert s["median_first_decile"] == 1.0 and s["median_last_decile"] == 0.2 and s["trend_ok"]


# -- CLI ------------------------------------------------------------------------------------------


def test_cli_simulate_and_audit(tmp_path, capsys):
    cfg = write_cfg(tmp_path, with_(steps=20))
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert (out / "run.csv").exists() and (out / "summary.json").exists() and (out / "audit.json").exists()
    assert json.loads((out / "audit.json").read_text())["passed"]
    printed = capsys.readouterr().out
    assert "PASS fairness" in printed
    assert main(["audit", "--record", str(out / "run.csv")]) == EXIT_OK


def test_cli_config_error_exit(tmp_path):
    cfg = write_cfg(tmp_path, with_(unknown=1))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_cli_audit_failure_exit(tmp_path):
    cfg = write_cfg(tmp_path, with_(steps=10))
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    lines = (out / "run.csv").read_text().splitlines()
    header = lines[1].split(",")
    row = next(csv.reader([lines[5]]))
    row[header.index("fairness")] = "0.5"
    buf = io.StringIO()
    csv.writer(buf, lineterminator="").writerow(row)
    lines[5] = buf.getvalue()
    (out / "run.csv").write_text("\n".join(lines) + "\n")
    assert main(["audit", "--record", str(out / "run.csv")]) == EXIT_AUDIT
    (out / "run.csv").write_text("not a record\n")
    assert main(["audit", "--record", str(out / "run.csv")]) == EXIT_CONFIG


def test_cli_solver_flag_exit(tmp_path):
    raw = with_(steps=12, ladder=[4, 8], solver={"tau0": 1e-14, "tau_floor": 1e-14, "max_iter": 1, "restarts": 1},
                audit={"max_flagged_fraction": 0.0})
    cfg = write_cfg(tmp_path, raw)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_SOLVER


def test_kr_query_binary_example():
    out = kr_query({"alphabet": 2, "horizon": 1, "mu": [0.8, 0.2],
                    "constraints": {"A_ub": [[0.6, -0.4]], "b_ub": [0.0]}})
    assert out["distance"] == pytest.approx(0.26666666666666666, abs=1e-9)
    assert out["completions"] == ["0", "1"]
    pair = kr_query({"alphabet": 2, "horizon": 2, "mu": [1, 0, 0, 0], "nu": [0, 1, 0, 0]})
    assert pair["distance"] == pytest.approx(2 * 0.5 / 2.5, abs=1e-9)
    model = kr_query({"alphabet": 2, "horizon": 2, "history": [0], "mu": [0.25] * 4,
                      "model": {"kind": "kernel", "kernels": {"family": "copy", "steps": "odd"}}})
    assert model["distance"] > 0
    with pytest.raises(ConfigError):
        kr_query({"mu": [0.5, 0.5]})
    with pytest.raises(ConfigError):
        kr_query({"mu": [0.5, 0.5], "nu": [0.5, 0.5], "constraints": {}})


def test_console_script_kr(tmp_path):
    res = subprocess.run([sys.executable, "-m", "knightian.harness.cli", "kr", "--config", "configs/kr_example.yaml"],
                         capture_output=True, text=True, cwd=str(Path(__file__).parents[1]))
    assert res.returncode == 0, res.stderr
    assert json.loads(res.stdout)["distance"] == pytest.approx(0.8 / 3, abs=1e-9)
