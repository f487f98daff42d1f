import json
import subprocess
import sys

import pytest

from tinyrocket.cli import main
from tinyrocket.config import RunConfig

SMALL = """\
sampling_rate = 200
window_len = 80
feature_count = 84
train_count = 400
val_count = 40
test_count = 400
recording_seconds = 60.0
other_brand_recordings = 1
lambdas = [0.1, 1.0, 10.0]
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "small.toml").write_text(SMALL, encoding="utf-8")
    return d


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_help_and_bad_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    with pytest.raises(SystemExit) as exc:
        main(["train", "--bogus"])
    assert exc.value.code == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "tinyrocket", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "hyperscan" in proc.stdout


def test_config_bounds():
    assert RunConfig(sampling_rate=200, window_len=80, feature_count=84).window_len == 80
    with pytest.raises(ValueError, match="window_len"):
        RunConfig(window_len=300)
    with pytest.raises(ValueError, match="feature_count"):
        RunConfig(feature_count=100)
    with pytest.raises(ValueError, match="sampling_rate"):
        RunConfig(sampling_rate=5)


def test_config_file_window_300_rejected(workdir, capsys):
    bad = workdir / "bad.toml"
    bad.write_text("window_len = 300\n", encoding="utf-8")
    code, _, err = _run(capsys, "train", "--config", bad, "--out", workdir / "x.rklm")
    assert code == 1 and "window_len" in err


def test_train_quantize_eval_export(workdir, capsys):
    model = workdir / "m.rklm"
    code, out, _ = _run(capsys, "train", "--config", workdir / "small.toml", "--out", model, "--seed", 1)
    assert code == 0 and model.exists() and "validation F1" in out

    code, _, err = _run(capsys, "export", model)
    assert code == 1 and "quantize before export" in err

    code, out, _ = _run(capsys, "quantize", model, "--json")
    payload = json.loads(out)
    assert code == 0 and payload["s1"] == 11184 and payload["s2"] >= 1

    code, out, _ = _run(capsys, "eval", model, "--json")
    metrics = json.loads(out)
    assert code == 0 and metrics["agreement"]["agreement"] >= 0.99
    code, out, _ = _run(capsys, "eval", model)
    assert "agreement" in out

    header = workdir / "model.h"
    vectors = workdir / "v.rklv"
    code, out, _ = _run(capsys, "export", model, "--out", header, "--vectors", vectors, "--n-vectors", 20)
    assert code == 0 and header.read_text().count("static const") == 11
    assert vectors.read_bytes()[:4] == b"RKLV"


def test_export_unquantized_fails(workdir, capsys):
    model = workdir / "raw.rklm"
    assert _run(capsys, "train", "--config", workdir / "small.toml", "--out", model)[0] == 0
    code, _, err = _run(capsys, "export", model)
    assert code == 1 and "quantize before export" in err


def test_train_deterministic(workdir, capsys):
    a, b = workdir / "a.rklm", workdir / "b.rklm"
    for path in (a, b):
        _run(capsys, "train", "--config", workdir / "small.toml", "--out", path, "--seed", 4)
    assert a.read_bytes() == b.read_bytes()


def test_simulate_no_motion(workdir, capsys):
    code, out, _ = _run(capsys, "simulate", "--hours", 24, "--json")
    payload = json.loads(out)
    assert code == 0 and payload["average_power_uw"] < 15
    assert payload["inferences"] == 0
    code, out, _ = _run(capsys, "simulate", "--hours", 1)
    assert "average power" in out


def test_simulate_scenario_with_bundle(workdir, capsys):
    model = workdir / "sim.rklm"
    _run(capsys, "train", "--config", workdir / "small.toml", "--out", model)
    _run(capsys, "quantize", model)
    scenario = workdir / "s.json"
    scenario.write_text(json.dumps([{"t_start_s": 5, "t_end_s": 40, "activity": "drilling"}]))
    trace = workdir / "trace.csv"
    code, out, _ = _run(capsys, "simulate", "--scenario", scenario, "--bundle", model, "--out", trace, "--json")
    payload = json.loads(out)
    assert code == 0 and payload["inferences"] >= 4
    assert payload["runtime_s"] % 7 == 0
    assert trace.read_text().startswith("t_s,event,energy_uJ,cum_uJ,result")


def test_simulate_needs_input(capsys):
    assert _run(capsys, "simulate")[0] == 1


def test_gen_data_windows(workdir, capsys):
    out_dir = workdir / "data"
    code, out, _ = _run(capsys, "gen-data", "--config", workdir / "small.toml", "--format", "windows",
                        "--out", out_dir, "--json")
    assert code == 0 and json.loads(out)["windows"]["train"] == 400
    assert (out_dir / "train.rklw").exists()


def test_gen_data_csv_and_train_from_csv(workdir, capsys):
    out_dir = workdir / "csv"
    cfg = workdir / "tiny.toml"
    cfg.write_text(SMALL.replace("recording_seconds = 60.0", "recording_seconds = 50.0")
                   .replace("train_count = 400", "train_count = 100").replace("test_count = 400", "test_count = 50")
                   + "train_brand_recordings = 3\n", encoding="utf-8")
    code, out, _ = _run(capsys, "gen-data", "--config", cfg, "--out", out_dir, "--json")
    assert code == 0 and json.loads(out)["recordings"] == 3 + 5
    csv_cfg = workdir / "fromcsv.toml"
    csv_cfg.write_text(cfg.read_text() + f'data_dir = "{out_dir.as_posix()}"\n', encoding="utf-8")
    code, out, _ = _run(capsys, "train", "--config", csv_cfg, "--out", workdir / "csv.rklm")
    assert code == 0


def test_hyperscan(workdir, capsys):
    table = workdir / "scan.csv"
    code, out, _ = _run(capsys, "hyperscan", "--config", workdir / "small.toml", "--rates", "200",
                        "--windows", "80", "--features", "84,336", "--out", table, "--json")
    rows = json.loads(out)["rows"]
    assert code == 0 and len(rows) == 2
    assert rows[1]["parameter_bytes"] > rows[0]["parameter_bytes"]
    assert rows[1]["classifier_weight_bytes"] / rows[0]["classifier_weight_bytes"] == pytest.approx(4.0)
    assert table.read_text().splitlines()[0].startswith("sampling_rate")

    code, out, _ = _run(capsys, "hyperscan", "--config", workdir / "small.toml", "--json")
    assert len(json.loads(out)["rows"]) == 1
    assert _run(capsys, "hyperscan", "--rates", "")[0] == 1
