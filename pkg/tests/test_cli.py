import csv
import json
import subprocess
import sys

import pytest

from delaysync.cli import main, parse_overrides
from delaysync.csvio import emit_csv, format_value, histogram_rows
from delaysync.errors import ConfigError
from delaysync.experiments import ExperimentSpec, resolve_params, run_experiment


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_emit_csv_header_only_and_one_row(tmp_path):
    p = emit_csv([], ("a", "b"), tmp_path / "e.csv")
    assert p.read_text() == "a,b\n"
    p = emit_csv([(1, 0.123456789)], ("a", "b"), tmp_path / "o.csv")
    assert p.read_text() == "a,b\n1,0.123457\n"
    with pytest.raises(ValueError):
        emit_csv([(1,)], ("a", "b"), tmp_path / "w.csv")


def test_format_value_cases():
    assert format_value(True) == "1"
    assert format_value(2.0) == "2"
    assert format_value(float("nan")) == "nan"
    assert format_value(1234567.891) == "1.23457e+06"


def test_histogram_rows_grid():
    rows = histogram_rows([0.5, 1.5, 1.7, 9.0], 1.0, 0, 3)
    assert rows == [(0.0, 1.0, 1), (1.0, 2.0, 2), (2.0, 3.0, 0)]


def test_overrides_parse_as_yaml():
    assert parse_overrides(["n_sigma=3", "noiseless=true", "node_values=[4, 5]"]) == {
        "n_sigma": 3, "noiseless": True, "node_values": [4, 5]}
    with pytest.raises(ConfigError):
        parse_overrides(["nonsense"])


def test_exit_codes(tmp_path, capsys):
    assert main(["warp_drive", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["sweep_nsigma", "--iterations", "many"])
    assert exc.value.code == 2
    assert main(["sweep_nsigma", "--iterations", "50", "--set", "bogus=1", "--out", str(tmp_path)]) == 4
    assert main(["sweep_nsigma", "--iterations", "0", "--out", str(tmp_path)]) == 4
    assert main(["sweep_nsigma", "--iterations", "50", "--set", "n_sigma_values=[-1]",
                 "--out", str(tmp_path)]) == 4
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["sweep_nsigma", "--iterations", "50", "--out", str(blocker / "sub")]) == 3
    assert main(["sweep_nsigma", "--iterations", "50", "--out", str(tmp_path / "ok")]) == 0


def test_config_file_and_seed_precedence(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("sim:\n  num_nodes: 4\n  seed: 99\nscheduler:\n  n_sigma: 3\n"
                   "experiment:\n  drop_values: [0.0, 0.02]\n")
    params, seed = resolve_params(ExperimentSpec("sweep_drop", 10, config_path=cfg))
    assert seed == 99 and params["num_nodes"] == 4 and params["n_sigma"] == 3
    _, seed = resolve_params(ExperimentSpec("sweep_drop", 10, seed=5, config_path=cfg))
    assert seed == 5
    bad = tmp_path / "bad.yaml"
    bad.write_text("sim:\n  warp: 9\n")
    with pytest.raises(ConfigError):
        resolve_params(ExperimentSpec("sweep_drop", 10, config_path=bad))
    js = tmp_path / "c.json"
    js.write_text(json.dumps({"experiment": {"node_values": [4, 6]}}))
    params, _ = resolve_params(ExperimentSpec("sweep_nodes", 10, config_path=js))
    assert params["node_values"] == [4, 6]


def test_sweep_output_shape(tmp_path):
    run_experiment(ExperimentSpec("sweep_drop", 2000, seed=1, output_dir=tmp_path,
                                  overrides={"drop_values": [0.0, 0.03]}))
    rows = read(tmp_path / "sweep_drop.csv")
    assert [r["drop_rate"] for r in rows] == ["0", "0", "0.03", "0.03"]
    assert {r["mode"] for r in rows} == {"Adaptive", "NaiveWaitAll"}
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 1 and "sweep_drop.csv" in manifest["files"]
    assert manifest["version"]


def test_parallel_sweep_matches_serial(tmp_path):
    base = dict(overrides={"node_values": [4, 6, 8]}, seed=3)
    run_experiment(ExperimentSpec("sweep_nodes", 1000, output_dir=tmp_path / "a", **base))
    base["overrides"] = dict(base["overrides"], jobs=2)
    run_experiment(ExperimentSpec("sweep_nodes", 1000, output_dir=tmp_path / "b", **base))
    assert (tmp_path / "a/sweep_nodes.csv").read_bytes() == (tmp_path / "b/sweep_nodes.csv").read_bytes()


def test_write_batches(tmp_path):
    run_experiment(ExperimentSpec("sweep_nsigma", 30, output_dir=tmp_path,
                                  overrides={"write_batches": True, "n_sigma_values": [3]}))
    rows = read(tmp_path / "sweep_nsigma_batches_adaptive_3.csv")
    assert len(rows) == 30 and list(rows[0]) == [
        "anchor_ms", "trigger_ms", "deadline_ms", "full_match", "n_normal", "n_late"]


def test_plot_flag_writes_png(tmp_path):
    res = run_experiment(ExperimentSpec("minmax_delay", 200, output_dir=tmp_path, plot=True))
    assert (tmp_path / "minmax_delay.png").stat().st_size > 0
    assert any(p.suffix == ".png" for p in res.files)


def test_module_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "delaysync", "fusion_bench", "--iterations", "1",
         "--set", "num_frames=2", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "fusion_bench.csv").exists()
