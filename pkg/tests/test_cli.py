import csv
import json

import pytest

from riskplan import cli
from riskplan.cli import apply_overrides, main
from riskplan.scenario import generate_random_map, loads_scenario, save_scenario


@pytest.fixture
def scenario(tmp_path):
    path = tmp_path / "map.json"
    save_scenario(generate_random_map(30, 30, 4, 2, seed=3), path)
    return path


def read_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0] == "# manifest: manifest.json"
    return list(csv.DictReader(line for line in lines if not line.startswith("#")))


def test_overrides_dotted_paths():
    data = apply_overrides({"params": {"lambda": 1.0}, "map": {"width": 3}}, ["params.lambda=5.0", "map.width=7"])
    assert data == {"params": {"lambda": 5.0}, "map": {"width": 7}}
    with pytest.raises(cli.InputError):
        apply_overrides({}, ["nonsense"])


def test_plan_writes_outputs(scenario, tmp_path):
    out = tmp_path / "o"
    assert main(["plan", "--scenario", str(scenario), "--out-dir", str(out), "params.lambda=5.0"]) == 0
    path_rows = read_rows(out / "path.csv")
    traj_text = (out / "trajectory.csv").read_text()
    assert "# objective: J=" in traj_text
    assert len(path_rows) > 2 and len(read_rows(out / "trajectory.csv")) > 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["params"]["lambda"] == 5.0
    assert manifest["outputs"] == ["path.csv", "trajectory.csv"]


def test_bad_scenario_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert main(["plan", "--scenario", str(bad), "--out-dir", str(tmp_path)]) == 2
    assert main(["plan", "--scenario", str(tmp_path / "missing.json"), "--out-dir", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_invalid_field_exit_2(scenario, tmp_path, capsys):
    assert main(["plan", "--scenario", str(scenario), "--out-dir", str(tmp_path), "params.v_m=-1"]) == 2
    assert "v_m" in capsys.readouterr().err


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as err:
        main(["batch", "--pipeline", "turbo"])
    assert err.value.code == 2


def test_walled_goal_exit_3(tmp_path):
    cfg = json.loads(_walled_scenario_text())
    path = tmp_path / "walled.json"
    path.write_text(json.dumps(cfg))
    assert main(["plan", "--scenario", str(path), "--out-dir", str(tmp_path)]) == 3
    assert main(["compare", "--scenario", str(path)]) == 3


def _walled_scenario_text():
    # goal in the corner, sealed off by three overlapping blocks
    walls = [
        {"id": 1, "class": "StationaryStructure", "mu": [17.0, 17.0], "sigma": [1.0, 1.0],
         "velocity": [0.0, 0.0], "weight": 1.0},
        {"id": 2, "class": "StationaryStructure", "mu": [19.0, 17.0], "sigma": [1.0, 1.0],
         "velocity": [0.0, 0.0], "weight": 1.0},
        {"id": 3, "class": "StationaryStructure", "mu": [17.0, 19.0], "sigma": [1.0, 1.0],
         "velocity": [0.0, 0.0], "weight": 1.0},
    ]
    return json.dumps({"map": {"width": 20, "height": 20, "resolution": 1.0}, "start": [1, 1], "goal": [19, 19],
                       "seed": 0, "obstacles": walls, "params": {}})


def test_optimizer_failure_exit_4(scenario, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise cli.OptimizerError("diverged")
    monkeypatch.setattr(cli, "plan_once", boom)
    assert main(["plan", "--scenario", str(scenario), "--out-dir", str(tmp_path)]) == 4


def test_compare_table(scenario, capsys):
    assert main(["compare", "--scenario", str(scenario)]) == 0
    out = capsys.readouterr().out
    assert "A*" in out and "R-A*" in out


def test_export_field(scenario, tmp_path):
    assert main(["export-field", "--scenario", str(scenario), "--out-dir", str(tmp_path), "--moving"]) == 0
    rows = read_rows(tmp_path / "field_static.csv")
    assert len(rows) == 900 and set(rows[0]) == {"x", "y", "value", "grad_x", "grad_y"}
    assert (tmp_path / "field_moving.csv").exists()


def test_export_traj(scenario, tmp_path):
    assert main(["export-traj", "--scenario", str(scenario), "--out-dir", str(tmp_path),
                 "--pipeline", "search_only"]) == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["pipeline"] == "search_only"


def test_gen_map(tmp_path):
    out = tmp_path / "g.json"
    assert main(["gen-map", "--seed", "7", "--out", str(out)]) == 0
    assert len(loads_scenario(out.read_text()).obstacles) == 10
    assert main(["gen-map", "--width", "3", "--height", "3", "--n-static", "20", "--out", str(out)]) == 2


def test_gen_map_creates_parent_dirs(tmp_path):
    out = tmp_path / "a" / "b" / "g.json"
    assert main(["gen-map", "--seed", "7", "--out", str(out)]) == 0
    assert out.exists()


def test_simulate_all_pipelines_in_order(tmp_path):
    assert main(["simulate", "--family", "crossing", "--seed", "6", "--pipeline", "all",
                 "--out-dir", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "trials.csv")
    assert [r["pipeline"] for r in rows] == ["full", "search_only", "risk_disabled"]
    assert "planning_ms" not in rows[0]


def test_batch_same_seed_identical(tmp_path):
    args = ["batch", "--family", "occluded_corner", "--trials", "2", "--pipeline", "all", "--seed", "5"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    for name in ("trials.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = read_rows(tmp_path / "a" / "trials.csv")
    assert [r["seed"] for r in rows] == ["5", "6"] * 3
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert set(manifest["mean_planning_ms"]) == {"full", "search_only", "risk_disabled"}


def test_batch_zero_trials(tmp_path):
    assert main(["batch", "--trials", "0", "--out-dir", str(tmp_path)]) == 0
    assert read_rows(tmp_path / "trials.csv") == []
