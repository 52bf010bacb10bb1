import json

import pytest

from martlab.cli import main
from martlab.process import read_path_csv
from martlab.runner import derived_seed, parse_overrides
from martlab.scenario import parse_scenario

SMALL_GRID = """\
name: small-grid
seed: 5
space: {dim: 2}
backend: grid
grid: {steps: 16}
initial: [0.1, 0.0]
generators:
  - kind: continuous
    volatility: 0.5
  - kind: poisson
    intensity: 1.0
    marks: {kind: finite, points: [[1.0, 0.0], [0.0, 1.0]], probs: [0.5, 0.5]}
  - kind: accessible
    times: [0.5]
    marks: {kind: rademacher, vector: [0.3, 0.3]}
ensemble: {n: 2000}
analyses:
  - kind: canonical
  - kind: weak_l1
  - kind: lp
  - kind: gundy
    lambdas: {points: 4}
output: {dir: unused, csv_paths: 2}
"""

SMALL_TREE = """\
name: small-tree
seed: 1
space: {dim: 2, q: inf}
backend: tree
tree: {depth: 3, trees: 5}
analyses:
  - kind: gundy
    lambdas: {points: 5}
  - kind: transform
    norm_t: 1.0
  - kind: lemmas
  - kind: probe
    q: 2
    dims: [1, 2]
    depth: 3
    budget: 200
  - kind: divergence
    depths: [2, 3]
    n_paths: 500
"""


@pytest.fixture
def grid_file(tmp_path):
    p = tmp_path / "grid.yaml"
    p.write_text(SMALL_GRID)
    return p


@pytest.fixture
def tree_file(tmp_path):
    p = tmp_path / "tree.yaml"
    p.write_text(SMALL_TREE)
    return p


def test_run_writes_report_tables_and_paths(grid_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(grid_file), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["schema_version"] == 1 and report["passed"]
    assert report["reproducibility"]["seed"] == 5
    assert "seconds" not in (out / "report.json").read_text()
    assert json.loads((out / "timings.json").read_text())["total_seconds"] > 0
    assert (out / "01_weak_l1_c.csv").exists()
    assert sorted(p.name for p in (out / "paths").iterdir()) == ["path_0000.csv", "path_0001.csv"]
    for analysis in report["analyses"]:
        for rep in analysis["reports"]:
            for c in rep["checks"]:
                assert {"bound", "slack", "estimate"} <= set(c)
    assert "report written" in capsys.readouterr().out


def test_unsafe_override_fails_the_run(tree_file, tmp_path):
    out = tmp_path / "out"
    assert main(["verify", str(tree_file), "--out", str(out), "--unsafe-bound", "gundy.m2_tail=0.1"]) == 1
    report = json.loads((out / "report.json").read_text())
    assert report["unsafe_overrides"] == {"gundy.m2_tail": 0.1}
    assert main(["report", str(out), "--failures"]) == 1


def test_config_and_override_errors(tree_file, tmp_path, capsys):
    assert main(["verify", str(tree_file), "--out", str(tmp_path), "--unsafe-bound", "nope=1"]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text(SMALL_TREE.replace("depth: 3, trees", "depth: 0, trees"))
    assert main(["verify", str(bad)]) == 2
    assert "tree.depth" in capsys.readouterr().err
    with pytest.raises(ValueError):
        parse_overrides(["gundy.m2_tail"])


def test_unwritable_output_is_an_io_error(tree_file, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["verify", str(tree_file), "--out", str(blocker / "sub")]) == 3


def test_reports_are_byte_identical_across_reruns_and_workers(tree_file, tmp_path):
    runs = [(tmp_path / "a", []), (tmp_path / "b", []), (tmp_path / "c", ["--jobs", "2"])]
    for out, extra in runs:
        assert main(["verify", str(tree_file), "--out", str(out)] + extra) == 0
    first = (tmp_path / "a" / "report.json").read_bytes()
    assert all((out / "report.json").read_bytes() == first for out, _ in runs)
    assert main(["verify", str(tree_file), "--out", str(tmp_path / "d"), "--seed", "2"]) == 0
    assert (tmp_path / "d" / "report.json").read_bytes() != first


def test_derived_seeds_are_distinct():
    seeds = {derived_seed(7, i) for i in range(100)}
    assert len(seeds) == 100 and derived_seed(7, 3) == derived_seed(7, 3)


def test_simulate_writes_readable_csv(grid_file, tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", str(grid_file), "--out", str(out), "--paths", "3"]) == 0
    files = sorted((out / "paths").iterdir())
    assert len(files) == 3
    grid = parse_scenario(SMALL_GRID).build_grid()
    with open(files[0], newline="") as fh:
        p = read_path_csv(fh, grid)
    assert p.values().shape == (1, 17, 2)
    assert p.values()[0, 0].tolist() == [0.1, 0.0]


def test_probe_command(capsys):
    assert main(["probe", "--space", "2,3", "--depth", "3", "--budget", "100"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["bound"] - 1.0) <= 1e-12
    with pytest.raises(SystemExit):
        main(["probe", "--space", "x", "--depth", "3", "--budget", "10"])


def test_report_command(tree_file, tmp_path, capsys):
    out = tmp_path / "out"
    main(["verify", str(tree_file), "--out", str(out)])
    capsys.readouterr()
    assert main(["report", str(out / "report.json")]) == 0
    text = capsys.readouterr().out
    assert "small-tree" in text and "gundy.m1_sup" in text
    assert main(["report", str(tmp_path / "missing.json")]) == 3
