import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DATA, SCENARIOS
from martlab.scenario import (
    Scenario,
    ScenarioError,
    config_hash,
    dump_scenario,
    load_scenario,
    parse_scenario,
    scenario_dict,
)

MINIMAL = """\
space: {dim: 2}
backend: tree
tree: {depth: 3}
analyses:
  - kind: gundy
"""

GRID = """\
space: {{dim: 1}}
backend: grid
grid: {{steps: 20}}
generators:
  - kind: poisson
    intensity: {intensity}
    marks: {marks}
ensemble: {{n: 100}}
analyses:
  - kind: {analysis}
"""


def _grid(intensity=1.0, marks="{kind: finite, points: [[1.0]], probs: [1.0]}", analysis="canonical"):
    return GRID.format(intensity=intensity, marks=marks, analysis=analysis)


def _diagnostics(text):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    return info.value.diagnostics


def test_minimal_scenario_defaults():
    s = parse_scenario(MINIMAL)
    assert s.name == "scenario" and s.seed == 0
    assert s.build_space().q == 2.0
    assert s.analyses[0].lambdas.points == 40


def test_nonpositive_level_points_at_the_field():
    text = MINIMAL.replace("  - kind: gundy\n", "  - kind: gundy\n    lambdas: {values: [1.0, -2.0]}\n")
    (d,) = _diagnostics(text)
    assert "lambdas" in d.path and "positive" in d.message
    assert d.line == 6
    assert d.column is not None
    assert str(d).startswith("6:")


def test_unknown_key_is_rejected():
    (d,) = _diagnostics(MINIMAL + "colour: blue\n")
    assert d.path == "colour" and d.line == 6


def test_syntax_error_has_a_position():
    (d,) = _diagnostics("space: {dim: 2\nbackend: tree\n")
    assert "syntax" in d.message and d.line is not None


def test_intensity_times_mesh_is_limited():
    parse_scenario(_grid(intensity=2.0))
    (d,) = _diagnostics(_grid(intensity=3.0))
    assert "refine the grid" in d.message


def test_grid_gundy_needs_finite_step_laws():
    parse_scenario(_grid(analysis="gundy"))
    ds = _diagnostics(_grid(marks="{kind: gaussian, mean: [0.0], scale: 1.0}", analysis="gundy"))
    assert any("finite" in d.message for d in ds)


def test_backend_restrictions():
    ds = _diagnostics(MINIMAL.replace("kind: gundy", "kind: canonical"))
    assert any("grid backend" in d.message for d in ds)
    ds = _diagnostics(_grid(analysis="lemmas"))
    assert any("tree backend" in d.message for d in ds)


def test_infinite_exponent_spellings():
    for spelling in ("inf", ".inf", "Infinity"):
        s = parse_scenario(MINIMAL.replace("{dim: 2}", f"{{dim: 2, q: {spelling}}}"))
        assert math.isinf(s.space.q)


def test_golden_canonical_form():
    s = load_scenario(SCENARIOS / "mixed_grid.yaml")
    assert scenario_dict(s) == json.loads((DATA / "mixed_grid.canonical.json").read_text())


@pytest.mark.parametrize("name", ["mixed_grid.yaml", "tree_gundy.yaml", "acceptance.yaml"])
def test_shipped_scenarios_round_trip(name):
    s = load_scenario(SCENARIOS / name)
    back = parse_scenario(dump_scenario(s))
    assert back == s
    assert config_hash(back) == config_hash(s)


@settings(max_examples=50, deadline=None)
@given(dim=st.integers(1, 5), q=st.sampled_from([1.0, 2.0, 3.5, math.inf]), depth=st.integers(1, 8),
       seed=st.integers(0, 2**31), trees=st.integers(1, 100), values=st.none() | st.lists(
           st.floats(1e-6, 1e6, allow_nan=False), min_size=1, max_size=5))
def test_parse_dump_is_identity(dim, q, depth, seed, trees, values):
    s = Scenario.model_validate({
        "seed": seed,
        "space": {"dim": dim, "q": q},
        "backend": "tree",
        "tree": {"depth": depth, "trees": trees},
        "analyses": [{"kind": "gundy", "lambdas": {"values": values}}, {"kind": "lemmas"}],
    })
    assert parse_scenario(dump_scenario(s)) == s
