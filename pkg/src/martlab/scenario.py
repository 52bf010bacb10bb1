"""Scenario files: YAML documents validated into a typed :class:`Scenario`.

Validation errors are reported as :class:`Diagnostic` entries carrying the
line and column of the offending node, so a scenario author can jump straight
to the problem.  ``dump_scenario`` writes the canonical form; parsing it back
gives an equal scenario.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Annotated, Literal, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from martlab.generators import (
    MAX_INTENSITY_MESH,
    AccessibleSeries,
    CompensatedPoisson,
    ContinuousDriver,
    FiniteMarks,
    GaussianMarks,
    GridModel,
    intensity_mesh_ok,
)
from martlab.process import TimeGrid
from martlab.space import NormedSpace


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _inf_from_text(v):
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity", ".inf"):
        return math.inf
    return v


def _check_q(v):
    if not v >= 1:
        raise ValueError("q must be >= 1 or inf")
    return v


# -- building blocks -------------------------------------------------------------

class SpaceSpec(_Model):
    dim: int = Field(ge=1)
    q: float = 2.0

    @field_validator("q", mode="before")
    @classmethod
    def _parse_q(cls, v):
        return _inf_from_text(v)

    @field_validator("q")
    @classmethod
    def _valid_q(cls, v):
        return _check_q(v)

    def build(self) -> NormedSpace:
        return NormedSpace(self.dim, self.q)


class FiniteMarkSpec(_Model):
    kind: Literal["finite"]
    points: list[list[float]]
    probs: list[float]


class RademacherMarkSpec(_Model):
    kind: Literal["rademacher"]
    vector: list[float]


class GaussianMarkSpec(_Model):
    kind: Literal["gaussian"]
    mean: list[float]
    scale: float = Field(default=1.0, ge=0)


MarkSpec = Annotated[Union[FiniteMarkSpec, RademacherMarkSpec, GaussianMarkSpec], Field(discriminator="kind")]


def build_marks(spec):
    if spec.kind == "finite":
        return FiniteMarks(np.array(spec.points, dtype=float), np.array(spec.probs, dtype=float))
    if spec.kind == "rademacher":
        return FiniteMarks.rademacher(spec.vector)
    return GaussianMarks(np.array(spec.mean, dtype=float), spec.scale)


class ContinuousSpec(_Model):
    kind: Literal["continuous"]
    weight: float = 1.0
    volatility: Union[float, list[float]] = 1.0
    direction: list[float] | None = None


class PoissonSpec(_Model):
    kind: Literal["poisson"]
    weight: float = 1.0
    intensity: float = Field(gt=0)
    marks: MarkSpec


class AccessibleSpec(_Model):
    kind: Literal["accessible"]
    weight: float = 1.0
    times: list[float] = Field(min_length=1)
    marks: MarkSpec


GeneratorSpec = Annotated[Union[ContinuousSpec, PoissonSpec, AccessibleSpec], Field(discriminator="kind")]


class GridSpec(_Model):
    horizon: float = Field(default=1.0, gt=0)
    steps: int = Field(ge=1)


class TreeSpec(_Model):
    depth: int = Field(ge=1)
    branching: int = Field(default=2, ge=2)
    leaves: Literal["normal", "student_t", "rademacher"] = "normal"
    random_probs: bool = False
    trees: int = Field(default=1, ge=1)


class EnsembleSpec(_Model):
    n: int = Field(ge=1)
    chunk: int = Field(default=10_000, ge=1)


class Levels(_Model):
    """Either explicit ``values`` or a log grid of ``points`` over ``decades`` around ``E||M_T||``."""

    values: list[float] | None = None
    points: int = Field(default=40, ge=1)
    decades: float = Field(default=4.0, gt=0)

    @field_validator("values")
    @classmethod
    def _positive(cls, v):
        if v is not None and any(not x > 0 for x in v):
            raise ValueError("lambda values must be positive")
        return v


# -- analyses -----------------------------------------------------------------

class GundyAnalysis(_Model):
    kind: Literal["gundy"]
    lambdas: Levels = Levels()
    n: int | None = Field(default=None, ge=1)


class CanonicalAnalysis(_Model):
    kind: Literal["canonical"]
    z_threshold: float = Field(default=4.0, gt=0)


class WeakL1Analysis(_Model):
    kind: Literal["weak_l1"]
    parts: list[Literal["c", "q", "a"]] = ["c", "q", "a"]
    lambdas: Levels = Levels()
    budget: float | None = Field(default=None, gt=0)


class TransformAnalysis(_Model):
    kind: Literal["transform"]
    rule: Literal["alternating", "hit_and_freeze", "sign_flip", "adversarial", "coefficients"] = "adversarial"
    level: float | None = Field(default=None, gt=0)
    coefficients: list[float] | None = None
    p: float = Field(default=2.0, gt=1)
    norm_t: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _needs(self):
        if self.rule in ("hit_and_freeze", "sign_flip") and self.level is None:
            raise ValueError(f"rule {self.rule!r} needs a level")
        if self.rule == "coefficients" and self.coefficients is None:
            raise ValueError("rule 'coefficients' needs a coefficient list")
        return self


class LpAnalysis(_Model):
    kind: Literal["lp"]
    p: float = Field(default=2.0, ge=1)
    part: Literal["c", "q", "a"] = "c"
    beta: float | None = Field(default=None, ge=1)


class LemmaAnalysis(_Model):
    kind: Literal["lemmas"]


class ProbeAnalysis(_Model):
    kind: Literal["probe"]
    q: float = math.inf
    dims: list[int] = Field(default=[2, 4, 8], min_length=1)
    p: float = Field(default=2.0, ge=1)
    depth: int = Field(default=6, ge=1, le=20)
    budget: int = Field(default=100_000, ge=1)

    @field_validator("q", mode="before")
    @classmethod
    def _parse_q(cls, v):
        return _inf_from_text(v)

    @field_validator("q")
    @classmethod
    def _valid_q(cls, v):
        return _check_q(v)


class DivergenceAnalysis(_Model):
    kind: Literal["divergence"]
    depths: list[int] = Field(default=[4, 8, 12], min_length=1)
    n_paths: int = Field(default=10_000, ge=1)
    end_bound: float = Field(default=3.0, gt=0)


Analysis = Annotated[
    Union[GundyAnalysis, CanonicalAnalysis, WeakL1Analysis, TransformAnalysis, LpAnalysis, LemmaAnalysis,
          ProbeAnalysis, DivergenceAnalysis],
    Field(discriminator="kind"),
]

GRID_ONLY = {"canonical", "weak_l1", "lp"}
TREE_ONLY = {"transform", "lemmas"}


class OutputSpec(_Model):
    dir: str = "out"
    csv_paths: int = Field(default=0, ge=0)


class Scenario(_Model):
    name: str = "scenario"
    seed: int = Field(default=0, ge=0)
    space: SpaceSpec
    backend: Literal["tree", "grid"]
    grid: GridSpec | None = None
    tree: TreeSpec | None = None
    initial: list[float] | None = None
    generators: list[GeneratorSpec] = []
    ensemble: EnsembleSpec | None = None
    analyses: list[Analysis] = Field(min_length=1)
    output: OutputSpec = OutputSpec()

    @model_validator(mode="after")
    def _backend_consistency(self):
        d = self.space.dim
        if self.backend == "grid":
            if self.grid is None:
                raise ValueError("grid backend needs a 'grid' section")
            if not self.generators:
                raise ValueError("grid backend needs at least one generator")
            if self.ensemble is None:
                raise ValueError("grid backend needs an 'ensemble' section")
        else:
            if self.tree is None:
                raise ValueError("tree backend needs a 'tree' section")
        if self.initial is not None and len(self.initial) != d:
            raise ValueError(f"initial value must have {d} entries")
        for a in self.analyses:
            if self.backend == "tree" and a.kind in GRID_ONLY:
                raise ValueError(f"analysis {a.kind!r} needs the grid backend")
            if self.backend == "grid" and a.kind in TREE_ONLY:
                raise ValueError(f"analysis {a.kind!r} needs the tree backend")
        return self

    # -- builders --------------------------------------------------------------
    def build_space(self) -> NormedSpace:
        return self.space.build()

    def build_grid(self) -> TimeGrid:
        return TimeGrid.uniform(self.grid.horizon, self.grid.steps)

    def build_model(self) -> GridModel:
        comps = []
        for g in self.generators:
            if g.kind == "continuous":
                direction = None if g.direction is None else np.array(g.direction)
                comps.append((g.weight, ContinuousDriver(g.volatility, direction)))
            elif g.kind == "poisson":
                comps.append((g.weight, CompensatedPoisson(g.intensity, build_marks(g.marks))))
            else:
                comps.append((g.weight, AccessibleSeries(tuple(g.times), build_marks(g.marks))))
        init = None if self.initial is None else np.array(self.initial, dtype=float)
        return GridModel(self.build_space(), self.build_grid(), tuple(comps), init)


# -- diagnostics ---------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    path: str
    message: str
    line: int | None = None
    column: int | None = None

    def __str__(self) -> str:
        where = f"{self.line}:{self.column}: " if self.line is not None else ""
        return f"{where}{self.path or '<root>'}: {self.message}"


class ScenarioError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


def _locate(root, loc) -> tuple[yaml.Node | None, list]:
    """Deepest YAML node along a validation location, plus the location keys actually matched."""
    node, matched = root, []
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == key), None)
            if nxt is None:
                # discriminator tags in the location have no node of their own
                continue
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            continue
        matched.append(key)
    return node, matched


def _diagnostic(root, loc, message: str) -> Diagnostic:
    node, matched = _locate(root, loc)
    path = ".".join(str(k) for k in matched)
    # unknown keys point at the key itself
    if loc and isinstance(node, yaml.MappingNode) and isinstance(loc[-1], str):
        key = next((k for k, _ in node.value if k.value == loc[-1]), None)
        if key is not None:
            node = key
            path = ".".join(str(k) for k in matched + [loc[-1]])
    if node is None:
        return Diagnostic(path, message)
    return Diagnostic(path, message, node.start_mark.line + 1, node.start_mark.column + 1)


def _semantic_checks(s: Scenario) -> list[tuple[tuple, str]]:
    """Constraints that need built objects; returns ``(location, message)`` pairs."""
    errs = []
    d = s.space.dim
    mesh = s.grid.horizon / s.grid.steps if s.grid is not None else None
    finite = True
    for i, g in enumerate(s.generators):
        loc = ("generators", i)
        if g.kind == "poisson":
            if not intensity_mesh_ok(g.intensity, mesh):
                errs.append((loc + ("intensity",),
                             f"intensity*mesh = {g.intensity * mesh:.4g} exceeds {MAX_INTENSITY_MESH}; refine the grid"))
        if g.kind in ("poisson", "accessible"):
            m = g.marks
            dims = {len(x) for x in m.points} if m.kind == "finite" else {len(m.vector if m.kind == "rademacher" else m.mean)}
            if dims != {d}:
                errs.append((loc + ("marks",), f"marks must be vectors of dimension {d}"))
            if m.kind == "gaussian":
                finite = False
        if g.kind == "continuous" and g.direction is not None and len(g.direction) != d:
            errs.append((loc + ("direction",), f"direction must have {d} entries"))
        if g.kind == "continuous" and 2**d > 4096 and g.direction is None:
            finite = False
    if not errs and s.backend == "grid":
        try:
            s.build_model()
        except ValueError as exc:
            errs.append((("generators",), str(exc)))
    gundy_grid = [i for i, a in enumerate(s.analyses) if a.kind == "gundy"] if s.backend == "grid" else []
    if gundy_grid and not finite:
        for i in gundy_grid:
            errs.append((("analyses", i), "gundy on the grid backend needs finitely supported step laws; "
                                         "the model has Gaussian marks or too many coordinates"))
    for i, a in enumerate(s.analyses):
        if a.kind == "transform" and a.coefficients is not None and s.tree is not None:
            if len(a.coefficients) != s.tree.depth + 1:
                errs.append((("analyses", i, "coefficients"), f"need {s.tree.depth + 1} coefficients"))
        if a.kind == "lp" and a.beta is None and not (s.build_space().is_hilbert and a.p == 2):
            errs.append((("analyses", i, "beta"), "beta must be supplied unless the space is Hilbert and p = 2"))
    return errs


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document; raise :class:`ScenarioError` with positioned diagnostics."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line, col = (mark.line + 1, mark.column + 1) if mark is not None else (None, None)
        raise ScenarioError([Diagnostic("", f"syntax error: {getattr(exc, 'problem', exc)}", line, col)]) from None
    if not isinstance(data, dict):
        raise ScenarioError([Diagnostic("", "scenario must be a mapping")])
    try:
        s = Scenario.model_validate(data)
    except ValidationError as exc:
        diags = []
        for e in exc.errors():
            msg = "unknown key" if e["type"] == "extra_forbidden" else e["msg"].removeprefix("Value error, ")
            diags.append(_diagnostic(root, e["loc"], msg))
        raise ScenarioError(diags) from None
    errs = _semantic_checks(s)
    if errs:
        raise ScenarioError([_diagnostic(root, loc, msg) for loc, msg in errs])
    return s


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def scenario_dict(s: Scenario) -> dict:
    return s.model_dump(mode="python")


def dump_scenario(s: Scenario) -> str:
    """Canonical YAML form (every field explicit, keys in declaration order)."""
    return yaml.safe_dump(scenario_dict(s), sort_keys=False, default_flow_style=None)


def config_hash(s: Scenario) -> str:
    return hashlib.sha256(dump_scenario(s).encode("utf-8")).hexdigest()
