"""Experiment configuration: one JSON document per run, validated before any work."""

from __future__ import annotations

import json
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import fem
from .pairs import TOYS


class ConfigError(ValueError):
    """Schema or semantic problem with a config; maps to exit code 2."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GeomGrid(_Strict):
    start: float = Field(gt=0)
    stop: float = Field(gt=0)
    num: int = Field(ge=1)

    def values(self):
        import numpy as np

        return [float(v) for v in np.geomspace(self.start, self.stop, self.num)]


Grid = Union[GeomGrid, List[float]]


def grid_values(g) -> list:
    vals = g.values() if isinstance(g, GeomGrid) else [float(v) for v in g]
    if not vals:
        raise ConfigError("grid: must not be empty")
    return vals


# -- problems ---------------------------------------------------------------------


class ToyProblem(_Strict):
    kind: Literal["toy"]
    name: str
    c: Optional[float] = None

    @field_validator("name")
    @classmethod
    def _known(cls, name):
        if name not in TOYS:
            raise ValueError(f"unknown toy {name!r}; choose from {sorted(TOYS)}")
        return name


class DirichletProblem(_Strict):
    kind: Literal["dirichlet"]
    p: float = Field(ge=2)
    N: int = Field(ge=2)
    f: str


class NeumannProblem(_Strict):
    kind: Literal["neumann"]
    p: float = Field(ge=2)
    N: int = Field(ge=2)
    f: str
    g: str = "0"
    alpha: str = "1"
    beta: str = "1"
    lambda_coef: str = "1"


class Example1Problem(_Strict):
    """Neumann problem -div(|u'|^{p-2}u') + eta |u|^{p-2}u = eta distosc(p)."""

    kind: Literal["example1"]
    p: float = Field(ge=2)
    N: int = Field(ge=2)
    eta: str = "1"


Problem = Annotated[Union[ToyProblem, DirichletProblem, NeumannProblem, Example1Problem],
                    Field(discriminator="kind")]


def example1_f(p) -> str:
    return f"distosc({p!r})"


def build_model(problem):
    """EnergyModel for FEM problems, None for toys."""
    if isinstance(problem, DirichletProblem):
        return fem.EnergyModel.dirichlet(problem.f, p=problem.p, n_elements=problem.N)
    if isinstance(problem, NeumannProblem):
        return fem.EnergyModel.neumann(problem.f, problem.g, problem.alpha, problem.beta,
                                       problem.lambda_coef, p=problem.p, n_elements=problem.N)
    if isinstance(problem, Example1Problem):
        return fem.EnergyModel.neumann(example1_f(problem.p), "0", problem.eta, "0",
                                       problem.eta, p=problem.p, n_elements=problem.N)
    return None


def build_pair(problem):
    from .pairs import fem_pair

    if isinstance(problem, ToyProblem):
        ctor = TOYS[problem.name]
        return ctor(problem.c) if problem.c is not None else ctor()
    return fem_pair(build_model(problem), name=problem.kind)


# -- commands -----------------------------------------------------------------------


class _Command(_Strict):
    seed: int = Field(0, ge=0, lt=2**64)
    budget: int = Field(8, ge=1)


class PhiCurveConfig(_Command):
    command: Literal["phi-curve"]
    problem: Problem
    grid: Grid
    window: int = Field(3, ge=1)


class Ladder(_Strict):
    mode: Literal["increasing", "decreasing"] = "increasing"
    start: Optional[float] = Field(None, gt=0)
    levels: Optional[int] = Field(None, ge=1)
    factor: float = Field(4.0, gt=1)
    values: Optional[List[float]] = None

    @model_validator(mode="after")
    def _shape(self):
        if self.values is None and (self.start is None or self.levels is None):
            raise ValueError("ladder needs either 'values' or both 'start' and 'levels'")
        return self

    def rhos(self):
        from .minhunt import ladder_levels

        if self.values is not None:
            return [float(v) for v in self.values]
        return ladder_levels(self.start, self.levels, self.mode, self.factor)


class HuntConfig(_Command):
    command: Literal["hunt"]
    problem: Problem
    mu: float = Field(gt=0)
    ladder: Ladder
    stagnation: int = Field(3, ge=0)
    res_tol: float = Field(1e-6, gt=0)
    gtol: Optional[float] = Field(None, gt=0)


class BifurcateConfig(_Command):
    command: Literal["bifurcate"]
    alpha: str = "1"
    beta: str = "1"
    s: float = Field(3.0, gt=1)
    q: float = Field(0.5, gt=0, lt=1)
    f: Optional[str] = None
    g: Optional[str] = None
    N: int = Field(64, ge=2)
    lambda_grid: Grid
    budget: int = Field(5000, ge=1)


class Potential(_Strict):
    kind: Literal["linear", "constant", "quadratic", "plateau"]
    dim: int = Field(1, ge=1)
    c: Optional[float] = None
    k: Optional[float] = None
    shift: Optional[float] = None
    w: Optional[float] = Field(None, gt=0)

    def build(self):
        from . import fixedpoint as fp

        if self.kind == "linear":
            return fp.linear(1.0 if self.c is None else self.c, self.dim)
        if self.kind == "constant":
            return fp.constant(0.0 if self.c is None else self.c, self.dim)
        if self.kind == "quadratic":
            return fp.quadratic(0.5 if self.k is None else self.k,
                                0.0 if self.shift is None else self.shift, self.dim)
        return fp.plateau(self.dim, 0.01 if self.w is None else self.w)


class FixedPointConfig(_Command):
    command: Literal["fixed-point"]
    potential: Potential
    rho: Optional[float] = Field(None, gt=0)
    radii: Optional[Grid] = None

    @model_validator(mode="after")
    def _something(self):
        if self.rho is None and self.radii is None:
            raise ValueError("fixed-point needs 'rho', 'radii' or both")
        return self


class GrowthCheck(_Strict):
    a: float = Field(gt=0)
    q: float
    n: int = Field(1, ge=1)


class ArCheck(_Strict):
    c: float
    r: float = Field(ge=0)


class Thm7Check(_Strict):
    g: str
    s: float
    q: float
    D: List[Tuple[float, float]] = [(0.0, 1.0)]
    B: Optional[List[Tuple[float, float]]] = None


class Sequences(_Strict):
    a: Union[str, List[float]]
    b: Union[str, List[float]]
    mode: Literal["to-infinity", "to-zero"] = "to-infinity"


class OscCheck(_Strict):
    p: float = Field(ge=2)
    sequences: Sequences
    K: int = Field(5, ge=1)


class GSideCheck(_Strict):
    g: str
    p: float = Field(ge=2)
    mode: Literal["to-infinity", "to-zero"] = "to-infinity"


class SuggestCheck(_Strict):
    p: float = Field(2.0, ge=2)
    mode: Literal["to-infinity", "to-zero"] = "to-infinity"
    horizon: int = Field(5, ge=1)


class CheckConfig(_Command):
    command: Literal["check"]
    f: str
    growth: Optional[GrowthCheck] = None
    ar: Optional[ArCheck] = None
    limit_zero: bool = False
    thm7: Optional[Thm7Check] = None
    osc: Optional[OscCheck] = None
    g_side: Optional[GSideCheck] = None
    suggest: Optional[SuggestCheck] = None


class Endpoint(_Strict):
    """Either explicit coordinates, or a sine bump of given amplitude for FEM problems."""

    point: Optional[List[float]] = None
    sine: Optional[float] = None

    @model_validator(mode="after")
    def _one(self):
        if (self.point is None) == (self.sine is None):
            raise ValueError("endpoint needs exactly one of 'point' or 'sine'")
        return self


class MountainPassConfig(_Command):
    command: Literal["mountain-pass"]
    problem: Problem
    mu: float = Field(ge=0)
    end_a: Endpoint
    end_b: Endpoint
    K: int = Field(33, ge=3)
    iterations: int = Field(2000, ge=1)
    tol: Optional[float] = Field(None, gt=0)
    method: Literal["auto", "string", "ray"] = "auto"


class Problem1Config(_Command):
    command: Literal["problem1"]
    p: float = Field(ge=2)
    N: int = Field(32, ge=2)
    f: str
    grid: Grid
    growth: GrowthCheck
    ar: ArCheck
    window: int = Field(3, ge=1)


class Problem3Config(_Command):
    command: Literal["problem3"]
    f: str
    p: float = Field(ge=2)
    sequences: Sequences
    K: int = Field(5, ge=1)
    problem: Problem
    mu: float = Field(gt=0)
    ladder: Ladder
    stagnation: int = Field(3, ge=0)
    res_tol: float = Field(1e-6, gt=0)
    gtol: Optional[float] = Field(None, gt=0)


ExperimentConfig = Annotated[
    Union[PhiCurveConfig, HuntConfig, BifurcateConfig, FixedPointConfig, CheckConfig,
          MountainPassConfig, Problem1Config, Problem3Config],
    Field(discriminator="command"),
]

PROBLEM_KINDS = ("toy", "dirichlet", "neumann", "example1")
COMMANDS = ("phi-curve", "hunt", "bifurcate", "fixed-point", "check", "mountain-pass",
            "problem1", "problem3")


class _Doc(_Strict):
    config: ExperimentConfig


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        # drop the wrapper key and the union tag pydantic inserts for discriminated unions
        loc = [str(p) for p in e["loc"][1:]]
        if loc and loc[0] in COMMANDS:
            loc = loc[1:]
        if len(loc) > 1 and loc[0] == "problem" and loc[1] in PROBLEM_KINDS:
            loc = loc[:1] + loc[2:]
        path = ".".join(loc) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def validate(data, command=None):
    """Validate a decoded JSON object; ``command`` fills in or must match the 'command' key."""
    if not isinstance(data, dict):
        raise ConfigError("<root>: config must be a JSON object")
    data = dict(data)
    if command is not None:
        given = data.setdefault("command", command)
        if given != command:
            raise ConfigError(f"command: config is for {given!r}, not {command!r}")
    try:
        cfg = _Doc(config=data).config
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from None
    for name in ("grid", "lambda_grid", "radii"):
        g = getattr(cfg, name, None)
        if g is not None:
            try:
                grid_values(g)
            except ConfigError:
                raise ConfigError(f"{name}: must not be empty") from None
    return cfg


def load(path, command=None, seed=None):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from None
    if seed is not None and isinstance(data, dict):
        data = {**data, "seed": seed}
    return validate(data, command)


def canonical(cfg) -> str:
    """Stable text form used for hashing and for config.json."""
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"
