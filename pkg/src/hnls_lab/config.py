"""Experiment configuration schema.

A config is one JSON file (``//`` line comments allowed) holding a root seed,
resource limits and a non-empty list of experiments of a single kind.
Unknown keys are rejected everywhere.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .lattice import Signature

SCHEMA_VERSION = 1

KINDS = (
    "strichartz",
    "bilinear",
    "multilinear",
    "kernel",
    "galilean",
    "solve",
    "picard",
    "inflation",
    "admissibility-table",
)


class ConfigError(ValueError):
    """Schema violation; the CLI maps it to exit status 2."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SignatureSpec(_Strict):
    d: int = Field(ge=1, le=8)
    j0: int = Field(ge=0)
    eps: list[Union[int, float, str]] | None = None

    @model_validator(mode="after")
    def _valid(self):
        self.build()
        return self

    def build(self) -> Signature:
        try:
            if self.eps is None:
                return Signature(self.d, self.j0)
            return Signature(self.d, self.j0, tuple(self.eps))
        except (ValueError, TypeError, ZeroDivisionError) as exc:
            raise ValueError(str(exc)) from exc


class Limits(_Strict):
    max_points: float = Field(default=4e10, gt=0)
    max_seconds: float | None = Field(default=None, gt=0)
    workers: int = Field(default=1, ge=1)


class DataSpec(_Strict):
    """Initial data for the nonlinear solvers.

    gaussian: random coefficients on [-M, M]^d with weight exp(-decay |k|^2);
    modes: explicit coefficients. ``norm`` rescales to ||u0||_{H^s} = value.
    """

    family: Literal["gaussian", "modes"] = "gaussian"
    M: int = Field(default=2, ge=0)
    decay: float = Field(default=0.0, ge=0)
    modes: list[tuple[list[int], float, float]] = Field(default_factory=list)
    norm_s: float | None = None
    norm_value: float | None = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _modes(self):
        if self.family == "modes" and not self.modes:
            raise ValueError("modes family needs at least one mode")
        if (self.norm_s is None) != (self.norm_value is None):
            raise ValueError("norm_s and norm_value go together")
        return self


class _Experiment(_Strict):
    id: str | None = None
    check: bool = False


def _dyadic(values: list[int]) -> list[int]:
    for n in values:
        if n < 1 or n & (n - 1):
            raise ValueError(f"{n} is not a power of two")
    if sorted(set(values)) != values:
        raise ValueError("values must be strictly increasing")
    return values


class StrichartzExp(_Experiment):
    kind: Literal["strichartz"]
    signature: SignatureSpec
    p: float = Field(ge=2)
    family: Literal["dirichlet", "gaussian", "cube", "diagonal"] = "dirichlet"
    N_list: list[int] = Field(min_length=3)
    T: float = Field(default=1.0, gt=0)
    n_t: int | None = Field(default=None, ge=2)
    oversample: float | None = Field(default=None, ge=1)
    rtol: float = Field(default=1e-6, gt=0)
    tolerance: tuple[float, float] = (0.15, 0.15)
    compare_with: SignatureSpec | None = None
    min_gap: float | None = None

    _dy = field_validator("N_list")(_dyadic)


class BilinearExp(_Experiment):
    kind: Literal["bilinear"]
    signature: SignatureSpec
    N1: int = Field(ge=1)
    N2_list: list[int] = Field(min_length=3)
    seeds: int = Field(default=8, ge=1)
    n_t: int = Field(default=64, ge=2)
    T: float = Field(default=1.0, gt=0)
    predicted: float = 0.5
    max_slope: float = 0.7

    _dy = field_validator("N2_list")(_dyadic)

    @model_validator(mode="after")
    def _order(self):
        if max(self.N2_list) > self.N1:
            raise ValueError("N2 values must not exceed N1")
        return self


class MultilinearExp(_Experiment):
    kind: Literal["multilinear"]
    signature: SignatureSpec
    m: int = Field(default=1, ge=1)
    s: float
    profiles: dict[str, list[int]]
    rescales: int = Field(default=2, ge=1)
    patterns: Literal["all", "plain"] = "all"
    T: float = Field(default=1.0, gt=0)
    max_variation: float = 3.0

    @model_validator(mode="after")
    def _profiles(self):
        for name, prof in self.profiles.items():
            if len(prof) != 2 * self.m + 2:
                raise ValueError(f"profile {name} needs {2 * self.m + 2} scales")
            _dyadic(sorted(set(prof)))
        return self


class KernelExp(_Experiment):
    kind: Literal["kernel"]
    signature: SignatureSpec
    N_list: list[int] = Field(min_length=2)
    n_times: int = Field(default=200, ge=1)
    cutoff: Literal["sharp", "smooth"] = "sharp"
    sigma: float = Field(default=0.1, gt=0, lt=0.5)
    worst_x: bool = True
    max_ratio: float = 10.0
    max_slope: float = 0.1
    max_minor: float = 20.0

    _dy = field_validator("N_list")(_dyadic)


class GalileanExp(_Experiment):
    kind: Literal["galilean"]
    signature: SignatureSpec
    M: int = Field(default=12, ge=1)
    half_side: int = Field(default=2, ge=1)
    n_centers: int = Field(default=4, ge=1)
    radius: int = Field(default=10, ge=0)
    times: list[float] = Field(default_factory=lambda: [0.1, 0.37])
    G: int = Field(default=64, ge=2)
    tol: float = 1e-10


class SolveExp(_Experiment):
    kind: Literal["solve"]
    signature: SignatureSpec
    m: int = Field(default=1, ge=1)
    sign: Literal[-1, 0, 1] = 1
    T: float = Field(default=1.0, gt=0, le=1)
    h: float = Field(gt=0)
    data: DataSpec = DataSpec()
    halvings: int = Field(default=2, ge=0)
    mass_tol: float = 1e-10
    order_range: tuple[float, float] = (3.0, 5.0)
    checkpoint: bool = True


class PicardExp(_Experiment):
    kind: Literal["picard"]
    signature: SignatureSpec
    m: int = Field(default=1, ge=1)
    sign: Literal[-1, 0, 1] = 1
    T: float = Field(default=0.1, gt=0, le=1)
    h: float = Field(gt=0)
    n_iter: int = Field(default=6, ge=2)
    data: DataSpec = DataSpec()
    max_ratio: float = 0.5
    cross_tol: float = 1e-4
    threshold_search: bool = False


class InflationExp(_Experiment):
    kind: Literal["inflation"]
    signature: SignatureSpec
    m: int = Field(default=1, ge=1)
    s: float
    amplitudes: list[float] = Field(min_length=1)
    T: float = Field(default=0.1, gt=0, le=1)
    h: float = Field(gt=0)
    sign: Literal[-1, 0, 1] = 1
    data: DataSpec = DataSpec()
    max_growth: float | None = None


class AdmissibilityExp(_Experiment):
    kind: Literal["admissibility-table"]
    dims: list[int] = Field(min_length=1)
    expect: list[tuple[int, int, str]] = Field(default_factory=list)

    @field_validator("dims")
    @classmethod
    def _dims(cls, v):
        if any(d < 1 for d in v):
            raise ValueError("dimensions must be positive")
        return v


Experiment = Annotated[
    Union[
        StrichartzExp,
        BilinearExp,
        MultilinearExp,
        KernelExp,
        GalileanExp,
        SolveExp,
        PicardExp,
        InflationExp,
        AdmissibilityExp,
    ],
    Field(discriminator="kind"),
]


class RunConfig(_Strict):
    schema_version: int = SCHEMA_VERSION
    name: str = "run"
    seed: int = Field(default=0, ge=0, lt=2**64)
    limits: Limits = Limits()
    experiments: list[Experiment] = Field(min_length=1)

    @model_validator(mode="after")
    def _one_kind(self):
        if self.schema_version > SCHEMA_VERSION:
            raise ValueError(f"schema_version {self.schema_version} is newer than {SCHEMA_VERSION}")
        kinds = {e.kind for e in self.experiments}
        if len(kinds) > 1:
            raise ValueError(f"one experiment kind per config, got {sorted(kinds)}")
        return self

    @property
    def kind(self) -> str:
        return self.experiments[0].kind

    def canonical(self) -> dict:
        return self.model_dump(mode="json")

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_COMMENT = re.compile(r'^\s*//.*$|("(?:\\.|[^"\\])*")|\s//.*$', re.M)


def _strip_comments(text: str) -> str:
    return _COMMENT.sub(lambda m: m.group(1) or "", text)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(_strip_comments(text))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_config(data)
