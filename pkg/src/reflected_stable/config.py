"""Run configuration: a flat JSON document, overridable from the command line."""
from __future__ import annotations

import json
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .domain_grid import IntervalDomain, build_grid
from .errors import ReflectedStableError
from .reflection import ReflectionKernel, kernel_from_config
from .stable_core import StableParams

BVP_SOURCES = ("left_indicator", "x", "x2", "x3", "cos", "exp")


class ConfigError(ValueError):
    """Bad configuration; the CLI maps this to exit code 2."""


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    alpha: float = Field(1.0, gt=0.0, lt=2.0)
    domain: Tuple[float, float] = (-1.0, 1.0)
    grid_n: int = Field(200, ge=4)
    reflection: Dict[str, Any] = Field(default_factory=lambda: {"tag": "dirac", "y0": 0.0})
    t: List[float] = Field(default_factory=lambda: [1.0], min_length=1)
    delta: float = Field(0.1, gt=0.0)
    time_steps: int = Field(64, ge=16)
    depth: int = Field(40, ge=1)
    lambdas: List[float] = Field(default_factory=lambda: [0.1, 1.0, 10.0], min_length=1)
    paths: int = Field(100_000, gt=0)
    h: float = Field(1e-4, gt=0.0)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    quadrature_order: int = Field(16, ge=8)
    bvp_f: str = "left_indicator"
    out: str = "out"

    @field_validator("domain")
    @classmethod
    def _domain(cls, v):
        if not v[0] < v[1]:
            raise ValueError(f"domain needs l < r, got {list(v)}")
        return v

    @field_validator("t")
    @classmethod
    def _times(cls, v):
        if any(not x > 0 for x in v):
            raise ValueError("every t must be positive")
        return v

    @field_validator("lambdas")
    @classmethod
    def _lambdas(cls, v):
        if any(not x > 0 for x in v):
            raise ValueError("every lambda must be positive")
        return v

    @field_validator("bvp_f")
    @classmethod
    def _bvp(cls, v):
        if v not in BVP_SOURCES:
            raise ValueError(f"bvp_f must be one of {list(BVP_SOURCES)}")
        return v

    @model_validator(mode="after")
    def _upstream(self):
        try:
            kernel_from_config(self.reflection, self.interval, self.params)
        except ReflectedStableError as e:
            raise ValueError(f"reflection: {e}") from None
        limit = 1e-2 * (self.domain[1] - self.domain[0]) ** self.alpha
        if self.h > limit:
            raise ValueError(f"h = {self.h} exceeds 1e-2 * |D|^alpha = {limit:.3g}")
        return self

    @cached_property
    def interval(self) -> IntervalDomain:
        return IntervalDomain(*self.domain)

    @cached_property
    def params(self) -> StableParams:
        return StableParams(self.alpha)

    def kernel(self) -> ReflectionKernel:
        return kernel_from_config(self.reflection, self.interval, self.params)

    def grid(self):
        return build_grid(self.interval, self.grid_n)

    def as_dict(self) -> dict:
        return self.model_dump(mode="json")


def _format(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        where = ".".join(str(p) for p in e["loc"]) or "config"
        msg = e["msg"].removeprefix("Value error, ")
        lines.append(f"{where}: {msg}")
    return "; ".join(lines)


def parse_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Read ``path`` (JSON, optional) and apply ``overrides`` on top; keys given as ``None`` are skipped."""
    data: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    try:
        return RunConfig(**data)
    except ValidationError as e:
        raise ConfigError(_format(e)) from None
