"""Run configuration: a JSON document validated against a strict schema."""

from __future__ import annotations

import enum
import json
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .geometry import GeometryError, Grid, make_grid


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending key (e.g. ``physics.rho``)."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class Command(str, enum.Enum):
    GROUNDSTATE = "groundstate"
    EVOLVE = "evolve"
    STABILITY = "stability"
    VERIFY = "verify"
    THRESHOLD = "threshold"
    CURVE = "curve"
    COLLAPSE = "collapse"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class GeometrySpec(_Strict):
    kind: Literal["Cartesian2D", "Radial2D", "Cylindrical3D"] = "Radial2D"
    nx: Optional[int] = None
    ny: Optional[int] = None
    Lx: Optional[float] = None
    Ly: Optional[float] = None
    nr: Optional[int] = None
    r_max: Optional[float] = None
    nz: Optional[int] = None
    z_max: Optional[float] = None

    @model_validator(mode="after")
    def _fill(self) -> "GeometrySpec":
        defaults = {
            "Cartesian2D": {"nx": 256, "ny": 256, "Lx": 20.0, "Ly": 20.0},
            "Radial2D": {"nr": 4000, "r_max": 80.0},
            "Cylindrical3D": {"nr": 75, "nz": 150, "r_max": 30.0, "z_max": 30.0},
        }[self.kind]
        allowed = set(defaults)
        for name in ("nx", "ny", "Lx", "Ly", "nr", "r_max", "nz", "z_max"):
            value = getattr(self, name)
            if name not in allowed:
                if value is not None:
                    raise ValueError(f"'{name}' does not apply to {self.kind}")
            elif value is None:
                object.__setattr__(self, name, defaults[name])
        return self

    def build(self) -> Grid:
        spec = {k: v for k, v in self.model_dump().items() if v is not None}
        return make_grid(spec)


class Physics(_Strict):
    m: int = 0
    rho: Optional[float] = Field(default=None, gt=0)
    rho_factor: Optional[float] = Field(default=None, gt=0)
    flow: Literal["PlainNLS", "InverseSquare"] = "InverseSquare"
    d: Literal[2, 3] = 2
    cubic_only: bool = False

    @model_validator(mode="after")
    def _one_mass(self) -> "Physics":
        if self.rho is not None and self.rho_factor is not None:
            raise ValueError("give either 'rho' or 'rho_factor', not both")
        return self


class Numerics(_Strict):
    dt: float = Field(default=0.01, gt=0)
    t_end: float = Field(default=1.0, ge=0)
    dtau0: float = Field(default=0.1, gt=0)
    dtau_max: Optional[float] = Field(default=None, gt=0)
    tol: float = Field(default=1e-10, gt=0)
    max_iter: int = Field(default=200_000, ge=1)
    pohozaev_tol: float = Field(default=1e-6, gt=0)
    seed_width: float = Field(default=2.0, gt=0)


class IO(_Strict):
    output_dir: str = "out"
    input: Optional[str] = None
    snapshot_stride: int = Field(default=0, ge=0)
    diagnostics_stride: int = Field(default=10, ge=1)


class Experiment(_Strict):
    delta: float = Field(default=1e-2, ge=0)
    horizon: float = Field(default=20.0, gt=0)
    ratio_cap: float = Field(default=5.0, gt=0)
    mass_factor: float = Field(default=1.5, gt=0)
    cubic_horizon: float = Field(default=5.0, gt=0)
    rho_list: list[float] = Field(default_factory=list)
    rho_start: float = Field(default=100.0, gt=0)
    seed: int = 0

    @field_validator("rho_list")
    @classmethod
    def _ascending(cls, v: list[float]) -> list[float]:
        if any(x <= 0 for x in v) or any(b < a for a, b in zip(v, v[1:])):
            raise ValueError("rho_list must be positive and ascending")
        return v


class RunConfig(_Strict):
    command: Command
    geometry: GeometrySpec = Field(default_factory=GeometrySpec)
    physics: Physics = Field(default_factory=Physics)
    numerics: Numerics = Field(default_factory=Numerics)
    io: IO = Field(default_factory=IO)
    experiment: Experiment = Field(default_factory=Experiment)

    def grid(self) -> Grid:
        try:
            return self.geometry.build()
        except GeometryError as exc:
            raise ConfigError(str(exc), "geometry") from None

    def resolved(self) -> dict:
        return json.loads(self.model_dump_json())


def _no_duplicates(pairs: list[tuple[str, Any]]) -> dict:
    out: dict = {}
    for key, value in pairs:
        if key in out:
            raise ConfigError(f"duplicate key '{key}'")
        out[key] = value
    return out


def _error_path(loc: tuple) -> str:
    return ".".join(str(p) for p in loc if not str(p).startswith("function-"))


def config_from_dict(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(first["msg"], _error_path(first["loc"])) from None


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON configuration document."""
    try:
        data = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    return config_from_dict(data)


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` overrides; values are parsed as JSON when possible."""
    data = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override inside non-object key '{p}'", key)
        node[parts[-1]] = value
    return data
