"""
Experiment configuration.

Configs are JSON files parsed strictly into ExperimentConfig; process-level
settings (output directory, log level) come from the environment, which the
CLI populates from a .env file first.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union, get_args

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .core import AtomicMeasure, FracParams
from .duality import DualitySchedule
from .exceptions import ConfigError
from .kernel import MollifierProfile

ExperimentName = Literal[
    "fundamental_solution",
    "duality_convergence",
    "regularity_sweep",
    "young_suite",
    "lemma24_suite",
    "embedding_suite",
]

EXPERIMENT_NAMES: Tuple[str, ...] = get_args(ExperimentName)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AtomConfig(_Strict):
    point: List[float]
    weight: float = 1.0


class GridConfig(_Strict):
    half_width: float = Field(default=1.5, gt=0)
    resolutions: List[int] = Field(default_factory=lambda: [256], min_length=1)

    @field_validator("resolutions")
    @classmethod
    def _positive(cls, value: List[int]) -> List[int]:
        if any(n < 4 for n in value):
            raise ValueError("grid resolutions must be at least 4 points per axis")
        return value


class MollifierConfig(_Strict):
    bandwidths: List[float] = Field(default_factory=lambda: [0.05, 0.035, 0.025], min_length=1)
    profile: Literal["gaussian_truncated", "polynomial_bump"] = "gaussian_truncated"

    @field_validator("bandwidths")
    @classmethod
    def _positive(cls, value: List[float]) -> List[float]:
        if any(b <= 0 for b in value):
            raise ValueError("mollifier bandwidths must be > 0")
        return value


class ExcisionConfig(_Strict):
    radius: float = Field(default=1.0, gt=0)
    levels: int = Field(default=8, ge=3)


class EmbeddingConfig(_Strict):
    eta: float = Field(default=0.5, gt=0, lt=1)
    p: float = Field(default=2.0, ge=1)
    profiles: int = Field(default=20, ge=2)


class YoungConfig(_Strict):
    exponent_pairs: List[Tuple[float, float]] = Field(
        default_factory=lambda: [(1.0, 2.0), (4.0 / 3.0, 4.0 / 3.0), (1.0, 1.0)]
    )
    pairs: int = Field(default=50, ge=1)
    resolution: int = Field(default=64, ge=8)


class ExperimentConfig(_Strict):
    experiment: ExperimentName
    dim: int = Field(default=2, ge=2)
    order: float = 0.75
    # None means a unit atom at the origin
    atoms: Optional[List[AtomConfig]] = None
    support_radius: float = Field(default=1.0, gt=0)
    grid: GridConfig = Field(default_factory=GridConfig)
    mollifier: MollifierConfig = Field(default_factory=MollifierConfig)
    lebesgue_exponents: List[float] = Field(default_factory=lambda: [2.0, 3.0, 3.9, 4.0, 4.5])
    sobolev_exponents: List[float] = Field(default_factory=lambda: [1.2, 1.5, 1.7, 1.9])
    excision: ExcisionConfig = Field(default_factory=ExcisionConfig)
    embedding: EmbeddingConfig = Field(default_factory=EmbeddingConfig)
    young: YoungConfig = Field(default_factory=YoungConfig)
    samples: int = Field(default=10, ge=1)
    seed: int = 0
    output: Optional[str] = None

    @field_validator("order")
    @classmethod
    def _order_range(cls, value: float) -> float:
        if not (0.5 < value < 1.0):
            raise ValueError(f"order s must lie in (1/2, 1), got {value}")
        return value

    @field_validator("lebesgue_exponents", "sobolev_exponents")
    @classmethod
    def _exponents(cls, value: List[float]) -> List[float]:
        if any(e < 1 for e in value):
            raise ValueError("exponents must be >= 1")
        return value

    @model_validator(mode="after")
    def _atoms_fit(self) -> "ExperimentConfig":
        for atom in self.atoms or []:
            if len(atom.point) != self.dim:
                raise ValueError(f"atom {atom.point} does not have dimension {self.dim}")
            if sum(c * c for c in atom.point) ** 0.5 > self.support_radius * (1 + 1e-12):
                raise ValueError(f"atom {atom.point} lies outside support_radius {self.support_radius}")
        return self

    # -- domain objects ------------------------------------------------

    def frac_params(self) -> FracParams:
        return FracParams.standard(self.dim, self.order)

    def measure(self) -> AtomicMeasure:
        if self.atoms is None:
            return AtomicMeasure.dirac(self.dim, support_radius=self.support_radius)
        return AtomicMeasure.from_atoms(
            [(a.point, a.weight) for a in self.atoms], self.support_radius, dim=self.dim
        )

    def schedule(self) -> DualitySchedule:
        return DualitySchedule(
            half_width=self.grid.half_width,
            bandwidths=tuple(self.mollifier.bandwidths),
            resolutions=tuple(self.grid.resolutions),
            profile=MollifierProfile(self.mollifier.profile),
        )

    def with_overrides(self, seed: Optional[int] = None, output: Optional[str] = None) -> "ExperimentConfig":
        update = {}
        if seed is not None:
            update["seed"] = int(seed)
        if output is not None:
            update["output"] = str(output)
        return self.model_copy(update=update) if update else self

    def echo(self) -> dict:
        return self.model_dump(mode="json")


def load_config(source: Union[str, Path]) -> ExperimentConfig:
    """Parse a JSON config file; any read or validation problem becomes ConfigError"""
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return ExperimentConfig.model_validate_json(text)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigError(problems) from exc


@dataclass(frozen=True)
class Settings:
    output_dir: str = "results"
    log_level: str = "INFO"

    @classmethod
    def from_env(cls) -> "Settings":
        return cls(
            output_dir=os.getenv("FRACDUAL_OUTPUT_DIR", cls.output_dir),
            log_level=os.getenv("FRACDUAL_LOG_LEVEL", cls.log_level).upper(),
        )
