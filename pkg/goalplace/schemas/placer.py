import logging
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from goalplace.schemas.arrays import FloatArray
from goalplace.schemas.netlist import Placement

logger = logging.getLogger(__name__)


class PlacerMode(str, Enum):
    uniform = "uniform"
    inflated = "inflated"


class DensityMethod(str, Enum):
    poisson = "poisson"
    overflow = "overflow"


class PlacerConfig(BaseModel):
    d_t: float = Field(1.0, gt=0, le=1)
    iterations: int = Field(600, ge=1)
    step_size: float = Field(0.5, gt=0)  # bins per iteration
    step_decay: float = Field(0.995, gt=0, le=1)
    step_floor: float = Field(0.1, gt=0)  # bins per iteration, reached by decay after the warmup
    momentum: float = Field(0.5, ge=0, lt=1)
    density_weight: float = Field(1.0, ge=0)
    density_growth: float = Field(1.05, ge=1)
    warmup_iterations: int = Field(20, ge=0)
    gamma_factor: float = Field(0.5, gt=0)
    overflow_stop: float = Field(0.07, ge=0)
    divergence_factor: float = Field(10.0, gt=1)
    bin_scale: float = Field(10.0, gt=0)
    filler_sites: int = Field(4, ge=1)
    seed: int = 0
    mode: PlacerMode = PlacerMode.uniform
    density_method: DensityMethod = DensityMethod.poisson
    movable_macros: bool = False

    @model_validator(mode="after")
    def pin_target_density(self) -> "PlacerConfig":
        if self.mode == PlacerMode.inflated and self.d_t != 1.0:
            logger.warning("inflated mode places at d_t=1; ignoring d_t=%s", self.d_t)
            self.d_t = 1.0
        return self


class ConvergenceRecord(BaseModel):
    iteration: int
    hpwl: float
    max_overflow: float
    total_overflow: float
    density_weight: float


class OverflowReport(BaseModel):
    max_overflow: float = Field(ge=0)
    total_overflow: float = Field(ge=0)


class PlacerState(BaseModel):
    """Object centres (movable cells, then fillers) and schedule state of a running placement."""

    cx: FloatArray
    cy: FloatArray
    density_weight: float = 0.0
    step: float
    hpwl_history: list[float] = []
    overflow_history: list[float] = []

    model_config = ConfigDict(arbitrary_types_allowed=True)


class PlacementResult(BaseModel):
    placement: Placement
    fillers: Placement
    log: list[ConvergenceRecord]
    hpwl: float
    max_overflow: float
    total_overflow: float
    iterations: int
    stop_reason: str
    filler_count: int
    final_state: Optional[PlacerState] = Field(None, exclude=True)

    model_config = ConfigDict(arbitrary_types_allowed=True)

    def metrics(self) -> dict:
        return self.model_dump(include={"hpwl", "max_overflow", "total_overflow", "iterations", "stop_reason", "filler_count"})
