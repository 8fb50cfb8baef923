from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from goalplace.schemas.density import CellDensityVector
from goalplace.schemas.ebayes import PriorEnsemble, ShrinkageResult
from goalplace.schemas.netlist import Placement, TargetVector
from goalplace.schemas.placer import PlacerConfig


class RunMetrics(BaseModel):
    hpwl: float
    hellinger: float = Field(ge=0, le=1)
    max_overflow: float
    total_overflow: float
    range_error: float


class RunRecord(BaseModel):
    run_id: str
    mode: str
    config: PlacerConfig
    delta: float = Field(0.0, ge=-0.2, le=0.2)
    metrics: RunMetrics
    placement_path: Optional[str] = None
    placement: Optional[Placement] = Field(None, exclude=True)
    densities: Optional[CellDensityVector] = Field(None, exclude=True)

    model_config = ConfigDict(arbitrary_types_allowed=True)

    def objectives(self) -> tuple[float, float, float]:
        return (self.metrics.hpwl, self.metrics.hellinger, self.metrics.total_overflow)


class ParetoFront(BaseModel):
    members: list[RunRecord] = []

    def __len__(self) -> int:
        return len(self.members)


class ModeComparison(BaseModel):
    mode: str
    front_size: int
    mean_hpwl: float
    mean_hellinger: float
    mean_range_error: float
    cell_pearson: Optional[float] = None
    cell_spearman: Optional[float] = None


class GoalPlaceResult(BaseModel):
    tool_targets: TargetVector
    prior: PriorEnsemble
    prior_front: ParetoFront
    shrinkage: dict[str, ShrinkageResult]
    mode_targets: dict[str, TargetVector]
    fronts: dict[str, ParetoFront]
    comparison: list[ModeComparison]

    model_config = ConfigDict(arbitrary_types_allowed=True)
