from enum import Enum
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict

from goalplace.schemas.arrays import FloatArray


class InflationSource(str, Enum):
    target = "target"
    pin_uniform = "pin_uniform"
    none = "none"


class InflationVector(BaseModel):
    names: list[str]
    factors: FloatArray
    source: InflationSource = InflationSource.target
    capped: int = 0

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


class RangeErrorReport(BaseModel):
    per_bin_range: FloatArray  # ny x nx
    effective_density: FloatArray  # ny x nx, nominal std-cell area per bin
    average_target: FloatArray  # ny x nx, NaN for empty bins
    total_error: float
    violating_bins: int
    histogram: list[int]
    histogram_edges: list[float]

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    def summary(self) -> dict[str, Any]:
        return {
            "total_error": self.total_error,
            "violating_bins": self.violating_bins,
            "histogram_of_ranges": {"counts": self.histogram, "edges": self.histogram_edges},
        }


class CorrelationReport(BaseModel):
    cell_pearson: Optional[float] = None
    cell_spearman: Optional[float] = None
    cluster_pearson: Optional[float] = None
    undefined: list[str] = []
