from enum import Enum
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from goalplace.schemas.arrays import FloatArray
from goalplace.schemas.netlist import TargetVector


class ShrinkageMode(str, Enum):
    mle = "mle"
    js = "js"
    jsd = "jsd"
    js_hetero = "js_hetero"


class PriorEnsemble(BaseModel):
    names: list[str]
    samples: FloatArray  # N x K
    mean: FloatArray
    std: FloatArray

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @property
    def k(self) -> int:
        return int(self.samples.shape[1])


class ShrinkageResult(BaseModel):
    names: list[str]
    mode: ShrinkageMode
    estimates: FloatArray
    raw_estimates: FloatArray
    shrink_factor: float | FloatArray
    sigma0: float
    S: float = Field(ge=0)
    N: int
    clamped_count: int = 0
    fixed_point: Optional[FloatArray] = None
    d_star: Optional[FloatArray] = None

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    def to_targets(self) -> TargetVector:
        return TargetVector(names=self.names, values=self.estimates, provenance=self.mode.value)

    def sidecar(self) -> dict[str, Any]:
        stats: dict[str, Any] = {
            "mode": self.mode.value,
            "sigma0": self.sigma0,
            "S": self.S,
            "N": self.N,
            "clamped_count": self.clamped_count,
        }
        if isinstance(self.shrink_factor, np.ndarray):
            stats["B_hat"] = {
                "mean": float(self.shrink_factor.mean()),
                "min": float(self.shrink_factor.min()),
                "max": float(self.shrink_factor.max()),
            }
        else:
            stats["B_hat"] = self.shrink_factor
        if self.fixed_point is not None:
            stats["A_hat"] = {
                "mean": float(self.fixed_point.mean()),
                "min": float(self.fixed_point.min()),
                "max": float(self.fixed_point.max()),
            }
        return stats


class TimingClipSpec(BaseModel):
    names: list[str]
    budgets: FloatArray
    quantile_count: int = Field(10, ge=1)

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


class RiskReport(BaseModel):
    trials: int
    N: int
    A: float
    sigma0: float
    seed: int
    R_MLE: float
    R_JS: float
    R_Bayes: float
    ratio_JS_Bayes: float
    ratio_JS_MLE: float
    theoretical_ratio: float
    js_win_fraction: float


class NormalityReport(BaseModel):
    alpha: float
    tested: int
    passed: int
    pass_fraction: Optional[float] = None
    skipped: list[str] = []
