from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from goalplace.schemas.arrays import FloatArray


class DensityGrid(BaseModel):
    """Bin grid over the floorplan; 2-D arrays are indexed ``[iy, ix]``."""

    origin_x: float
    origin_y: float
    width: float = Field(gt=0)
    height: float = Field(gt=0)
    bin_w: float = Field(gt=0)
    bin_h: float = Field(gt=0)
    nx: int = Field(ge=1)
    ny: int = Field(ge=1)
    occupied: FloatArray
    bin_area: FloatArray
    fixed: FloatArray
    movable_area: float = Field(0.0, ge=0)

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @property
    def rho(self) -> np.ndarray:
        return self.occupied / self.bin_area

    @property
    def x_edges(self) -> np.ndarray:
        return np.minimum(self.origin_x + self.bin_w * np.arange(self.nx + 1), self.origin_x + self.width)

    @property
    def y_edges(self) -> np.ndarray:
        return np.minimum(self.origin_y + self.bin_h * np.arange(self.ny + 1), self.origin_y + self.height)

    def bin_of(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Flat bin index ``iy * nx + ix`` of each point."""
        ix = np.clip(np.floor((np.asarray(x) - self.origin_x) / self.bin_w).astype(np.int64), 0, self.nx - 1)
        iy = np.clip(np.floor((np.asarray(y) - self.origin_y) / self.bin_h).astype(np.int64), 0, self.ny - 1)
        return iy * self.nx + ix


class CellDensityVector(BaseModel):
    names: list[str]
    values: FloatArray
    grid: Optional[DensityGrid] = None

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


class DensityShiftReport(BaseModel):
    place_mean: float
    postroute_mean: float
    shift: float
    hellinger: float
