from typing import Optional

from pydantic import BaseModel, ConfigDict

from goalplace.schemas.arrays import IntArray
from goalplace.schemas.netlist import Netlist, Placement, TargetVector


class PostRouteInputs(BaseModel):
    netlist: Netlist
    placement: Placement
    sizes: dict[str, tuple[float, float]]


class SyntheticDesign(BaseModel):
    """A generated design with its reference placement; ``labels`` hold planted module ids."""

    netlist: Netlist
    placement: Placement
    targets: Optional[TargetVector] = None
    slacks: dict[str, float] = {}
    labels: Optional[IntArray] = None
    postroute: Optional[PostRouteInputs] = None

    model_config = ConfigDict(arbitrary_types_allowed=True)
