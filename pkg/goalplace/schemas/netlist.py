from enum import Enum
from functools import cached_property
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from goalplace.core.exceptions import InputError
from goalplace.schemas.arrays import FloatArray

PinOffset = tuple[float, float]


class CellKind(str, Enum):
    std_cell = "std_cell"
    macro = "macro"
    filler = "filler"
    buffer = "buffer"


class NetlistFormat(str, Enum):
    jsonl = "jsonl"
    bookshelf_like = "bookshelf_like"


class CellBase(BaseModel):
    name: str = Field(min_length=1)
    width: float = Field(gt=0)
    height: float = Field(gt=0)
    kind: CellKind = CellKind.std_cell
    movable: bool = True
    pin_offsets: list[PinOffset] = []
    slack: Optional[float] = None


class Cell(CellBase):
    id: int = Field(ge=0)
    zero_sized: bool = False
    # Set only while the cell is inflated; deflation restores them verbatim.
    nominal_width: Optional[float] = None
    nominal_pin_offsets: Optional[list[PinOffset]] = None

    model_config = ConfigDict(frozen=True)

    @property
    def is_inflated(self) -> bool:
        return self.nominal_width is not None

    @property
    def base_width(self) -> float:
        return self.nominal_width if self.nominal_width is not None else self.width

    @property
    def base_pin_offsets(self) -> list[PinOffset]:
        if self.nominal_pin_offsets is not None:
            return self.nominal_pin_offsets
        return self.pin_offsets

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def nominal_area(self) -> float:
        return self.base_width * self.height

    @property
    def inflatable(self) -> bool:
        return self.movable and self.kind in (CellKind.std_cell, CellKind.buffer)


class Net(BaseModel):
    id: int = Field(ge=0)
    name: str
    pins: list[tuple[int, int]] = Field(min_length=1)

    model_config = ConfigDict(frozen=True)

    @property
    def cardinality(self) -> int:
        """|e|: number of distinct cells on the net."""
        return len({cell for cell, _ in self.pins})


class Floorplan(BaseModel):
    x: float = 0.0
    y: float = 0.0
    width: float = Field(ge=0)
    height: float = Field(ge=0)

    model_config = ConfigDict(frozen=True)

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def x_max(self) -> float:
        return self.x + self.width

    @property
    def y_max(self) -> float:
        return self.y + self.height


class Netlist(BaseModel):
    cells: list[Cell] = []
    nets: list[Net] = []
    floorplan: Floorplan
    site_width: float = Field(gt=0)
    row_height: float = Field(gt=0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_references(self) -> "Netlist":
        names = set()
        for expected, cell in enumerate(self.cells):
            if cell.id != expected:
                raise ValueError(f"cell ids must be contiguous: {cell.name} has id {cell.id}")
            if cell.name in names:
                raise ValueError(f"duplicate cell name {cell.name}")
            names.add(cell.name)
        for net in self.nets:
            for cell_id, pin_idx in net.pins:
                if not 0 <= cell_id < len(self.cells):
                    raise ValueError(f"dangling pin on net {net.name}: cell id {cell_id}")
                if not 0 <= pin_idx < len(self.cells[cell_id].pin_offsets):
                    raise ValueError(
                        f"dangling pin on net {net.name}: {self.cells[cell_id].name} has no pin {pin_idx}"
                    )
        return self

    @property
    def size(self) -> int:
        return len(self.cells)

    @cached_property
    def names(self) -> list[str]:
        return [cell.name for cell in self.cells]

    @cached_property
    def index(self) -> dict[str, int]:
        return {cell.name: cell.id for cell in self.cells}

    @cached_property
    def widths(self) -> np.ndarray:
        return np.array([c.width for c in self.cells], dtype=float)

    @cached_property
    def nominal_widths(self) -> np.ndarray:
        return np.array([c.base_width for c in self.cells], dtype=float)

    @cached_property
    def heights(self) -> np.ndarray:
        return np.array([c.height for c in self.cells], dtype=float)

    @cached_property
    def movable(self) -> np.ndarray:
        return np.array([c.movable for c in self.cells], dtype=bool)

    def kind_mask(self, *kinds: CellKind) -> np.ndarray:
        return np.array([c.kind in kinds for c in self.cells], dtype=bool)

    @cached_property
    def pin_table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Flattened pins ``(net, cell, dx, dy)`` ordered by net, offsets from the cell origin."""
        net_ids, cell_ids, dx, dy = [], [], [], []
        for net in self.nets:
            for cell_id, pin_idx in net.pins:
                ox, oy = self.cells[cell_id].pin_offsets[pin_idx]
                net_ids.append(net.id)
                cell_ids.append(cell_id)
                dx.append(ox)
                dy.append(oy)
        return (
            np.array(net_ids, dtype=np.int64),
            np.array(cell_ids, dtype=np.int64),
            np.array(dx, dtype=float),
            np.array(dy, dtype=float),
        )

    def cell(self, name: str) -> Cell:
        try:
            return self.cells[self.index[name]]
        except KeyError as exc:
            raise InputError(f"unknown cell {name}") from exc


class Placement(BaseModel):
    """Cell origins (lower-left corners) keyed by cell name."""

    frame_id: str = "placement"
    names: list[str]
    x: FloatArray
    y: FloatArray

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def check_lengths(self) -> "Placement":
        if not len(self.names) == self.x.size == self.y.size:
            raise ValueError("placement names and coordinates differ in length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate cell in placement")
        return self

    @cached_property
    def index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    def align(self, names: list[str]) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates reordered to ``names``; every name must be present."""
        index = self.index
        missing = [name for name in names if name not in index]
        if missing:
            raise InputError(
                f"placement {self.frame_id} has no position for {len(missing)} cell(s), e.g. {missing[0]}"
            )
        order = np.fromiter((index[name] for name in names), dtype=np.int64, count=len(names))
        return self.x[order], self.y[order]

    def subset(self, names: list[str], frame_id: Optional[str] = None) -> "Placement":
        x, y = self.align(names)
        return Placement(frame_id=frame_id or self.frame_id, names=list(names), x=x, y=y)


class TargetVector(BaseModel):
    names: list[str]
    values: FloatArray
    provenance: str = "tool"

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def check_lengths(self) -> "TargetVector":
        if len(self.names) != self.values.size:
            raise ValueError("target names and values differ in length")
        return self

    @cached_property
    def index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    def align(self, names: list[str]) -> np.ndarray:
        index = self.index
        missing = [name for name in names if name not in index]
        if missing:
            raise InputError(f"no target for {len(missing)} cell(s), e.g. {missing[0]}")
        return self.values[[index[name] for name in names]]


class MatchReport(BaseModel):
    matched: list[tuple[str, str]] = []
    removed_buffers: int = 0
    zeroed: list[str] = []
    place_only: list[str] = []


class MatchedGeometry(BaseModel):
    """Post-route positions with post-synthesis sizes; input to target computation."""

    netlist: Netlist
    placement: Placement
    report: MatchReport

    model_config = ConfigDict(arbitrary_types_allowed=True)
