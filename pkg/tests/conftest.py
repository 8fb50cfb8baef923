"""Pytest configuration and fixtures."""

import json
import os

import numpy as np
import pytest

from goalplace.core import config
from goalplace.schemas.netlist import Cell, CellKind, Floorplan, Net, Netlist, Placement
from goalplace.services import synthetic_service


@pytest.fixture(autouse=True)
def reset_settings(monkeypatch):
    """Fresh settings for every test, independent of the caller's GOALPLACE_* environment."""
    for key in list(os.environ):
        if key.startswith("GOALPLACE_"):
            monkeypatch.delenv(key)
    config._settings = None
    yield
    config._settings = None


def build_netlist(specs, nets=(), floorplan=(0.0, 0.0, 10.0, 10.0), site_width=0.2, row_height=1.0) -> Netlist:
    """Netlist from ``(name, w, h, kind, movable, pins)`` tuples and ``(name, [(cell, pin), ...])`` nets."""
    cells = []
    for cell_id, spec in enumerate(specs):
        name, w, h, *rest = spec
        kind = rest[0] if len(rest) > 0 else CellKind.std_cell
        movable = rest[1] if len(rest) > 1 else kind != CellKind.macro
        pins = rest[2] if len(rest) > 2 else [(w / 2, h / 2)]
        cells.append(Cell(id=cell_id, name=name, width=w, height=h, kind=kind, movable=movable, pin_offsets=pins))
    index = {c.name: c.id for c in cells}
    built_nets = [
        Net(id=i, name=name, pins=[(index[c], p) for c, p in pins]) for i, (name, pins) in enumerate(nets)
    ]
    x, y, w, h = floorplan
    return Netlist(
        cells=cells, nets=built_nets, floorplan=Floorplan(x=x, y=y, width=w, height=h),
        site_width=site_width, row_height=row_height,
    )


@pytest.fixture
def netlist_factory():
    """Build small hand-written netlists."""
    return build_netlist


@pytest.fixture
def placement_factory():
    def make(positions: dict[str, tuple[float, float]], frame_id: str = "test") -> Placement:
        names = list(positions)
        return Placement(
            frame_id=frame_id, names=names,
            x=np.array([positions[n][0] for n in names]), y=np.array([positions[n][1] for n in names]),
        )

    return make


@pytest.fixture
def write_jsonl(tmp_path):
    """Write a list of records as a JSON-lines file under tmp_path."""
    def write(name: str, records) -> str:
        path = tmp_path / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            for record in records:
                handle.write(record if isinstance(record, str) else json.dumps(record))
                handle.write("\n")
        return path

    return write


@pytest.fixture
def three_cells(netlist_factory):
    """Three 1x1 std cells on a 10x10 floorplan, a two-pin and a three-pin net."""
    return netlist_factory(
        [("a", 1.0, 1.0), ("b", 1.0, 1.0), ("c", 1.0, 1.0)],
        nets=[("n0", [("a", 0), ("b", 0)]), ("n1", [("a", 0), ("b", 0), ("c", 0)])],
    )


@pytest.fixture(scope="session")
def random_design():
    return synthetic_service.random_design(n_cells=200, seed=1)


@pytest.fixture(scope="session")
def two_region():
    return synthetic_service.two_region_design(n_cells=2000, seed=0)


@pytest.fixture(scope="session")
def planted():
    return synthetic_service.planted_modules(n_modules=2, cells_per_module=60, seed=3, nets_per_cell=4.0)
