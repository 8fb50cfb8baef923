"""Generated designs for tests, the ``synth`` command and desk-scale experiments."""

import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np

from goalplace.core.exceptions import InputError
from goalplace.schemas.netlist import Cell, CellKind, Floorplan, Net, Netlist, Placement, TargetVector
from goalplace.schemas.synthetic import PostRouteInputs, SyntheticDesign
from goalplace.services import netlist_service
from goalplace.utils.seeding import rng_for

logger = logging.getLogger(__name__)

ROW_HEIGHT = 1.0
SITE_WIDTH = 0.2


def _std_cell(cell_id: int, name: str, rng: np.random.Generator, slack: Optional[float] = None,
              kind: CellKind = CellKind.std_cell) -> Cell:
    width = int(rng.integers(3, 8)) * SITE_WIDTH
    pins = int(rng.integers(2, 5))
    return Cell(
        id=cell_id, name=name, width=width, height=ROW_HEIGHT, kind=kind, slack=slack,
        pin_offsets=[(width * (k + 0.5) / pins, ROW_HEIGHT / 2) for k in range(pins)],
    )


def _net(net_id: int, name: str, members, cells: list[Cell], rng: np.random.Generator) -> Net:
    pins = [(int(c), int(rng.integers(len(cells[c].pin_offsets)))) for c in sorted(int(m) for m in members)]
    return Net(id=net_id, name=name, pins=pins)


def _local_nets(
    members: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    count: int,
    degree: tuple[int, int],
    cells: list[Cell],
    first_id: int,
    prefix: str,
    rng: np.random.Generator,
    window: int = 12,
) -> list[Net]:
    """Nets over spatially nearby members (neighbours in row-band order)."""
    if members.size < 2:
        return []
    ordered = _band_order(members, x, y)
    nets = []
    for j in range(count):
        anchor = int(rng.integers(ordered.size))
        lo, hi = max(0, anchor - window), min(ordered.size, anchor + window + 1)
        k = min(int(rng.integers(degree[0], degree[1] + 1)), hi - lo)
        chosen = rng.choice(ordered[lo:hi], size=k, replace=False)
        nets.append(_net(first_id + j, f"{prefix}{j}", chosen, cells, rng))
    return nets


def _band_order(members: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return members[np.lexsort((x[members], np.floor(y[members] / 4)))]


def _tie_loose(
    members: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    nets: list[Net],
    cells: list[Cell],
    prefix: str,
    rng: np.random.Generator,
) -> list[Net]:
    """Two-pin nets joining every member that no net touches to its row-band neighbour."""
    if members.size < 2:
        return []
    wired = {cell for net in nets for cell, _ in net.pins}
    ordered = _band_order(members, x, y)
    extra = []
    for k, cell in enumerate(ordered.tolist()):
        if cell in wired:
            continue
        partner = ordered[k - 1] if k > 0 else ordered[1]
        extra.append(_net(len(nets) + len(extra), f"{prefix}{len(extra)}", [cell, partner], cells, rng))
    return extra


def _square_floorplan(area: float) -> Floorplan:
    height = float(max(1, math.ceil(math.sqrt(area) / ROW_HEIGHT))) * ROW_HEIGHT
    return Floorplan(x=0.0, y=0.0, width=area / height, height=height)


def _rows(count: int, height: float, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, max(1, int(height / ROW_HEIGHT)), size=count) * ROW_HEIGHT


def random_design(
    n_cells: int = 200,
    seed: int = 0,
    utilization: float = 0.6,
    nets_per_cell: float = 1.0,
    n_macros: int = 0,
) -> SyntheticDesign:
    """Flat random design: uniform reference placement, local nets, optional fixed corner macros."""
    if n_cells < 2:
        raise InputError(f"random design needs at least 2 cells, got {n_cells}")
    if not 0 < utilization <= 1:
        raise InputError(f"utilization must lie in (0, 1], got {utilization}")
    rng = rng_for(seed, "random_design")
    cells = [_std_cell(i, f"u{i}", rng, slack=float(rng.normal(0.0, 0.2))) for i in range(n_cells)]
    macro_side = 4 * ROW_HEIGHT
    for k in range(n_macros):
        cells.append(Cell(
            id=len(cells), name=f"macro{k}", width=macro_side, height=macro_side,
            kind=CellKind.macro, movable=False,
            pin_offsets=[(macro_side / 2, 0.0), (macro_side / 2, macro_side)],
        ))
    floorplan = _square_floorplan(sum(c.area for c in cells) / utilization)

    widths = np.array([c.width for c in cells])
    x = rng.uniform(0.0, 1.0, size=len(cells)) * (floorplan.width - widths)
    y = _rows(len(cells), floorplan.height - ROW_HEIGHT, rng).astype(float)
    corners = [(0.0, 0.0), (floorplan.width - macro_side, floorplan.height - macro_side),
               (0.0, floorplan.height - macro_side), (floorplan.width - macro_side, 0.0)]
    for k in range(n_macros):
        x[n_cells + k], y[n_cells + k] = corners[k % 4]

    std = np.arange(n_cells)
    nets = _local_nets(std, x, y, max(1, int(nets_per_cell * n_cells)), (2, 5), cells, 0, "n", rng)
    for k in range(n_macros):
        partner = int(rng.integers(n_cells))
        nets.append(_net(len(nets), f"nm{k}", [n_cells + k, partner], cells, rng))
    netlist = Netlist(cells=cells, nets=nets, floorplan=floorplan, site_width=SITE_WIDTH, row_height=ROW_HEIGHT)
    placement = Placement(frame_id="reference", names=netlist.names, x=x, y=y)
    slacks = {c.name: c.slack for c in cells if c.slack is not None}
    return SyntheticDesign(netlist=netlist, placement=placement, slacks=slacks)


def two_region_design(
    n_cells: int = 2000,
    seed: int = 0,
    low: float = 0.4,
    high: float = 0.9,
    fill: float = 0.95,
) -> SyntheticDesign:
    """Sparse left region (target ``low``) next to a dense right region (target ``high``).

    The reference placement reaches ``fill`` times the targets in each region, so the
    inflated area is ``fill`` of the floorplan. Left cells are timing-critical and
    more densely connected; every cell sits on a net and a handful of nets cross the regions.
    """
    if not 0 < low < high <= 1:
        raise InputError(f"need 0 < low < high <= 1, got {low}, {high}")
    rng = rng_for(seed, "two_region")
    n_left = max(2, round(n_cells * low / (low + high)))
    n_right = max(2, n_cells - n_left)
    cells = [_std_cell(i, f"left/u{i}", rng, slack=float(rng.normal(-0.3, 0.1))) for i in range(n_left)]
    cells += [
        _std_cell(n_left + i, f"right/u{i}", rng, slack=float(rng.normal(0.3, 0.1)))
        for i in range(n_right)
    ]
    areas = np.array([c.area for c in cells])
    left_need = areas[:n_left].sum() / low
    right_need = areas[n_left:].sum() / high
    floorplan = _square_floorplan((left_need + right_need) / fill)
    split = floorplan.width * left_need / (left_need + right_need)

    widths = np.array([c.width for c in cells])
    x = np.empty(len(cells))
    x[:n_left] = rng.uniform(0.0, 1.0, n_left) * (split - widths[:n_left])
    x[n_left:] = split + rng.uniform(0.0, 1.0, n_right) * (floorplan.width - split - widths[n_left:])
    y = _rows(len(cells), floorplan.height - ROW_HEIGHT, rng).astype(float)

    left, right = np.arange(n_left), np.arange(n_left, n_left + n_right)
    nets = _local_nets(left, x, y, int(1.5 * n_left), (3, 5), cells, 0, "nl", rng)
    nets += _local_nets(right, x, y, int(0.5 * n_right), (2, 3), cells, len(nets), "nr", rng)
    nets += _tie_loose(left, x, y, nets, cells, "tl", rng)
    nets += _tie_loose(right, x, y, nets, cells, "tr", rng)
    for j in range(max(1, len(cells) // 200)):
        pair = [int(rng.choice(left)), int(rng.choice(right))]
        nets.append(_net(len(nets), f"nx{j}", pair, cells, rng))

    netlist = Netlist(cells=cells, nets=nets, floorplan=floorplan, site_width=SITE_WIDTH, row_height=ROW_HEIGHT)
    placement = Placement(frame_id="reference", names=netlist.names, x=x, y=y)
    targets = TargetVector(names=netlist.names, values=np.r_[np.full(n_left, low), np.full(n_right, high)])
    design = SyntheticDesign(
        netlist=netlist, placement=placement, targets=targets,
        slacks={c.name: c.slack for c in cells}, labels=np.r_[np.zeros(n_left), np.ones(n_right)],
    )
    design.postroute = postroute_variant(netlist, placement, seed)
    return design


def postroute_variant(
    netlist: Netlist,
    placement: Placement,
    seed: int = 0,
    buffer_fraction: float = 0.02,
    extra_fraction: float = 0.01,
    drop_fraction: float = 0.01,
    jitter: float = 0.5,
) -> PostRouteInputs:
    """A post-route look-alike: jittered positions, upsized cells, inserted buffers,
    post-route-only cells and a few cells lost from the place netlist.

    The size table carries the upsized footprints, so tool targets sit above the
    placed utilization.
    """
    rng = rng_for(seed, "postroute")
    fp = netlist.floorplan
    std_ids = [c.id for c in netlist.cells if c.inflatable]
    n_drop = int(drop_fraction * len(std_ids))
    dropped = set(rng.choice(std_ids, size=n_drop, replace=False).tolist()) if n_drop else set()

    x0, y0 = placement.align(netlist.names)
    cells: list[Cell] = []
    xs: list[float] = []
    ys: list[float] = []
    sizes: netlist_service.SizeTable = {}
    for cell in netlist.cells:
        if cell.id in dropped:
            continue
        width = cell.base_width
        x, y = x0[cell.id], y0[cell.id]
        if cell.movable:
            width *= float(rng.uniform(1.0, 1.3))
            x = float(np.clip(x + rng.normal(0.0, jitter), fp.x, fp.x_max - width))
            y = float(np.clip(y + rng.normal(0.0, jitter), fp.y, fp.y_max - cell.height))
        cells.append(Cell(
            id=len(cells), name=cell.name, width=width, height=cell.height, kind=cell.kind,
            movable=cell.movable,
        ))
        xs.append(x)
        sizes[cell.name] = (width, cell.height)
        ys.append(y)

    def add(count: int, prefix: str, kind: CellKind) -> None:
        for k in range(count):
            anchor = int(rng.integers(len(cells)))
            cell = _std_cell(len(cells), f"{prefix}{k}", rng, kind=kind)
            cells.append(cell.model_copy(update={"pin_offsets": []}))
            xs.append(float(np.clip(xs[anchor] + rng.normal(0.0, jitter), fp.x, fp.x_max - cell.width)))
            ys.append(float(np.clip(ys[anchor] + rng.normal(0.0, jitter), fp.y, fp.y_max - cell.height)))

    add(int(buffer_fraction * len(std_ids)), "pr_buf", CellKind.buffer)
    add(int(extra_fraction * len(std_ids)), "pr_u", CellKind.std_cell)
    postroute = Netlist(
        cells=cells, nets=[], floorplan=fp, site_width=netlist.site_width, row_height=netlist.row_height,
    )
    return PostRouteInputs(
        netlist=postroute,
        placement=Placement(frame_id="postroute", names=postroute.names, x=xs, y=ys),
        sizes=sizes,
    )


def planted_modules(
    n_modules: int = 2,
    cells_per_module: int = 100,
    seed: int = 0,
    nets_per_cell: float = 1.5,
    cross_fraction: float = 0.02,
) -> SyntheticDesign:
    """Modules ``top/m<k>/u<i>`` with dense internal nets, sparse cross nets and blob placements."""
    if n_modules < 1 or cells_per_module < 3:
        raise InputError("planted modules need at least one module of 3 cells")
    rng = rng_for(seed, "planted")
    cells: list[Cell] = []
    labels = np.repeat(np.arange(n_modules), cells_per_module)
    for k in range(n_modules):
        for i in range(cells_per_module):
            cells.append(_std_cell(
                len(cells), f"top/m{k}/u{i}", rng, slack=float(rng.normal(0.2 * k, 0.05)),
            ))
    floorplan = _square_floorplan(sum(c.area for c in cells) / 0.5)

    columns = math.ceil(math.sqrt(n_modules))
    rows = math.ceil(n_modules / columns)
    cx = (labels % columns + 0.5) * floorplan.width / columns
    cy = (labels // columns + 0.5) * floorplan.height / rows
    spread = 0.15 * min(floorplan.width / columns, floorplan.height / rows)
    widths = np.array([c.width for c in cells])
    x = np.clip(cx + rng.normal(0.0, spread, labels.size), 0.0, floorplan.width - widths)
    y = np.clip(np.round(cy + rng.normal(0.0, spread, labels.size)), 0.0, floorplan.height - ROW_HEIGHT)

    nets: list[Net] = []
    for k in range(n_modules):
        members = np.flatnonzero(labels == k)
        for _ in range(int(nets_per_cell * cells_per_module)):
            chosen = rng.choice(members, size=int(rng.integers(2, 5)), replace=False)
            nets.append(_net(len(nets), f"n{len(nets)}", chosen, cells, rng))
    if n_modules > 1:
        for _ in range(int(cross_fraction * len(nets))):
            a, b = rng.choice(n_modules, size=2, replace=False)
            pair = [int(rng.choice(np.flatnonzero(labels == a))), int(rng.choice(np.flatnonzero(labels == b)))]
            nets.append(_net(len(nets), f"n{len(nets)}", pair, cells, rng))

    netlist = Netlist(cells=cells, nets=nets, floorplan=floorplan, site_width=SITE_WIDTH, row_height=ROW_HEIGHT)
    return SyntheticDesign(
        netlist=netlist,
        placement=Placement(frame_id="reference", names=netlist.names, x=x, y=y),
        slacks={c.name: c.slack for c in cells},
        labels=labels,
    )


def write_design(design: SyntheticDesign, out_dir: Path | str) -> list[Path]:
    """Write every input file of ``design`` in the JSON-lines formats."""
    out = Path(out_dir)
    written = [out / "netlist.jsonl", out / "placement.jsonl", out / "slacks.jsonl"]
    netlist_service.serialize_netlist(design.netlist, written[0])
    netlist_service.write_placement(design.placement, written[1])
    netlist_service.write_slacks(design.slacks, written[2])
    if design.targets is not None:
        written.append(out / "targets.jsonl")
        netlist_service.serialize_targets(design.targets, written[-1])
    if design.postroute is not None:
        written += [out / "postroute.jsonl", out / "postroute_placement.jsonl", out / "sizes.jsonl"]
        netlist_service.serialize_netlist(design.postroute.netlist, written[-3])
        netlist_service.write_placement(design.postroute.placement, written[-2])
        netlist_service.write_sizes(design.postroute.sizes, written[-1])
    logger.info("wrote %d design files to %s", len(written), out)
    return written
