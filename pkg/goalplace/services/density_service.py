import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import sparse

from goalplace.core.config import settings
from goalplace.core.exceptions import InputError, NumericalError
from goalplace.schemas.density import CellDensityVector, DensityGrid, DensityShiftReport
from goalplace.schemas.netlist import CellKind, Netlist, Placement, TargetVector
from goalplace.services import netlist_service

logger = logging.getLogger(__name__)


def _spans(lo, hi, origin, step, count, limit):
    """Per-object bin ranges along one axis and the overlap length with each bin."""
    first = np.clip(np.floor((lo - origin) / step).astype(np.int64), 0, count - 1)
    last = np.clip(np.ceil((hi - origin) / step).astype(np.int64) - 1, 0, count - 1)
    last = np.maximum(last, first)
    counts = last - first + 1
    owner = np.repeat(np.arange(lo.size), counts)
    offset = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    idx = first[owner] + offset
    edge_lo = origin + idx * step
    edge_hi = np.minimum(origin + (idx + 1) * step, limit)
    length = np.minimum(hi[owner], edge_hi) - np.maximum(lo[owner], edge_lo)
    return owner, idx, np.maximum(length, 0.0), counts


def overlap_matrix(
    x0: np.ndarray,
    y0: np.ndarray,
    w: np.ndarray,
    h: np.ndarray,
    grid: DensityGrid,
) -> sparse.csr_matrix:
    """Exact rectangle/bin intersection areas OA(i, b) as a (objects x bins) CSR matrix.

    Rectangles are clipped to the floorplan; column ``b = iy * nx + ix``.
    """
    x_lim = grid.origin_x + grid.width
    y_lim = grid.origin_y + grid.height
    xl = np.clip(x0, grid.origin_x, x_lim)
    xh = np.clip(x0 + w, grid.origin_x, x_lim)
    yl = np.clip(y0, grid.origin_y, y_lim)
    yh = np.clip(y0 + h, grid.origin_y, y_lim)
    x_owner, ix, ov_x, x_counts = _spans(xl, xh, grid.origin_x, grid.bin_w, grid.nx, x_lim)
    y_owner, iy, ov_y, _ = _spans(yl, yh, grid.origin_y, grid.bin_h, grid.ny, y_lim)

    x_start = np.cumsum(x_counts) - x_counts
    per_y = x_counts[y_owner]
    rep = np.repeat(np.arange(y_owner.size), per_y)
    offset = np.arange(per_y.sum()) - np.repeat(np.cumsum(per_y) - per_y, per_y)
    x_entry = x_start[y_owner[rep]] + offset

    rows = y_owner[rep]
    cols = iy[rep] * grid.nx + ix[x_entry]
    data = ov_y[rep] * ov_x[x_entry]
    matrix = sparse.csr_matrix((data, (rows, cols)), shape=(x0.size, grid.nx * grid.ny))
    matrix.eliminate_zeros()
    return matrix


def normalize_rows(matrix: sparse.csr_matrix, totals: np.ndarray) -> sparse.csr_matrix:
    """Divide every row of ``matrix`` by ``totals`` entrywise (not by a reciprocal)."""
    result = matrix.copy()
    rows = np.repeat(np.arange(matrix.shape[0]), np.diff(matrix.indptr))
    result.data = result.data / totals[rows]
    return result


def empty_grid(netlist: Netlist, bin_scale: Optional[float] = None) -> DensityGrid:
    """Grid geometry for ``netlist`` with nothing placed on it."""
    fp = netlist.floorplan
    if fp.area <= 0:
        raise InputError("zero-area floorplan")
    bin_scale = bin_scale or settings.bin_scale
    bin_w = bin_h = bin_scale * netlist.row_height
    nx = max(1, math.ceil(fp.width / bin_w - 1e-12))
    ny = max(1, math.ceil(fp.height / bin_h - 1e-12))
    widths = np.diff(np.minimum(fp.x + bin_w * np.arange(nx + 1), fp.x_max))
    heights = np.diff(np.minimum(fp.y + bin_h * np.arange(ny + 1), fp.y_max))
    zeros = np.zeros((ny, nx))
    return DensityGrid(
        origin_x=fp.x, origin_y=fp.y, width=fp.width, height=fp.height,
        bin_w=bin_w, bin_h=bin_h, nx=nx, ny=ny,
        occupied=zeros, bin_area=np.outer(heights, widths), fixed=zeros,
    )


def spreading_grid(netlist: Netlist, objects: int, coarsest: Optional[DensityGrid] = None) -> DensityGrid:
    """Power-of-two bin counts sized to ``objects`` and the floorplan aspect ratio.

    Bins tile the floorplan exactly; neither axis is coarser than ``coarsest``.
    """
    fp = netlist.floorplan
    if fp.area <= 0:
        raise InputError("zero-area floorplan")
    aspect = fp.height / fp.width
    count = max(objects, 1)
    nx = 2 ** max(math.ceil(math.log2(math.sqrt(count / aspect))), 0)
    ny = 2 ** max(math.ceil(math.log2(math.sqrt(count * aspect))), 0)
    if coarsest is not None:
        nx, ny = max(nx, coarsest.nx), max(ny, coarsest.ny)
    bin_w, bin_h = fp.width / nx, fp.height / ny
    zeros = np.zeros((ny, nx))
    return DensityGrid(
        origin_x=fp.x, origin_y=fp.y, width=fp.width, height=fp.height,
        bin_w=bin_w, bin_h=bin_h, nx=nx, ny=ny,
        occupied=zeros, bin_area=np.full((ny, nx), bin_w * bin_h), fixed=zeros,
    )


def footprints(
    netlist: Netlist,
    placement: Placement,
    sizes: Optional[netlist_service.SizeTable] = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Origins and sizes of every netlist cell; zero-sized cells keep their site footprint."""
    x0, y0 = placement.align(netlist.names)
    w = netlist.widths.copy()
    h = netlist.heights.copy()
    if sizes:
        for cell in netlist.cells:
            if cell.name in sizes and not cell.zero_sized:
                w[cell.id], h[cell.id] = sizes[cell.name]
    return x0, y0, w, h


def build_grid(
    netlist: Netlist,
    placement: Placement,
    sizes: Optional[netlist_service.SizeTable] = None,
    bin_scale: Optional[float] = None,
) -> DensityGrid:
    """Accumulate occupied area per bin; macros and std cells count, fillers do not."""
    grid = empty_grid(netlist, bin_scale)
    x0, y0, w, h = footprints(netlist, placement, sizes)
    counted = ~netlist.kind_mask(CellKind.filler)
    oa = overlap_matrix(x0[counted], y0[counted], w[counted], h[counted], grid)
    fixed_rows = ~netlist.movable[counted]
    occupied = np.asarray(oa.sum(axis=0)).ravel()
    fixed = np.asarray(oa[fixed_rows].sum(axis=0)).ravel()
    movable = counted & netlist.movable
    return grid.model_copy(update={
        "occupied": occupied.reshape(grid.ny, grid.nx),
        "fixed": fixed.reshape(grid.ny, grid.nx),
        "movable_area": float((w[movable] * h[movable]).sum()),
    })


def cell_density(
    grid: DensityGrid,
    netlist: Netlist,
    placement: Placement,
    sizes: Optional[netlist_service.SizeTable] = None,
) -> CellDensityVector:
    """rho_i = sum_b rho_b * OA(i, b) / a_i for every netlist cell."""
    x0, y0, w, h = footprints(netlist, placement, sizes)
    oa = overlap_matrix(x0, y0, w, h, grid)
    # a_i from the same endpoints as OA so a cell inside one bin gets exactly rho_b
    area = ((x0 + w) - x0) * ((y0 + h) - y0)
    if np.any(area <= 0):
        bad = netlist.names[int(np.argmax(area <= 0))]
        raise NumericalError(f"cell {bad} has zero area")
    values = normalize_rows(oa, area) @ grid.rho.ravel()
    return CellDensityVector(names=netlist.names, values=values, grid=grid)


def tool_target(
    place: Netlist,
    postroute: Netlist,
    postroute_positions: Placement,
    postsynth_sizes: netlist_service.SizeTable,
    bin_scale: Optional[float] = None,
) -> TargetVector:
    """Tool density z_i of every place-netlist cell measured on the matched post-route geometry."""
    geometry = netlist_service.match_netlists(place, postroute, postroute_positions, postsynth_sizes)
    grid = build_grid(geometry.netlist, geometry.placement, bin_scale=bin_scale)
    rho = cell_density(grid, geometry.netlist, geometry.placement)
    measured = dict(zip(rho.names, rho.values))

    std_values = [measured[c.name] for c in place.cells
                  if c.name in measured and c.kind in (CellKind.std_cell, CellKind.buffer)]
    pool = std_values or [measured[name] for name in place.names if name in measured]
    default = float(np.mean(pool))
    values = np.array([measured.get(name, default) for name in place.names], dtype=float)
    if geometry.report.place_only:
        logger.info("%d place-only cells get the mean target %.4f", len(geometry.report.place_only), default)
    return TargetVector(names=place.names, values=values, provenance="tool")


def density_histogram(values: np.ndarray, bins: Optional[int] = None) -> np.ndarray:
    """Counts over [0, 1]; values outside are folded into the end bins."""
    bins = bins or settings.hist_bins
    counts, _ = np.histogram(np.clip(values, 0.0, 1.0), bins=bins, range=(0.0, 1.0))
    return counts.astype(float)


def density_shift_report(place_density: np.ndarray, postroute_density: np.ndarray) -> DensityShiftReport:
    """How far post-route densities moved from the global-placement densities."""
    from goalplace.services.explore_service import hellinger

    place_mean = float(np.mean(place_density))
    post_mean = float(np.mean(postroute_density))
    return DensityShiftReport(
        place_mean=place_mean,
        postroute_mean=post_mean,
        shift=post_mean - place_mean,
        hellinger=hellinger(density_histogram(place_density), density_histogram(postroute_density)),
    )


def write_density_csv(grid: DensityGrid, path: Path | str) -> None:
    """ny rows by nx columns of rho_b, bottom row first."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, grid.rho, delimiter=",", fmt="%.17g")


def write_density_pgm(grid: DensityGrid, path: Path | str) -> None:
    """Plain (P2) 8-bit greyscale map, top row of the floorplan first."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels = np.rint(np.clip(grid.rho, 0.0, 1.0) * 255).astype(int)[::-1]
    with open(path, "w", encoding="ascii") as handle:
        handle.write(f"P2\n{grid.nx} {grid.ny}\n255\n")
        for row in pixels:
            handle.write(" ".join(str(v) for v in row))
            handle.write("\n")
