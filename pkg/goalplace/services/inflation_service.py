import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np

from goalplace.core.config import settings
from goalplace.core.exceptions import InputError
from goalplace.schemas.clustering import Clustering
from goalplace.schemas.density import CellDensityVector, DensityGrid
from goalplace.schemas.inflation import (
    CorrelationReport,
    InflationSource,
    InflationVector,
    RangeErrorReport,
)
from goalplace.schemas.netlist import Cell, Netlist, Placement, TargetVector
from goalplace.utils.stats import pearson, spearman

logger = logging.getLogger(__name__)


def factors_from_targets(
    targets: TargetVector,
    netlist: Netlist,
    r_max: Optional[float] = None,
) -> InflationVector:
    """r_i = 1 / t_i for movable std cells, floored at 1 and capped at ``r_max``."""
    r_max = r_max or settings.r_max
    factors = np.ones(netlist.size)
    inflatable = [cell for cell in netlist.cells if cell.inflatable]
    if inflatable:
        values = targets.align([cell.name for cell in inflatable])
        bad = np.flatnonzero(~(values > 0))
        if bad.size:
            cell = inflatable[int(bad[0])]
            raise InputError(f"target of cell {cell.name} must be positive, got {values[bad[0]]}")
        ratio = 1.0 / values
        capped = int(np.count_nonzero(ratio > r_max))
        if capped:
            logger.warning("%d cells hit the inflation cap r_max=%g", capped, r_max)
        factors[[cell.id for cell in inflatable]] = np.minimum(np.maximum(ratio, 1.0), r_max)
    else:
        capped = 0
    return InflationVector(names=netlist.names, factors=factors, source=InflationSource.target, capped=capped)


def no_inflation(netlist: Netlist) -> InflationVector:
    return InflationVector(names=netlist.names, factors=np.ones(netlist.size), source=InflationSource.none)


def _inflate_cell(cell: Cell, factor: float) -> Cell:
    if factor == 1.0:
        return _deflate_cell(cell)
    pins = cell.base_pin_offsets
    return cell.model_copy(update={
        "width": cell.base_width * factor,
        "pin_offsets": [(dx * factor, dy) for dx, dy in pins],
        "nominal_width": cell.base_width,
        "nominal_pin_offsets": pins,
    })


def _deflate_cell(cell: Cell) -> Cell:
    if not cell.is_inflated:
        return cell
    return cell.model_copy(update={
        "width": cell.nominal_width,
        "pin_offsets": cell.nominal_pin_offsets,
        "nominal_width": None,
        "nominal_pin_offsets": None,
    })


def _rebuild(netlist: Netlist, cells: list[Cell]) -> Netlist:
    return Netlist(
        cells=cells, nets=netlist.nets, floorplan=netlist.floorplan,
        site_width=netlist.site_width, row_height=netlist.row_height,
    )


def apply_inflation(netlist: Netlist, infl: InflationVector) -> Netlist:
    """Inflated copy: widths and pin x-offsets scaled from the nominal geometry, heights untouched."""
    if infl.names != netlist.names:
        raise InputError("inflation factors cover different cells than the netlist")
    if np.any(infl.factors < 1.0):
        raise InputError("inflation factors must be >= 1")
    cells = [_inflate_cell(cell, float(r)) for cell, r in zip(netlist.cells, infl.factors)]
    return _rebuild(netlist, cells)


def deflate(netlist: Netlist) -> Netlist:
    """Restore nominal widths and pin offsets of every inflated cell."""
    return _rebuild(netlist, [_deflate_cell(cell) for cell in netlist.cells])


def pin_inflation(netlist: Netlist, alpha: float) -> InflationVector:
    """Uniform pin-density baseline: widen std cells to ``alpha`` sites per pin and row."""
    if alpha < 0:
        raise InputError(f"alpha must be >= 0, got {alpha}")
    site = netlist.site_width
    factors = np.ones(netlist.size)
    for cell in netlist.cells:
        if not cell.inflatable:
            continue
        width = cell.base_width
        sites = math.ceil(width / site - 1e-9)
        rows = max(1, math.ceil(cell.height / netlist.row_height - 1e-9))
        extra = max(math.ceil(alpha * len(cell.pin_offsets) / rows - sites), 0)
        factors[cell.id] = max((sites + extra) * site / width, 1.0)
    return InflationVector(names=netlist.names, factors=factors, source=InflationSource.pin_uniform)


def range_error(
    targets: TargetVector,
    grid: DensityGrid,
    netlist: Netlist,
    placement: Placement,
    bins: int = 20,
) -> RangeErrorReport:
    """Per-bin target range and the total range error over bins whose average target is not above
    the effective (uninflated) bin density. Cells belong to the bin holding their centre."""
    cells = [cell for cell in netlist.cells if cell.inflatable]
    names = [cell.name for cell in cells]
    t = targets.align(names)
    x0, y0 = placement.align(names)
    width = np.array([cell.base_width for cell in cells])
    height = np.array([cell.height for cell in cells])
    b = grid.bin_of(x0 + width / 2, y0 + height / 2)
    n_bins = grid.nx * grid.ny

    count = np.bincount(b, minlength=n_bins)
    upper = np.full(n_bins, -np.inf)
    lower = np.full(n_bins, np.inf)
    np.maximum.at(upper, b, t)
    np.minimum.at(lower, b, t)
    occupied = count > 0
    spread = np.where(occupied, upper - lower, 0.0)
    average = np.full(n_bins, np.nan)
    average[occupied] = np.bincount(b, weights=t, minlength=n_bins)[occupied] / count[occupied]
    effective = np.bincount(b, weights=width * height, minlength=n_bins) / grid.bin_area.ravel()

    violating = occupied & (average <= effective)
    hist, edges = np.histogram(spread[violating], bins=bins, range=(0.0, 1.0))
    shape = (grid.ny, grid.nx)
    return RangeErrorReport(
        per_bin_range=spread.reshape(shape),
        effective_density=effective.reshape(shape),
        average_target=average.reshape(shape),
        total_error=float(spread[violating].sum()),
        violating_bins=int(violating.sum()),
        histogram=hist.tolist(),
        histogram_edges=edges.tolist(),
    )


def write_range_csv(report: RangeErrorReport, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ny, nx = report.per_bin_range.shape
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("ix,iy,range,average_target,effective_density,violating\n")
        for iy in range(ny):
            for ix in range(nx):
                avg = report.average_target[iy, ix]
                eff = report.effective_density[iy, ix]
                violating = bool(not np.isnan(avg) and avg <= eff)
                avg_text = "" if np.isnan(avg) else repr(float(avg))
                handle.write(
                    f"{ix},{iy},{float(report.per_bin_range[iy, ix])!r},{avg_text},{float(eff)!r},{int(violating)}\n"
                )


def target_correlation(
    targets: TargetVector,
    achieved: CellDensityVector,
    clusters: Optional[Clustering] = None,
) -> CorrelationReport:
    """Pearson (and Spearman) correlation of targets against achieved densities."""
    t = targets.align(achieved.names)
    rho = achieved.values
    undefined = []
    cell_pearson = pearson(t, rho)
    if cell_pearson is None:
        undefined.append("cell")
    cluster_pearson = None
    if clusters is not None:
        if clusters.assignment.size != rho.size:
            raise InputError("clustering covers different cells than the densities")
        cluster_pearson = pearson(clusters.cluster_means(t), clusters.cluster_means(rho))
        if cluster_pearson is None:
            undefined.append("cluster")
    return CorrelationReport(
        cell_pearson=cell_pearson,
        cell_spearman=spearman(t, rho),
        cluster_pearson=cluster_pearson,
        undefined=undefined,
    )
