import logging
import math
from typing import Optional

import numpy as np
from scipy import fft, ndimage

from goalplace.core.config import settings
from goalplace.core.exceptions import InputError, NumericalError
from goalplace.schemas.density import DensityGrid
from goalplace.schemas.netlist import Cell, CellKind, Netlist, Placement
from goalplace.schemas.placer import (
    ConvergenceRecord,
    DensityMethod,
    OverflowReport,
    PlacementResult,
    PlacerConfig,
    PlacerState,
)
from goalplace.services import density_service
from goalplace.services.inflation_service import _rebuild
from goalplace.utils.seeding import rng_for

logger = logging.getLogger(__name__)

FILLER_PREFIX = "__filler_"
SQRT2 = math.sqrt(2.0)
# initial cloud radius as a fraction of the shorter floorplan side
CENTRE_SPREAD = 0.01


def default_config(**overrides) -> PlacerConfig:
    """PlacerConfig seeded from the settings; explicit overrides win."""
    values = {
        "bin_scale": settings.bin_scale,
        "filler_sites": settings.filler_sites,
        "overflow_stop": settings.overflow_stop,
        "density_growth": settings.density_growth,
        "warmup_iterations": settings.warmup_iterations,
        "seed": settings.seed,
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    return PlacerConfig(**values)


def solve_poisson(rho: np.ndarray, bin_w: float, bin_h: float) -> np.ndarray:
    """Potential phi with laplacian(phi) = -(rho - mean(rho)) and reflective boundaries.

    The DCT-II diagonalises the edge-reflected five-point Laplacian; the
    constant mode is set to zero.
    """
    ny, nx = rho.shape
    rhs = rho - rho.mean()
    coeff = fft.dctn(rhs, type=2, norm="ortho")
    mu_x = 4.0 * np.sin(np.pi * np.arange(nx) / (2 * nx)) ** 2 / bin_w**2
    mu_y = 4.0 * np.sin(np.pi * np.arange(ny) / (2 * ny)) ** 2 / bin_h**2
    eigen = mu_y[:, None] + mu_x[None, :]
    eigen[0, 0] = 1.0
    coeff = coeff / eigen
    coeff[0, 0] = 0.0
    return fft.idctn(coeff, type=2, norm="ortho")


def laplacian(phi: np.ndarray, bin_w: float, bin_h: float) -> np.ndarray:
    padded = np.pad(phi, 1, mode="edge")
    d2x = (padded[1:-1, 2:] - 2 * phi + padded[1:-1, :-2]) / bin_w**2
    d2y = (padded[2:, 1:-1] - 2 * phi + padded[:-2, 1:-1]) / bin_h**2
    return d2x + d2y


def overflow(grid: DensityGrid, d_t: float) -> OverflowReport:
    """Per-bin overflow max(rho_b - d_t, 0), fixed area included in rho_b.

    ``total_overflow`` is the bin-area weighted excess as a fraction of the movable area.
    """
    excess = np.maximum(grid.occupied - d_t * grid.bin_area, 0.0)
    total = float(excess.sum() / grid.movable_area) if grid.movable_area > 0 else 0.0
    return OverflowReport(max_overflow=float((excess / grid.bin_area).max()), total_overflow=total)


def free_overflow(grid: DensityGrid, d_t: float) -> OverflowReport:
    """Movable area above ``d_t`` times the bin capacity left by fixed objects.

    Equal to :func:`overflow` on bins without fixed area; a bin filled by a macro
    counts as full here and as overflowing there. The placer stops on this one.
    """
    capacity = d_t * (grid.bin_area - grid.fixed)
    excess = np.maximum(grid.occupied - grid.fixed - capacity, 0.0)
    total = float(excess.sum() / grid.movable_area) if grid.movable_area > 0 else 0.0
    return OverflowReport(max_overflow=float((excess / grid.bin_area).max()), total_overflow=total)


def _blocks(cell: Cell, movable_macros: bool) -> bool:
    if cell.kind == CellKind.filler or cell.movable:
        return False
    return not (movable_macros and cell.kind == CellKind.macro)


def free_area(netlist: Netlist, fixed: Optional[Placement] = None, movable_macros: bool = False) -> float:
    """Floorplan area not covered by fixed cells."""
    blocked = [c for c in netlist.cells if _blocks(c, movable_macros)]
    if not blocked:
        return netlist.floorplan.area
    if fixed is None:
        return netlist.floorplan.area - sum(c.area for c in blocked)
    grid = density_service.empty_grid(netlist)
    x0, y0 = fixed.align([c.name for c in blocked])
    oa = density_service.overlap_matrix(
        x0, y0, np.array([c.width for c in blocked]), np.array([c.height for c in blocked]), grid
    )
    return netlist.floorplan.area - float(oa.sum())


def insert_fillers(
    netlist: Netlist,
    d_t: float,
    filler_sites: int = 4,
    fixed: Optional[Placement] = None,
    movable_macros: bool = False,
) -> Netlist:
    """Add pin-less movable fillers so movable plus filler area reaches ``d_t`` of the free area."""
    if not 0 < d_t <= 1:
        raise InputError(f"d_t must lie in (0, 1], got {d_t}")
    cells = list(_without_fillers(netlist).cells)
    movable = sum(c.area for c in cells if c.kind != CellKind.filler and not _blocks(c, movable_macros))
    budget = d_t * free_area(netlist, fixed, movable_macros) - movable
    filler_w = filler_sites * netlist.site_width
    filler_area = filler_w * netlist.row_height
    if budget < 0:
        logger.warning("movable area exceeds d_t * free area by %.4g; no fillers inserted", -budget)
        count = 0
    else:
        count = int(math.floor(budget / filler_area + 1e-9))
    for j in range(count):
        cells.append(Cell(
            id=len(cells), name=f"{FILLER_PREFIX}{j}", width=filler_w, height=netlist.row_height,
            kind=CellKind.filler, movable=True,
        ))
    return _rebuild(netlist, cells)


def _without_fillers(netlist: Netlist) -> Netlist:
    cells = [c for c in netlist.cells if c.kind != CellKind.filler]
    if len(cells) == netlist.size:
        return netlist
    # nets never reference fillers, but ids shift
    remap = {c.id: i for i, c in enumerate(cells)}
    nets = [net.model_copy(update={"pins": [(remap[c], p) for c, p in net.pins]}) for net in netlist.nets]
    return Netlist(
        cells=[c.model_copy(update={"id": i}) for i, c in enumerate(cells)], nets=nets,
        floorplan=netlist.floorplan, site_width=netlist.site_width, row_height=netlist.row_height,
    )


def hpwl(netlist: Netlist, placement: Placement) -> float:
    """Exact half-perimeter wirelength with pins at the current (possibly inflated) offsets."""
    net_ids, cell_ids, dx, dy = netlist.pin_table
    if net_ids.size == 0:
        return 0.0
    x0, y0 = placement.align(netlist.names)
    return _hpwl(net_ids, x0[cell_ids] + dx, y0[cell_ids] + dy)


def _hpwl(net_ids: np.ndarray, px: np.ndarray, py: np.ndarray) -> float:
    starts = np.flatnonzero(np.r_[True, net_ids[1:] != net_ids[:-1]])
    span_x = np.maximum.reduceat(px, starts) - np.minimum.reduceat(px, starts)
    span_y = np.maximum.reduceat(py, starts) - np.minimum.reduceat(py, starts)
    return float(span_x.sum() + span_y.sum())


class _Pins:
    """Pins of multi-pin nets, grouped by net, with offsets from the object centre."""

    def __init__(self, netlist: Netlist, index: np.ndarray):
        net_ids, cell_ids, dx, dy = netlist.pin_table
        keep = np.zeros(net_ids.size, dtype=bool)
        if net_ids.size:
            sizes = np.bincount(net_ids, minlength=len(netlist.nets))
            keep = sizes[net_ids] >= 2
        self.net = net_ids[keep]
        self.obj = index[cell_ids[keep]]
        self.dx = dx[keep] - netlist.widths[cell_ids[keep]] / 2
        self.dy = dy[keep] - netlist.heights[cell_ids[keep]] / 2
        self.starts = np.flatnonzero(np.r_[True, self.net[1:] != self.net[:-1]]) if self.net.size else self.net
        self.counts = np.diff(np.r_[self.starts, self.net.size])

    def __bool__(self) -> bool:
        return bool(self.net.size)


def _wa_axis(p: np.ndarray, starts: np.ndarray, counts: np.ndarray, gamma: float) -> tuple[float, np.ndarray]:
    """Weighted-average wirelength along one axis and its gradient per pin."""
    hi = np.repeat(np.maximum.reduceat(p, starts), counts)
    lo = np.repeat(np.minimum.reduceat(p, starts), counts)
    ep = np.exp((p - hi) / gamma)
    em = np.exp((lo - p) / gamma)
    sp = np.repeat(np.add.reduceat(ep, starts), counts)
    sm = np.repeat(np.add.reduceat(em, starts), counts)
    wa_p = np.repeat(np.add.reduceat(p * ep, starts), counts) / sp
    wa_m = np.repeat(np.add.reduceat(p * em, starts), counts) / sm
    grad = ep / sp * (1 + (p - wa_p) / gamma) - em / sm * (1 - (p - wa_m) / gamma)
    length = np.add.reduceat(wa_p - wa_m, starts) / counts
    return float(length.sum()), grad


def _wirelength_gradient(pins: _Pins, cx, cy, gamma, n_obj) -> tuple[np.ndarray, np.ndarray]:
    if not pins:
        return np.zeros(n_obj), np.zeros(n_obj)
    _, gx = _wa_axis(cx[pins.obj] + pins.dx, pins.starts, pins.counts, gamma)
    _, gy = _wa_axis(cy[pins.obj] + pins.dy, pins.starts, pins.counts, gamma)
    return (np.bincount(pins.obj, weights=gx, minlength=n_obj),
            np.bincount(pins.obj, weights=gy, minlength=n_obj))


def _clamp(cx, cy, w, h, grid: DensityGrid) -> None:
    half_w = np.minimum(w, grid.width) / 2
    half_h = np.minimum(h, grid.height) / 2
    np.clip(cx, grid.origin_x + half_w, grid.origin_x + grid.width - half_w, out=cx)
    np.clip(cy, grid.origin_y + half_h, grid.origin_y + grid.height - half_h, out=cy)



class _DensityModel:
    """Spreading field from movable cells, fillers and d_t-scaled fixed objects.

    Every object carries its own area as charge; the returned forces are charge
    times the potential gradient averaged over the (smoothed) footprint.
    """

    def __init__(self, grid: DensityGrid, config: PlacerConfig, w, h, fixed_occupied: np.ndarray):
        self.grid = grid
        self.config = config
        self.w = np.maximum(w, SQRT2 * grid.bin_w)
        self.h = np.maximum(h, SQRT2 * grid.bin_h)
        self.charge = w * h
        self.scale = self.charge / (self.w * self.h)
        self.fixed = config.d_t * fixed_occupied.ravel()

    def field(self, cx, cy) -> tuple[np.ndarray, np.ndarray]:
        grid = self.grid
        oa = density_service.overlap_matrix(cx - self.w / 2, cy - self.h / 2, self.w, self.h, grid)
        charge = oa.T @ self.scale
        rho = ((charge + self.fixed) / grid.bin_area.ravel()).reshape(grid.ny, grid.nx)
        if self.config.density_method == DensityMethod.poisson:
            phi = solve_poisson(rho, grid.bin_w, grid.bin_h)
        else:
            excess = np.maximum(rho - self.config.d_t, 0.0)
            phi = ndimage.gaussian_filter(excess, sigma=1.0, mode="nearest")
        d_dx = np.gradient(phi, grid.bin_w, axis=1) if grid.nx > 1 else np.zeros_like(phi)
        d_dy = np.gradient(phi, grid.bin_h, axis=0) if grid.ny > 1 else np.zeros_like(phi)
        sample = density_service.normalize_rows(oa, np.maximum(np.asarray(oa.sum(axis=1)).ravel(), 1e-300))
        return self.charge * (sample @ d_dx.ravel()), self.charge * (sample @ d_dy.ravel())


def place(
    netlist: Netlist,
    config: PlacerConfig,
    fixed: Optional[Placement] = None,
    initial: Optional[Placement] = None,
) -> PlacementResult:
    """Global placement by momentum gradient descent on smoothed wirelength plus density.

    Cells start clustered at the floorplan centre and fillers spread over it. The
    density weight grows geometrically after the warmup until the overflow against
    the free capacity drops to ``config.overflow_stop`` or the iteration cap is hit.
    Returned positions are nominal footprints centred where the (possibly inflated)
    objects ended.
    """
    base = _without_fillers(netlist)

    def is_movable(c: Cell) -> bool:
        return c.movable or (config.movable_macros and c.kind == CellKind.macro)

    movable_ids = np.array([c.id for c in base.cells if is_movable(c)], dtype=np.int64)
    fixed_ids = np.array([c.id for c in base.cells if not is_movable(c)], dtype=np.int64)
    if movable_ids.size == 0:
        raise InputError("netlist has no movable cell")

    grid = density_service.empty_grid(base, config.bin_scale)
    w_all, h_all = base.widths, base.heights
    fixed_x = fixed_y = np.empty(0)
    if fixed_ids.size:
        if fixed is None:
            raise InputError("fixed cells need positions from a fixed placement")
        fixed_x, fixed_y = fixed.align([base.names[i] for i in fixed_ids])
    fixed_w, fixed_h = w_all[fixed_ids], h_all[fixed_ids]
    fixed_oa = density_service.overlap_matrix(fixed_x, fixed_y, fixed_w, fixed_h, grid)
    fixed_occupied = np.asarray(fixed_oa.sum(axis=0)).ravel().reshape(grid.ny, grid.nx)
    free = grid.width * grid.height - float(fixed_occupied.sum())
    movable_area = float((w_all[movable_ids] * h_all[movable_ids]).sum())
    if free <= 0 or movable_area > free * (1 + 1e-9):
        raise NumericalError(
            "inflation exceeds capacity",
            {"movable_area": movable_area, "free_area": free},
        )

    filled = insert_fillers(base, config.d_t, config.filler_sites, fixed, config.movable_macros)
    n_fill = filled.size - base.size
    filler_w = config.filler_sites * base.site_width

    rng = rng_for(config.seed, "place")
    n_mov = movable_ids.size
    n_obj = n_mov + n_fill
    w = np.r_[w_all[movable_ids], np.full(n_fill, filler_w)]
    h = np.r_[h_all[movable_ids], np.full(n_fill, base.row_height)]

    spread = density_service.spreading_grid(base, n_obj, grid)
    spread_oa = density_service.overlap_matrix(fixed_x, fixed_y, fixed_w, fixed_h, spread)
    spread_fixed = np.asarray(spread_oa.sum(axis=0)).ravel().reshape(spread.ny, spread.nx)
    logger.debug("spreading on %dx%d bins for %d objects (%d fillers)", spread.nx, spread.ny, n_obj, n_fill)

    cx, cy = _initial_centres(grid, n_mov, n_fill, rng)
    if initial is not None:
        known = [i for i, cid in enumerate(movable_ids) if base.names[cid] in initial.index]
        if known:
            ix, iy = initial.align([base.names[movable_ids[i]] for i in known])
            cx[known] = ix + w[known] / 2
            cy[known] = iy + h[known] / 2
    _clamp(cx, cy, w, h, grid)

    # object index per netlist cell; fixed cells follow the movable objects and fillers
    index = np.empty(base.size, dtype=np.int64)
    index[movable_ids] = np.arange(n_mov)
    index[fixed_ids] = n_obj + np.arange(fixed_ids.size)
    pins = _Pins(base, index)
    fixed_cx = fixed_x + fixed_w / 2
    fixed_cy = fixed_y + fixed_h / 2
    n_all = n_obj + fixed_ids.size
    pin_count = np.bincount(pins.obj, minlength=n_all)[:n_obj] if pins else np.zeros(n_obj)

    model = _DensityModel(spread, config, w, h, spread_fixed)
    gamma = config.gamma_factor * grid.bin_w
    unit = min(spread.bin_w, spread.bin_h)
    state = PlacerState(cx=cx, cy=cy, step=config.step_size)
    vx = np.zeros(n_obj)
    vy = np.zeros(n_obj)
    log: list[ConvergenceRecord] = []
    best_overflow = math.inf
    best_hpwl = 0.0
    stop_reason = "iterations"
    mov_w, mov_h = w[:n_mov], h[:n_mov]
    current_hpwl = 0.0

    def measure() -> tuple[float, OverflowReport, OverflowReport]:
        length = 0.0
        if pins:
            length = _hpwl(pins.net, np.r_[cx, fixed_cx][pins.obj] + pins.dx,
                           np.r_[cy, fixed_cy][pins.obj] + pins.dy)
        snapshot = _snapshot(grid, cx[:n_mov], cy[:n_mov], mov_w, mov_h, fixed_occupied, movable_area)
        return length, overflow(snapshot, config.d_t), free_overflow(snapshot, config.d_t)

    for it in range(config.iterations):
        gwx, gwy = _wirelength_gradient(pins, np.r_[cx, fixed_cx], np.r_[cy, fixed_cy], gamma, n_all)
        gwx, gwy = gwx[:n_obj], gwy[:n_obj]
        fx, fy = model.field(cx, cy)
        if it == 0:
            wl_mag = float(np.abs(gwx).sum() + np.abs(gwy).sum())
            phi_mag = float(np.abs(fx).sum() + np.abs(fy).sum())
            ratio = wl_mag / phi_mag if wl_mag > 0 and phi_mag > 0 else 1.0
            state.density_weight = config.density_weight * ratio
        precond = np.maximum(pin_count + state.density_weight * model.charge, 1.0)
        gx = (gwx + state.density_weight * fx) / precond
        gy = (gwy + state.density_weight * fy) / precond

        norm = np.hypot(gx, gy)
        reference = float(np.quantile(norm, 0.95)) or float(norm.max())
        if reference <= 0:
            stop_reason = "stationary"
            break
        eta = state.step * unit / reference
        vx = config.momentum * vx - eta * gx
        vy = config.momentum * vy - eta * gy
        limit = 2 * state.step * unit
        speed = np.hypot(vx, vy)
        too_fast = speed > limit
        vx[too_fast] *= limit / speed[too_fast]
        vy[too_fast] *= limit / speed[too_fast]
        cx += vx
        cy += vy
        _clamp(cx, cy, w, h, grid)
        if not (np.all(np.isfinite(cx)) and np.all(np.isfinite(cy))):
            raise NumericalError("placement diverged to non-finite positions", {"iteration": it})

        current_hpwl, report, stop = measure()
        log.append(ConvergenceRecord(
            iteration=it, hpwl=current_hpwl, max_overflow=report.max_overflow,
            total_overflow=report.total_overflow, density_weight=state.density_weight,
        ))
        state.hpwl_history.append(current_hpwl)
        state.overflow_history.append(report.total_overflow)

        if it >= config.warmup_iterations:
            # HPWL is compared against the least-overflow iteration so far
            if stop.total_overflow <= best_overflow:
                best_overflow, best_hpwl = stop.total_overflow, current_hpwl
            elif best_hpwl > 0 and current_hpwl > config.divergence_factor * best_hpwl:
                raise NumericalError("placement diverged", {
                    "iteration": it, "hpwl": current_hpwl, "best_hpwl": best_hpwl,
                    "density_weight": state.density_weight, "total_overflow": report.total_overflow,
                })
            state.density_weight *= config.density_growth
            if stop.total_overflow <= config.overflow_stop:
                stop_reason = "overflow"
                break
            state.step = max(state.step * config.step_decay, min(config.step_floor, config.step_size))

    current_hpwl, report, _ = measure()
    logger.info(
        "placement finished after %d iterations (%s): hpwl=%.4g overflow=%.4f",
        len(log), stop_reason, current_hpwl, report.total_overflow,
    )
    nominal_w = base.nominal_widths
    out_x = np.empty(base.size)
    out_y = np.empty(base.size)
    out_x[movable_ids] = cx[:n_mov] - nominal_w[movable_ids] / 2
    out_y[movable_ids] = cy[:n_mov] - h_all[movable_ids] / 2
    out_x[fixed_ids] = fixed_x
    out_y[fixed_ids] = fixed_y
    placement = Placement(frame_id=f"place:seed{config.seed}", names=base.names, x=out_x, y=out_y)
    fillers = Placement(
        frame_id="fillers",
        names=filled.names[base.size:],
        x=cx[n_mov:] - filler_w / 2,
        y=cy[n_mov:] - base.row_height / 2,
    )
    state.cx, state.cy = cx, cy
    return PlacementResult(
        placement=placement, fillers=fillers, log=log, hpwl=current_hpwl,
        max_overflow=report.max_overflow, total_overflow=report.total_overflow,
        iterations=len(log), stop_reason=stop_reason, filler_count=n_fill, final_state=state,
    )


def _initial_centres(grid: DensityGrid, n_mov: int, n_fill: int, rng: np.random.Generator):
    """Movable objects in a tight cloud at the floorplan centre, fillers uniform over the floorplan."""
    noise = CENTRE_SPREAD * min(grid.width, grid.height)
    cx = np.r_[grid.origin_x + grid.width / 2 + rng.normal(0.0, noise, n_mov),
               grid.origin_x + rng.random(n_fill) * grid.width]
    cy = np.r_[grid.origin_y + grid.height / 2 + rng.normal(0.0, noise, n_mov),
               grid.origin_y + rng.random(n_fill) * grid.height]
    return cx, cy


def _snapshot(grid, cx, cy, w, h, fixed_occupied, movable_area) -> DensityGrid:
    oa = density_service.overlap_matrix(cx - w / 2, cy - h / 2, w, h, grid)
    occupied = np.asarray(oa.sum(axis=0)).ravel().reshape(grid.ny, grid.nx) + fixed_occupied
    return grid.model_copy(update={
        "occupied": occupied, "fixed": fixed_occupied, "movable_area": movable_area,
    })
