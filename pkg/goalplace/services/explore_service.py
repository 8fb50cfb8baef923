import csv
import logging
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from goalplace.core.config import settings
from goalplace.core.exceptions import InputError, NumericalError
from goalplace.schemas.density import CellDensityVector
from goalplace.schemas.explore import (
    GoalPlaceResult,
    ModeComparison,
    ParetoFront,
    RunMetrics,
    RunRecord,
)
from goalplace.schemas.netlist import Netlist, Placement, TargetVector
from goalplace.schemas.placer import PlacerConfig, PlacerMode
from goalplace.services import (
    density_service,
    ebayes_service,
    inflation_service,
    netlist_service,
    placer_service,
)
from goalplace.utils.jsonl import write_json
from goalplace.utils.seeding import child_seeds, rng_for

logger = logging.getLogger(__name__)

UNIFORM = "uniform"
TOOL = "tool"
JS = "js"
JSD = "jsd"
PHASE2_MODES = (UNIFORM, TOOL, JS, JSD)


def hellinger(hist_p: Sequence[float] | np.ndarray, hist_t: Sequence[float] | np.ndarray) -> float:
    """H = (1/sqrt 2) * || sqrt(p) - sqrt(t) ||_2 of the two histograms after normalising each to 1."""
    p = np.asarray(hist_p, dtype=float)
    q = np.asarray(hist_t, dtype=float)
    if p.size == 0 or q.size == 0:
        raise InputError("empty histogram")
    if p.shape != q.shape:
        raise InputError(f"histograms differ in shape: {p.shape} vs {q.shape}")
    if np.any(p < 0) or np.any(q < 0):
        raise InputError("histogram counts must be non-negative")
    total_p, total_q = p.sum(), q.sum()
    if total_p <= 0 or total_q <= 0:
        raise InputError("empty histogram")
    distance = np.sqrt(0.5 * np.sum((np.sqrt(p / total_p) - np.sqrt(q / total_q)) ** 2))
    return float(min(max(distance, 0.0), 1.0))


def density_hellinger(achieved: np.ndarray, targets: np.ndarray, bins: Optional[int] = None) -> float:
    return hellinger(
        density_service.density_histogram(achieved, bins),
        density_service.density_histogram(targets, bins),
    )


def shift_targets(
    targets: TargetVector,
    delta: float,
    limit: Optional[float] = None,
    floor: Optional[float] = None,
) -> TargetVector:
    """t' = clamp(t + delta, floor, 1)."""
    limit = settings.shift_limit if limit is None else limit
    floor = settings.target_floor if floor is None else floor
    if abs(delta) > limit:
        raise InputError(f"density shift {delta} outside [-{limit}, {limit}]")
    if delta == 0:
        return targets
    return TargetVector(
        names=targets.names,
        values=np.clip(targets.values + delta, floor, 1.0),
        provenance=targets.provenance,
    )


def _dominated(points: np.ndarray) -> np.ndarray:
    no_worse = np.all(points[:, None, :] <= points[None, :, :], axis=2)
    better = np.any(points[:, None, :] < points[None, :, :], axis=2)
    # [j, i]: j dominates i
    return np.any(no_worse & better, axis=0)


def pareto(records: Sequence[RunRecord]) -> ParetoFront:
    """Non-dominated runs under minimisation of (hpwl, hellinger, total_overflow), ordered by hpwl."""
    if not records:
        return ParetoFront()
    points = np.array([r.objectives() for r in records], dtype=float)
    keep = np.flatnonzero(~_dominated(points))
    keep = keep[np.argsort(points[keep, 0], kind="stable")]
    return ParetoFront(members=[records[i] for i in keep])


def pareto_ranks(records: Sequence[RunRecord]) -> np.ndarray:
    """Front index of every run: 0 for the Pareto front, 1 for the front once that is removed, and so on."""
    points = np.array([r.objectives() for r in records], dtype=float).reshape(-1, 3)
    ranks = np.full(len(records), -1, dtype=np.int64)
    remaining = np.arange(len(records))
    level = 0
    while remaining.size:
        front = ~_dominated(points[remaining])
        ranks[remaining[front]] = level
        remaining = remaining[~front]
        level += 1
    return ranks


def sample_configs(
    n: int,
    seed: int,
    base: Optional[PlacerConfig] = None,
    shift_limit: Optional[float] = None,
    stream: str = "sampler",
) -> list[tuple[float, PlacerConfig]]:
    """``n`` (delta, config) pairs drawn uniformly over the search ranges, each with its own placer seed."""
    if n < 1:
        raise InputError(f"need at least one run, got {n}")
    base = base or placer_service.default_config()
    limit = settings.shift_limit if shift_limit is None else shift_limit
    rng = rng_for(seed, stream)
    seeds = child_seeds(seed, n, stream, "placer")
    samples = []
    for run_seed in seeds:
        delta = float(rng.uniform(-limit, limit))
        config = base.model_copy(update={
            "gamma_factor": float(rng.uniform(0.25, 1.0)),
            "density_weight": float(base.density_weight * rng.uniform(0.5, 2.0)),
            "density_growth": float(rng.uniform(1.02, 1.08)),
            "iterations": int(rng.integers(max(1, (3 * base.iterations) // 4), base.iterations + 1)),
            "seed": run_seed,
        })
        samples.append((delta, config))
    return samples


def inflatable_ids(netlist: Netlist) -> list[int]:
    return [c.id for c in netlist.cells if c.inflatable]


def inflatable_view(vector: CellDensityVector, netlist: Netlist) -> CellDensityVector:
    """Restrict a per-cell vector to the movable std cells and buffers."""
    ids = inflatable_ids(netlist)
    return CellDensityVector(names=[netlist.names[i] for i in ids], values=vector.values[ids], grid=vector.grid)


def inflatable_targets(targets: TargetVector, netlist: Netlist) -> TargetVector:
    """Targets of the movable std cells and buffers only; macros never enter the shrinkage."""
    names = [netlist.names[i] for i in inflatable_ids(netlist)]
    if not names:
        raise InputError("netlist has no movable std cell to shrink")
    return TargetVector(names=names, values=targets.align(names), provenance=targets.provenance)


def evaluate_run(
    netlist: Netlist,
    mode: str,
    config: PlacerConfig,
    targets: TargetVector,
    delta: float = 0.0,
    run_id: str = "",
    fixed: Optional[Placement] = None,
) -> RunRecord:
    """Place once and measure every run metric on the nominal geometry.

    Uniform mode places without inflation and measures against ``targets`` as given; the
    other modes shift the targets by ``delta`` and inflate each std cell by 1 / t'.
    """
    if mode == UNIFORM:
        reference = targets
        delta = 0.0
        run_config = config.model_copy(update={"mode": PlacerMode.uniform})
        placed = netlist
    else:
        reference = shift_targets(targets, delta)
        run_config = config.model_copy(update={"mode": PlacerMode.inflated, "d_t": 1.0})
        factors = inflation_service.factors_from_targets(reference, netlist)
        placed = inflation_service.apply_inflation(netlist, factors)

    result = placer_service.place(placed, run_config, fixed=fixed)
    placement = result.placement
    grid = density_service.build_grid(netlist, placement)
    densities = density_service.cell_density(grid, netlist, placement)
    view = inflatable_view(densities, netlist)
    metrics = RunMetrics(
        hpwl=placer_service.hpwl(netlist, placement),
        hellinger=density_hellinger(view.values, reference.align(view.names)),
        max_overflow=result.max_overflow,
        total_overflow=result.total_overflow,
        range_error=inflation_service.range_error(reference, grid, netlist, placement).total_error,
    )
    logger.info(
        "run %s (%s, delta=%+.3f): hpwl=%.4g H=%.4f overflow=%.4f range_error=%.4g",
        run_id, mode, delta, metrics.hpwl, metrics.hellinger, metrics.total_overflow, metrics.range_error,
    )
    return RunRecord(
        run_id=run_id, mode=mode, config=run_config, delta=delta, metrics=metrics,
        placement=placement, densities=densities,
    )


def _try_run(netlist, mode, config, targets, delta, run_id, fixed) -> Optional[RunRecord]:
    try:
        return evaluate_run(netlist, mode, config, targets, delta, run_id, fixed)
    except NumericalError as exc:
        logger.warning("run %s dropped: %s", run_id, exc)
        return None


def _run_batch(
    netlist: Netlist,
    jobs: list[tuple[str, str, float, PlacerConfig, TargetVector]],
    fixed: Optional[Placement],
    threads: int,
) -> list[RunRecord]:
    """Evaluate ``jobs`` in parallel; runs that fail numerically are dropped."""
    records = Parallel(n_jobs=threads)(
        delayed(_try_run)(netlist, mode, config, targets, delta, run_id, fixed)
        for run_id, mode, delta, config, targets in jobs
    )
    return [r for r in records if r is not None]


def select_prior_runs(records: Sequence[RunRecord], size: Optional[int] = None) -> list[RunRecord]:
    """Members of the Pareto front, lowest HPWL first, cut to ``size``.

    A front of fewer than two runs cannot give a prior spread.
    """
    size = size or settings.prior_size
    ranks = pareto_ranks(records)
    front = [i for i in range(len(records)) if ranks[i] == 0]
    if len(front) < 2:
        raise InputError(f"prior ensemble too small: {len(front)} Pareto run(s) of {len(records)}")
    front.sort(key=lambda i: (records[i].metrics.hpwl, i))
    return [records[i] for i in front[:size]]


def _comparison(
    mode: str,
    front: ParetoFront,
    reference: TargetVector,
    netlist: Netlist,
) -> ModeComparison:
    best = front.members[0]
    view = inflatable_view(best.densities, netlist)
    correlation = inflation_service.target_correlation(reference, view)
    return ModeComparison(
        mode=mode,
        front_size=len(front),
        mean_hpwl=float(np.mean([r.metrics.hpwl for r in front.members])),
        mean_hellinger=float(np.mean([r.metrics.hellinger for r in front.members])),
        mean_range_error=float(np.mean([r.metrics.range_error for r in front.members])),
        cell_pearson=correlation.cell_pearson,
        cell_spearman=correlation.cell_spearman,
    )


def run_goalplace(
    place_netlist: Netlist,
    postroute_netlist: Netlist,
    postroute_positions: Placement,
    postsynth_sizes: netlist_service.SizeTable,
    slacks: Optional[dict[str, float]],
    n_phase1: int,
    n_phase2: int,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    base_config: Optional[PlacerConfig] = None,
    prior_size: Optional[int] = None,
    quantile_count: Optional[int] = None,
) -> GoalPlaceResult:
    """Tool target, prior ensemble from a first batch of runs, shrunk targets, final runs per target mode.

    Fixed cells keep their post-route positions throughout.
    """
    seed = settings.seed if seed is None else seed
    threads = threads or settings.threads
    base_config = base_config or placer_service.default_config()

    tool = density_service.tool_target(place_netlist, postroute_netlist, postroute_positions, postsynth_sizes)
    logger.info("tool targets: %d cells, mean %.4f", len(tool.names), float(tool.values.mean()))

    phase1 = sample_configs(n_phase1, seed, base_config, stream="phase1")
    records = _run_batch(
        place_netlist,
        [(f"p1-{i:03d}", TOOL, delta, config, tool) for i, (delta, config) in enumerate(phase1)],
        postroute_positions, threads,
    )
    prior_runs = select_prior_runs(records, prior_size)
    prior = ebayes_service.build_prior([inflatable_view(r.densities, place_netlist) for r in prior_runs])
    logger.info("prior ensemble: K=%d of %d runs over %d std cells", prior.k, len(records), len(prior.names))

    observed = inflatable_targets(tool, place_netlist)
    js = ebayes_service.james_stein(observed, prior)
    slack_values = netlist_service.slack_array(place_netlist, slacks)[inflatable_ids(place_netlist)]
    budgets = ebayes_service.slack_to_budget(slack_values, prior.names, quantile_count)
    jsd = ebayes_service.js_timing_clip(js, observed, prior, budgets)
    mode_targets = {TOOL: tool, JS: js.to_targets(), JSD: jsd.to_targets()}
    references = {UNIFORM: tool, **mode_targets}

    phase2 = sample_configs(n_phase2, seed, base_config, stream="phase2")
    jobs = [
        (f"{mode}-{i:03d}", mode, delta, config, references[mode])
        for mode in PHASE2_MODES
        for i, (delta, config) in enumerate(phase2)
    ]
    final = _run_batch(place_netlist, jobs, postroute_positions, threads)
    fronts = {mode: pareto([r for r in final if r.mode == mode]) for mode in PHASE2_MODES}
    failed = [mode for mode, front in fronts.items() if not front.members]
    if failed:
        raise NumericalError(f"every final run failed for mode(s) {', '.join(failed)}")
    comparison = [_comparison(mode, fronts[mode], references[mode], place_netlist) for mode in PHASE2_MODES]
    for row in comparison:
        logger.info(
            "%-7s front=%d hpwl=%.4g H=%.4f range_error=%.4g pearson=%s",
            row.mode, row.front_size, row.mean_hpwl, row.mean_hellinger, row.mean_range_error, row.cell_pearson,
        )
    return GoalPlaceResult(
        tool_targets=tool, prior=prior, prior_front=pareto(prior_runs),
        shrinkage={JS: js, JSD: jsd}, mode_targets=mode_targets, fronts=fronts, comparison=comparison,
    )


FRONT_COLUMNS = [
    "run_id", "mode", "delta", "hpwl", "hellinger", "max_overflow", "total_overflow", "range_error",
    "gamma_factor", "density_weight", "density_growth", "iterations", "seed", "placement",
]


def write_front_csv(front: ParetoFront, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(FRONT_COLUMNS)
        for r in front.members:
            m, c = r.metrics, r.config
            writer.writerow([
                r.run_id, r.mode, repr(r.delta), repr(m.hpwl), repr(m.hellinger), repr(m.max_overflow),
                repr(m.total_overflow), repr(m.range_error), repr(c.gamma_factor), repr(c.density_weight),
                repr(c.density_growth), c.iterations, c.seed, r.placement_path or "",
            ])


def write_artifacts(result: GoalPlaceResult, out_dir: Path | str) -> list[Path]:
    """Fronts, placements, targets, shrinkage sidecars, density maps and the comparison table."""
    out = Path(out_dir)
    written: list[Path] = []
    for mode, front in {**result.fronts, "prior": result.prior_front}.items():
        for record in front.members:
            path = out / "placements" / f"{record.run_id}.jsonl"
            if record.placement is not None:
                netlist_service.write_placement(record.placement, path)
                record.placement_path = str(path.relative_to(out))
                written.append(path)
        write_front_csv(front, out / "fronts" / f"{mode}.csv")
        written.append(out / "fronts" / f"{mode}.csv")
        best = front.members[0] if front.members else None
        if best is not None and best.densities is not None and best.densities.grid is not None:
            density_service.write_density_pgm(best.densities.grid, out / "maps" / f"{mode}.pgm")
            written.append(out / "maps" / f"{mode}.pgm")

    for mode, targets in result.mode_targets.items():
        netlist_service.serialize_targets(targets, out / "targets" / f"{mode}.jsonl")
        written.append(out / "targets" / f"{mode}.jsonl")
    for mode, shrinkage in result.shrinkage.items():
        write_json(out / "shrinkage" / f"{mode}.json", shrinkage.sidecar())
        written.append(out / "shrinkage" / f"{mode}.json")

    with open(out / "comparison.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["mode", "front_size", "mean_hpwl", "mean_hellinger", "mean_range_error",
                         "cell_pearson", "cell_spearman"])
        for row in result.comparison:
            writer.writerow([
                row.mode, row.front_size, repr(row.mean_hpwl), repr(row.mean_hellinger),
                repr(row.mean_range_error),
                "" if row.cell_pearson is None else repr(row.cell_pearson),
                "" if row.cell_spearman is None else repr(row.cell_spearman),
            ])
    written.append(out / "comparison.csv")
    return written
