import logging
from pathlib import Path
from typing import Annotated, Optional

import typer

from goalplace.cli.common import resolve, start_run
from goalplace.schemas.netlist import NetlistFormat
from goalplace.schemas.placer import DensityMethod, PlacerMode
from goalplace.services import density_service, inflation_service, netlist_service, placer_service
from goalplace.utils.jsonl import write_json, write_records

logger = logging.getLogger(__name__)


def place(
    netlist: Annotated[Path, typer.Option(exists=True, dir_okay=False, help="Netlist file.")],
    out: Annotated[Path, typer.Option(file_okay=False, help="Output directory.")],
    targets: Annotated[
        Optional[Path], typer.Option(exists=True, dir_okay=False, help="Targets; switches to inflated mode.")
    ] = None,
    fixed: Annotated[
        Optional[Path], typer.Option(exists=True, dir_okay=False, help="Positions of the fixed cells.")
    ] = None,
    d_t: Annotated[float, typer.Option("--d-t", help="Target density of uniform mode.")] = 1.0,
    iterations: Annotated[int, typer.Option(help="Iteration cap.")] = 600,
    density_method: Annotated[DensityMethod, typer.Option(help="Spreading force model.")] = DensityMethod.poisson,
    movable_macros: Annotated[bool, typer.Option(help="Let macros move.")] = False,
    r_max: Annotated[Optional[float], typer.Option(help="Inflation cap [default: 8].")] = None,
    seed: Annotated[Optional[int], typer.Option(help="Master seed [default: 0].")] = None,
    bin_scale: Annotated[Optional[float], typer.Option(help="Bin side in rows [default: 10].")] = None,
    netlist_format: Annotated[NetlistFormat, typer.Option("--format", help="Netlist format.")] = NetlistFormat.jsonl,
) -> None:
    """Global placement; writes nominal placement, fillers, convergence log, metrics and density map."""
    seed = resolve(seed, "seed")
    r_max = resolve(r_max, "r_max")
    mode = PlacerMode.inflated if targets else PlacerMode.uniform
    config = placer_service.default_config(
        d_t=1.0 if mode == PlacerMode.inflated else d_t, iterations=iterations, density_method=density_method,
        movable_macros=movable_macros, seed=seed, bin_scale=bin_scale, mode=mode,
    )
    start_run(
        out, "place",
        {"config": config.model_dump(mode="json"), "r_max": r_max, "format": netlist_format},
        {"netlist": netlist, "targets": targets, "fixed": fixed},
        seed=seed,
    )
    design = netlist_service.parse_netlist(netlist, netlist_format)
    placed = design
    if targets is not None:
        target_vector = netlist_service.load_targets(targets, design)
        factors = inflation_service.factors_from_targets(target_vector, design, r_max)
        placed = inflation_service.apply_inflation(design, factors)
    fixed_positions = netlist_service.read_placement(fixed) if fixed else None

    result = placer_service.place(placed, config, fixed=fixed_positions)
    netlist_service.write_placement(result.placement, out / "placement.jsonl")
    netlist_service.write_placement(result.fillers, out / "fillers.jsonl")
    write_records(out / "log.jsonl", (record.model_dump() for record in result.log))
    write_json(out / "metrics.json", result.metrics())

    nominal = inflation_service.deflate(placed)
    grid = density_service.build_grid(nominal, result.placement, bin_scale=config.bin_scale)
    density_service.write_density_pgm(grid, out / "map.pgm")
