import logging
from pathlib import Path
from typing import Annotated, Optional

import typer

from goalplace.cli.common import resolve, start_run
from goalplace.schemas.netlist import NetlistFormat
from goalplace.services import density_service, netlist_service
from goalplace.utils.jsonl import write_records

logger = logging.getLogger(__name__)


def density(
    netlist: Annotated[Path, typer.Option(exists=True, dir_okay=False, help="Netlist file.")],
    placement: Annotated[Path, typer.Option(exists=True, dir_okay=False, help="Placement (JSON lines).")],
    out: Annotated[Path, typer.Option(file_okay=False, help="Output directory.")],
    sizes: Annotated[
        Optional[Path], typer.Option(exists=True, dir_okay=False, help="Size table overriding netlist sizes.")
    ] = None,
    netlist_format: Annotated[NetlistFormat, typer.Option("--format", help="Netlist format.")] = NetlistFormat.jsonl,
    bin_scale: Annotated[Optional[float], typer.Option(help="Bin side in rows [default: 10].")] = None,
) -> None:
    """Bin densities (bins.csv, map.pgm) and per-cell densities (cells.jsonl) of a placement."""
    bin_scale = resolve(bin_scale, "bin_scale")
    start_run(
        out, "density",
        {"format": netlist_format, "bin_scale": bin_scale},
        {"netlist": netlist, "placement": placement, "sizes": sizes},
    )
    design = netlist_service.parse_netlist(netlist, netlist_format)
    positions = netlist_service.read_placement(placement)
    size_map = netlist_service.read_sizes(sizes) if sizes else None

    grid = density_service.build_grid(design, positions, size_map, bin_scale)
    cells = density_service.cell_density(grid, design, positions, size_map)
    density_service.write_density_csv(grid, out / "bins.csv")
    density_service.write_density_pgm(grid, out / "map.pgm")
    write_records(out / "cells.jsonl", (
        {"cell": name, "density": float(value)} for name, value in zip(cells.names, cells.values)
    ))
    logger.info("%d x %d bins, peak bin density %.4f", grid.nx, grid.ny, float(grid.rho.max()))
