import logging
from pathlib import Path
from typing import Annotated, Optional

import typer

from goalplace.cli.common import resolve, start_run
from goalplace.schemas.netlist import NetlistFormat
from goalplace.services import density_service, netlist_service
from goalplace.utils.jsonl import write_json

logger = logging.getLogger(__name__)


def targets(
    place: Annotated[Path, typer.Option(exists=True, dir_okay=False, help="Global-placement netlist.")],
    postroute: Annotated[Path, typer.Option(exists=True, dir_okay=False, help="Post-route netlist.")],
    postroute_place: Annotated[Path, typer.Option(exists=True, dir_okay=False, help="Post-route positions.")],
    sizes: Annotated[Path, typer.Option(exists=True, dir_okay=False, help="Post-synthesis size table.")],
    out: Annotated[Path, typer.Option(file_okay=False, help="Output directory.")],
    place_placement: Annotated[
        Optional[Path],
        typer.Option(exists=True, dir_okay=False, help="Global placement, for the density shift report."),
    ] = None,
    netlist_format: Annotated[NetlistFormat, typer.Option("--format", help="Netlist format.")] = NetlistFormat.jsonl,
    bin_scale: Annotated[Optional[float], typer.Option(help="Bin side in rows [default: 10].")] = None,
) -> None:
    """Tool target densities measured on the matched post-route geometry (targets.jsonl, match.json)."""
    bin_scale = resolve(bin_scale, "bin_scale")
    start_run(
        out, "targets",
        {"format": netlist_format, "bin_scale": bin_scale},
        {"place": place, "postroute": postroute, "postroute_place": postroute_place,
         "sizes": sizes, "place_placement": place_placement},
    )
    place_netlist = netlist_service.parse_netlist(place, netlist_format)
    postroute_netlist = netlist_service.parse_netlist(postroute, netlist_format)
    positions = netlist_service.read_placement(postroute_place)
    size_map = netlist_service.read_sizes(sizes)

    tool = density_service.tool_target(place_netlist, postroute_netlist, positions, size_map, bin_scale)
    netlist_service.serialize_targets(tool, out / "targets.jsonl")
    report = netlist_service.match_netlists(place_netlist, postroute_netlist, positions, size_map).report
    write_json(out / "match.json", report.model_dump(mode="json"))

    if place_placement is not None:
        placed = netlist_service.read_placement(place_placement)
        grid = density_service.build_grid(place_netlist, placed, bin_scale=bin_scale)
        before = density_service.cell_density(grid, place_netlist, placed)
        shift = density_service.density_shift_report(before.values, tool.values)
        write_json(out / "shift.json", shift.model_dump(mode="json"))
        logger.info("density shift %+.4f, Hellinger %.4f", shift.shift, shift.hellinger)
