import logging
from pathlib import Path
from typing import Annotated, Optional

import typer

from goalplace.cli.common import resolve, start_run
from goalplace.core.exceptions import InputError
from goalplace.schemas.netlist import NetlistFormat
from goalplace.services import density_service, inflation_service, netlist_service
from goalplace.utils.jsonl import write_json, write_records

logger = logging.getLogger(__name__)


def inflate(
    netlist: Annotated[Path, typer.Option(exists=True, dir_okay=False, help="Netlist file.")],
    out: Annotated[Path, typer.Option(file_okay=False, help="Output directory.")],
    targets: Annotated[
        Optional[Path], typer.Option(exists=True, dir_okay=False, help="Target file; factors are 1 / t.")
    ] = None,
    pin_alpha: Annotated[
        Optional[float], typer.Option(help="Pin-density baseline: sites per pin instead of targets.")
    ] = None,
    r_max: Annotated[Optional[float], typer.Option(help="Inflation cap [default: 8].")] = None,
    placement: Annotated[
        Optional[Path], typer.Option(exists=True, dir_okay=False, help="Placement for the range-error report.")
    ] = None,
    netlist_format: Annotated[NetlistFormat, typer.Option("--format", help="Netlist format.")] = NetlistFormat.jsonl,
    bin_scale: Annotated[Optional[float], typer.Option(help="Bin side in rows [default: 10].")] = None,
) -> None:
    """Inflated netlist and per-cell factors; with --placement also the per-bin range error."""
    if (targets is None) == (pin_alpha is None):
        raise InputError("give exactly one of --targets and --pin-alpha")
    r_max = resolve(r_max, "r_max")
    bin_scale = resolve(bin_scale, "bin_scale")
    start_run(
        out, "inflate",
        {"pin_alpha": pin_alpha, "r_max": r_max, "format": netlist_format, "bin_scale": bin_scale},
        {"netlist": netlist, "targets": targets, "placement": placement},
    )
    design = netlist_service.parse_netlist(netlist, netlist_format)
    target_vector = netlist_service.load_targets(targets, design) if targets else None
    if target_vector is not None:
        factors = inflation_service.factors_from_targets(target_vector, design, r_max)
    else:
        factors = inflation_service.pin_inflation(design, pin_alpha)

    netlist_service.serialize_netlist(inflation_service.apply_inflation(design, factors), out / "netlist.jsonl")
    write_records(out / "factors.jsonl", (
        {"cell": name, "factor": float(r)} for name, r in zip(factors.names, factors.factors)
    ))
    logger.info("inflated %d cells, %d capped", int((factors.factors > 1).sum()), factors.capped)

    if placement is not None:
        if target_vector is None:
            logger.warning("range error needs targets; skipped")
            return
        positions = netlist_service.read_placement(placement)
        grid = density_service.build_grid(design, positions, bin_scale=bin_scale)
        report = inflation_service.range_error(target_vector, grid, design, positions)
        inflation_service.write_range_csv(report, out / "range.csv")
        write_json(out / "range.json", report.summary())
        logger.info("range error %.4g over %d bins", report.total_error, report.violating_bins)
