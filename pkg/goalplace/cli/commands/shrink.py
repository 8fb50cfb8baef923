import logging
from enum import Enum
from pathlib import Path
from typing import Annotated, Optional

import typer

from goalplace.cli.common import resolve, start_run
from goalplace.core.exceptions import InputError
from goalplace.schemas.netlist import NetlistFormat
from goalplace.services import density_service, ebayes_service, explore_service, netlist_service
from goalplace.utils.jsonl import write_json

logger = logging.getLogger(__name__)

NORMALITY_MIN_SAMPLES = 8


class ShrinkChoice(str, Enum):
    js = "js"
    jsd = "jsd"
    js_hetero = "js_hetero"
    all = "all"


def _sigma0(text: str) -> float | str:
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError as exc:
        raise InputError(f"--sigma0 must be 'auto' or a number, got {text!r}") from exc


def shrink(
    targets: Annotated[Path, typer.Option(exists=True, dir_okay=False, help="Tool target file.")],
    netlist: Annotated[Path, typer.Option(exists=True, dir_okay=False, help="Netlist file.")],
    placements: Annotated[
        list[Path], typer.Option(exists=True, dir_okay=False, help="Prior placements; repeat the flag.")
    ],
    out: Annotated[Path, typer.Option(file_okay=False, help="Output directory.")],
    slacks: Annotated[
        Optional[Path], typer.Option(exists=True, dir_okay=False, help="Slack file for the timing clip.")
    ] = None,
    mode: Annotated[ShrinkChoice, typer.Option(help="Estimator(s) to compute.")] = ShrinkChoice.all,
    sigma0: Annotated[str, typer.Option(help="Observation noise, or 'auto'.")] = "auto",
    quantiles: Annotated[Optional[int], typer.Option(help="Slack quantiles Q [default: 10].")] = None,
    floor: Annotated[Optional[float], typer.Option(help="Lowest physical target [default: 0.001].")] = None,
    netlist_format: Annotated[NetlistFormat, typer.Option("--format", help="Netlist format.")] = NetlistFormat.jsonl,
    bin_scale: Annotated[Optional[float], typer.Option(help="Bin side in rows [default: 10].")] = None,
) -> None:
    """Empirical Bayes targets: James-Stein, timing-clipped and heteroscedastic estimates with sidecars."""
    quantiles = resolve(quantiles, "quantile_count")
    floor = resolve(floor, "target_floor")
    bin_scale = resolve(bin_scale, "bin_scale")
    noise = _sigma0(sigma0)
    start_run(
        out, "shrink",
        {"mode": mode, "sigma0": sigma0, "quantiles": quantiles, "floor": floor,
         "format": netlist_format, "bin_scale": bin_scale},
        {"targets": targets, "netlist": netlist, "placements": list(placements), "slacks": slacks},
    )
    design = netlist_service.parse_netlist(netlist, netlist_format)
    tool = explore_service.inflatable_targets(netlist_service.load_targets(targets, design), design)
    densities = []
    for path in placements:
        positions = netlist_service.read_placement(path)
        grid = density_service.build_grid(design, positions, bin_scale=bin_scale)
        achieved = density_service.cell_density(grid, design, positions)
        densities.append(explore_service.inflatable_view(achieved, design))
    prior = ebayes_service.build_prior(densities)

    results = {}
    if mode in (ShrinkChoice.js, ShrinkChoice.jsd, ShrinkChoice.all):
        results["js"] = ebayes_service.james_stein(tool, prior, noise, floor)
    if mode in (ShrinkChoice.jsd, ShrinkChoice.all):
        slack_values = netlist_service.slack_array(design, netlist_service.read_slacks(slacks) if slacks else None)
        slack_values = slack_values[explore_service.inflatable_ids(design)]
        budgets = ebayes_service.slack_to_budget(slack_values, prior.names, quantiles)
        results["jsd"] = ebayes_service.js_timing_clip(results["js"], tool, prior, budgets, floor)
        if mode == ShrinkChoice.jsd:
            del results["js"]
    if mode in (ShrinkChoice.js_hetero, ShrinkChoice.all):
        results["js_hetero"] = ebayes_service.hetero_shrink(tool, prior, floor)

    for name, result in results.items():
        netlist_service.serialize_targets(result.to_targets(), out / f"{name}.jsonl")
        write_json(out / f"{name}.json", result.sidecar())
    if prior.k >= NORMALITY_MIN_SAMPLES:
        write_json(out / "normality.json", ebayes_service.normality_check(prior).model_dump(mode="json"))
    else:
        logger.info("normality check skipped: K=%d < %d", prior.k, NORMALITY_MIN_SAMPLES)
