from pathlib import Path
from typing import Annotated, Optional

import typer

from goalplace.cli.common import resolve, start_run
from goalplace.schemas.netlist import NetlistFormat
from goalplace.services import explore_service, netlist_service, placer_service


def run(
    place: Annotated[Path, typer.Option(exists=True, dir_okay=False, help="Global-placement netlist.")],
    postroute: Annotated[Path, typer.Option(exists=True, dir_okay=False, help="Post-route netlist.")],
    postroute_place: Annotated[Path, typer.Option(exists=True, dir_okay=False, help="Post-route positions.")],
    sizes: Annotated[Path, typer.Option(exists=True, dir_okay=False, help="Post-synthesis size table.")],
    out: Annotated[Path, typer.Option(file_okay=False, help="Output directory.")],
    slacks: Annotated[Optional[Path], typer.Option(exists=True, dir_okay=False, help="Slack file.")] = None,
    n1: Annotated[int, typer.Option("--n1", min=2, help="Runs building the prior.")] = 64,
    n2: Annotated[int, typer.Option("--n2", min=1, help="Final runs per target mode.")] = 64,
    iterations: Annotated[int, typer.Option(help="Iteration cap of every run.")] = 600,
    prior_size: Annotated[Optional[int], typer.Option(help="Prior ensemble size K [default: 50].")] = None,
    quantiles: Annotated[Optional[int], typer.Option(help="Slack quantiles Q [default: 10].")] = None,
    seed: Annotated[Optional[int], typer.Option(help="Master seed [default: 0].")] = None,
    threads: Annotated[Optional[int], typer.Option(help="Worker count [default: 1].")] = None,
    bin_scale: Annotated[Optional[float], typer.Option(help="Bin side in rows [default: 10].")] = None,
    netlist_format: Annotated[NetlistFormat, typer.Option("--format", help="Netlist format.")] = NetlistFormat.jsonl,
) -> None:
    """Full loop: tool targets, prior runs, shrunk targets and final Pareto fronts per target mode."""
    seed = resolve(seed, "seed")
    threads = resolve(threads, "threads")
    prior_size = resolve(prior_size, "prior_size")
    quantiles = resolve(quantiles, "quantile_count")
    base = placer_service.default_config(iterations=iterations, bin_scale=bin_scale, seed=seed)
    start_run(
        out, "run",
        {"n1": n1, "n2": n2, "prior_size": prior_size, "quantiles": quantiles, "threads": threads,
         "config": base.model_dump(mode="json"), "format": netlist_format},
        {"place": place, "postroute": postroute, "postroute_place": postroute_place,
         "sizes": sizes, "slacks": slacks},
        seed=seed,
    )
    result = explore_service.run_goalplace(
        netlist_service.parse_netlist(place, netlist_format),
        netlist_service.parse_netlist(postroute, netlist_format),
        netlist_service.read_placement(postroute_place),
        netlist_service.read_sizes(sizes),
        netlist_service.read_slacks(slacks) if slacks else None,
        n1, n2, seed=seed, threads=threads, base_config=base, prior_size=prior_size, quantile_count=quantiles,
    )
    explore_service.write_artifacts(result, out)
