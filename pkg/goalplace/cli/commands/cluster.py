import logging
from pathlib import Path
from typing import Annotated, Optional

import typer

from goalplace.cli.common import resolve, start_run
from goalplace.schemas.netlist import NetlistFormat
from goalplace.services import clustering_service, netlist_service
from goalplace.utils.jsonl import write_json, write_records

logger = logging.getLogger(__name__)


def cluster(
    netlist: Annotated[Path, typer.Option(exists=True, dir_okay=False, help="Netlist file.")],
    placements: Annotated[
        list[Path], typer.Option(exists=True, dir_okay=False, help="Placements to score; repeat the flag.")
    ],
    out: Annotated[Path, typer.Option(file_okay=False, help="Output directory.")],
    slacks: Annotated[Optional[Path], typer.Option(exists=True, dir_okay=False, help="Slack file.")] = None,
    resolution: Annotated[Optional[float], typer.Option(help="Leiden resolution [default: 1.0].")] = None,
    min_size: Annotated[Optional[int], typer.Option("--min", help="Smallest module [default: 1000].")] = None,
    max_size: Annotated[Optional[int], typer.Option("--max", help="Largest module [default: 50000].")] = None,
    net_cap: Annotated[Optional[int], typer.Option(help="Largest net expanded [default: 64].")] = None,
    seed: Annotated[Optional[int], typer.Option(help="Master seed [default: 0].")] = None,
    threads: Annotated[Optional[int], typer.Option(help="Worker count [default: 1].")] = None,
    netlist_format: Annotated[NetlistFormat, typer.Option("--format", help="Netlist format.")] = NetlistFormat.jsonl,
) -> None:
    """Hierarchical clustering with density/timing statistics (clusters.json, assignment.jsonl)."""
    resolution = resolve(resolution, "leiden_resolution")
    min_size = resolve(min_size, "module_min")
    max_size = resolve(max_size, "module_max")
    net_cap = resolve(net_cap, "clique_net_cap")
    seed = resolve(seed, "seed")
    threads = resolve(threads, "threads")
    start_run(
        out, "cluster",
        {"resolution": resolution, "min": min_size, "max": max_size, "net_cap": net_cap,
         "threads": threads, "format": netlist_format},
        {"netlist": netlist, "placements": list(placements), "slacks": slacks},
        seed=seed,
    )
    design = netlist_service.parse_netlist(netlist, netlist_format)
    positions = [netlist_service.read_placement(path) for path in placements]
    slack_map = netlist_service.read_slacks(slacks) if slacks else None

    clustering = clustering_service.cluster_netlist(
        design, positions, slack_map, resolution, min_size, max_size, net_cap, seed, threads,
    )
    write_json(out / "clusters.json", {
        "report": clustering_service.cluster_report(clustering).model_dump(mode="json"),
        "clusters": [stat.model_dump(mode="json") for stat in clustering.stats],
        "quality_history": clustering.quality_history,
    })
    write_records(out / "assignment.jsonl", (
        {"cell": name, "cluster": int(k)} for name, k in zip(design.names, clustering.assignment)
    ))
