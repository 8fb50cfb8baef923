from pathlib import Path
from typing import Annotated, Optional

import typer

from goalplace.cli.common import resolve, start_run
from goalplace.services import ebayes_service
from goalplace.utils.jsonl import write_json


def risk(
    n: Annotated[int, typer.Option("--N", help="Cells per trial.")] = 1000,
    a: Annotated[float, typer.Option("--A", help="Prior variance.")] = 0.04,
    sigma0: Annotated[float, typer.Option(help="Observation noise.")] = 0.2,
    mean: Annotated[float, typer.Option("--M", help="Prior mean.")] = 0.5,
    trials: Annotated[int, typer.Option(help="Monte Carlo trials.")] = 1000,
    seed: Annotated[Optional[int], typer.Option(help="Master seed [default: 0].")] = None,
    threads: Annotated[Optional[int], typer.Option(help="Worker count [default: 1].")] = None,
    out: Annotated[Path, typer.Option(file_okay=False, help="Output directory.")] = Path("risk"),
) -> None:
    """Monte Carlo risks of the MLE, James-Stein and Bayes rules (risk.json)."""
    seed = resolve(seed, "seed")
    threads = resolve(threads, "threads")
    start_run(out, "risk", {"N": n, "A": a, "sigma0": sigma0, "M": mean, "trials": trials}, {}, seed=seed)
    report = ebayes_service.risk_report(trials, n, a, sigma0, seed, M=mean, threads=threads)
    write_json(out / "risk.json", report.model_dump(mode="json"))
