from pathlib import Path
from typing import Annotated, Optional

import typer

from goalplace.cli.commands import cluster, density, inflate, place, risk, run, shrink, synth, targets
from goalplace.core.config import configure
from goalplace.core.logging import setup_logging

app = typer.Typer(
    name="goalplace",
    help="Cell density targets, empirical Bayes adaptation and inflation-driven global placement.",
    no_args_is_help=True,
    add_completion=False,
    pretty_exceptions_enable=False,
)


@app.callback()
def root(
    config: Annotated[
        Optional[Path], typer.Option(exists=True, dir_okay=False, help="YAML file of setting overrides.")
    ] = None,
    log_level: Annotated[Optional[str], typer.Option(help="Logging level [default: INFO].")] = None,
) -> None:
    current = configure(config, log_level=log_level)
    setup_logging(current.log_level)


app.command("density")(density.density)
app.command("targets")(targets.targets)
app.command("shrink")(shrink.shrink)
app.command("inflate")(inflate.inflate)
app.command("place")(place.place)
app.command("cluster")(cluster.cluster)
app.command("run")(run.run)
app.command("risk")(risk.risk)
app.command("synth")(synth.synth)
