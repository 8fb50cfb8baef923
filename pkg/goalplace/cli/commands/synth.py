from enum import Enum
from pathlib import Path
from typing import Annotated, Optional

import typer

from goalplace.cli.common import resolve, start_run
from goalplace.services import synthetic_service


class DesignKind(str, Enum):
    random = "random"
    two_region = "two-region"
    planted = "planted"


def synth(
    out: Annotated[Path, typer.Option(file_okay=False, help="Output directory.")],
    kind: Annotated[DesignKind, typer.Option(help="Generator.")] = DesignKind.two_region,
    cells: Annotated[int, typer.Option(min=2, help="Cell count.")] = 2000,
    modules: Annotated[int, typer.Option(min=1, help="Module count of the planted design.")] = 2,
    seed: Annotated[Optional[int], typer.Option(help="Master seed [default: 0].")] = None,
) -> None:
    """Write a generated design as input files (netlist, placement, slacks, and post-route set)."""
    seed = resolve(seed, "seed")
    start_run(out, "synth", {"kind": kind, "cells": cells, "modules": modules}, {}, seed=seed)
    if kind == DesignKind.random:
        design = synthetic_service.random_design(cells, seed)
    elif kind == DesignKind.planted:
        design = synthetic_service.planted_modules(modules, max(3, cells // modules), seed)
    else:
        design = synthetic_service.two_region_design(cells, seed)
    synthetic_service.write_design(design, out)
