import logging
import sys
import time
from typing import Optional, Sequence

import typer
from pydantic import ValidationError

try:  # typer >= 0.26 vendors click and raises its own exception classes
    from typer import _click as click
except ImportError:
    import click

from goalplace.cli.app import app
from goalplace.core.exceptions import InputError, NumericalError

logger = logging.getLogger(__name__)


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; 0 on success, 1 on bad input or usage, 2 on numerical failure."""
    command = typer.main.get_command(app)
    args = list(sys.argv[1:] if argv is None else argv)
    started = time.perf_counter()
    try:
        result = command.main(args=args, prog_name="goalplace", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except NumericalError as exc:
        logger.error("numerical failure: %s", exc)
        for key, value in exc.diagnostics.items():
            logger.error("  %s = %s", key, value)
        return exc.exit_code
    except (InputError, ValidationError, OSError) as exc:
        logger.error("%s", exc)
        return 1
    logger.info("finished in %.2f s", time.perf_counter() - started)
    return result if isinstance(result, int) else 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
