"""Exception hierarchy; the CLI maps each family to an exit code."""


class GoalPlaceError(Exception):
    exit_code = 1


class InputError(GoalPlaceError, ValueError):
    """Malformed input files, contract violations and bad parameters."""

    exit_code = 1


class ParseError(InputError):
    def __init__(self, path, line: int, message: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class MatchError(InputError):
    pass


class NumericalError(GoalPlaceError, ArithmeticError):
    """Non-convergence, divergence or an undefined estimator."""

    exit_code = 2

    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)
