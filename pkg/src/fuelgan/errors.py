"""Exception hierarchy shared across the pipeline.

Each class carries a ``category`` string used by the CLI when it prints a
one-line error and picks an exit code.
"""


class FuelGanError(Exception):
    category = "error"


class DimensionError(FuelGanError, ValueError):
    category = "dimension"


class ConfigError(FuelGanError, ValueError):
    category = "config"


class StateError(FuelGanError, RuntimeError):
    category = "state"


class SchemaError(FuelGanError, ValueError):
    category = "schema"


class DomainError(FuelGanError, ValueError):
    """A precondition on the data itself does not hold."""

    category = "domain"


class DegenerateInputError(DomainError):
    category = "degenerate-input"


def shape_mismatch(what: str, a, b) -> DimensionError:
    return DimensionError(f"{what}: shape {tuple(a)} incompatible with {tuple(b)}")
