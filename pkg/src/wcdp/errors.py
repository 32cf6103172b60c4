"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, guard violations with 3, numerical failures with 4.
"""


class ConfigError(ValueError):
    """Malformed configuration, model file, or schema violation."""


class GuardError(RuntimeError):
    """A size or enumeration guard was exceeded; the request is refused."""


class NumericalError(RuntimeError):
    """A numerical invariant failed (solver residual, LP check, infeasible action)."""
