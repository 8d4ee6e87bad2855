"""Exception types shared across the package.

ConfigError maps to CLI exit code 2, NumericError to exit code 3.
Plain ValueError is used for precondition violations on individual
operations (bad shapes, degenerate inputs) and is treated like a
configuration/data problem at the CLI boundary.
"""


class ConfigError(ValueError):
    """Invalid configuration, data file or CLI usage."""


class NumericError(RuntimeError):
    """A numerical procedure failed (divergence, rank collapse, complex leakage)."""
