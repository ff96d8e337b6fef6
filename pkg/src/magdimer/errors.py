"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration file or parameter set."""


class SolverError(RuntimeError):
    """A numerical routine failed (non-convergence, unstable point, ...)."""
