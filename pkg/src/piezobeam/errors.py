"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration violates a documented constraint (CLI exit code 2)."""


class InvariantViolation(RuntimeError):
    """A runtime invariant check failed (CLI exit code 1)."""


class SnapshotError(ValueError):
    """A snapshot file is malformed or inconsistent with the configuration."""
