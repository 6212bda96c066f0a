"""Error taxonomy shared by the library and the CLI exit-code mapping."""


class ConfigError(Exception):
    """Invalid configuration value or combination (CLI exit code 2)."""


class DataError(Exception):
    """Malformed or unusable input data (CLI exit code 3)."""


class DivergenceError(Exception):
    """Training produced a non-finite loss (CLI exit code 4)."""
