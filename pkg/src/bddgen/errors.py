"""Exception hierarchy shared by every stage of the pipeline."""


class BddGenError(Exception):
    """Base class for all errors raised by bddgen."""


class ConfigError(BddGenError):
    """A configuration file or flag is invalid."""
