class PapsmearError(Exception):
    """Base class for errors raised by django_papsmear."""


class DatasetError(PapsmearError, ValueError):
    """A feature table, image set or split request is malformed."""


class ConfigError(PapsmearError, ValueError):
    """An experiment config or parameter map has an unknown or invalid entry."""


class TrainingError(PapsmearError, RuntimeError):
    """Optimization diverged (non-finite loss)."""
