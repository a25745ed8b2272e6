"""Exception types shared across the toolkit."""


class MNNError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(MNNError):
    """Invalid topology, shapes, or option values."""


class InputError(MNNError):
    """Malformed runtime input to the network (non-finite values, bad length)."""


class DataError(MNNError):
    """Trajectory or dataset content that cannot be processed."""


class SchemaError(DataError):
    """A file does not expose the columns/fields the schema map requires."""


class NumericError(MNNError):
    """Non-finite values encountered during a numeric computation."""
