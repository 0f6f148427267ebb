"""Exception types shared across the toolkit."""


class LdakitError(Exception):
    """Base class for all toolkit errors."""


class FormatError(LdakitError):
    """Malformed input file. Carries the offending line number when known."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc += f"{path}"
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class EmptyCorpusError(LdakitError):
    """No documents (or no tokens) survived loading and filtering."""


class CheckpointError(LdakitError):
    """Unreadable, corrupt, or version-incompatible checkpoint file."""


class NumericError(LdakitError):
    """A computation produced an invalid value (zero mass, NaN, ...)."""


class ConstraintError(LdakitError):
    """A label constraint cannot be satisfied (e.g. empty allowed-topic set)."""


class ConfigError(LdakitError):
    """Invalid run configuration."""


class EnumerationCapError(LdakitError):
    """Requested brute-force enumeration exceeds the hard size cap."""
