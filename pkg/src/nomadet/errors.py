"""Exception types shared across the package."""


class NomadetError(Exception):
    """Base class for package-specific failures."""


class DataFormatError(NomadetError):
    """A serialized artifact (dataset, checkpoint) cannot be parsed."""


class BadMagicError(DataFormatError):
    pass


class VersionMismatchError(DataFormatError):
    pass


class TruncatedFileError(DataFormatError):
    pass


class NumericError(NomadetError):
    """Training or evaluation produced non-finite numbers."""
