"""Shared exception types."""


class ContractError(ValueError):
    """An argument violates a documented precondition."""


class AnnotationParseError(ValueError):
    """A cycle annotation file contains a malformed row."""


class SplitConfigError(KeyError):
    """A recording is missing from the split table."""


class SplitIntegrityError(ValueError):
    """A patient would end up on both sides of the train/test split."""
