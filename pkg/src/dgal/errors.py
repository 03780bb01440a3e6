"""Exception types shared across the package."""


class ContractError(ValueError):
    """An operation was called with arguments that violate its contract."""


class FormatError(ValueError):
    """A file does not follow its declared byte format."""


class ConsistencyError(ValueError):
    """Paired inputs disagree (truncated file, mismatched lengths)."""


class UndefinedScoreError(ValueError):
    """A difficulty metric has no eligible centroid to compare against."""


class DegenerateDataError(ValueError):
    """Training data cannot support the requested model (e.g. single-class targets)."""
