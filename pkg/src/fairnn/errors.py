"""Exception hierarchy shared by all fairnn modules."""

from __future__ import annotations


class FairNNError(Exception):
    """Base class for every error raised by this package."""


class UsageError(FairNNError, ValueError):
    """Invalid argument: bad handle, negative weight, dimension mismatch."""


class DataFormatError(FairNNError, ValueError):
    """Malformed or inconsistent input data (files, non-finite points)."""

    def __init__(self, message: str, offset: int | None = None) -> None:
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class EmptySet(FairNNError):
    """Uniform draw requested from a set with no active members."""


class ZeroTotalWeight(FairNNError):
    """Weighted draw requested while every weight is zero."""


class EmptyEstimate(FairNNError):
    """Size estimation found no member before its probe cap ran out."""


class EmptyUnion(FairNNError):
    """The queried sub-collection has no active element left."""


class RoundBudgetExhausted(FairNNError):
    """A rejection loop hit its round cap without accepting a sample."""

    def __init__(self, rounds: int) -> None:
        super().__init__(f"no sample accepted within {rounds} rounds")
        self.rounds = rounds


class TooManyOutliers(FairNNError):
    """Outlier discoveries exceeded the caller's budget."""

    def __init__(self, discovered: int, budget: int) -> None:
        super().__init__(f"{discovered} outlier discoveries exceed budget {budget}")
        self.discovered = discovered
        self.budget = budget


class EmptyNeighborhood(FairNNError):
    """No admissible neighbor of the query could be reached."""


class AllStructuresRetired(FairNNError):
    """Every LSH structure in a query session crossed its outlier threshold."""
