"""Exception hierarchy shared by every runtime layer."""

from __future__ import annotations


class SplitflowError(Exception):
    """Base class for all runtime errors."""


# registry / splitting API
class DuplicateKind(SplitflowError):
    pass


class InvalidKind(SplitflowError):
    pass


class UnknownKind(SplitflowError):
    pass


class ConstructorFailure(SplitflowError):
    pass


class SplitFailure(SplitflowError):
    pass


class MergeFailure(SplitflowError):
    pass


# annotations
class ParseError(SplitflowError):
    def __init__(self, message: str, offset: int, text: str = ""):
        self.message = message
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}")


class UnknownReference(ParseError):
    pass


class AnnotationError(SplitflowError):
    """Raised when an annotation fails validation against its signature."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


# capture
class GraphSealed(SplitflowError):
    pass


class ArityError(SplitflowError):
    pass


# planning
class InferenceConflict(SplitflowError):
    pass


class CycleDetected(SplitflowError):
    pass


# execution
class NoSplittableInputs(SplitflowError):
    pass


class ElementCountMismatch(SplitflowError):
    pass


class EmptySplit(SplitflowError):
    pass


class NullData(SplitflowError):
    pass


class StageFailure(SplitflowError):
    """A worker raised something that is not a runtime diagnostic."""


# demo libraries
class DimensionMismatch(SplitflowError):
    pass
