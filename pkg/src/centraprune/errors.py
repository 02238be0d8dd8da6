"""Exception hierarchy.

Every error carries a stable ``code`` (the class name) that the CLI prints in
its JSON error line, and an ``exit_code``: 1 for bad input caught before any
computation, 2 for failures that happen while computing.
"""

from __future__ import annotations


class CentrapruneError(Exception):
    exit_code = 1

    @property
    def code(self) -> str:
        return type(self).__name__


class ValidationError(CentrapruneError):
    """Bad arguments or malformed inputs."""


class ComputationError(CentrapruneError):
    exit_code = 2


# tensor_io
class MalformedHeader(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class UnsupportedDtype(ValidationError):
    pass


class IoFailure(ComputationError):
    pass


class MissingFile(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


# graph
class NonFiniteInput(ValidationError):
    pass


class InvalidThreshold(ValidationError):
    pass


# centrality
class EmptyGraph(ValidationError):
    pass


class NotConverged(ComputationError):
    """Power iteration hit ``max_iter``; ``scores`` holds the best iterate."""

    def __init__(self, message: str, scores=None):
        super().__init__(message)
        self.scores = scores


# prune
class InvalidRatio(ValidationError):
    pass


class PlanMismatch(ValidationError):
    pass


# net
class UnknownLayer(ValidationError):
    pass


class EmptyDataset(ValidationError):
    pass


class InvalidConfig(ValidationError):
    pass


class NonFiniteLoss(ComputationError):
    pass


# experiment / cli
class InvalidSpec(ValidationError):
    pass


class EmptyReport(ValidationError):
    pass


class InvalidArgument(ValidationError):
    pass
