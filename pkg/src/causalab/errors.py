"""Exception types shared across the package."""

from __future__ import annotations


class CausalabError(Exception):
    """Base class for all package errors."""


class CsvParseError(CausalabError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(CausalabError):
    pass


class EmptyInputError(CausalabError):
    pass


class EmptyOutputError(CausalabError):
    pass


class GraphError(CausalabError):
    pass


class CycleError(GraphError):
    """Raised when a graph expected to be acyclic contains a cycle.

    ``cycle`` lists the node labels along one witness cycle, first node
    repeated at the end.
    """

    def __init__(self, cycle: list[str]):
        self.cycle = list(cycle)
        super().__init__("directed cycle: " + " -> ".join(self.cycle))


class EdgeKindError(GraphError):
    pass


class NodeMismatchError(GraphError):
    pass


class KnowledgeError(GraphError):
    """Inconsistent background-knowledge constraints."""


class NumericError(CausalabError):
    pass


class SampleSizeError(CausalabError):
    pass


class ConvergenceError(CausalabError):
    def __init__(self, message: str, h: float | None = None):
        self.h = h
        super().__init__(message)


class InvalidQueryError(CausalabError):
    pass


class UndefinedScoreError(CausalabError):
    pass


class InvalidSpecError(CausalabError):
    pass


class CapExceededError(CausalabError):
    pass


class CalibrationError(CausalabError):
    pass


class NoMethodError(CausalabError):
    """No supported method fits the dataset characteristics."""


class CommandError(CausalabError):
    """A workflow command fails structural validation.

    ``field_errors`` maps field name to a human-readable problem.
    """

    def __init__(self, message: str, field_errors: dict[str, str] | None = None):
        self.field_errors = dict(field_errors or {})
        super().__init__(message)


class CommandRejected(CausalabError):
    """A structurally valid command cannot run against the current session state."""


class NeedsClarification(CausalabError):
    def __init__(self, message: str, suggestions: list[str] | None = None):
        self.suggestions = list(suggestions or [])
        super().__init__(message)


class NotFoundError(CausalabError):
    pass
