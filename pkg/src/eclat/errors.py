"""Exception hierarchy shared by every eclat module."""

from __future__ import annotations


class EclatError(Exception):
    """Base class for all errors raised by eclat."""


class ModelSyntaxError(EclatError):
    """Malformed descriptor document.

    ``line`` and ``column`` point into the source text when the failure is a
    JSON decoding error; schema violations carry a JSON pointer in ``path``.
    """

    def __init__(self, message: str, *, line: int | None = None,
                 column: int | None = None, path: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}, column {column}")
        if path:
            where.append(f"at {path}")
        super().__init__(f"{message} ({'; '.join(where)})" if where else message)
        self.line = line
        self.column = column
        self.path = path


class ModelReferenceError(EclatError):
    """Dangling or ambiguous reference inside a model document."""


class DomainError(EclatError):
    """Infinite, oversized, empty or otherwise unusable value domain."""


class NotALattice(DomainError):
    """Declared enumeration order is not a join-semilattice."""


class CapExceeded(EclatError):
    """State space too large to enumerate; caller should sample instead."""

    def __init__(self, size: int, cap: int):
        super().__init__(f"state space has {size} states, cap is {cap}")
        self.size = size
        self.cap = cap


class DomainMismatch(EclatError):
    """Operations from different aggregates were compared."""


class EmptyModel(EclatError):
    """A share metric was requested for a model with nothing to count."""


class UnknownOperation(EclatError):
    pass


class PreconditionFailed(EclatError):
    """An update was rejected at its origin replica."""


class ScenarioError(EclatError):
    pass


class UnknownCorpusId(EclatError):
    pass
