"""Typed error hierarchy shared across the package.

Every error carries a short machine-readable ``code`` so the CLI can emit
diagnostics that tools can match on, plus an optional source span
``(line, col)`` when the error originates from parsed text.
"""

from __future__ import annotations


class NrcError(Exception):
    code = "error"

    def __init__(self, msg: str, span: tuple[int, int] | None = None):
        super().__init__(msg)
        self.msg = msg
        self.span = span

    def __str__(self) -> str:
        if self.span is not None:
            return f"{self.msg} (at {self.span[0]}:{self.span[1]})"
        return self.msg


class ParseError(NrcError):
    code = "parse"


class TypeMismatch(NrcError):
    code = "type-mismatch"


class UnboundVariable(NrcError):
    code = "unbound-variable"


class UnboundLabel(NrcError):
    code = "unbound-label"


class PredicateOnNonFlatTuple(NrcError):
    """Positivity violation: comparison predicates act on flat tuples only."""

    code = "predicate-on-non-flat-tuple"


class SngStarInputDependent(NrcError):
    """A restricted singleton whose body mentions an input relation."""

    code = "sng-star-input-dependent"


class UnrestrictedSingleton(NrcError):
    """Delta/cost rejected an expression containing an unrestricted singleton."""

    code = "unrestricted-singleton"


class DictUnionConflict(NrcError):
    code = "dict-union-conflict"

    def __init__(self, label, lhs, rhs, span=None):
        super().__init__(f"conflicting definitions for label {label!r}", span)
        self.label = label
        self.lhs = lhs
        self.rhs = rhs


class InconsistentUpdate(NrcError):
    code = "inconsistent-update"


class ShapeMismatch(NrcError):
    code = "shape-mismatch"
