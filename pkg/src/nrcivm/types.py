"""Schema types for nested bag queries.

Types are the finite trees built from unit, a single atomic base type,
binary products and bag types.  Two extra constructors appear only in
shredded programs: ``LABEL`` (the type of inner-bag labels) and
``DictType`` (a finite map from labels to bags of a given element type).
"""

from __future__ import annotations

from dataclasses import dataclass


class SchemaType:
    """Base class; concrete types below.  Instances are immutable."""

    __slots__ = ()

    def __mul__(self, other: "SchemaType") -> "Prod":
        return Prod(self, other)


@dataclass(frozen=True, slots=True)
class _Unit(SchemaType):
    def __repr__(self):
        return "Unit"


@dataclass(frozen=True, slots=True)
class _Base(SchemaType):
    def __repr__(self):
        return "Base"


@dataclass(frozen=True, slots=True)
class _Label(SchemaType):
    def __repr__(self):
        return "Label"


@dataclass(frozen=True, slots=True)
class Prod(SchemaType):
    left: SchemaType
    right: SchemaType

    def __repr__(self):
        return f"<{self.left!r}, {self.right!r}>"


@dataclass(frozen=True, slots=True)
class Bag(SchemaType):
    elem: SchemaType

    def __repr__(self):
        return f"Bag({self.elem!r})"


@dataclass(frozen=True, slots=True)
class DictType(SchemaType):
    """Type of label dictionaries mapping labels to ``Bag(elem)``."""

    elem: SchemaType

    def __repr__(self):
        return f"Dict({self.elem!r})"


UNIT = _Unit()
BASE = _Base()
LABEL = _Label()


def is_flat_tuple(ty: SchemaType) -> bool:
    """True iff ``ty`` is built from unit/base/products only.

    Comparison predicates may range only over variables of such types;
    anything involving bags (or labels) is out, which is what keeps the
    calculus positive.
    """
    if ty is UNIT or ty is BASE:
        return True
    if isinstance(ty, Prod):
        return is_flat_tuple(ty.left) and is_flat_tuple(ty.right)
    return False


def contains_label(ty: SchemaType) -> bool:
    if ty is LABEL:
        return True
    if isinstance(ty, Prod):
        return contains_label(ty.left) or contains_label(ty.right)
    if isinstance(ty, (Bag, DictType)):
        return contains_label(ty.elem)
    return False


def proj_type(ty: SchemaType, path: tuple[int, ...]) -> SchemaType:
    """Type at a projection path (components numbered 1 and 2)."""
    from .errors import TypeMismatch

    cur = ty
    for i in path:
        if not isinstance(cur, Prod):
            raise TypeMismatch(f"projection .{i} on non-product type {cur!r}")
        cur = cur.left if i == 1 else cur.right
    return cur


def prod_of(tys: list[SchemaType]) -> SchemaType:
    """Right-nested product of a list of types (unit for the empty list)."""
    if not tys:
        return UNIT
    out = tys[-1]
    for t in reversed(tys[:-1]):
        out = Prod(t, out)
    return out
