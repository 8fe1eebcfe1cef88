"""Nested bag values with integer multiplicities, labels and dictionaries.

Runtime representation:

* unit            -- the empty tuple ``()``
* atoms           -- plain Python ``int`` / ``str``
* pairs           -- 2-tuples ``(a, b)``
* bags            -- :class:`Bag`, a finite map element -> nonzero integer
* labels          -- :class:`Label`, a static index paired with an
                     environment tuple of flat values
* dictionaries    -- :class:`DictVal`, finite map label -> bag with an
                     explicit support set and optional symbolic generators

Bags with ``+`` (pointwise integer sum of multiplicities), negation and the
empty bag form a commutative group, which is what makes delta processing
work: any change between two query results is itself a bag.  All values are
immutable after construction; :class:`Bag` and :class:`DictVal` normalize on
construction (no zero multiplicities) so that equality is plain structural
equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from .errors import DictUnionConflict, ShapeMismatch, TypeMismatch, UnboundLabel
from . import types as T

UNIT_VAL = ()


class Label:
    """An inner-bag name: static index plus captured environment tuple.

    ``idx`` is a short token such as ``"q1"`` (assigned to singleton
    occurrences in source order) or ``"v7"`` (allocated when shredding
    values).  ``env`` is a tuple of flat values (atoms, units, pairs,
    labels) identifying which instance of the singleton produced the bag.
    """

    __slots__ = ("idx", "env", "_hash")

    def __init__(self, idx: str, env: tuple = ()):
        self.idx = idx
        self.env = env
        self._hash = hash(("L", idx, env))

    def __eq__(self, other):
        return (
            isinstance(other, Label)
            and self.idx == other.idx
            and self.env == other.env
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Label({self.idx!r}, {self.env!r})"


class Bag:
    """Canonical generalized bag: finite map element -> nonzero int."""

    __slots__ = ("entries", "_hash", "_sorted")

    def __init__(self, entries: dict):
        # Normalize: never store zero multiplicities.
        self.entries = {v: m for v, m in entries.items() if m != 0}
        self._hash = None
        self._sorted = None

    @staticmethod
    def of(*elems) -> "Bag":
        d: dict = {}
        for v in elems:
            d[v] = d.get(v, 0) + 1
        return Bag(d)

    @staticmethod
    def from_items(items: Iterable[tuple[object, int]]) -> "Bag":
        d: dict = {}
        for v, m in items:
            d[v] = d.get(v, 0) + m
        return Bag(d)

    def items(self) -> Iterator[tuple[object, int]]:
        return iter(self.entries.items())

    def sorted_items(self) -> list:
        if self._sorted is None:
            self._sorted = sorted(self.entries.items(), key=lambda it: canon_key(it[0]))
        return self._sorted

    def get(self, v) -> int:
        return self.entries.get(v, 0)

    def weight(self) -> int:
        """Total count including repetitions: sum of |multiplicity|."""
        return sum(abs(m) for m in self.entries.values())

    def is_empty(self) -> bool:
        return not self.entries

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        return isinstance(other, Bag) and self.entries == other.entries

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(("B", tuple((canon_key(v), m) for v, m in self.sorted_items())))
        return self._hash

    def __repr__(self):
        inner = ", ".join(f"{v!r}:{m}" for v, m in self.sorted_items())
        return "{" + inner + "}"


EMPTY_BAG = Bag({})


def bag(*elems) -> Bag:
    return Bag.of(*elems)


def bag_add(b1: Bag, b2: Bag) -> Bag:
    if not isinstance(b1, Bag) or not isinstance(b2, Bag):
        raise TypeMismatch("bag addition requires two bags")
    if len(b2.entries) > len(b1.entries):
        b1, b2 = b2, b1
    d = dict(b1.entries)
    for v, m in b2.entries.items():
        n = d.get(v, 0) + m
        if n == 0:
            d.pop(v, None)
        else:
            d[v] = n
    return Bag(d)


def bag_neg(b: Bag) -> Bag:
    if not isinstance(b, Bag):
        raise TypeMismatch("bag negation requires a bag")
    return Bag({v: -m for v, m in b.entries.items()})


def bag_scale(b: Bag, k: int) -> Bag:
    if k == 0:
        return EMPTY_BAG
    if k == 1:
        return b
    return Bag({v: m * k for v, m in b.entries.items()})


def bag_sum(bags: Iterable[Bag]) -> Bag:
    acc: dict = {}
    for b in bags:
        for v, m in b.entries.items():
            n = acc.get(v, 0) + m
            if n == 0:
                acc.pop(v, None)
            else:
                acc[v] = n
    return Bag(acc)


# ---------------------------------------------------------------------------
# Label dictionaries


@dataclass(frozen=True)
class DictGen:
    """Symbolic on-demand definition for labels of one static index.

    ``key`` identifies the generator up to definitional equality: the index
    together with the defining body and the fingerprint of its captured
    environment.  ``fn`` maps a label's environment tuple to the defined bag.
    """

    idx: str
    key: object
    fn: Callable[[tuple], Bag] = field(compare=False)


class DictVal:
    """Finite map label -> bag with explicit support.

    ``entries`` holds materialized definitions (values may be empty bags: a
    label defined as the empty bag is different from an undefined label).
    ``support`` always contains the entry keys and may list further labels
    whose definitions are generator-coverable.  ``generators`` supply
    on-demand definitions for whole index families.  ``total`` dictionaries
    treat labels outside the support as mapped to the empty bag; strict ones
    raise.  Updates (deltas) are total; dictionaries produced by shredding
    are strict so that genuinely undefined labels are caught.
    """

    __slots__ = ("entries", "support", "generators", "total")

    def __init__(
        self,
        entries: dict | None = None,
        support: frozenset | None = None,
        generators: tuple = (),
        total: bool = False,
    ):
        self.entries = dict(entries or {})
        supp = set(self.entries.keys())
        if support:
            supp |= set(support)
        self.support = frozenset(supp)
        self.generators = tuple(generators)
        self.total = total

    @staticmethod
    def empty(total: bool = False) -> "DictVal":
        return DictVal({}, total=total)

    def gen_keys(self) -> frozenset:
        return frozenset(g.key for g in self.generators)

    def gen_indices(self) -> frozenset:
        return frozenset(g.idx for g in self.generators)

    def covers(self, label: Label) -> bool:
        return label in self.support or any(g.idx == label.idx for g in self.generators)

    def apply(self, label: Label) -> Bag:
        if label in self.entries:
            return self.entries[label]
        gens = [g for g in self.generators if g.idx == label.idx]
        if gens:
            return bag_sum(g.fn(label.env) for g in gens)
        if label in self.support:
            raise UnboundLabel(f"label {label!r} is in the support but has no definition")
        if self.total:
            return EMPTY_BAG
        raise UnboundLabel(f"no definition for label {label!r}")

    def with_entries(self, new_entries: dict) -> "DictVal":
        merged = dict(self.entries)
        merged.update(new_entries)
        return DictVal(merged, self.support, self.generators, self.total)

    def as_total(self) -> "DictVal":
        """The same mapping read as an update: missing labels change nothing."""
        if self.total:
            return self
        return DictVal(self.entries, self.support, self.generators, total=True)

    def __eq__(self, other):
        return (
            isinstance(other, DictVal)
            and self.entries == other.entries
            and self.support == other.support
            and self.gen_keys() == other.gen_keys()
        )

    def __hash__(self):
        return hash(
            (
                "D",
                tuple(sorted(((canon_key(l), b) for l, b in self.entries.items()))),
                tuple(sorted(canon_key(l) for l in self.support)),
            )
        )

    def sorted_entries(self) -> list:
        return sorted(self.entries.items(), key=lambda it: canon_key(it[0]))

    def __repr__(self):
        inner = ", ".join(f"{l!r} => {b!r}" for l, b in self.sorted_entries())
        extra = self.support - set(self.entries)
        s = "[" + inner
        if extra:
            s += " ; supp " + ", ".join(repr(l) for l in sorted(extra, key=canon_key))
        if self.generators:
            s += " ; gen " + ",".join(sorted(self.gen_indices()))
        return s + "]"


def dict_add(d1: DictVal, d2: DictVal) -> DictVal:
    """Pointwise bag addition over the union of supports.

    The only operation that can modify a label's definition; it never errors
    on overlapping labels.
    """
    if not isinstance(d1, DictVal) or not isinstance(d2, DictVal):
        raise TypeMismatch("dictionary addition requires two dictionaries")
    entries = dict(d1.entries)
    for l, b in d2.entries.items():
        entries[l] = bag_add(entries[l], b) if l in entries else b
    gens = list(d1.generators)
    seen = {g.key for g in gens}
    for g in d2.generators:
        # Same key means the same definition; adding it would double it.
        if g.key not in seen:
            gens.append(g)
            seen.add(g.key)
    return DictVal(entries, d1.support | d2.support, tuple(gens), d1.total and d2.total)


def dict_label_union(d1: DictVal, d2: DictVal) -> DictVal:
    """Union of dictionary domains; shared labels must agree on definitions."""
    if not isinstance(d1, DictVal) or not isinstance(d2, DictVal):
        raise TypeMismatch("label union requires two dictionaries")
    entries = dict(d1.entries)
    for l, b in d2.entries.items():
        if l in entries:
            if entries[l] != b:
                raise DictUnionConflict(l, entries[l], b)
        else:
            if l in d1.support:
                # d1 promises a generator-coverable definition for l.
                lhs = d1.apply(l)
                if lhs != b:
                    raise DictUnionConflict(l, lhs, b)
            entries[l] = b
    for l in d1.entries:
        if l in d2.support and l not in d2.entries:
            rhs = d2.apply(l)
            if rhs != d1.entries[l]:
                raise DictUnionConflict(l, d1.entries[l], rhs)
    gens = list(d1.generators)
    keys = {g.key for g in gens}
    for g in d2.generators:
        if g.key in keys:
            continue
        if any(g.idx == h.idx for h in d1.generators):
            # Two distinct symbolic definitions for the same index family
            # would disagree somewhere on their (shared, infinite) domain.
            raise DictUnionConflict(Label(g.idx), d1, d2)
        gens.append(g)
        keys.add(g.key)
    return DictVal(entries, d1.support | d2.support, tuple(gens), d1.total and d2.total)


# ---------------------------------------------------------------------------
# Canonical ordering

_RANK_UNIT = 0
_RANK_ATOM = 1
_RANK_PAIR = 2
_RANK_BAG = 3
_RANK_LABEL = 4
_RANK_DICT = 5


def canon_key(v):
    """Total order key: unit < atoms (ints before strings) < pairs < bags
    < labels < dictionaries; recursive positions ordered lexicographically.

    Deterministic serialization and map iteration both sort by this key.
    """
    if v == ():
        return (_RANK_UNIT,)
    if isinstance(v, bool):
        raise TypeMismatch("booleans are not values; use bags over unit")
    if isinstance(v, int):
        return (_RANK_ATOM, 0, v)
    if isinstance(v, str):
        return (_RANK_ATOM, 1, v)
    if isinstance(v, tuple):
        if len(v) != 2:
            raise TypeMismatch(f"tuple values must be pairs, got arity {len(v)}")
        return (_RANK_PAIR, canon_key(v[0]), canon_key(v[1]))
    if isinstance(v, Bag):
        return (_RANK_BAG, tuple((canon_key(e), m) for e, m in v.sorted_items()))
    if isinstance(v, Label):
        return (_RANK_LABEL, v.idx, tuple(canon_key(e) for e in v.env))
    if isinstance(v, DictVal):
        return (
            _RANK_DICT,
            tuple((canon_key(l), canon_key(b)) for l, b in v.sorted_entries()),
            tuple(sorted(canon_key(l) for l in v.support)),
            tuple(sorted(v.gen_indices())),
        )
    raise TypeMismatch(f"not a value: {v!r}")


def value_typecheck(v, ty: T.SchemaType) -> bool:
    """Structural membership test of a value in a schema type."""
    if ty is T.UNIT:
        return v == ()
    if ty is T.BASE:
        return isinstance(v, (int, str)) and not isinstance(v, bool)
    if ty is T.LABEL:
        return isinstance(v, Label)
    if isinstance(ty, T.Prod):
        return (
            isinstance(v, tuple)
            and len(v) == 2
            and value_typecheck(v[0], ty.left)
            and value_typecheck(v[1], ty.right)
        )
    if isinstance(ty, T.Bag):
        return isinstance(v, Bag) and all(value_typecheck(e, ty.elem) for e in v.entries)
    if isinstance(ty, T.DictType):
        return isinstance(v, DictVal) and all(
            value_typecheck(b, T.Bag(ty.elem)) for b in v.entries.values()
        )
    raise ShapeMismatch(f"unknown type {ty!r}")


def pair_of(values: list) -> object:
    """Right-nested pair from a list of values (unit for the empty list)."""
    if not values:
        return ()
    out = values[-1]
    for v in reversed(values[:-1]):
        out = (v, out)
    return out
