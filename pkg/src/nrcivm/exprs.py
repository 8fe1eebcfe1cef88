"""Query ASTs.

All expressions denote bags (or, for the dictionary constructs, label
dictionaries).  Variables come in two kinds: let-bound names ``X`` that
reference whole bags/dictionaries, and for-bound names ``x`` that reference
elements of a bag; bare variables appear only under ``SngVar``/``Proj``/
predicates/label environments, so every AST node is itself bag- or
dictionary-typed.

Singleton occurrences (``Sng``/``SngStar``) each carry a static index,
distinct within a source program, which becomes the index of the labels
their shredding introduces.  Expression trees are immutable and hashable;
delta rewriting may duplicate subtrees (and hence indices), which is fine:
a duplicated index still names the same logical dictionary.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Iterator, Optional

from . import types as T


@dataclass(frozen=True)
class Expr:
    pass


# --- predicate condition trees (not expressions themselves) ----------------


@dataclass(frozen=True)
class PathRef:
    """Projection path rooted at an in-scope for-variable."""

    var: str
    path: tuple[int, ...] = ()


@dataclass(frozen=True)
class ConstAtom:
    value: object  # int or str


@dataclass(frozen=True)
class Cmp:
    op: str  # one of ==, !=, <, <=
    lhs: object  # PathRef | ConstAtom
    rhs: object


@dataclass(frozen=True)
class BoolAnd:
    left: object
    right: object


@dataclass(frozen=True)
class BoolOr:
    left: object
    right: object


# --- expressions ------------------------------------------------------------


@dataclass(frozen=True)
class RelVar(Expr):
    name: str
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class DeltaRel(Expr):
    """The update bag/dictionary for a named input, at a given order.

    Order 1 is the incoming update; higher orders name the fresh updates
    introduced while deriving higher-order deltas.
    """

    name: str
    order: int = 1
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class LetVar(Expr):
    name: str
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Let(Expr):
    name: str
    bound: Expr
    body: Expr
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SngVar(Expr):
    var: str
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Proj(Expr):
    """Singleton bag holding a projection of a for-variable: ``{pi_path(x)}``."""

    var: str
    path: tuple[int, ...]
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Pred(Expr):
    """Comparison predicate: evaluates to {()} (true) or {} (false)."""

    cond: object  # Cmp | BoolAnd | BoolOr
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Empty(Expr):
    ty: T.SchemaType  # Bag(...) or Dict(...) type of the whole expression
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SngUnit(Expr):
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Sng(Expr):
    """Unrestricted singleton: wraps a whole bag as a single element."""

    body: Expr
    idx: str
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SngStar(Expr):
    """Restricted singleton: body must be input-independent."""

    body: Expr
    idx: str
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Flatten(Expr):
    body: Expr
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class ForUnion(Expr):
    var: str
    source: Expr
    body: Expr
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Prod(Expr):
    left: Expr
    right: Expr
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Union(Expr):
    left: Expr
    right: Expr
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Neg(Expr):
    body: Expr
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


# --- label constructs -------------------------------------------------------


@dataclass(frozen=True)
class InL(Expr):
    """Singleton bag holding the label <idx, (env_vars...)>."""

    idx: str
    env_vars: tuple[str, ...]
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class DictDef(Expr):
    """Symbolic dictionary [(idx, env_vars) -> body].

    ``env_vars`` are binders: the dictionary's parameters, supplied by the
    environment tuple of an applied label.  ``env_types`` carries their
    (flat) types so the definition typechecks on its own.
    """

    idx: str
    env_vars: tuple[str, ...]
    body: Expr
    env_types: tuple = ()
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class DictApp(Expr):
    """Apply a dictionary to every label in a bag of labels, summing."""

    dict: Expr
    key: Expr
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class DictUnion(Expr):
    left: Expr
    right: Expr
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class DictAdd(Expr):
    left: Expr
    right: Expr
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


# ---------------------------------------------------------------------------
# Structural helpers


def children(e: Expr) -> Iterator[Expr]:
    for f in fields(e):
        v = getattr(e, f.name)
        if isinstance(v, Expr):
            yield v


def walk(e: Expr) -> Iterator[Expr]:
    yield e
    for c in children(e):
        yield from walk(c)


def cond_vars(cond) -> set[str]:
    if isinstance(cond, Cmp):
        out = set()
        for side in (cond.lhs, cond.rhs):
            if isinstance(side, PathRef):
                out.add(side.var)
        return out
    if isinstance(cond, (BoolAnd, BoolOr)):
        return cond_vars(cond.left) | cond_vars(cond.right)
    raise AssertionError(f"bad condition node {cond!r}")


def free_relations(e: Expr) -> set[str]:
    """Names of input relations (and base dictionaries) referenced by ``e``.

    Update inputs (``DeltaRel``) do not count: they have degree zero and
    deltas with respect to them are never taken.
    """
    out: set[str] = set()
    for n in walk(e):
        if isinstance(n, RelVar):
            out.add(n.name)
    return out


def free_delta_rels(e: Expr) -> set[tuple[str, int]]:
    return {(n.name, n.order) for n in walk(e) if isinstance(n, DeltaRel)}


def max_delta_order(e: Expr, name: str) -> int:
    orders = [o for n, o in free_delta_rels(e) if n == name]
    return max(orders, default=0)


def is_input_independent(e: Expr) -> bool:
    return not free_relations(e)


def free_let_vars(e: Expr, bound: frozenset[str] = frozenset()) -> set[str]:
    if isinstance(e, LetVar):
        return set() if e.name in bound else {e.name}
    if isinstance(e, Let):
        return free_let_vars(e.bound, bound) | free_let_vars(e.body, bound | {e.name})
    out: set[str] = set()
    for c in children(e):
        out |= free_let_vars(c, bound)
    return out


def free_for_vars(e: Expr, bound: frozenset[str] = frozenset()) -> set[str]:
    if isinstance(e, SngVar):
        return set() if e.var in bound else {e.var}
    if isinstance(e, Proj):
        return set() if e.var in bound else {e.var}
    if isinstance(e, Pred):
        return cond_vars(e.cond) - bound
    if isinstance(e, InL):
        return set(e.env_vars) - bound
    if isinstance(e, DictDef):
        # env_vars are binders for the body: the dictionary's parameters.
        return free_for_vars(e.body, bound | set(e.env_vars))
    if isinstance(e, ForUnion):
        return free_for_vars(e.source, bound) | free_for_vars(e.body, bound | {e.var})
    out: set[str] = set()
    for c in children(e):
        out |= free_for_vars(c, bound)
    return out


def replace_children(e: Expr, mapping: dict[int, Expr]) -> Expr:
    """Rebuild ``e`` with child expressions replaced positionally."""
    if not mapping:
        return e
    kwargs = {}
    i = 0
    for f in fields(e):
        v = getattr(e, f.name)
        if isinstance(v, Expr):
            kwargs[f.name] = mapping.get(i, v)
            i += 1
        elif f.name != "span":
            kwargs[f.name] = v
    return type(e)(**kwargs)


def transform_bottom_up(e: Expr, fn) -> Expr:
    mapping = {}
    for i, c in enumerate(children(e)):
        nc = transform_bottom_up(c, fn)
        if nc is not c:
            mapping[i] = nc
    return fn(replace_children(e, mapping))


def sng_indices(e: Expr) -> list[str]:
    return [n.idx for n in walk(e) if isinstance(n, (Sng, SngStar))]
