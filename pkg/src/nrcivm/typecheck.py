"""Typing rules for the calculus and its label extension.

``check`` both types an expression and normalizes it:

* a ``+`` parsed as bag union is retagged to dictionary addition when its
  operands turn out to be dictionary-typed;
* an unrestricted singleton whose body is input-independent is retagged to
  the restricted singleton (the four singleton forms dispatch disjointly:
  variable, unit, restricted, unrestricted).

In ``inc`` mode any remaining unrestricted singleton is an error: such
queries must be shredded before they can be incrementalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

from . import exprs as E
from . import types as T
from .errors import (
    PredicateOnNonFlatTuple,
    SngStarInputDependent,
    TypeMismatch,
    UnboundVariable,
)


@dataclass
class Schema:
    """Declared inputs: relation name -> bag (or dictionary) type.

    Iteration order is the declaration order and is deterministic; engine
    code relies on it when applying multi-relation updates.
    """

    rels: dict[str, T.SchemaType] = dc_field(default_factory=dict)

    def __post_init__(self):
        for name, ty in self.rels.items():
            if not isinstance(ty, (T.Bag, T.DictType)):
                raise TypeMismatch(f"relation {name} must have bag or dictionary type, got {ty!r}")

    def lookup(self, name: str) -> T.SchemaType:
        if name not in self.rels:
            raise UnboundVariable(f"unknown relation {name}")
        return self.rels[name]

    def names(self) -> list[str]:
        return list(self.rels.keys())

    def with_rel(self, name: str, ty: T.SchemaType) -> "Schema":
        d = dict(self.rels)
        d[name] = ty
        return Schema(d)


def _cond_check(cond, pi: dict, span=None) -> None:
    if isinstance(cond, E.Cmp):
        for side in (cond.lhs, cond.rhs):
            if isinstance(side, E.PathRef):
                if side.var not in pi:
                    raise UnboundVariable(f"unbound variable {side.var} in predicate", span)
                vty = pi[side.var]
                if not T.is_flat_tuple(vty):
                    raise PredicateOnNonFlatTuple(
                        f"predicate ranges over {side.var} of non-flat type {vty!r}", span
                    )
                ety = T.proj_type(vty, side.path)
                if ety is not T.BASE:
                    raise TypeMismatch(
                        f"predicate path {side.var}.{'.'.join(map(str, side.path))} "
                        f"has type {ety!r}, expected Base",
                        span,
                    )
            elif not isinstance(side, E.ConstAtom):
                raise TypeMismatch(f"bad predicate operand {side!r}", span)
        if cond.op not in ("==", "!=", "<", "<="):
            raise TypeMismatch(f"bad comparison operator {cond.op}", span)
    elif isinstance(cond, (E.BoolAnd, E.BoolOr)):
        _cond_check(cond.left, pi, span)
        _cond_check(cond.right, pi, span)
    else:
        raise TypeMismatch(f"bad condition node {cond!r}", span)


def check(
    e: E.Expr,
    schema: Schema,
    gamma: dict | None = None,
    pi: dict | None = None,
    mode: str = "nrc",
) -> tuple[E.Expr, T.SchemaType]:
    """Return the normalized expression and its unique derivable type.

    ``mode`` is ``"nrc"`` (unrestricted singletons allowed) or ``"inc"``
    (every singleton body must be input-independent).
    """
    assert mode in ("nrc", "inc")
    gamma = gamma or {}
    pi = pi or {}

    def go(e: E.Expr, gamma: dict, pi: dict) -> tuple[E.Expr, T.SchemaType]:
        if isinstance(e, E.RelVar):
            return e, schema.lookup(e.name)
        if isinstance(e, E.DeltaRel):
            return e, schema.lookup(e.name)
        if isinstance(e, E.LetVar):
            if e.name not in gamma:
                raise UnboundVariable(f"unbound let-variable {e.name}", e.span)
            return e, gamma[e.name]
        if isinstance(e, E.Let):
            b, bty = go(e.bound, gamma, pi)
            if not isinstance(bty, (T.Bag, T.DictType)):
                raise TypeMismatch(f"let binds bags or dictionaries, got {bty!r}", e.span)
            g2 = dict(gamma)
            g2[e.name] = bty
            body, ty = go(e.body, g2, pi)
            return E.Let(e.name, b, body, span=e.span), ty
        if isinstance(e, E.SngVar):
            if e.var not in pi:
                raise UnboundVariable(f"unbound variable {e.var}", e.span)
            return e, T.Bag(pi[e.var])
        if isinstance(e, E.Proj):
            if e.var not in pi:
                raise UnboundVariable(f"unbound variable {e.var}", e.span)
            return e, T.Bag(T.proj_type(pi[e.var], e.path))
        if isinstance(e, E.Pred):
            _cond_check(e.cond, pi, e.span)
            return e, T.Bag(T.UNIT)
        if isinstance(e, E.Empty):
            if not isinstance(e.ty, (T.Bag, T.DictType)):
                raise TypeMismatch(f"empty constant must have bag or dictionary type", e.span)
            return e, e.ty
        if isinstance(e, E.SngUnit):
            return e, T.Bag(T.UNIT)
        if isinstance(e, (E.Sng, E.SngStar)):
            body, bty = go(e.body, gamma, pi)
            if not isinstance(bty, T.Bag):
                raise TypeMismatch(f"singleton body must be a bag, got {bty!r}", e.span)
            # A restricted singleton body may not reference inputs, nor
            # let-variables: a let-bound name can stand for an updatable
            # bag, and the let delta rule relies on every singleton under
            # it being insensitive to that binding.
            deps = sorted(E.free_relations(body)) + sorted(E.free_let_vars(body))
            if isinstance(e, E.SngStar) and deps:
                raise SngStarInputDependent(
                    f"restricted singleton body depends on {deps}", e.span
                )
            if not deps:
                return E.SngStar(body, e.idx, span=e.span), T.Bag(bty)
            if mode == "inc":
                raise SngStarInputDependent(
                    f"singleton body depends on {deps}; shred the query first", e.span
                )
            return E.Sng(body, e.idx, span=e.span), T.Bag(bty)
        if isinstance(e, E.Flatten):
            body, bty = go(e.body, gamma, pi)
            if not (isinstance(bty, T.Bag) and isinstance(bty.elem, T.Bag)):
                raise TypeMismatch(f"flatten expects a bag of bags, got {bty!r}", e.span)
            return E.Flatten(body, span=e.span), bty.elem
        if isinstance(e, E.ForUnion):
            src, sty = go(e.source, gamma, pi)
            if not isinstance(sty, T.Bag):
                raise TypeMismatch(f"for-source must be a bag, got {sty!r}", e.span)
            p2 = dict(pi)
            p2[e.var] = sty.elem
            body, bty = go(e.body, gamma, p2)
            if not isinstance(bty, T.Bag):
                raise TypeMismatch(f"for-body must be a bag, got {bty!r}", e.span)
            return E.ForUnion(e.var, src, body, span=e.span), bty
        if isinstance(e, E.Prod):
            l, lty = go(e.left, gamma, pi)
            r, rty = go(e.right, gamma, pi)
            if not (isinstance(lty, T.Bag) and isinstance(rty, T.Bag)):
                raise TypeMismatch(f"product of non-bags: {lty!r} x {rty!r}", e.span)
            return E.Prod(l, r, span=e.span), T.Bag(T.Prod(lty.elem, rty.elem))
        if isinstance(e, E.Union):
            l, lty = go(e.left, gamma, pi)
            r, rty = go(e.right, gamma, pi)
            if lty != rty:
                raise TypeMismatch(f"union of different types: {lty!r} vs {rty!r}", e.span)
            if isinstance(lty, T.DictType):
                return E.DictAdd(l, r, span=e.span), lty
            return E.Union(l, r, span=e.span), lty
        if isinstance(e, E.DictAdd):
            l, lty = go(e.left, gamma, pi)
            r, rty = go(e.right, gamma, pi)
            if lty != rty or not isinstance(lty, T.DictType):
                raise TypeMismatch(f"dictionary addition over {lty!r} vs {rty!r}", e.span)
            return E.DictAdd(l, r, span=e.span), lty
        if isinstance(e, E.Neg):
            body, bty = go(e.body, gamma, pi)
            if not isinstance(bty, T.Bag):
                raise TypeMismatch(f"negation of a non-bag: {bty!r}", e.span)
            return E.Neg(body, span=e.span), bty
        if isinstance(e, E.InL):
            for v in e.env_vars:
                if v not in pi:
                    raise UnboundVariable(f"unbound variable {v} in label environment", e.span)
                if _has_bag(pi[v]):
                    raise TypeMismatch(
                        f"label environment variable {v} has bag type {pi[v]!r}", e.span
                    )
            return e, T.Bag(T.LABEL)
        if isinstance(e, E.DictDef):
            if len(e.env_vars) != len(e.env_types):
                raise TypeMismatch("dictionary parameter arity mismatch", e.span)
            inner_pi = dict(zip(e.env_vars, e.env_types))
            for v, vty in inner_pi.items():
                if _has_bag(vty):
                    raise TypeMismatch(f"dictionary parameter {v} has bag type {vty!r}", e.span)
            body, bty = go(e.body, gamma, inner_pi)
            if not isinstance(bty, T.Bag):
                raise TypeMismatch(f"dictionary body must be a bag, got {bty!r}", e.span)
            return (
                E.DictDef(e.idx, e.env_vars, body, env_types=e.env_types, span=e.span),
                T.DictType(bty.elem),
            )
        if isinstance(e, E.DictApp):
            d, dty = go(e.dict, gamma, pi)
            if not isinstance(dty, T.DictType):
                raise TypeMismatch(f"application of a non-dictionary: {dty!r}", e.span)
            k, kty = go(e.key, gamma, pi)
            if kty != T.Bag(T.LABEL):
                raise TypeMismatch(f"dictionary key must be a bag of labels, got {kty!r}", e.span)
            return E.DictApp(d, k, span=e.span), T.Bag(dty.elem)
        if isinstance(e, E.DictUnion):
            l, lty = go(e.left, gamma, pi)
            r, rty = go(e.right, gamma, pi)
            if lty != rty or not isinstance(lty, T.DictType):
                raise TypeMismatch(f"label union over {lty!r} vs {rty!r}", e.span)
            return E.DictUnion(l, r, span=e.span), lty
        raise TypeMismatch(f"unknown expression node {type(e).__name__}")

    return go(e, gamma, pi)


def _has_bag(ty: T.SchemaType) -> bool:
    if isinstance(ty, (T.Bag, T.DictType)):
        return True
    if isinstance(ty, T.Prod):
        return _has_bag(ty.left) or _has_bag(ty.right)
    return False


def typecheck(
    e: E.Expr,
    schema: Schema,
    gamma_types: dict | None = None,
    pi_types: dict | None = None,
    mode: str = "nrc",
) -> T.SchemaType:
    """Type of ``e`` under the given contexts (see :func:`check`)."""
    return check(e, schema, gamma_types, pi_types, mode)[1]


def is_incremental_form(e: E.Expr) -> bool:
    """True when ``e`` contains no unrestricted singleton."""
    return not any(isinstance(n, E.Sng) for n in E.walk(e))
