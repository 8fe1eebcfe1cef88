"""Delta rewriting, the degree measure, and higher-order delta stacks.

The delta of a query with respect to an updated input rewrites it into a
query over the original inputs plus the update, such that

    h[R (+) dR]  =  h[R] (+) delta_R(h)[R, dR]

with exact bag (or dictionary) equality.  Constructs that do not mention the
target have the empty delta; for-union, product and dictionary application
produce the three-summand bilinear form; let produces three summands binding
the bound variable's own update.  Rewriting is interleaved with sound
algebraic simplification (units of union, annihilation by the empty bag,
unused bindings) so that higher-order stacks stay small and the degree
decrement is visible syntactically, not just semantically.

Updates are named per (input, order): the order-k derivation introduces a
fresh update variable for the same input, giving the series

    h,  d(h)[R, dR],  d2(h)[R, dR, d'R],  ...
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union as PyUnion

from . import exprs as E
from . import types as T
from .errors import TypeMismatch, UnrestrictedSingleton
from .typecheck import Schema, check, is_incremental_form


@dataclass(frozen=True)
class Relation:
    """Delta target: an updatable input (relation or base dictionary)."""

    name: str


@dataclass(frozen=True)
class LetBound:
    """Delta target: a let-bound variable, updated by its own delta binding."""

    name: str


DeltaTarget = PyUnion[Relation, LetBound]


def delta_var_name(name: str, order: int) -> str:
    return f"{name}__d{order}" if order > 1 else f"{name}__d"


# ---------------------------------------------------------------------------
# Simplification


def is_zero(e: E.Expr) -> bool:
    return isinstance(e, E.Empty)


def subst_letvar(e: E.Expr, name: str, replacement: E.Expr) -> E.Expr:
    if isinstance(e, E.LetVar):
        return replacement if e.name == name else e
    if isinstance(e, E.Let):
        bound = subst_letvar(e.bound, name, replacement)
        if e.name == name:  # shadowed below
            return E.Let(e.name, bound, e.body)
        return E.Let(e.name, bound, subst_letvar(e.body, name, replacement))
    mapping = {}
    for i, c in enumerate(E.children(e)):
        nc = subst_letvar(c, name, replacement)
        if nc is not c:
            mapping[i] = nc
    return E.replace_children(e, mapping)


def simplify(e: E.Expr) -> E.Expr:
    """Fold group identities and zero annihilators, bottom-up."""
    return E.transform_bottom_up(e, _simplify_node)


def _simplify_node(e: E.Expr) -> E.Expr:
    # An empty dictionary may be dropped from a label union (it defines no
    # labels), but a symbolic definition with an empty body may not: it
    # still covers its index family, mapping those labels to the empty bag.
    if isinstance(e, (E.Union, E.DictAdd, E.DictUnion)):
        if is_zero(e.left):
            return e.right
        if is_zero(e.right):
            return e.left
        return e
    if isinstance(e, E.ForUnion):
        if is_zero(e.source) or is_zero(e.body):
            ty = _result_bag_type(e)
            if ty is not None:
                return E.Empty(ty)
        return e
    if isinstance(e, E.Prod):
        if is_zero(e.left) or is_zero(e.right):
            ty = _result_bag_type(e)
            if ty is not None:
                return E.Empty(ty)
        return e
    if isinstance(e, (E.Flatten, E.Neg)):
        if is_zero(e.body):
            ty = _result_bag_type(e)
            if ty is not None:
                return E.Empty(ty)
        return e
    if isinstance(e, E.DictApp):
        if is_zero(e.dict) or is_zero(e.key):
            ty = _result_bag_type(e)
            if ty is not None:
                return E.Empty(ty)
        return e
    if isinstance(e, E.Let):
        if is_zero(e.body):
            return e.body
        if is_zero(e.bound):
            # Inline the zero binding and refold whatever it annihilates.
            return simplify(subst_letvar(e.body, e.name, e.bound))
        if e.name not in E.free_let_vars(e.body):
            return e.body
        return e
    return e


def _result_bag_type(e: E.Expr) -> T.SchemaType | None:
    """Type of a node being folded to the empty constant, from the types of
    its (typed-empty) parts; None when not locally determined."""
    if isinstance(e, E.ForUnion):
        return e.body.ty if isinstance(e.body, E.Empty) else None
    if isinstance(e, E.Prod):
        lt = e.left.ty if isinstance(e.left, E.Empty) else _syntactic_bag_type(e.left)
        rt = e.right.ty if isinstance(e.right, E.Empty) else _syntactic_bag_type(e.right)
        if lt is not None and rt is not None:
            return T.Bag(T.Prod(lt.elem, rt.elem))
        return None
    if isinstance(e, E.Flatten):
        return e.body.ty.elem if isinstance(e.body, E.Empty) else None
    if isinstance(e, E.Neg):
        return e.body.ty if isinstance(e.body, E.Empty) else None
    if isinstance(e, E.DictApp):
        if isinstance(e.dict, E.Empty) and isinstance(e.dict.ty, T.DictType):
            return T.Bag(e.dict.ty.elem)
        dt = _syntactic_dict_type(e.dict)
        if dt is not None:
            return T.Bag(dt.elem)
        return None
    return None


def _syntactic_bag_type(e: E.Expr) -> T.Bag | None:
    if isinstance(e, E.Empty) and isinstance(e.ty, T.Bag):
        return e.ty
    if isinstance(e, (E.SngUnit, E.Pred)):
        return T.Bag(T.UNIT)
    if isinstance(e, E.InL):
        return T.Bag(T.LABEL)
    return None


def _syntactic_dict_type(e: E.Expr) -> T.DictType | None:
    if isinstance(e, E.Empty) and isinstance(e.ty, T.DictType):
        return e.ty
    if isinstance(e, (E.DictUnion, E.DictAdd)):
        return _syntactic_dict_type(e.left) or _syntactic_dict_type(e.right)
    return None


# ---------------------------------------------------------------------------
# The delta transformation


class _Anno:
    """Per-node facts gathered in one pass per delta derivation: the type,
    the free input names, and the free let-variables (all keyed by node
    identity, which is sound because expression nodes are context-free in
    these respects wherever they are shared)."""

    __slots__ = ("schema", "types", "rels", "lets")

    def __init__(self, schema: Schema):
        self.schema = schema
        self.types: dict[int, T.SchemaType] = {}
        self.rels: dict[int, frozenset] = {}
        self.lets: dict[int, frozenset] = {}

    def visit(self, e: E.Expr, gamma: dict, pi: dict) -> T.SchemaType:
        if id(e) in self.types:
            return self.types[id(e)]
        ty, rels, lets = self._compute(e, gamma, pi)
        self.types[id(e)] = ty
        self.rels[id(e)] = rels
        self.lets[id(e)] = lets
        return ty

    def _compute(self, e, gamma, pi):
        EMPTY = frozenset()
        if isinstance(e, E.RelVar):
            return self.schema.lookup(e.name), frozenset((e.name,)), EMPTY
        if isinstance(e, E.DeltaRel):
            return self.schema.lookup(e.name), EMPTY, EMPTY
        if isinstance(e, E.LetVar):
            if e.name not in gamma:
                raise TypeMismatch(f"unbound let-variable {e.name} in delta")
            return gamma[e.name], EMPTY, frozenset((e.name,))
        if isinstance(e, E.Let):
            bty = self.visit(e.bound, gamma, pi)
            g2 = dict(gamma)
            g2[e.name] = bty
            ty = self.visit(e.body, g2, pi)
            lets = (self.lets[id(e.body)] - {e.name}) | self.lets[id(e.bound)]
            return ty, self.rels[id(e.bound)] | self.rels[id(e.body)], lets
        if isinstance(e, E.SngVar):
            return T.Bag(pi[e.var]), EMPTY, EMPTY
        if isinstance(e, E.Proj):
            return T.Bag(T.proj_type(pi[e.var], e.path)), EMPTY, EMPTY
        if isinstance(e, (E.Pred, E.SngUnit)):
            return T.Bag(T.UNIT), EMPTY, EMPTY
        if isinstance(e, E.Empty):
            if e.ty is None:
                raise TypeMismatch("untyped empty constant in delta input")
            return e.ty, EMPTY, EMPTY
        if isinstance(e, E.SngStar):
            bty = self.visit(e.body, gamma, pi)
            return T.Bag(bty), EMPTY, EMPTY
        if isinstance(e, E.Sng):
            raise UnrestrictedSingleton(
                "expression contains an unrestricted singleton; shred it first"
            )
        if isinstance(e, E.Flatten):
            bty = self.visit(e.body, gamma, pi)
            return bty.elem, self.rels[id(e.body)], self.lets[id(e.body)]
        if isinstance(e, E.ForUnion):
            sty = self.visit(e.source, gamma, pi)
            p2 = dict(pi)
            p2[e.var] = sty.elem
            ty = self.visit(e.body, gamma, p2)
            return (
                ty,
                self.rels[id(e.source)] | self.rels[id(e.body)],
                self.lets[id(e.source)] | self.lets[id(e.body)],
            )
        if isinstance(e, E.Prod):
            lt = self.visit(e.left, gamma, pi)
            rt = self.visit(e.right, gamma, pi)
            return (
                T.Bag(T.Prod(lt.elem, rt.elem)),
                self.rels[id(e.left)] | self.rels[id(e.right)],
                self.lets[id(e.left)] | self.lets[id(e.right)],
            )
        if isinstance(e, (E.Union, E.DictAdd, E.DictUnion)):
            lt = self.visit(e.left, gamma, pi)
            self.visit(e.right, gamma, pi)
            return (
                lt,
                self.rels[id(e.left)] | self.rels[id(e.right)],
                self.lets[id(e.left)] | self.lets[id(e.right)],
            )
        if isinstance(e, E.Neg):
            ty = self.visit(e.body, gamma, pi)
            return ty, self.rels[id(e.body)], self.lets[id(e.body)]
        if isinstance(e, E.InL):
            return T.Bag(T.LABEL), EMPTY, EMPTY
        if isinstance(e, E.DictDef):
            inner_pi = dict(zip(e.env_vars, e.env_types))
            bty = self.visit(e.body, gamma, inner_pi)
            return (
                T.DictType(bty.elem),
                self.rels[id(e.body)],
                self.lets[id(e.body)],
            )
        if isinstance(e, E.DictApp):
            dty = self.visit(e.dict, gamma, pi)
            self.visit(e.key, gamma, pi)
            return (
                T.Bag(dty.elem),
                self.rels[id(e.dict)] | self.rels[id(e.key)],
                self.lets[id(e.dict)] | self.lets[id(e.key)],
            )
        raise TypeMismatch(f"no delta annotation for {type(e).__name__}")


def delta(
    e: E.Expr,
    target: DeltaTarget,
    schema: Schema | None = None,
    order: int | None = None,
    gamma: dict | None = None,
    pi: dict | None = None,
) -> E.Expr:
    """Delta of ``e`` with respect to ``target``, simplified.

    ``order`` names the update variable for a relation target; by default it
    is one past the highest update order of that relation already free in
    ``e``, which is what repeated derivation wants.  The schema (and the
    type contexts, when ``e`` is open) are needed to type the empty
    constants the rewriting introduces.
    """
    if schema is None:
        raise TypeMismatch("delta needs the schema to type empty constants")
    if not is_incremental_form(e):
        raise UnrestrictedSingleton(
            "expression contains an unrestricted singleton; shred it before taking deltas"
        )
    if isinstance(target, Relation):
        if order is None:
            order = E.max_delta_order(e, target.name) + 1
        update: E.Expr = E.DeltaRel(target.name, order)
    else:
        update = E.LetVar(delta_var_name(target.name, order or 1))
    e = simplify(e)
    anno = _Anno(schema)
    anno.visit(e, dict(gamma or {}), dict(pi or {}))
    return simplify(_delta(e, target, update, anno, dict(gamma or {}), dict(pi or {})))


def _union_all(terms: list[E.Expr], dict_typed: bool, zero: E.Expr) -> E.Expr:
    live = [t for t in terms if not is_zero(t)]
    if not live:
        return zero
    out = live[0]
    for t in live[1:]:
        out = E.DictAdd(out, t) if dict_typed else E.Union(out, t)
    return out


def _delta(
    e: E.Expr,
    target: DeltaTarget,
    update: E.Expr,
    anno: _Anno,
    gamma: dict,
    pi: dict,
) -> E.Expr:
    def ty_of(x: E.Expr) -> T.SchemaType:
        return anno.types[id(x)]

    def target_free(x: E.Expr) -> bool:
        if isinstance(target, Relation):
            return target.name in anno.rels[id(x)]
        return target.name in anno.lets[id(x)]

    # Target-independent subexpressions have the empty delta: the base case
    # and the one-step shortcut for whole input-independent expressions.
    if not target_free(e):
        return E.Empty(ty_of(e))

    if isinstance(e, (E.RelVar, E.LetVar)):
        return update
    if isinstance(e, E.Let):
        bty = ty_of(e.bound)
        dX = delta_var_name(e.name, _order_of(update))
        g2 = dict(gamma)
        g2[e.name] = bty
        d_bound = _delta(e.bound, target, update, anno, gamma, pi)
        if is_zero(d_bound):
            # The binding is unaffected by this update; only the direct
            # dependence of the body remains.
            d_body = _delta(e.body, target, update, anno, g2, pi)
            if is_zero(d_body):
                return E.Empty(ty_of(e))
            return E.Let(e.name, e.bound, d_body)
        g3 = dict(g2)
        g3[dX] = bty
        d_body_t = _delta(e.body, target, update, anno, g3, pi)
        d_body_x = simplify(_delta(e.body, LetBound(e.name), E.LetVar(dX), anno, g3, pi))
        anno.visit(d_body_x, g3, pi)
        d_body_tx = _delta(d_body_x, target, update, anno, g3, pi)
        body_ty = ty_of(e.body)
        summed = _union_all(
            [d_body_t, d_body_x, d_body_tx],
            isinstance(body_ty, T.DictType),
            E.Empty(body_ty),
        )
        if is_zero(summed):
            return E.Empty(ty_of(e))
        return E.Let(e.name, e.bound, E.Let(dX, d_bound, summed))
    if isinstance(e, E.ForUnion):
        sty = ty_of(e.source)
        p2 = dict(pi)
        p2[e.var] = sty.elem
        d_src = _delta(e.source, target, update, anno, gamma, pi)
        d_body = _delta(e.body, target, update, anno, gamma, p2)
        terms = []
        if not is_zero(d_src):
            terms.append(E.ForUnion(e.var, d_src, e.body))
            if not is_zero(d_body):
                terms.append(E.ForUnion(e.var, e.source, d_body))
                terms.append(E.ForUnion(e.var, d_src, d_body))
        elif not is_zero(d_body):
            terms.append(E.ForUnion(e.var, e.source, d_body))
        return _union_all(terms, False, E.Empty(ty_of(e)))
    if isinstance(e, E.Prod):
        dl = _delta(e.left, target, update, anno, gamma, pi)
        dr = _delta(e.right, target, update, anno, gamma, pi)
        terms = []
        if not is_zero(dl):
            terms.append(E.Prod(dl, e.right))
        if not is_zero(dr):
            terms.append(E.Prod(e.left, dr))
        if not is_zero(dl) and not is_zero(dr):
            terms.append(E.Prod(dl, dr))
        return _union_all(terms, False, E.Empty(ty_of(e)))
    if isinstance(e, E.Union):
        dl = _delta(e.left, target, update, anno, gamma, pi)
        dr = _delta(e.right, target, update, anno, gamma, pi)
        return _union_all([dl, dr], False, E.Empty(ty_of(e)))
    if isinstance(e, E.Neg):
        d = _delta(e.body, target, update, anno, gamma, pi)
        return E.Empty(ty_of(e)) if is_zero(d) else E.Neg(d)
    if isinstance(e, E.Flatten):
        d = _delta(e.body, target, update, anno, gamma, pi)
        return E.Empty(ty_of(e)) if is_zero(d) else E.Flatten(d)
    if isinstance(e, E.DictDef):
        inner_pi = dict(zip(e.env_vars, e.env_types))
        d = _delta(e.body, target, update, anno, gamma, inner_pi)
        # Keep the definition even when the body's delta is empty: the
        # dictionary still covers its index family (mapping to no change).
        return E.DictDef(e.idx, e.env_vars, d, env_types=e.env_types)
    if isinstance(e, E.DictUnion):
        dl = _delta(e.left, target, update, anno, gamma, pi)
        dr = _delta(e.right, target, update, anno, gamma, pi)
        if is_zero(dl):
            return dr if not is_zero(dr) else E.Empty(ty_of(e))
        if is_zero(dr):
            return dl
        return E.DictUnion(dl, dr)
    if isinstance(e, E.DictAdd):
        dl = _delta(e.left, target, update, anno, gamma, pi)
        dr = _delta(e.right, target, update, anno, gamma, pi)
        return _union_all([dl, dr], True, E.Empty(ty_of(e)))
    if isinstance(e, E.DictApp):
        dd = _delta(e.dict, target, update, anno, gamma, pi)
        dk = _delta(e.key, target, update, anno, gamma, pi)
        dd_dead = is_zero(dd) or isinstance(dd, E.DictDef) and is_zero(dd.body)
        terms = []
        if not dd_dead:
            terms.append(E.DictApp(dd, e.key))
        if not is_zero(dk):
            terms.append(E.DictApp(e.dict, dk))
        if not dd_dead and not is_zero(dk):
            terms.append(E.DictApp(dd, dk))
        return _union_all(terms, False, E.Empty(ty_of(e)))
    raise TypeMismatch(f"no delta rule for {type(e).__name__}")


def _order_of(update: E.Expr) -> int:
    return update.order if isinstance(update, E.DeltaRel) else 1


# ---------------------------------------------------------------------------
# Degree


def degree(e: E.Expr, phi: dict[str, int] | None = None, rel: str | None = None) -> int:
    """Multiplicative dependence on the inputs; 0 iff input-independent.

    Sums across for/product/application, maxima across unions, one per input
    reference, zero for updates, variables and constants; let substitutes
    the bound expression's degree for its variable.

    With ``rel`` given, only that relation counts: the decrement law
    deg(delta_R(h)) = deg(h) - 1 is a statement about the updated relation,
    with all other inputs held as static parameters.
    """

    def go(e: E.Expr, phi: dict[str, int]) -> int:
        if isinstance(e, E.RelVar):
            return 1 if rel is None or e.name == rel else 0
        if isinstance(e, E.DeltaRel):
            return 0
        if isinstance(e, E.LetVar):
            if e.name not in phi:
                raise TypeMismatch(f"degree: unassigned let-variable {e.name}")
            return phi[e.name]
        if isinstance(e, E.Let):
            p2 = dict(phi)
            p2[e.name] = go(e.bound, phi)
            return go(e.body, p2)
        if isinstance(e, (E.SngVar, E.Proj, E.Pred, E.Empty, E.SngUnit, E.SngStar, E.InL)):
            return 0
        if isinstance(e, (E.Union, E.DictUnion, E.DictAdd)):
            return max(go(e.left, phi), go(e.right, phi))
        if isinstance(e, E.Prod):
            return go(e.left, phi) + go(e.right, phi)
        if isinstance(e, E.ForUnion):
            return go(e.source, phi) + go(e.body, phi)
        if isinstance(e, (E.Flatten, E.Neg)):
            return go(e.body, phi)
        if isinstance(e, E.DictDef):
            return go(e.body, phi)
        if isinstance(e, E.DictApp):
            return go(e.dict, phi) + go(e.key, phi)
        if isinstance(e, E.Sng):
            raise UnrestrictedSingleton("degree is defined on incremental form only")
        raise TypeMismatch(f"no degree rule for {type(e).__name__}")

    return go(e, phi or {})


# ---------------------------------------------------------------------------
# Higher-order stacks


@dataclass
class DeltaStack:
    """Levels 0..depth of repeated deltas with respect to one input.

    Level 0 is the query; level i is its order-i delta.  The final level is
    input-independent, every earlier one input-dependent, and the degree
    drops by exactly one per level.
    """

    target: Relation
    levels: list[E.Expr]

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def last(self) -> E.Expr:
        return self.levels[-1]


def delta_stack(
    e: E.Expr, target: Relation, schema: Schema | None = None, max_depth: int = 64
) -> DeltaStack:
    if not is_incremental_form(e):
        raise UnrestrictedSingleton(
            "expression contains an unrestricted singleton; shred it before taking deltas"
        )
    # Level 0 is stored simplified: dead bindings and annihilated branches
    # would otherwise inflate the syntactic input-dependence of the query.
    e = simplify(e)
    levels = [e]
    cur = e
    for k in range(1, max_depth + 1):
        if target.name not in E.free_relations(cur):
            break
        cur = delta(cur, target, schema=schema, order=k)
        levels.append(cur)
    else:
        raise TypeMismatch(f"delta stack for {target.name} did not close at depth {max_depth}")
    return DeltaStack(target, levels)
