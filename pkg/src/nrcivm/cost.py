"""Cost domains, the size measure, cost orders, and the cost transformation.

A cost value mirrors the shape of a type: scalar 1 at base/unit/label
positions, componentwise at products, and a pair of (element-cost upper
bound, cardinality upper bound) at bag positions.  Cardinalities live in the
positive naturals and may be symbolic: polynomials over named size
parameters, combined with max where unions force it.

``size`` maps a value to its cost; the strict order ``prec`` is what makes
"incremental" precise: an update is incremental when its size is strictly
below the input's.  ``cost`` maps an expression and a cost environment to an
upper bound for producing its output, and ``tcost`` extracts a scalar time
bound from a cost: linear in cardinalities, additive across tuple
components.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from . import exprs as E
from . import types as T
from .errors import ShapeMismatch, TypeMismatch, UnboundVariable
from .typecheck import Schema
from .values import Bag, DictVal, Label

# ---------------------------------------------------------------------------
# Symbolic positive naturals: max of polynomials with nonnegative integer
# coefficients over named parameters.

Mono = tuple  # sorted tuple of (var, power)
Poly = tuple  # sorted tuple of (Mono, coeff)


def _poly_const(c: int) -> Poly:
    return (((), c),) if c else ()


def _poly_add(p: Poly, q: Poly) -> Poly:
    d = dict(p)
    for m, c in q:
        d[m] = d.get(m, 0) + c
    return tuple(sorted((m, c) for m, c in d.items() if c))


def _poly_mul(p: Poly, q: Poly) -> Poly:
    d: dict = {}
    for m1, c1 in p:
        for m2, c2 in q:
            vars_ = dict(m1)
            for v, k in m2:
                vars_[v] = vars_.get(v, 0) + k
            m = tuple(sorted(vars_.items()))
            d[m] = d.get(m, 0) + c1 * c2
    return tuple(sorted((m, c) for m, c in d.items() if c))


def _poly_le(p: Poly, q: Poly) -> bool:
    """Sufficient test: q - p has nonnegative coefficients."""
    d = dict(q)
    for m, c in p:
        d[m] = d.get(m, 0) - c
    return all(c >= 0 for c in d.values())


def _poly_eval(p: Poly, env: dict[str, int]) -> int:
    total = 0
    for m, c in p:
        term = c
        for v, k in m:
            if v not in env:
                raise UnboundVariable(f"no value for size parameter {v}")
            term *= env[v] ** k
        total += term
    return total


class SymNat:
    """max of one or more polynomials; positive parameters assumed."""

    __slots__ = ("polys",)

    def __init__(self, polys):
        # Prune polynomials dominated coefficientwise by another.
        ps = list(dict.fromkeys(polys))
        kept = []
        for i, p in enumerate(ps):
            if any(j != i and _poly_le(p, q) and p != q for j, q in enumerate(ps)):
                continue
            kept.append(p)
        # Deduplicate equal-by-dominance pairs deterministically.
        out = []
        for p in kept:
            if not any(p == q for q in out):
                out.append(p)
        self.polys = tuple(sorted(out))

    def __eq__(self, other):
        other = _as_sym(other)
        return isinstance(other, SymNat) and self.polys == other.polys

    def __hash__(self):
        return hash(self.polys)

    def __repr__(self):
        return render_nat(self)

    def variables(self) -> set[str]:
        return {v for p in self.polys for m, _ in p for v, _k in m}


def sym(name: str) -> SymNat:
    mono = ((name, 1),)
    return SymNat([((mono, 1),)])


def _as_sym(n):
    if isinstance(n, int):
        return SymNat([_poly_const(n)])
    return n


def nat_is_concrete(n) -> bool:
    return isinstance(n, int)


def nat_mul(a, b):
    if isinstance(a, int) and isinstance(b, int):
        return a * b
    a, b = _as_sym(a), _as_sym(b)
    return SymNat([_poly_mul(p, q) for p in a.polys for q in b.polys])


def nat_add(a, b):
    if isinstance(a, int) and isinstance(b, int):
        return a + b
    a, b = _as_sym(a), _as_sym(b)
    # max distributes over + for nonnegative operands as an upper bound; the
    # exact sum of two maxima is bounded by the max of pairwise sums.
    return SymNat([_poly_add(p, q) for p in a.polys for q in b.polys])


def nat_max(a, b):
    if isinstance(a, int) and isinstance(b, int):
        return max(a, b)
    a, b = _as_sym(a), _as_sym(b)
    return SymNat(list(a.polys) + list(b.polys))


def nat_vars(n) -> set[str]:
    return set() if isinstance(n, int) else n.variables()


DEFAULT_GRID = (1, 2, 3, 5, 17, 101)


def _grid_envs(vars_: set[str], grid=DEFAULT_GRID):
    names = sorted(vars_)
    for combo in itertools.product(grid, repeat=len(names)):
        yield dict(zip(names, combo))


def nat_eval(n, env: dict[str, int]) -> int:
    if isinstance(n, int):
        return n
    return max(_poly_eval(p, env) for p in n.polys)


def nat_le(a, b, grid=DEFAULT_GRID) -> bool:
    if isinstance(a, int) and isinstance(b, int):
        return a <= b
    sa, sb = _as_sym(a), _as_sym(b)
    if all(any(_poly_le(p, q) for q in sb.polys) for p in sa.polys):
        return True
    # Inconclusive symbolically: check on a grid of parameter values.
    vars_ = sa.variables() | sb.variables()
    return all(nat_eval(sa, env) <= nat_eval(sb, env) for env in _grid_envs(vars_, grid))


def nat_lt(a, b, grid=DEFAULT_GRID) -> bool:
    if isinstance(a, int) and isinstance(b, int):
        return a < b
    sa, sb = _as_sym(a), _as_sym(b)
    vars_ = sa.variables() | sb.variables()
    if all(any(_poly_le(_poly_add(p, _poly_const(1)), q) for q in sb.polys) for p in sa.polys):
        return True
    return all(nat_eval(sa, env) < nat_eval(sb, env) for env in _grid_envs(vars_, grid))


def render_nat(n) -> str:
    if isinstance(n, int):
        return str(n)
    parts = []
    for p in n.polys:
        if not p:
            parts.append("0")
            continue
        terms = []
        for m, c in p:
            factors = [str(c)] if (c != 1 or not m) else []
            for v, k in m:
                factors.append(v if k == 1 else f"{v}^{k}")
            terms.append("*".join(factors))
        parts.append(" + ".join(terms))
    if len(parts) == 1:
        return parts[0]
    return "max(" + ", ".join(sorted(parts)) + ")"


# ---------------------------------------------------------------------------
# Cost values


class CostVal:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class CostScalar(CostVal):
    """Cost at base/unit/label positions: the constant 1."""

    def __repr__(self):
        return "1"


@dataclass(frozen=True, slots=True)
class CostProd(CostVal):
    left: CostVal
    right: CostVal

    def __repr__(self):
        return f"<{self.left!r},{self.right!r}>"


@dataclass(frozen=True, slots=True)
class CostBag(CostVal):
    elem: CostVal
    card: object  # int >= 1 or SymNat

    def __repr__(self):
        return f"{render_nat(self.card)}{{{self.elem!r}}}"


SCALAR = CostScalar()


def render_cost(c: CostVal) -> str:
    return repr(c)


def bottom(ty: T.SchemaType) -> CostVal:
    """1_A: the least cost of the given shape (all cardinalities 1)."""
    if ty in (T.BASE, T.UNIT, T.LABEL):
        return SCALAR
    if isinstance(ty, T.Prod):
        return CostProd(bottom(ty.left), bottom(ty.right))
    if isinstance(ty, T.Bag):
        return CostBag(bottom(ty.elem), 1)
    if isinstance(ty, T.DictType):
        # Dictionaries are costed by the bags they define.
        return CostBag(bottom(ty.elem), 1)
    raise ShapeMismatch(f"no cost domain for {ty!r}")


def size(v, ty: T.SchemaType) -> CostVal:
    """Cost of a value: scalar at atoms, componentwise at pairs, and
    (supremum of element sizes, total count with repetitions) at bags.

    The count of a bag sums absolute multiplicities (deletions cost work
    too) and is bounded below by one, the bottom of the positive naturals.
    """
    if ty in (T.BASE, T.UNIT, T.LABEL):
        return SCALAR
    if isinstance(ty, T.Prod):
        return CostProd(size(v[0], ty.left), size(v[1], ty.right))
    if isinstance(ty, T.Bag):
        if not isinstance(v, Bag):
            raise TypeMismatch(f"size: expected a bag at type {ty!r}")
        elem = bottom(ty.elem)
        for x in v.entries:
            elem = cost_sup(elem, size(x, ty.elem))
        return CostBag(elem, max(1, v.weight()))
    if isinstance(ty, T.DictType):
        if not isinstance(v, DictVal):
            raise TypeMismatch(f"size: expected a dictionary at type {ty!r}")
        out = CostBag(bottom(ty.elem), 1)
        for b in v.entries.values():
            out = cost_sup(out, size(b, T.Bag(ty.elem)))
        return out
    raise ShapeMismatch(f"size undefined at {ty!r}")


def _shape_check(c1: CostVal, c2: CostVal):
    if type(c1) is not type(c2):
        raise ShapeMismatch(f"cost shapes differ: {c1!r} vs {c2!r}")


def cost_preceq(c1: CostVal, c2: CostVal, grid=DEFAULT_GRID) -> bool:
    """Non-strict order: always true at scalars, componentwise at products,
    cardinality <= plus element order at bags."""
    _shape_check(c1, c2)
    if isinstance(c1, CostScalar):
        return True
    if isinstance(c1, CostProd):
        left = cost_preceq(c1.left, c2.left, grid)
        return cost_preceq(c1.right, c2.right, grid) and left
    if isinstance(c1, CostBag):
        elems = cost_preceq(c1.elem, c2.elem, grid)
        return nat_le(c1.card, c2.card, grid) and elems
    raise ShapeMismatch(f"bad cost value {c1!r}")


def cost_prec(c1: CostVal, c2: CostVal, grid=DEFAULT_GRID) -> bool:
    """Strict order: false at scalars, both-strict at products, strict
    cardinality with non-strict elements at bags."""
    _shape_check(c1, c2)
    if isinstance(c1, CostScalar):
        return False
    if isinstance(c1, CostProd):
        left = cost_prec(c1.left, c2.left, grid)
        return cost_prec(c1.right, c2.right, grid) and left
    if isinstance(c1, CostBag):
        elems = cost_preceq(c1.elem, c2.elem, grid)
        return nat_lt(c1.card, c2.card, grid) and elems
    raise ShapeMismatch(f"bad cost value {c1!r}")


def cost_sup(c1: CostVal, c2: CostVal) -> CostVal:
    _shape_check(c1, c2)
    if isinstance(c1, CostScalar):
        return SCALAR
    if isinstance(c1, CostProd):
        return CostProd(cost_sup(c1.left, c2.left), cost_sup(c1.right, c2.right))
    if isinstance(c1, CostBag):
        return CostBag(cost_sup(c1.elem, c2.elem), nat_max(c1.card, c2.card))
    raise ShapeMismatch(f"bad cost value {c1!r}")


def tcost(c: CostVal):
    if isinstance(c, CostScalar):
        return 1
    if isinstance(c, CostProd):
        return nat_add(tcost(c.left), tcost(c.right))
    if isinstance(c, CostBag):
        return nat_mul(c.card, tcost(c.elem))
    raise ShapeMismatch(f"bad cost value {c!r}")


def is_incremental(delta_v, base_v, ty: T.SchemaType) -> bool:
    """An update is incremental when its size is strictly below the base's."""
    return cost_prec(size(delta_v, ty), size(base_v, ty))


# ---------------------------------------------------------------------------
# The cost transformation


@dataclass
class CostEnv:
    """Cost assignments for free names of a costed expression.

    ``rels`` bind input relations (and base dictionaries) to bag costs,
    concrete (from ``size`` of an instance) or symbolic (named cardinality
    parameters).  ``deltas`` bind update inputs per (name, order).
    """

    rels: dict[str, CostVal]
    deltas: dict[tuple[str, int], CostVal] = None  # type: ignore[assignment]
    gamma: dict[str, CostVal] = None  # type: ignore[assignment]
    epsilon: dict[str, CostVal] = None  # type: ignore[assignment]

    def __post_init__(self):
        self.deltas = self.deltas or {}
        self.gamma = self.gamma or {}
        self.epsilon = self.epsilon or {}


def cost_env_from_instance(db: dict, schema: Schema, deltas: dict | None = None) -> CostEnv:
    rels = {name: size(db[name], schema.lookup(name)) for name in db}
    dcosts = {}
    for (name, order), v in (deltas or {}).items():
        dcosts[(name, order)] = size(v, schema.lookup(name))
    return CostEnv(rels, dcosts)


def symbolic_cost_env(schema: Schema, cards: dict[str, object]) -> CostEnv:
    """Bind every relation to (bottom element shape, named cardinality)."""
    rels = {}
    for name in schema.names():
        ty = schema.lookup(name)
        card = cards.get(name, sym(f"n_{name}"))
        if isinstance(ty, T.Bag):
            rels[name] = CostBag(bottom(ty.elem), card)
        else:
            rels[name] = CostBag(bottom(ty.elem), card)
    return CostEnv(rels)


def cost(e: E.Expr, env: CostEnv) -> CostVal:
    """Upper-bound cost of evaluating ``e`` under ``env``.

    Follows the construct-by-construct transformation: for-union multiplies
    cardinalities and costs the body under the source's element cost,
    product multiplies cardinalities and pairs element costs, flatten
    multiplies the two cardinality layers, union takes the supremum, the
    empty bag and predicates cost bottom, and a singleton wraps its body's
    whole cost as one element.  Dictionary definitions cost their body with
    parameters at bottom; application multiplies by the key cardinality.
    """

    def go(e: E.Expr, gamma: dict, eps: dict) -> CostVal:
        if isinstance(e, E.RelVar):
            if e.name not in env.rels:
                raise UnboundVariable(f"no cost binding for relation {e.name}")
            return env.rels[e.name]
        if isinstance(e, E.DeltaRel):
            key = (e.name, e.order)
            if key not in env.deltas:
                raise UnboundVariable(f"no cost binding for update delta^{e.order} {e.name}")
            return env.deltas[key]
        if isinstance(e, E.LetVar):
            if e.name not in gamma:
                raise UnboundVariable(f"no cost binding for let-variable {e.name}")
            return gamma[e.name]
        if isinstance(e, E.Let):
            g2 = dict(gamma)
            g2[e.name] = go(e.bound, gamma, eps)
            return go(e.body, g2, eps)
        if isinstance(e, E.SngVar):
            if e.var not in eps:
                raise UnboundVariable(f"no cost binding for variable {e.var}")
            return CostBag(eps[e.var], 1)
        if isinstance(e, E.Proj):
            c = eps.get(e.var)
            if c is None:
                raise UnboundVariable(f"no cost binding for variable {e.var}")
            for i in e.path:
                if not isinstance(c, CostProd):
                    raise ShapeMismatch(f"projection through non-product cost {c!r}")
                c = c.left if i == 1 else c.right
            return CostBag(c, 1)
        if isinstance(e, E.Pred):
            return CostBag(SCALAR, 1)
        if isinstance(e, E.SngUnit):
            return CostBag(SCALAR, 1)
        if isinstance(e, E.Empty):
            if e.ty is None:
                raise ShapeMismatch("cannot cost an untyped empty constant")
            return bottom(e.ty)
        if isinstance(e, (E.SngStar, E.Sng)):
            return CostBag(go(e.body, gamma, eps), 1)
        if isinstance(e, E.Neg):
            return go(e.body, gamma, eps)
        if isinstance(e, (E.Union, E.DictAdd, E.DictUnion)):
            return cost_sup(go(e.left, gamma, eps), go(e.right, gamma, eps))
        if isinstance(e, E.Prod):
            cl = go(e.left, gamma, eps)
            cr = go(e.right, gamma, eps)
            return CostBag(CostProd(cl.elem, cr.elem), nat_mul(cl.card, cr.card))
        if isinstance(e, E.Flatten):
            c = go(e.body, gamma, eps)
            if not isinstance(c.elem, CostBag):
                raise ShapeMismatch(f"flatten over non-bag element cost {c!r}")
            return CostBag(c.elem.elem, nat_mul(c.card, c.elem.card))
        if isinstance(e, E.ForUnion):
            c1 = go(e.source, gamma, eps)
            e2env = dict(eps)
            e2env[e.var] = c1.elem
            c2 = go(e.body, gamma, e2env)
            return CostBag(c2.elem, nat_mul(c1.card, c2.card))
        if isinstance(e, E.InL):
            return CostBag(SCALAR, 1)
        if isinstance(e, E.DictDef):
            inner = {v: bottom(t) for v, t in zip(e.env_vars, e.env_types)}
            return go(e.body, gamma, inner)
        if isinstance(e, E.DictApp):
            cd = go(e.dict, gamma, eps)
            ck = go(e.key, gamma, eps)
            return CostBag(cd.elem, nat_mul(ck.card, cd.card))
        raise TypeMismatch(f"no cost rule for {type(e).__name__}")

    return go(e, dict(env.gamma), dict(env.epsilon))
