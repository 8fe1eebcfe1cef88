"""Shredding: nested queries and values in flat label-dictionary form.

Shredding replaces every inner bag by a label and records label -> contents
in a dictionary, per nesting position.  A type ``A`` splits into a flat part
``A^F`` (inner bags become labels) and a context part: a tree mirroring
``A`` with a dictionary at every bag position.  A query ``h : Bag(B)``
splits into a flat query over shredded inputs plus a context tree of
dictionary-typed queries; a value splits into a flat bag plus a context
tree of materialized dictionaries.

The flat query of a shredded program never contains an unrestricted
singleton: a singleton occurrence with index ``i`` and free for-variables
``xs`` becomes the label constructor ``label[i](xs...)`` in the flat part
and the symbolic dictionary ``dict[i](xs...){ body }`` in the context, so
deltas go through and inner-bag updates become plain dictionary addition.

Context queries never have free for-variables (singleton bodies capture
theirs as dictionary parameters), which is what lets a context be hoisted
out of the loops that produced it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Optional

from . import exprs as E
from . import types as T
from .errors import DictUnionConflict, ShapeMismatch, TypeMismatch, UnboundLabel
from .typecheck import Schema
from .values import (
    Bag,
    DictVal,
    Label,
    bag_sum,
    canon_key,
    dict_label_union,
)

# ---------------------------------------------------------------------------
# Context trees


@dataclass
class CtxUnit:
    pass


@dataclass
class CtxPair:
    left: object
    right: object


@dataclass
class CtxBag:
    """Context at a bag position: its dictionary plus the element context.

    ``dct`` is an expression (query shredding) or a DictVal (value
    shredding); ``elem_flat`` is the flat type of the definitions' elements.
    """

    dct: object
    elem_flat: T.SchemaType
    inner: object


CTX_UNIT = CtxUnit()


def ctx_leaves(ctx, path: tuple = ()) -> Iterator[tuple[tuple, CtxBag]]:
    """All bag positions of a context, outermost first, with their paths.

    Path steps: 1/2 descend a product, "e" descends into definitions.
    """
    if isinstance(ctx, CtxUnit):
        return
    if isinstance(ctx, CtxPair):
        yield from ctx_leaves(ctx.left, path + (1,))
        yield from ctx_leaves(ctx.right, path + (2,))
        return
    if isinstance(ctx, CtxBag):
        yield path, ctx
        yield from ctx_leaves(ctx.inner, path + ("e",))
        return
    raise ShapeMismatch(f"bad context node {ctx!r}")


def ctx_map(ctx, fn):
    if isinstance(ctx, CtxUnit):
        return ctx
    if isinstance(ctx, CtxPair):
        return CtxPair(ctx_map(ctx.left, fn), ctx_map(ctx.right, fn))
    if isinstance(ctx, CtxBag):
        return CtxBag(fn(ctx.dct), ctx.elem_flat, ctx_map(ctx.inner, fn))
    raise ShapeMismatch(f"bad context node {ctx!r}")


def ctx_zip(c1, c2, fn):
    if isinstance(c1, CtxUnit) and isinstance(c2, CtxUnit):
        return c1
    if isinstance(c1, CtxPair) and isinstance(c2, CtxPair):
        return CtxPair(ctx_zip(c1.left, c2.left, fn), ctx_zip(c1.right, c2.right, fn))
    if isinstance(c1, CtxBag) and isinstance(c2, CtxBag):
        return CtxBag(fn(c1.dct, c2.dct), c1.elem_flat, ctx_zip(c1.inner, c2.inner, fn))
    raise ShapeMismatch(f"context shapes differ: {c1!r} vs {c2!r}")


def ctx_proj(ctx, path: tuple[int, ...]):
    cur = ctx
    for i in path:
        if not isinstance(cur, CtxPair):
            raise ShapeMismatch(f"context projection .{i} through non-pair {cur!r}")
        cur = cur.left if i == 1 else cur.right
    return cur


def path_name(rel: str, path: tuple) -> str:
    suffix = "".join(str(s) for s in path)
    return f"{rel}__dict" + (f"_{suffix}" if suffix else "")


# ---------------------------------------------------------------------------
# Type shredding


@dataclass
class ShredType:
    """Flat representation plus context shape of a shredded type."""

    flat: T.SchemaType
    ctx: object  # context tree with DictType info at bag positions


def _shred_elem_type(a: T.SchemaType, depth) -> tuple[T.SchemaType, object]:
    if a is T.BASE or a is T.UNIT:
        return a, CTX_UNIT
    if isinstance(a, T.Prod):
        lf, lc = _shred_elem_type(a.left, depth)
        rf, rc = _shred_elem_type(a.right, depth)
        return T.Prod(lf, rf), CtxPair(lc, rc)
    if isinstance(a, T.Bag):
        if depth is not None and depth <= 0:
            return a, CTX_UNIT
        ef, ec = _shred_elem_type(a.elem, None if depth is None else depth - 1)
        return T.LABEL, CtxBag(T.DictType(ef), ef, ec)
    raise TypeMismatch(f"cannot shred type {a!r}")


def shred_type(a: T.SchemaType, depth: int | None = None) -> ShredType:
    """Shred a type.  A top-level bag keeps its bag layer (queries return
    bags of shredded elements); anything else is shredded element-wise."""
    if isinstance(a, T.Bag):
        ef, ec = _shred_elem_type(a.elem, depth)
        return ShredType(T.Bag(ef), ec)
    f, c = _shred_elem_type(a, depth)
    return ShredType(f, c)


# ---------------------------------------------------------------------------
# Value shredding


class LabelGen:
    """Fresh static indices for value shredding; never reused per instance."""

    def __init__(self, start: int = 1):
        self._next = start

    def fresh(self) -> Label:
        l = Label(f"v{self._next}", ())
        self._next += 1
        return l

    @property
    def next_index(self) -> int:
        return self._next


@dataclass
class ShreddedValue:
    flat: Bag
    ctx: object  # context tree with DictVal at bag positions


def _empty_ctx_val(ctx_ty) -> object:
    return ctx_map(ctx_ty, lambda dty: DictVal.empty())


def shred_value(v: Bag, a: T.SchemaType, gen: LabelGen, depth: int | None = None) -> ShreddedValue:
    """Replace every inner bag of ``v : a`` by a fresh label; dictionaries
    map each label to the (one level) shredded contents of its bag.

    Equal inner bags at the same position share a label: the label
    assignment is a function of the value, memoized per position.
    """
    if not isinstance(a, T.Bag):
        raise TypeMismatch(f"shred_value expects a bag type, got {a!r}")
    if not isinstance(v, Bag):
        raise TypeMismatch("shred_value expects a bag value")
    st = shred_type(a, depth)

    # Mutable accumulation mirrors of the context: per bag position we keep
    # the entry map and a value->label memo.
    class _Acc:
        __slots__ = ("entries", "memo", "inner")

        def __init__(self, inner):
            self.entries = {}
            self.memo = {}
            self.inner = inner

    def build_acc(ctx_ty):
        if isinstance(ctx_ty, CtxUnit):
            return CTX_UNIT
        if isinstance(ctx_ty, CtxPair):
            return CtxPair(build_acc(ctx_ty.left), build_acc(ctx_ty.right))
        return _Acc(build_acc(ctx_ty.inner))

    acc = build_acc(st.ctx)

    def shred_elem(x, ty: T.SchemaType, node):
        if ty is T.BASE or ty is T.UNIT:
            return x
        if isinstance(ty, T.Prod):
            return (
                shred_elem(x[0], ty.left, node.left),
                shred_elem(x[1], ty.right, node.right),
            )
        if isinstance(ty, T.Bag):
            if isinstance(node, CtxUnit):
                return x  # below the shredding depth: keep nested
            if x in node.memo:
                return node.memo[x]
            l = gen.fresh()
            node.memo[x] = l
            node.entries[l] = Bag(
                {shred_elem(c, ty.elem, node.inner): m for c, m in x.entries.items()}
            )
            return l
        raise TypeMismatch(f"cannot shred value at type {ty!r}")

    flat = Bag({shred_elem(x, a.elem, acc): m for x, m in v.entries.items()})

    def freeze(node, ctx_ty):
        if isinstance(ctx_ty, CtxUnit):
            return CTX_UNIT
        if isinstance(ctx_ty, CtxPair):
            return CtxPair(freeze(node.left, ctx_ty.left), freeze(node.right, ctx_ty.right))
        return CtxBag(DictVal(node.entries), ctx_ty.elem_flat, freeze(node.inner, ctx_ty.inner))

    return ShreddedValue(flat, freeze(acc, st.ctx))


def nest_value(sv: ShreddedValue, a: T.SchemaType) -> Bag:
    """Left inverse of shredding: expand labels back into inner bags."""
    if not isinstance(a, T.Bag):
        raise TypeMismatch(f"nest_value expects a bag type, got {a!r}")

    def nest_elem(x, ty: T.SchemaType, ctx):
        if ty is T.BASE or ty is T.UNIT:
            return x
        if isinstance(ty, T.Prod):
            return (nest_elem(x[0], ty.left, ctx.left), nest_elem(x[1], ty.right, ctx.right))
        if isinstance(ty, T.Bag):
            if isinstance(ctx, CtxUnit):
                return x  # unshredded below the depth limit
            if not isinstance(x, Label):
                raise TypeMismatch(f"expected a label at {ty!r}, got {x!r}")
            if not isinstance(ctx, CtxBag):
                raise ShapeMismatch("context missing a dictionary at a bag position")
            definition = ctx.dct.apply(x)
            out: dict = {}
            for c, m in definition.entries.items():
                n = nest_elem(c, ty.elem, ctx.inner)
                out[n] = out.get(n, 0) + m
            return Bag(out)
        raise TypeMismatch(f"cannot nest value at type {ty!r}")

    out: dict = {}
    for x, m in sv.flat.entries.items():
        n = nest_elem(x, a.elem, sv.ctx)
        out[n] = out.get(n, 0) + m
    return Bag(out)


# ---------------------------------------------------------------------------
# Consistency (values)


def _elem_consistent(x, ty: T.SchemaType, ctx, trail: list) -> bool:
    if ty is T.BASE or ty is T.UNIT:
        return True
    if isinstance(ty, T.Prod):
        return _elem_consistent(x[0], ty.left, ctx.left, trail) and _elem_consistent(
            x[1], ty.right, ctx.right, trail
        )
    if isinstance(ty, T.Bag):
        if isinstance(ctx, CtxUnit):
            return True
        if not isinstance(x, Label):
            trail.append(f"non-label {x!r} at shredded bag position")
            return False
        if not ctx.dct.covers(x):
            trail.append(f"undefined label {x!r}")
            return False
        try:
            definition = ctx.dct.apply(x)
        except UnboundLabel:
            trail.append(f"label {x!r} in support without a definition")
            return False
        return all(_elem_consistent(c, ty.elem, ctx.inner, trail) for c in definition.entries)
    raise TypeMismatch(f"bad type in consistency walk: {ty!r}")


def check_consistency(
    svs: list[tuple[ShreddedValue, T.SchemaType]], trail: list | None = None
) -> bool:
    """All labels reachable from flat parts are defined, and every pair of
    same-typed dictionaries agrees on shared labels (their union is
    well-defined).  Returns False with a diagnostic trail, never raises.
    """
    trail = trail if trail is not None else []
    ok = True
    dicts: list[tuple[T.SchemaType, DictVal]] = []
    for sv, ty in svs:
        if not isinstance(ty, T.Bag):
            trail.append(f"non-bag shredded value type {ty!r}")
            return False
        for x in sv.flat.entries:
            if not _elem_consistent(x, ty.elem, sv.ctx, trail):
                ok = False
        for _path, node in ctx_leaves(sv.ctx):
            dicts.append((node.elem_flat, node.dct))
    for (t1, d1), (t2, d2) in itertools.combinations(dicts, 2):
        if t1 != t2:
            continue
        try:
            dict_label_union(d1, d2)
        except DictUnionConflict as err:
            trail.append(f"dictionary union conflict: {err.msg}")
            ok = False
    return ok


def check_update_consistency(
    upd: list[tuple[ShreddedValue, T.SchemaType]],
    base: list[tuple[ShreddedValue, T.SchemaType]],
    trail: list | None = None,
) -> bool:
    """An update is consistent with a base when both are consistent, every
    shared updated label is updated in all dictionaries defining it, and
    fresh labels are globally fresh."""
    trail = trail if trail is not None else []
    if not check_consistency(upd, trail):
        trail.append("update is not internally consistent")
        return False
    if not check_consistency(base, trail):
        trail.append("base is not internally consistent")
        return False
    if len(upd) != len(base):
        trail.append("update/base arity mismatch")
        return False
    upd_supports = []
    base_supports = []
    for (usv, _), (bsv, _) in zip(upd, base):
        u_leaves = list(ctx_leaves(usv.ctx))
        b_leaves = list(ctx_leaves(bsv.ctx))
        if [p for p, _ in u_leaves] != [p for p, _ in b_leaves]:
            trail.append("update/base context shapes differ")
            return False
        for (p, un), (_, bn) in zip(u_leaves, b_leaves):
            upd_supports.append((p, set(un.dct.support)))
            base_supports.append((p, set(bn.dct.support)))
    ok = True
    all_base = [s for _, s in base_supports]
    for i, (_, du) in enumerate(upd_supports):
        bi = base_supports[i][1]
        shared = du & bi
        fresh = du - bi
        for k, bk in enumerate(all_base):
            for l in shared & bk:
                if l not in upd_supports[k][1]:
                    trail.append(f"label {l!r} updated at position {i} but not {k}")
                    ok = False
            for l in fresh & bk:
                trail.append(f"fresh label {l!r} already defined at position {k}")
                ok = False
    return ok


# ---------------------------------------------------------------------------
# Query shredding


@dataclass
class ShreddedQuery:
    """Flat query over shredded inputs plus context tree of dictionary
    queries; carries the shredded schema the components typecheck under."""

    flat: E.Expr
    ctx: object  # context tree with Expr at bag positions
    schema: Schema
    output_type: T.SchemaType  # original Bag(B)
    shredded_output: ShredType


def shred_schema(schema: Schema, depth: int | None = None) -> Schema:
    """Flat relations keep their names; base dictionaries get path names."""
    rels: dict[str, T.SchemaType] = {}
    for name in schema.names():
        ty = schema.lookup(name)
        if not isinstance(ty, T.Bag):
            raise TypeMismatch(f"only bag-typed relations can be shredded: {name}")
        st = shred_type(ty, depth)
        rels[name] = st.flat
        for path, node in ctx_leaves(st.ctx):
            rels[path_name(name, path)] = T.DictType(node.elem_flat)
    return Schema(rels)


def base_ctx_exprs(name: str, ty: T.Bag, depth: int | None = None):
    """Context tree of an input relation: references to its base dictionaries."""
    st = shred_type(ty, depth)

    def build(node, path):
        if isinstance(node, CtxUnit):
            return CTX_UNIT
        if isinstance(node, CtxPair):
            return CtxPair(build(node.left, path + (1,)), build(node.right, path + (2,)))
        return CtxBag(
            E.RelVar(path_name(name, path)), node.elem_flat, build(node.inner, path + ("e",))
        )

    return build(st.ctx, ())


def _empty_ctx_exprs(ctx_ty):
    return ctx_map(ctx_ty, lambda dty: E.Empty(dty))


def shred_query(
    e: E.Expr, schema: Schema, depth: int | None = None
) -> ShreddedQuery:
    """Shred a typechecked query into flat + context components.

    The components are expressions over the shredded schema.  With a finite
    ``depth`` the flat component may retain unrestricted singletons below
    the cut and is then not incrementalizable; the default full shredding
    always yields incremental form.
    """
    from .typecheck import check

    e, out_ty = check(e, schema)
    sschema = shred_schema(schema, depth)

    def go(e: E.Expr, pi_ctx: dict, pi_ty: dict, let_env: dict, scope: list, d):
        """Returns (flat expr, ctx tree).  pi_ctx: for-var -> ctx tree;
        pi_ty: for-var -> flat type; let_env: X -> (bound flat, ctx tree);
        scope: for-vars in binding order; d: remaining depth or None."""
        if isinstance(e, E.RelVar):
            ty = schema.lookup(e.name)
            return E.RelVar(e.name), base_ctx_exprs(e.name, ty, depth)
        if isinstance(e, E.LetVar):
            if e.name not in let_env:
                raise TypeMismatch(f"unbound let-variable {e.name} during shredding")
            return E.LetVar(e.name), let_env[e.name][1]
        if isinstance(e, E.Let):
            bf, bc = go(e.bound, pi_ctx, pi_ty, let_env, scope, d)
            env2 = dict(let_env)
            env2[e.name] = (bf, bc)
            xf, xc = go(e.body, pi_ctx, pi_ty, env2, scope, d)
            # Context queries may reference the bound flat bag; rebind it.
            def rebind(leaf):
                if e.name in E.free_let_vars(leaf):
                    return E.Let(e.name, bf, leaf)
                return leaf
            return E.Let(e.name, bf, xf), ctx_map(xc, rebind)
        if isinstance(e, E.SngVar):
            if e.var not in pi_ctx:
                raise TypeMismatch(f"unbound variable {e.var} during shredding")
            return E.SngVar(e.var), pi_ctx[e.var]
        if isinstance(e, E.Proj):
            if e.var not in pi_ctx:
                raise TypeMismatch(f"unbound variable {e.var} during shredding")
            return E.Proj(e.var, e.path), ctx_proj(pi_ctx[e.var], e.path)
        if isinstance(e, E.Pred):
            return e, CTX_UNIT
        if isinstance(e, E.SngUnit):
            return e, CTX_UNIT
        if isinstance(e, E.Empty):
            st = shred_type(e.ty, d)
            return E.Empty(st.flat), _empty_ctx_exprs(st.ctx)
        if isinstance(e, (E.Sng, E.SngStar)):
            if d is not None and d <= 0:
                bf, _bc = go(e.body, pi_ctx, pi_ty, let_env, scope, d)
                return type(e)(bf, e.idx), CTX_UNIT
            bf, bc = go(
                e.body, pi_ctx, pi_ty, let_env, scope, None if d is None else d - 1
            )
            params = tuple(v for v in scope if v in E.free_for_vars(bf))
            ptypes = tuple(pi_ty[v] for v in params)
            elem_flat = _flat_elem_type_of(bf, sschema, pi_ty, let_env)
            dct = E.DictDef(e.idx, params, bf, env_types=ptypes)
            return E.InL(e.idx, params), CtxBag(dct, elem_flat, bc)
        if isinstance(e, E.Flatten):
            bf, bc = go(e.body, pi_ctx, pi_ty, let_env, scope, d)
            if not isinstance(bc, CtxBag):
                # Below the shredding depth the value is still nested.
                return E.Flatten(bf), CTX_UNIT if isinstance(bc, CtxUnit) else bc
            lvar = _fresh_var("l", scope, pi_ty)
            flat = E.ForUnion(lvar, bf, E.DictApp(bc.dct, E.SngVar(lvar)))
            return flat, bc.inner
        if isinstance(e, E.ForUnion):
            sf, sc = go(e.source, pi_ctx, pi_ty, let_env, scope, d)
            pc2 = dict(pi_ctx)
            pc2[e.var] = sc
            pt2 = dict(pi_ty)
            pt2[e.var] = _flat_elem_type_of(sf, sschema, pi_ty, let_env)
            bf, bc = go(e.body, pc2, pt2, let_env, scope + [e.var], d)
            return E.ForUnion(e.var, sf, bf), bc
        if isinstance(e, E.Prod):
            lf, lc = go(e.left, pi_ctx, pi_ty, let_env, scope, d)
            rf, rc = go(e.right, pi_ctx, pi_ty, let_env, scope, d)
            return E.Prod(lf, rf), CtxPair(lc, rc)
        if isinstance(e, E.Union):
            lf, lc = go(e.left, pi_ctx, pi_ty, let_env, scope, d)
            rf, rc = go(e.right, pi_ctx, pi_ty, let_env, scope, d)
            return E.Union(lf, rf), ctx_zip(lc, rc, lambda a, b: E.DictUnion(a, b))
        if isinstance(e, E.Neg):
            bf, bc = go(e.body, pi_ctx, pi_ty, let_env, scope, d)
            return E.Neg(bf), bc
        raise TypeMismatch(f"cannot shred {type(e).__name__} (already shredded input?)")

    flat, ctx = go(e, {}, {}, {}, [], depth)
    return ShreddedQuery(flat, ctx, sschema, out_ty, shred_type(out_ty, depth))


def _fresh_var(base: str, scope: list, pi_ty: dict) -> str:
    if base not in scope and base not in pi_ty:
        return base
    i = 1
    while f"{base}{i}" in scope or f"{base}{i}" in pi_ty:
        i += 1
    return f"{base}{i}"


def _flat_elem_type_of(flat: E.Expr, sschema: Schema, pi_ty: dict, let_env: dict) -> T.SchemaType:
    """Element type of a flat (already shredded) bag expression."""
    from .typecheck import check

    gamma = {}
    for name, (bound, _ctx) in let_env.items():
        gamma[name] = check(bound, sschema, gamma, dict(pi_ty))[1]
    ty = check(flat, sschema, gamma, dict(pi_ty))[1]
    if not isinstance(ty, T.Bag):
        raise TypeMismatch(f"flat component has non-bag type {ty!r}")
    return ty.elem


# ---------------------------------------------------------------------------
# Whole databases


def shred_db(
    db: dict[str, Bag], schema: Schema, gen: LabelGen, depth: int | None = None
) -> dict[str, ShreddedValue]:
    out = {}
    for name in schema.names():
        if name in db:
            out[name] = shred_value(db[name], schema.lookup(name), gen, depth)
    return out


def shredded_db_bindings(svs: dict[str, ShreddedValue], schema: Schema, depth=None) -> dict:
    """Evaluation bindings for shredded relations: flat bags under the
    relation name, dictionaries under their path names."""
    bindings: dict = {}
    for name, sv in svs.items():
        bindings[name] = sv.flat
        for path, node in ctx_leaves(sv.ctx):
            bindings[path_name(name, path)] = node.dct
    return bindings
