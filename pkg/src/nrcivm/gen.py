"""Random corpora: types, instances, queries, incremental updates, plus the
equivalence checkers behind every property suite.

Generation is grammar-directed and type-driven: queries are built top-down
against a target bag type, so every generated program typechecks by
construction, and in incremental mode no unrestricted singleton is ever
emitted.  Updates are built by mutating sampled rows of the base instance
(atom swaps are size-neutral, inner bags only shrink) with strictly fewer
rows, so they are incremental by construction whenever the base has at
least two rows.

Everything is a pure function of (config, seed): the same seed reproduces
the same corpus byte for byte.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from . import exprs as E
from . import types as T
from .delta import Relation, delta
from .errors import NrcError
from .evaluator import eval_query
from .render import render_query, render_value
from .shred import (
    LabelGen,
    ShreddedValue,
    check_consistency,
    ctx_leaves,
    nest_value,
    path_name,
    shred_db,
    shred_query,
    shred_value,
)
from .typecheck import Schema, check
from .values import Bag, DictVal, Label, bag_add, dict_add

ATOM_STRINGS = ("a", "b", "c", "d")


@dataclass
class GenConfig:
    seed: int = 0
    max_type_depth: int = 3
    max_expr_depth: int = 6
    atom_universe: int = 4
    max_multiplicity: int = 3
    neg_fraction: float = 0.2
    mode: str = "nrc"  # "nrc" | "inc"
    # Degree bound for generated queries: higher-order delta stacks grow
    # multiplicatively with the degree, so the corpus keeps it moderate.
    max_degree: int = 6

    def __post_init__(self):
        assert self.max_type_depth >= 1 and self.max_expr_depth >= 1
        assert self.atom_universe >= 1 and self.max_multiplicity >= 1
        assert self.mode in ("nrc", "inc")


# ---------------------------------------------------------------------------
# Types and schemas


def gen_elem_type(rng: random.Random, cfg: GenConfig, depth: int | None = None) -> T.SchemaType:
    depth = cfg.max_type_depth if depth is None else depth
    roll = rng.random()
    if depth <= 0 or roll < 0.45:
        return T.BASE
    if roll < 0.55:
        return T.UNIT
    if roll < 0.8:
        return T.Prod(gen_elem_type(rng, cfg, depth - 1), gen_elem_type(rng, cfg, depth - 1))
    return T.Bag(gen_elem_type(rng, cfg, depth - 1))


def gen_type(cfg: GenConfig, rng: random.Random | None = None) -> T.SchemaType:
    rng = rng or random.Random(cfg.seed)
    return T.Bag(gen_elem_type(rng, cfg))


def gen_schema(rng: random.Random, cfg: GenConfig, n_rels: int | None = None) -> Schema:
    n = n_rels if n_rels is not None else rng.choice((1, 2))
    names = ["R", "S", "U"][:n]
    return Schema({name: T.Bag(gen_elem_type(rng, cfg)) for name in names})


# ---------------------------------------------------------------------------
# Values


def gen_atom(rng: random.Random, cfg: GenConfig):
    if rng.random() < 0.7:
        return rng.randrange(cfg.atom_universe)
    return rng.choice(ATOM_STRINGS[: max(1, min(len(ATOM_STRINGS), cfg.atom_universe))])


def _gen_mult(rng: random.Random, cfg: GenConfig) -> int:
    m = rng.randint(1, cfg.max_multiplicity)
    return -m if rng.random() < cfg.neg_fraction else m


def gen_value(cfg: GenConfig, ty: T.SchemaType, rng: random.Random | None = None, size: int = 3):
    rng = rng or random.Random(cfg.seed)

    def go(ty: T.SchemaType, budget: int):
        if ty is T.BASE:
            return gen_atom(rng, cfg)
        if ty is T.UNIT:
            return ()
        if ty is T.LABEL:
            return Label(f"g{rng.randrange(3)}", (gen_atom(rng, cfg),))
        if isinstance(ty, T.Prod):
            return (go(ty.left, budget), go(ty.right, budget))
        if isinstance(ty, T.Bag):
            k = rng.randint(0, budget)
            entries: dict = {}
            for _ in range(k):
                entries[go(ty.elem, max(1, budget - 1))] = _gen_mult(rng, cfg)
            return Bag(entries)
        raise NrcError(f"cannot generate a value at {ty!r}")

    return go(ty, size)


def gen_db(cfg: GenConfig, schema: Schema, rng: random.Random | None = None, size: int = 3) -> dict:
    """An instance per relation; dictionary relations get total, finite
    dictionaries and bag-of-label positions draw from their supports."""
    rng = rng or random.Random(cfg.seed)
    db: dict = {}
    pool: list[Label] = []
    for name in schema.names():
        ty = schema.lookup(name)
        if isinstance(ty, T.DictType):
            entries = {}
            for i in range(rng.randint(1, 3)):
                l = Label(f"g{i}", (gen_atom(rng, cfg),))
                entries[l] = gen_value(cfg, T.Bag(ty.elem), rng, size)
                pool.append(l)
            db[name] = DictVal(entries, total=True)
    for name in schema.names():
        ty = schema.lookup(name)
        if isinstance(ty, T.Bag):
            db[name] = _gen_value_with_pool(cfg, ty, rng, pool, size)
    return db


def _gen_value_with_pool(cfg, ty, rng, pool, size):
    def go(ty, budget):
        if ty is T.LABEL and pool and rng.random() < 0.8:
            return rng.choice(pool)
        if ty is T.LABEL:
            return Label(f"g{rng.randrange(3)}", (gen_atom(rng, cfg),))
        if ty is T.BASE:
            return gen_atom(rng, cfg)
        if ty is T.UNIT:
            return ()
        if isinstance(ty, T.Prod):
            return (go(ty.left, budget), go(ty.right, budget))
        if isinstance(ty, T.Bag):
            entries: dict = {}
            for _ in range(rng.randint(0, budget)):
                entries[go(ty.elem, max(1, budget - 1))] = _gen_mult(rng, cfg)
            return Bag(entries)
        raise NrcError(f"cannot generate a value at {ty!r}")

    return go(ty, size)


def mutate_shrink(rng: random.Random, cfg: GenConfig, v, ty: T.SchemaType):
    """A value no larger than ``v`` at every nesting level: atoms may be
    swapped (size-neutral), bags only lose rows or shrink multiplicities."""
    if ty is T.BASE:
        return gen_atom(rng, cfg) if rng.random() < 0.5 else v
    if ty is T.UNIT:
        return ()
    if ty is T.LABEL:
        return v
    if isinstance(ty, T.Prod):
        return (
            mutate_shrink(rng, cfg, v[0], ty.left),
            mutate_shrink(rng, cfg, v[1], ty.right),
        )
    if isinstance(ty, T.Bag):
        entries: dict = {}
        for x, m in v.entries.items():
            if rng.random() < 0.4:
                continue
            nm = rng.randint(1, abs(m))
            if rng.random() < cfg.neg_fraction:
                nm = -nm
            nx = mutate_shrink(rng, cfg, x, ty.elem)
            entries[nx] = entries.get(nx, 0) + nm
        return Bag(entries)
    raise NrcError(f"cannot mutate at {ty!r}")


def gen_update(cfg: GenConfig, base: Bag, ty: T.Bag, rng: random.Random | None = None) -> Bag:
    """An update strictly smaller than ``base`` at every nesting level:
    fewer rows counting repetitions, and element sizes dominated by the
    base's.  The empty update is produced for bases that are too small to
    shrink strictly."""
    rng = rng or random.Random(cfg.seed)
    if base.weight() < 2:
        return Bag({})
    k = rng.randint(1, base.weight() - 1)
    rows = list(base.entries.keys())
    entries: dict = {}
    total = 0
    while total < k:
        template = rng.choice(rows)
        row = mutate_shrink(rng, cfg, template, ty.elem)
        m = rng.randint(1, min(cfg.max_multiplicity, k - total))
        total += m
        if rng.random() < cfg.neg_fraction:
            m = -m
        entries[row] = entries.get(row, 0) + m
    return Bag(entries)


# ---------------------------------------------------------------------------
# Queries


@dataclass
class _QCtx:
    schema: Schema
    cfg: GenConfig
    rng: random.Random
    pi: dict = field(default_factory=dict)
    gamma: dict = field(default_factory=dict)
    scope: list = field(default_factory=list)
    allow_rels: bool = True
    fresh: list = field(default_factory=lambda: [0])

    def fresh_var(self) -> str:
        self.fresh[0] += 1
        return f"x{self.fresh[0]}"

    def fresh_let(self) -> str:
        self.fresh[0] += 1
        return f"X{self.fresh[0]}"

    def fresh_idx(self) -> str:
        self.fresh[0] += 1
        return f"q{self.fresh[0]}"

    def child(self, **kw) -> "_QCtx":
        out = _QCtx(
            self.schema,
            self.cfg,
            self.rng,
            dict(self.pi),
            dict(self.gamma),
            list(self.scope),
            self.allow_rels,
            self.fresh,
        )
        for k, v in kw.items():
            setattr(out, k, v)
        return out


def _palette(schema: Schema, target: T.Bag) -> list[T.Bag]:
    """Bag types worth iterating over: declared relations and their nested
    bag positions, plus the target itself."""
    seen: list[T.Bag] = []

    def collect(ty: T.SchemaType):
        if isinstance(ty, T.Bag):
            if ty not in seen:
                seen.append(ty)
            collect(ty.elem)
        elif isinstance(ty, T.Prod):
            collect(ty.left)
            collect(ty.right)

    for name in schema.names():
        ty = schema.lookup(name)
        if isinstance(ty, T.Bag):
            collect(ty)
        else:
            collect(T.Bag(ty.elem))
    collect(target)
    return seen


def _proj_candidates(pi: dict, want: T.SchemaType) -> list[tuple[str, tuple]]:
    out = []
    for var, ty in pi.items():
        stack = [((), ty)]
        while stack:
            path, t = stack.pop()
            if t == want and path:
                out.append((var, path))
            if isinstance(t, T.Prod):
                stack.append((path + (1,), t.left))
                stack.append((path + (2,), t.right))
    return out


def _flat_base_paths(pi: dict) -> list[tuple[str, tuple]]:
    out = []
    for var, ty in pi.items():
        if not T.is_flat_tuple(ty):
            continue
        stack = [((), ty)]
        while stack:
            path, t = stack.pop()
            if t is T.BASE:
                out.append((var, path))
            elif isinstance(t, T.Prod):
                stack.append((path + (1,), t.left))
                stack.append((path + (2,), t.right))
    return out


def _gen_cond(ctx: _QCtx) -> object | None:
    paths = _flat_base_paths(ctx.pi)
    if not paths:
        return None
    rng = ctx.rng

    def atom():
        var, path = rng.choice(paths)
        lhs = E.PathRef(var, path)
        if rng.random() < 0.5:
            var2, path2 = rng.choice(paths)
            rhs = E.PathRef(var2, path2)
        else:
            rhs = E.ConstAtom(gen_atom(rng, ctx.cfg))
        return E.Cmp(rng.choice(("==", "!=", "<", "<=")), lhs, rhs)

    c = atom()
    while rng.random() < 0.3:
        c = (E.BoolAnd if rng.random() < 0.5 else E.BoolOr)(c, atom())
    return c


def gen_expr(ctx: _QCtx, target: T.Bag, depth: int) -> E.Expr:
    rng = ctx.rng
    candidates: list[tuple[float, object]] = []

    def leaf_empty():
        return E.Empty(target)

    candidates.append((0.5, leaf_empty))

    if ctx.allow_rels:
        for name in ctx.schema.names():
            if ctx.schema.lookup(name) == target:
                candidates.append((4.0, lambda n=name: E.RelVar(n)))
    for name, ty in ctx.gamma.items():
        if ty == target:
            candidates.append((3.0, lambda n=name: E.LetVar(n)))
    for var, ty in ctx.pi.items():
        if ty == target.elem:
            candidates.append((3.0, lambda v=var: E.SngVar(v)))
    for var, path in _proj_candidates(ctx.pi, target.elem):
        candidates.append((2.0, lambda v=var, p=path: E.Proj(v, p)))
    if target.elem is T.UNIT:
        candidates.append((1.0, lambda: E.SngUnit()))
        cond = _gen_cond(ctx)
        if cond is not None:
            candidates.append((2.0, lambda c=cond: E.Pred(c)))

    if depth > 0:
        def mk_union():
            return E.Union(gen_expr(ctx, target, depth - 1), gen_expr(ctx, target, depth - 1))

        candidates.append((2.5, mk_union))
        candidates.append((1.0, lambda: E.Neg(gen_expr(ctx, target, depth - 1))))

        def mk_for():
            src_ty = rng.choice(_palette(ctx.schema, target))
            src = gen_expr(ctx, src_ty, depth - 1)
            var = ctx.fresh_var()
            inner = ctx.child()
            inner.pi[var] = src_ty.elem
            inner.scope.append(var)
            body = gen_expr(inner, target, depth - 1)
            if rng.random() < 0.4:
                cond = _gen_cond(inner)
                if cond is not None:
                    body = E.ForUnion("_", E.Pred(cond), body)
            return E.ForUnion(var, src, body)

        candidates.append((5.0, mk_for))

        if isinstance(target.elem, T.Prod):
            def mk_prod():
                return E.Prod(
                    gen_expr(ctx, T.Bag(target.elem.left), depth - 1),
                    gen_expr(ctx, T.Bag(target.elem.right), depth - 1),
                )

            candidates.append((3.0, mk_prod))

        if isinstance(target.elem, T.Bag):
            def mk_sng():
                if ctx.cfg.mode == "inc":
                    inner = ctx.child(allow_rels=False, gamma={})
                    return E.SngStar(gen_expr(inner, target.elem, depth - 1), ctx.fresh_idx())
                return E.Sng(gen_expr(ctx, target.elem, depth - 1), ctx.fresh_idx())

            candidates.append((2.5, mk_sng))

        def mk_flatten():
            return E.Flatten(gen_expr(ctx, T.Bag(target), depth - 1))

        candidates.append((1.0, mk_flatten))

        def mk_let():
            bty = rng.choice(_palette(ctx.schema, target))
            bound = gen_expr(ctx, bty, depth - 1)
            name = ctx.fresh_let()
            inner = ctx.child()
            inner.gamma[name] = bty
            return E.Let(name, bound, gen_expr(inner, target, depth - 1))

        candidates.append((1.5, mk_let))

        # Dictionary application, when the schema declares dictionaries.
        dict_rels = [
            n
            for n in ctx.schema.names()
            if isinstance(ctx.schema.lookup(n), T.DictType)
            and ctx.schema.lookup(n).elem == target.elem
        ]
        if dict_rels and ctx.allow_rels:
            def mk_dapp():
                name = rng.choice(dict_rels)
                d: E.Expr = E.RelVar(name)
                if rng.random() < 0.3:
                    d = E.DictAdd(d, E.RelVar(rng.choice(dict_rels)))
                key = gen_expr(ctx, T.Bag(T.LABEL), depth - 1)
                return E.DictApp(d, key)

            candidates.append((3.0, mk_dapp))

    total = sum(w for w, _ in candidates)
    roll = rng.random() * total
    for w, mk in candidates:
        roll -= w
        if roll <= 0:
            return mk()
    return candidates[-1][1]()


def gen_query(
    cfg: GenConfig,
    schema: Schema,
    rng: random.Random | None = None,
    target: T.Bag | None = None,
) -> E.Expr:
    """A typechecking query; in ``inc`` mode every singleton is restricted."""
    from .delta import degree
    from .typecheck import is_incremental_form

    rng = rng or random.Random(cfg.seed)
    ctx = _QCtx(schema, cfg, rng)
    if target is None:
        pal = _palette(schema, T.Bag(T.BASE))
        target = rng.choice(pal)
    e = E.Empty(target)
    for _ in range(50):
        e = gen_expr(ctx, target, cfg.max_expr_depth)
        if not any(isinstance(n, E.RelVar) for n in E.walk(e)):
            continue
        if is_incremental_form(e) and degree(e) > cfg.max_degree:
            continue
        break
    mode = "inc" if cfg.mode == "inc" else "nrc"
    e2, _ = check(e, schema, mode=mode)
    return e2


# ---------------------------------------------------------------------------
# Equivalence checkers


@dataclass
class Counterexample:
    kind: str
    query: E.Expr
    schema: Schema
    db: dict
    rel: str | None
    update: object | None
    lhs: object
    rhs: object

    def describe(self) -> str:
        lines = [f"{self.kind} failed"]
        lines.append("query: " + render_query(self.query))
        for name in self.schema.names():
            if name in self.db:
                lines.append(f"db {name} = " + render_value(self.db[name]))
        if self.rel is not None:
            lines.append(f"update {self.rel} = " + render_value(self.update))
        lines.append("lhs: " + render_value(self.lhs))
        lines.append("rhs: " + render_value(self.rhs))
        return "\n".join(lines)


def _labels_in(v, out: set):
    if isinstance(v, Label):
        out.add(v)
        for x in v.env:
            _labels_in(x, out)
    elif isinstance(v, tuple):
        for x in v:
            _labels_in(x, out)
    elif isinstance(v, Bag):
        for x in v.entries:
            _labels_in(x, out)
    elif isinstance(v, DictVal):
        for l, b in v.entries.items():
            _labels_in(l, out)
            _labels_in(b, out)
        for l in v.support:
            _labels_in(l, out)


def dict_equiv(d1: DictVal, d2: DictVal, probes: set[Label]) -> bool:
    """Extensional dictionary equality over the reachable labels."""
    pts = set(probes) | set(d1.support) | set(d2.support)
    for l in pts:
        c1, c2 = d1.covers(l), d2.covers(l)
        if c1 != c2:
            return False
        if not c1:
            continue
        try:
            if d1.apply(l) != d2.apply(l):
                return False
        except NrcError:
            return False
    return True


def _add_by_type(a, b):
    if isinstance(a, DictVal) or isinstance(b, DictVal):
        return dict_add(a, b)
    return bag_add(a, b)


def check_delta_equiv(
    h: E.Expr, schema: Schema, db: dict, rel: str, upd
) -> Counterexample | None:
    """First-order delta correctness for an incremental-form query."""
    hn, _ = check(h, schema)
    db2 = dict(db)
    db2[rel] = _add_by_type(db2[rel], upd)
    lhs = eval_query(hn, db2)
    d = delta(hn, Relation(rel), schema=schema)
    base = eval_query(hn, db)
    dval = eval_query(d, db, deltas={(rel, 1): upd})
    rhs = _add_by_type(base, dval)
    if isinstance(lhs, DictVal) or isinstance(rhs, DictVal):
        probes: set[Label] = set()
        for v in list(db.values()) + [upd, lhs, rhs]:
            _labels_in(v, probes)
        ok = dict_equiv(lhs, rhs, probes)
    else:
        ok = lhs == rhs
    if ok:
        return None
    return Counterexample("delta-correctness", hn, schema, db, rel, upd, lhs, rhs)


def check_shredded_delta_equiv(
    h: E.Expr, schema: Schema, db: dict, rel: str, upd: Bag
) -> Counterexample | None:
    """Delta correctness for every component of a shredded query, with the
    update applied one shredded input component at a time."""
    sq = shred_query(h, schema)
    gen = LabelGen()
    base_svs = shred_db(db, schema, gen)
    upd_sv = shred_value(upd, schema.lookup(rel), gen)

    base_bind: dict = {}
    for name, sv in base_svs.items():
        base_bind[name] = sv.flat
        for path, node in ctx_leaves(sv.ctx):
            base_bind[path_name(name, path)] = node.dct
    # Dictionary components deepest-first, the flat bag last: deltas of
    # shallower components feed fresh labels into deeper dictionaries, which
    # therefore must already hold their definitions.
    components: list[tuple[str, object]] = [
        (path_name(rel, path), node.dct)
        for path, node in reversed(list(ctx_leaves(upd_sv.ctx)))
    ]
    components.append((rel, upd_sv.flat))
    upd_bind = dict(base_bind)
    for name, val in components:
        upd_bind[name] = _add_by_type(upd_bind[name], val)

    probes: set[Label] = set()
    for v in list(base_bind.values()) + [v for _, v in components]:
        _labels_in(v, probes)

    queries: list[tuple[str, E.Expr]] = [("flat", sq.flat)]
    for path, node in ctx_leaves(sq.ctx):
        queries.append((f"ctx{path}", node.dct))

    for qname, q in queries:
        lhs = eval_query(q, upd_bind)
        acc = eval_query(q, base_bind)
        cur = dict(base_bind)
        for name, val in components:
            if name in E.free_relations(q):
                d = delta(q, Relation(name), schema=sq.schema)
                # An update dictionary read as a delta is total: labels it
                # does not define receive no change.
                dval = val.as_total() if isinstance(val, DictVal) else val
                inc = eval_query(d, cur, deltas={(name, 1): dval})
                acc = _add_by_type(acc, inc)
            # Fresh mapping per step: symbolic dictionaries evaluated above
            # capture the current bindings and must keep seeing them.
            cur = dict(cur)
            cur[name] = _add_by_type(cur[name], val)
        if isinstance(lhs, DictVal):
            pr = set(probes)
            _labels_in(eval_query(sq.flat, upd_bind), pr)
            _labels_in(eval_query(sq.flat, base_bind), pr)
            _labels_in(lhs, pr)
            _labels_in(acc, pr)
            ok = dict_equiv(lhs, acc, pr)
        else:
            ok = lhs == acc
        if not ok:
            return Counterexample(
                f"shredded-delta ({qname})", h, schema, db, rel, upd, lhs, acc
            )
    return None


def check_shred_equiv(h: E.Expr, schema: Schema, db: dict) -> Counterexample | None:
    """Shredding preserves semantics: evaluating the shredded components on
    the shredded database and nesting the output equals direct evaluation."""
    hn, out_ty = check(h, schema)
    direct = eval_query(hn, db)
    sq = shred_query(hn, schema)
    gen = LabelGen()
    svs = shred_db(db, schema, gen)
    if not check_consistency([(sv, schema.lookup(n)) for n, sv in svs.items()]):
        return Counterexample("shred-consistency", hn, schema, db, None, None, direct, direct)
    bind: dict = {}
    for name, sv in svs.items():
        bind[name] = sv.flat
        for path, node in ctx_leaves(sv.ctx):
            bind[path_name(name, path)] = node.dct
    flat = eval_query(sq.flat, bind)

    def materialize(ctx):
        from .shred import CtxBag, CtxPair, CtxUnit, CTX_UNIT

        if isinstance(ctx, CtxUnit):
            return CTX_UNIT
        if isinstance(ctx, CtxPair):
            return CtxPair(materialize(ctx.left), materialize(ctx.right))
        return CtxBag(eval_query(ctx.dct, bind), ctx.elem_flat, materialize(ctx.inner))

    nested = nest_value(ShreddedValue(flat, materialize(sq.ctx)), out_ty)
    if nested == direct:
        return None
    return Counterexample("shred-preservation", hn, schema, db, None, None, direct, nested)


# ---------------------------------------------------------------------------
# Shrinking


def shrink_instance(fails, db: dict, upd, rel: str | None):
    """Greedy minimization: drop bag rows from the instance or the update
    while the failure persists."""

    def candidates(v):
        if isinstance(v, Bag):
            for x in list(v.entries.keys()):
                yield Bag({k: m for k, m in v.entries.items() if k != x})
        if isinstance(v, DictVal):
            for l in list(v.entries.keys()):
                yield DictVal(
                    {k: b for k, b in v.entries.items() if k != l},
                    v.support - {l},
                    v.generators,
                    v.total,
                )

    changed = True
    while changed:
        changed = False
        for name in list(db.keys()):
            for smaller in candidates(db[name]):
                trial = dict(db)
                trial[name] = smaller
                if fails(trial, upd):
                    db = trial
                    changed = True
                    break
        if upd is not None:
            for smaller in candidates(upd):
                if fails(db, smaller):
                    upd = smaller
                    changed = True
                    break
    return db, upd


def shrink_query(fails, h: E.Expr, schema: Schema) -> E.Expr:
    """Replace subexpressions by same-typed children where the failure
    persists (a crude but effective structural shrink)."""

    def positions(e: E.Expr, path=()):
        yield path, e
        for i, c in enumerate(E.children(e)):
            yield from positions(c, path + (i,))

    def rebuild(e: E.Expr, path, repl):
        if not path:
            return repl
        i = path[0]
        kids = list(E.children(e))
        return E.replace_children(e, {i: rebuild(kids[i], path[1:], repl)})

    changed = True
    while changed:
        changed = False
        for path, node in list(positions(h)):
            for child in E.children(node):
                trial = rebuild(h, path, child)
                try:
                    check(trial, schema)
                except NrcError:
                    continue
                if fails(trial):
                    h = trial
                    changed = True
                    break
            if changed:
                break
    return h
