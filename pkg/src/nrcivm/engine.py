"""Maintenance plans and materialized incremental state.

``compile`` shreds a nested query and derives, for every maintained
component (the flat query and each context dictionary) and every updatable
input component (a relation's flat part and each of its base dictionaries),
the full stack of higher-order deltas.  In recursive mode, update-free but
input-dependent subexpressions of the first-order deltas are extracted as
auxiliary views with plans of their own, so delta evaluation never rescans
the base data for those parts.

``initialize`` shreds the database and materializes the views, with context
dictionaries populated only for labels reachable from the flat components
(domain maintenance).  ``apply_update`` shreds an incoming nested update
with fresh labels, applies each component's first-order delta sequentially
(each step seeing the base as updated so far), folds dictionary deltas into
existing definitions by bag addition, and initializes definitions for
labels newly introduced into any flat domain against the post-update base.

``read_view`` nests the materialized state back into a nested value;
``recompute_oracle`` is the independent check: evaluate the original nested
query on the nested database.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import exprs as E
from . import types as T
from .delta import DeltaStack, Relation, delta_stack, simplify
from .errors import InconsistentUpdate, TypeMismatch
from .evaluator import Counter, Env, eval_expr, eval_query
from .shred import (
    CTX_UNIT,
    CtxBag,
    CtxPair,
    CtxUnit,
    LabelGen,
    ShreddedQuery,
    ShreddedValue,
    check_update_consistency,
    ctx_leaves,
    path_name,
    shred_query,
    shred_value,
    shred_type,
)
from .typecheck import Schema, check
from .values import Bag, DictVal, Label, bag_add, bag_sum, dict_add
from .values import value_typecheck


@dataclass
class AuxView:
    """A cached update-independent subexpression of some delta."""

    name: str
    expr: E.Expr
    ty: T.SchemaType


@dataclass
class MaintenancePlan:
    original: E.Expr
    schema: Schema
    sq: ShreddedQuery
    mode: str  # "classic" | "recursive"
    # Maintained queries: ("flat",) for the flat component, ("ctx", path)
    # for each context dictionary, ("aux", name) for auxiliary views.
    queries: dict[tuple, E.Expr] = field(default_factory=dict)
    stacks: dict[tuple, DeltaStack] = field(default_factory=dict)
    # Execution form of the first-order deltas (aux-rewritten in recursive
    # mode); key (query id, target component name).
    level1: dict[tuple, E.Expr] = field(default_factory=dict)
    aux: dict[str, AuxView] = field(default_factory=dict)
    targets: dict[str, list[str]] = field(default_factory=dict)  # rel -> components

    def exec_schema(self) -> Schema:
        s = dict(self.sq.schema.rels)
        for a in self.aux.values():
            s[a.name] = a.ty
        return Schema(s)


def _component_names(schema: Schema) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for name in schema.names():
        ty = schema.lookup(name)
        st = shred_type(ty)
        out[name] = [name] + [path_name(name, p) for p, _ in ctx_leaves(st.ctx)]
    return out


def _extract_aux(
    d: E.Expr, exec_schema: Schema, aux: dict[str, AuxView], counter: list[int]
) -> E.Expr:
    """Replace maximal update-free, input-dependent, closed, bag-typed
    subexpressions of a delta by references to auxiliary views."""

    known = {a.expr: a.name for a in aux.values()}

    def extractable(e: E.Expr) -> bool:
        if isinstance(e, E.RelVar):
            return False  # a bare reference gains nothing from caching
        if E.free_delta_rels(e):
            return False
        if not E.free_relations(e):
            return False
        if E.free_for_vars(e) or E.free_let_vars(e):
            return False
        try:
            ty = check(e, exec_schema)[1]
        except Exception:
            return False
        return isinstance(ty, T.Bag)

    def go(e: E.Expr) -> E.Expr:
        if extractable(e):
            if e in known:
                return E.RelVar(known[e])
            counter[0] += 1
            name = f"Aux{counter[0]}"
            ty = check(e, exec_schema)[1]
            aux[name] = AuxView(name, e, ty)
            known[e] = name
            return E.RelVar(name)
        mapping = {}
        for i, c in enumerate(E.children(e)):
            nc = go(c)
            if nc is not c:
                mapping[i] = nc
        return E.replace_children(e, mapping)

    return go(d)


def compile(e: E.Expr, schema: Schema, mode: str = "classic") -> MaintenancePlan:
    if mode not in ("classic", "recursive"):
        raise TypeMismatch(f"unknown maintenance mode {mode!r}")
    e, _ty = check(e, schema)
    sq = shred_query(e, schema)
    plan = MaintenancePlan(e, schema, sq, mode)
    plan.targets = _component_names(schema)

    plan.queries[("flat",)] = simplify(sq.flat)
    for path, node in ctx_leaves(sq.ctx):
        plan.queries[("ctx", path)] = simplify(node.dct)

    all_targets = [t for parts in plan.targets.values() for t in parts]
    for qid, q in plan.queries.items():
        for t in all_targets:
            if t not in E.free_relations(q):
                continue
            st = delta_stack(q, Relation(t), schema=sq.schema)
            if st.depth == 0:
                continue
            plan.stacks[(qid, t)] = st
            plan.level1[(qid, t)] = st.levels[1]

    if mode == "recursive":
        counter = [0]
        pending = list(plan.level1.items())
        while pending:
            (qid, t), d = pending.pop(0)
            rewritten = _extract_aux(d, plan.exec_schema(), plan.aux, counter)
            plan.level1[(qid, t)] = rewritten
        # Plans for the auxiliary views themselves (their own deltas may
        # reveal further cacheable subexpressions; the degree strictly
        # drops, so this closes).
        done: set[str] = set()
        while True:
            new = [n for n in plan.aux if n not in done]
            if not new:
                break
            for name in new:
                done.add(name)
                a = plan.aux[name]
                plan.queries[("aux", name)] = a.expr
                for t in all_targets:
                    if t not in E.free_relations(a.expr):
                        continue
                    st = delta_stack(a.expr, Relation(t), schema=plan.exec_schema())
                    if st.depth == 0:
                        continue
                    plan.stacks[(("aux", name), t)] = st
                    d = st.levels[1]
                    d = _extract_aux(d, plan.exec_schema(), plan.aux, counter)
                    plan.level1[(("aux", name), t)] = d
    return plan


# ---------------------------------------------------------------------------
# Materialized state


@dataclass
class UpdateReport:
    rel: str
    phases: dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.phases.values())


@dataclass
class MaterializedState:
    plan: MaintenancePlan
    base: dict[str, ShreddedValue]
    base_nested: dict[str, Bag]
    view_flat: Bag
    view_ctx: object  # context tree with materialized DictVals
    aux: dict[str, Bag]
    labelgen: LabelGen
    counter: Counter
    phases: dict[str, int] = field(default_factory=dict)
    reports: list[UpdateReport] = field(default_factory=list)
    test_mode: bool = False

    def bindings(self) -> dict:
        b: dict = {}
        for name, sv in self.base.items():
            b[name] = sv.flat
            for path, node in ctx_leaves(sv.ctx):
                b[path_name(name, path)] = node.dct
        b.update(self.aux)
        return b

    def _phase(self, name: str, start: int) -> None:
        used = self.counter.n - start
        self.phases[name] = self.phases.get(name, 0) + used
        if self.reports:
            r = self.reports[-1].phases
            r[name] = r.get(name, 0) + used


def _ctx_elems_split(ctx, elems):
    """Route a stream of values at a context node to its children."""
    if isinstance(ctx, CtxPair):
        return [v[0] for v in elems], [v[1] for v in elems]
    raise TypeMismatch("splitting a non-pair context")


def _materialize_ctx(ctx, elems: list, env: Env):
    """Materialize context dictionaries over the labels occurring in the
    element stream, recursively through the definitions (domain
    maintenance: only reachable labels get definitions)."""
    if isinstance(ctx, CtxUnit):
        return CTX_UNIT
    if isinstance(ctx, CtxPair):
        l, r = _ctx_elems_split(ctx, elems)
        return CtxPair(_materialize_ctx(ctx.left, l, env), _materialize_ctx(ctx.right, r, env))
    if isinstance(ctx, CtxBag):
        dv = eval_expr(ctx.dct, env)
        labels = {v for v in elems}
        entries = {}
        for l in sorted(labels, key=_label_key):
            entries[l] = dv.apply(l)
            env.counter.n += max(1, len(entries[l]))
        inner_elems = [c for b in entries.values() for c in b.entries]
        return CtxBag(DictVal(entries), ctx.elem_flat, _materialize_ctx(ctx.inner, inner_elems, env))
    raise TypeMismatch(f"bad context node {ctx!r}")


def _label_key(l: Label):
    from .values import canon_key

    return canon_key(l)


def initialize(plan: MaintenancePlan, db: dict[str, Bag]) -> MaterializedState:
    for name in plan.schema.names():
        ty = plan.schema.lookup(name)
        v = db.get(name, Bag({}))
        if not value_typecheck(v, ty):
            raise TypeMismatch(f"relation {name}: instance does not match {ty!r}")
    gen = LabelGen()
    counter = Counter()
    base = {
        name: shred_value(db.get(name, Bag({})), plan.schema.lookup(name), gen)
        for name in plan.schema.names()
    }
    state = MaterializedState(
        plan=plan,
        base=base,
        base_nested={name: db.get(name, Bag({})) for name in plan.schema.names()},
        view_flat=Bag({}),
        view_ctx=CTX_UNIT,
        aux={},
        labelgen=gen,
        counter=counter,
    )
    # Auxiliary views first; their defining expressions reference base
    # relations only, so order does not matter.
    for name, a in plan.aux.items():
        env = Env(db=state.bindings(), counter=counter)
        state.aux[name] = eval_expr(a.expr, env)
    env = Env(db=state.bindings(), counter=counter)
    state.view_flat = eval_expr(plan.sq.flat, env)
    state.view_ctx = _materialize_ctx(
        plan.sq.ctx, list(state.view_flat.entries.keys()), env
    )
    state.phases["initialize"] = counter.n
    return state


def _stored_ctx_nodes(state: MaterializedState) -> dict[tuple, CtxBag]:
    return {path: node for path, node in ctx_leaves(state.view_ctx)}


def _apply_dict_increment(stored: CtxBag, inc: DictVal, counter: Counter) -> None:
    """Fold a dictionary delta into a materialized dictionary: materialized
    increment entries are added directly; symbolic parts are applied to the
    labels already defined."""
    entries = dict(stored.dct.entries)
    for l, b in inc.entries.items():
        if l in entries:
            entries[l] = bag_add(entries[l], b)
        else:
            entries[l] = b
        counter.n += max(1, len(b))
    if inc.generators:
        for l in list(entries.keys()):
            gens = [g for g in inc.generators if g.idx == l.idx]
            if not gens:
                continue
            add = bag_sum(g.fn(l.env) for g in gens)
            counter.n += max(1, len(add))
            if add.entries:
                entries[l] = bag_add(entries[l], add)
    stored.dct = DictVal(entries)


def apply_update(state: MaterializedState, rel: str, delta_nested: Bag) -> UpdateReport:
    plan = state.plan
    if rel not in plan.schema.rels:
        raise TypeMismatch(f"unknown relation {rel}")
    ty = plan.schema.lookup(rel)
    if not value_typecheck(delta_nested, ty):
        raise TypeMismatch(f"update for {rel} does not match {ty!r}")
    report = UpdateReport(rel, {})
    state.reports.append(report)
    counter = state.counter

    start = counter.n
    upd_sv = shred_value(delta_nested, ty, state.labelgen)
    trail: list = []
    ok = check_update_consistency(
        [(upd_sv, ty)], [(state.base[rel], ty)], trail
    )
    if not ok:
        raise InconsistentUpdate("; ".join(trail) or "inconsistent shredded update")
    state._phase("shred_update", start)

    # Dictionary components deepest-first, the flat bag last: deltas of
    # shallower components feed fresh labels into deeper dictionaries, which
    # therefore must already hold their definitions.
    components: list[tuple[str, object]] = [
        (path_name(rel, path), node.dct)
        for path, node in reversed(list(ctx_leaves(upd_sv.ctx)))
    ]
    components.append((rel, upd_sv.flat))

    stored_nodes = _stored_ctx_nodes(state)
    view_dict_ids = list(stored_nodes.keys())

    for comp_name, comp_val in components:
        start = counter.n
        bindings = state.bindings()
        # A dictionary update read by a delta expression is total: labels it
        # does not define receive no change.
        dval = comp_val.as_total() if isinstance(comp_val, DictVal) else comp_val
        deltas = {(comp_name, 1): dval}
        increments: dict[tuple, object] = {}
        for qid in plan.queries:
            d = plan.level1.get((qid, comp_name))
            if d is None:
                continue
            env = Env(db=bindings, deltas=deltas, counter=counter)
            increments[qid] = eval_expr(d, env)
        state._phase("delta_eval", start)

        start = counter.n
        if ("flat",) in increments:
            inc = increments[("flat",)]
            counter.n += len(inc)
            state.view_flat = bag_add(state.view_flat, inc)
        for path in view_dict_ids:
            qid = ("ctx", path)
            if qid in increments:
                _apply_dict_increment(stored_nodes[path], increments[qid], counter)
        for name in plan.aux:
            qid = ("aux", name)
            if qid in increments:
                inc = increments[qid]
                counter.n += len(inc)
                state.aux[name] = bag_add(state.aux[name], inc)
        # Base component updated last: the next component's deltas must see
        # the base as updated so far.
        if comp_name == rel:
            state.base[rel] = ShreddedValue(
                bag_add(state.base[rel].flat, comp_val), state.base[rel].ctx
            )
        else:
            for path, node in ctx_leaves(state.base[rel].ctx):
                if path_name(rel, path) == comp_name:
                    node.dct = dict_add(node.dct, comp_val)
        state._phase("apply", start)

    state.base_nested[rel] = bag_add(state.base_nested[rel], delta_nested)

    # Domain maintenance: initialize definitions for labels newly present in
    # any flat domain, evaluating their symbolic definitions against the
    # post-update base.
    start = counter.n
    bindings = state.bindings()
    env = Env(db=bindings, counter=counter)
    _init_new_labels(plan.sq.ctx, state.view_ctx, list(state.view_flat.entries.keys()), env)
    state._phase("init_labels", start)

    if state.test_mode:
        _check_against_recompute(state)
    return report


def _init_new_labels(ctx_exprs, ctx_vals, elems: list, env: Env) -> None:
    if isinstance(ctx_exprs, CtxUnit):
        return
    if isinstance(ctx_exprs, CtxPair):
        l, r = [v[0] for v in elems], [v[1] for v in elems]
        _init_new_labels(ctx_exprs.left, ctx_vals.left, l, env)
        _init_new_labels(ctx_exprs.right, ctx_vals.right, r, env)
        return
    if isinstance(ctx_exprs, CtxBag):
        needed = {v for v in elems}
        missing = [l for l in needed if l not in ctx_vals.dct.entries]
        if missing:
            dv = eval_expr(ctx_exprs.dct, env)
            entries = dict(ctx_vals.dct.entries)
            for l in sorted(missing, key=_label_key):
                entries[l] = dv.apply(l)
                env.counter.n += max(1, len(entries[l]))
            ctx_vals.dct = DictVal(entries)
        inner = [c for b in ctx_vals.dct.entries.values() for c in b.entries]
        _init_new_labels(ctx_exprs.inner, ctx_vals.inner, inner, env)
        return
    raise TypeMismatch(f"bad context node {ctx_exprs!r}")


def _check_against_recompute(state: MaterializedState) -> None:
    plan = state.plan
    bindings = state.bindings()
    for name, a in plan.aux.items():
        expect = eval_query(a.expr, bindings)
        if expect != state.aux[name]:
            raise AssertionError(f"aux view {name} diverged from recompute")
    flat = eval_query(plan.sq.flat, bindings)
    if flat != state.view_flat:
        raise AssertionError("flat view diverged from recompute")
    env = Env(db=bindings, counter=Counter())
    fresh = _materialize_ctx(plan.sq.ctx, list(flat.entries.keys()), env)
    for (p1, n1), (p2, n2) in zip(ctx_leaves(fresh), ctx_leaves(state.view_ctx)):
        assert p1 == p2
        for l, b in n1.dct.entries.items():
            if n2.dct.entries.get(l) != b:
                raise AssertionError(f"context dictionary at {p1} diverged at {l!r}")


def read_view(state: MaterializedState) -> Bag:
    from .shred import nest_value

    sv = ShreddedValue(state.view_flat, state.view_ctx)
    return nest_value(sv, state.plan.sq.output_type)


def recompute_oracle(e: E.Expr, db: dict[str, Bag], schema: Schema | None = None) -> Bag:
    if schema is not None:
        e, _ = check(e, schema)
    return eval_query(e, db)


# ---------------------------------------------------------------------------
# State export/import: a line-oriented text format with the usual value
# literals, one section entry per line.


def _path_key(path: tuple) -> str:
    return "".join(str(s) for s in path) or "-"


def save_state(state: MaterializedState, query_text: str) -> str:
    from .render import render_type, render_value

    plan = state.plan
    lines = ["# nrcivm state"]
    lines.append(f"mode: {plan.mode}")
    lines.append(f"labelgen: {state.labelgen.next_index}")
    lines.append(f"query: {query_text}")
    for name in plan.schema.names():
        lines.append(f"schema {name}: {render_type(plan.schema.lookup(name))}")
    for name, sv in state.base.items():
        lines.append(f"nested {name}: {render_value(state.base_nested[name])}")
        lines.append(f"base {name}: {render_value(sv.flat)}")
        for path, node in ctx_leaves(sv.ctx):
            lines.append(f"basedict {name} {_path_key(path)}: {render_value(node.dct)}")
    lines.append(f"viewflat: {render_value(state.view_flat)}")
    for path, node in ctx_leaves(state.view_ctx):
        lines.append(f"viewdict {_path_key(path)}: {render_value(node.dct)}")
    for name, v in state.aux.items():
        lines.append(f"aux {name}: {render_value(v)}")
    for phase, n in sorted(state.phases.items()):
        lines.append(f"phase {phase}: {n}")
    return "\n".join(lines) + "\n"


def _ctx_shape_with_dicts(shape, dicts: dict[str, DictVal], path=()):
    if isinstance(shape, CtxUnit):
        return CTX_UNIT
    if isinstance(shape, CtxPair):
        return CtxPair(
            _ctx_shape_with_dicts(shape.left, dicts, path + (1,)),
            _ctx_shape_with_dicts(shape.right, dicts, path + (2,)),
        )
    key = _path_key(path)
    dv = dicts.get(key, DictVal.empty())
    return CtxBag(dv, shape.elem_flat, _ctx_shape_with_dicts(shape.inner, dicts, path + ("e",)))


def load_state(text: str) -> tuple[MaterializedState, str]:
    from .parser import parse_query, parse_type, parse_value
    from .shred import shred_type

    mode = "classic"
    labelgen_next = 1
    query_text = None
    schema_rels: dict[str, T.SchemaType] = {}
    nested: dict[str, Bag] = {}
    base_flat: dict[str, Bag] = {}
    base_dicts: dict[str, dict[str, DictVal]] = {}
    view_flat = Bag({})
    view_dicts: dict[str, DictVal] = {}
    aux: dict[str, Bag] = {}
    phases: dict[str, int] = {}

    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(":")
        key = key.strip()
        rest = rest.strip()
        if key == "mode":
            mode = rest
        elif key == "labelgen":
            labelgen_next = int(rest)
        elif key == "query":
            query_text = rest
        elif key.startswith("schema "):
            schema_rels[key.split()[1]] = parse_type(rest)
        elif key.startswith("nested "):
            nested[key.split()[1]] = parse_value(rest)
        elif key.startswith("base "):
            base_flat[key.split()[1]] = parse_value(rest)
        elif key.startswith("basedict "):
            _, name, pk = key.split()
            base_dicts.setdefault(name, {})[pk] = parse_value(rest)
        elif key == "viewflat":
            view_flat = parse_value(rest)
        elif key.startswith("viewdict "):
            view_dicts[key.split()[1]] = parse_value(rest)
        elif key.startswith("aux "):
            aux[key.split()[1]] = parse_value(rest)
        elif key.startswith("phase "):
            phases[key.split()[1]] = int(rest)
        else:
            raise TypeMismatch(f"unknown state entry {key!r}")

    if query_text is None:
        raise TypeMismatch("state file lacks a query")
    schema = Schema(schema_rels)
    plan = compile(parse_query(query_text), schema, mode)
    base: dict[str, ShreddedValue] = {}
    for name in schema.names():
        shape = shred_type(schema.lookup(name)).ctx
        ctx = _ctx_shape_with_dicts(shape, base_dicts.get(name, {}))
        base[name] = ShreddedValue(base_flat.get(name, Bag({})), ctx)
    view_ctx = _ctx_shape_with_dicts(plan.sq.shredded_output.ctx, view_dicts)
    state = MaterializedState(
        plan=plan,
        base=base,
        base_nested={name: nested.get(name, Bag({})) for name in schema.names()},
        view_flat=view_flat,
        view_ctx=view_ctx,
        aux=aux,
        labelgen=LabelGen(labelgen_next),
        counter=Counter(),
        phases=phases,
    )
    return state, query_text
