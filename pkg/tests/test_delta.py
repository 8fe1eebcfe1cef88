"""Delta rewriting: worked examples, the degree measure, higher-order
stacks, and the correctness property on random corpora."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from nrcivm import exprs as E
from nrcivm.delta import Relation, degree, delta, delta_stack, simplify
from nrcivm.errors import UnrestrictedSingleton
from nrcivm.evaluator import eval_query
from nrcivm.gen import (
    GenConfig,
    check_delta_equiv,
    gen_db,
    gen_query,
    gen_schema,
    gen_update,
)
from nrcivm.parser import parse_query, parse_type
from nrcivm.render import render_query
from nrcivm.typecheck import Schema, check
from nrcivm.values import Bag, bag, bag_add

from conftest import q

FLAT_PAIRS = Schema({"R": parse_type("Bag(<Base, Base>)")})
NESTED = Schema({"R": parse_type("Bag(Bag(Base))")})


def test_delta_of_relation_is_update():
    d = delta(q("R", FLAT_PAIRS), Relation("R"), schema=FLAT_PAIRS)
    assert d == E.DeltaRel("R", 1)


def test_delta_of_variable_singleton_is_empty():
    e = q("for x in R union sng x", FLAT_PAIRS)
    # the delta of the body alone is empty; the whole filter delta keeps it
    d = delta(e.body, Relation("R"), schema=FLAT_PAIRS, pi={"x": FLAT_PAIRS.lookup("R").elem})
    assert isinstance(d, E.Empty)


def test_filter_delta_filters_the_update():
    f = q("for x in R where x.1 <= x.2 union sng x", FLAT_PAIRS, mode="inc")
    d = delta(f, Relation("R"), schema=FLAT_PAIRS)
    assert render_query(d) == "for x in delta R where x.1 <= x.2 union sng x"


def test_flatten_product_stack_matches_worked_example():
    h = q("flatten R * flatten R", NESTED, mode="inc")
    st_ = delta_stack(h, Relation("R"), schema=NESTED)
    assert st_.depth == 2
    assert [degree(l, rel="R") for l in st_.levels] == [2, 1, 0]
    # the final level is semantically flatten(dR) x flatten(d2R) both ways
    dR = Bag({bag(1): 1})
    d2R = Bag({bag(2, 3): 1})
    out = eval_query(st_.last(), {}, deltas={("R", 1): dR, ("R", 2): d2R})
    byhand = q("flatten A * flatten B + flatten B * flatten A",
               Schema({"A": NESTED.lookup("R"), "B": NESTED.lookup("R")}))
    expect = eval_query(byhand, {"A": d2R, "B": dR})
    assert out == expect


def test_first_order_delta_semantics_flatten_product():
    h = q("flatten R * flatten R", NESTED, mode="inc")
    d = delta(h, Relation("R"), schema=NESTED)
    R = Bag({bag(1, 2): 1, bag(3): 1})
    dR = Bag({bag(4): 1, bag(1, 2): -1})
    lhs = eval_query(h, {"R": bag_add(R, dR)})
    rhs = bag_add(eval_query(h, {"R": R}), eval_query(d, {"R": R}, deltas={("R", 1): dR}))
    assert lhs == rhs


def test_unrestricted_singleton_refused(movie_schema, related):
    with pytest.raises(UnrestrictedSingleton):
        delta(related, Relation("M"), schema=movie_schema)


def test_degree_basics():
    assert degree(q("R", FLAT_PAIRS)) == 1
    assert degree(q("delta R", FLAT_PAIRS)) == 0
    assert degree(q("flatten R * flatten R", NESTED, mode="inc")) == 2
    assert degree(q("R + R", FLAT_PAIRS)) == 1  # max across union
    assert degree(q("R * R + R * R", FLAT_PAIRS)) == 2
    assert degree(q("let X = R * R in X + R * R", FLAT_PAIRS)) == 2
    assert degree(q("sng (empty[Bag(Base)])", FLAT_PAIRS)) == 0


def test_degree_of_shredded_related(related, movie_schema):
    from nrcivm.shred import ctx_leaves, shred_query

    sq = shred_query(related, movie_schema)
    assert degree(sq.flat) == 1
    (path, node), = ctx_leaves(sq.ctx)
    assert degree(node.dct) == 1
    d = delta(sq.flat, Relation("M"), schema=sq.schema)
    assert render_query(d) == "for m in delta M union m.1 * label[q1](m)"
    st_ = delta_stack(sq.flat, Relation("M"), schema=sq.schema)
    assert st_.depth == 1 and degree(st_.last(), rel="M") == 0


def test_input_independent_delta_is_empty():
    e = q("sng (empty[Bag(Base)]) ", FLAT_PAIRS)
    d = delta(e, Relation("R"), schema=FLAT_PAIRS)
    assert isinstance(d, E.Empty)
    assert eval_query(d, {}) == Bag({})


def test_trivial_stack_for_independent_query():
    e = q("empty[Bag(Base)]", FLAT_PAIRS)
    st_ = delta_stack(e, Relation("R"), schema=FLAT_PAIRS)
    assert st_.depth == 0 and st_.levels == [e]


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**9))
def test_delta_correctness_random(seed):
    rng = random.Random(seed)
    cfg = GenConfig(seed=seed, mode="inc", max_expr_depth=5)
    schema = gen_schema(rng, cfg)
    db = gen_db(cfg, schema, rng)
    h = gen_query(cfg, schema, rng)
    rel = rng.choice(schema.names())
    upd = gen_update(cfg, db[rel], schema.lookup(rel), rng)
    assert check_delta_equiv(h, schema, db, rel, upd) is None


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**9))
def test_degree_decrement_random(seed):
    rng = random.Random(seed)
    cfg = GenConfig(seed=seed, mode="inc", max_expr_depth=5)
    schema = gen_schema(rng, cfg)
    h = simplify(gen_query(cfg, schema, rng))
    for r in sorted(E.free_relations(h)):
        st_ = delta_stack(h, Relation(r), schema=schema)
        degs = [degree(l, rel=r) for l in st_.levels]
        assert degs == list(range(st_.depth, -1, -1))
        assert r not in E.free_relations(st_.last())
        assert st_.depth == degree(h, rel=r)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**9))
def test_multi_relation_sequential_updates(seed):
    # applying per-relation deltas sequentially equals recompute on the
    # fully updated database
    rng = random.Random(seed)
    cfg = GenConfig(seed=seed, mode="inc", max_expr_depth=4)
    schema = gen_schema(rng, cfg, 2)
    db = gen_db(cfg, schema, rng)
    h = gen_query(cfg, schema, rng)
    upds = {r: gen_update(cfg, db[r], schema.lookup(r), rng) for r in schema.names()}
    full = {r: bag_add(db[r], upds[r]) for r in schema.names()}
    lhs = eval_query(h, full)
    acc = eval_query(h, db)
    cur = dict(db)
    for r in schema.names():
        if r in E.free_relations(h):
            d = delta(h, Relation(r), schema=schema)
            acc = bag_add(acc, eval_query(d, cur, deltas={(r, 1): upds[r]}))
        cur = dict(cur)
        cur[r] = bag_add(cur[r], upds[r])
    assert lhs == acc
