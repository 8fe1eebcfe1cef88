"""Reference evaluator against the denotational rules and worked examples."""

import random

from hypothesis import given, settings, strategies as st

from nrcivm.evaluator import eval_query
from nrcivm.gen import GenConfig, gen_db, gen_query, gen_schema
from nrcivm.parser import parse_query, parse_value
from nrcivm.render import render_value
from nrcivm.typecheck import check
from nrcivm.values import Bag, bag, bag_add, value_typecheck

from conftest import q


def test_related_initial(related, movie_schema, movies):
    out = eval_query(related, {"M": movies})
    assert out == parse_value(
        '{ <"Drive", { }>, <"Skyfall", { "Rush" }>, <"Rush", { "Skyfall" }> }'
    )


def test_related_after_update(related, movie_schema, movies, movies_update):
    out = eval_query(related, {"M": bag_add(movies, movies_update)})
    assert out == parse_value(
        """{ <"Drive", { "Jarhead" }>, <"Skyfall", { "Rush", "Jarhead" }>,
             <"Rush", { "Skyfall" }>, <"Jarhead", { "Drive", "Skyfall" }> }"""
    )


def test_empty_constant(movie_schema):
    assert eval_query(q("empty[Bag(Base)]", movie_schema), {}) == Bag({})


def test_multiplicity_semantics(movie_schema):
    # for-union scales by source multiplicities, products multiply them
    from nrcivm.typecheck import Schema
    from nrcivm.parser import parse_type

    schema = Schema({"R": parse_type("Bag(Base)")})
    db = {"R": Bag({"a": 2, "b": -1})}
    out = eval_query(q("for x in R union sng x + sng x", schema), db)
    assert out == Bag({"a": 4, "b": -2})
    out2 = eval_query(q("R * R", schema), db)
    assert out2 == Bag({("a", "a"): 4, ("a", "b"): -2, ("b", "a"): -2, ("b", "b"): 1})


def test_flatten_weighted():
    from nrcivm.typecheck import Schema
    from nrcivm.parser import parse_type

    schema = Schema({"R": parse_type("Bag(Bag(Base))")})
    db = {"R": Bag({bag("x"): 2, Bag({"y": -1}): 1})}
    out = eval_query(q("flatten R", schema), db)
    assert out == Bag({"x": 2, "y": -1})


def test_dict_app_semantics():
    from nrcivm import types as T
    from nrcivm.typecheck import Schema
    from nrcivm.values import DictVal, Label

    schema = Schema({"D": T.DictType(T.BASE), "L": T.Bag(T.LABEL)})
    l1, l2 = Label("g0", (1,)), Label("g1", (2,))
    db = {
        "D": DictVal({l1: bag("a"), l2: bag("b", "b")}),
        "L": Bag({l1: 2, l2: -1}),
    }
    out = eval_query(q("D(L)", schema), db)
    assert out == Bag({"a": 2, "b": -2})


def test_dictdef_application_matches_index():
    from nrcivm import types as T
    from nrcivm.typecheck import Schema
    from nrcivm.values import Label

    schema = Schema({"R": T.Bag(T.BASE)})
    db = {"R": bag(1, 2)}
    d = eval_query(q("dict[k1](m: Base){ for x in R union sng m }", schema), db)
    assert d.apply(Label("k1", (7,))) == Bag({7: 2})
    # non-matching index: the empty bag (symbolic dictionaries are total)
    assert d.apply(Label("k2", (7,))) == Bag({})


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9))
def test_where_sugar_law(seed):
    # desugaring `for x in e1 where p(x) union e2` preserves evaluation
    rng = random.Random(seed)
    from nrcivm.parser import parse_type
    from nrcivm.typecheck import Schema

    schema = Schema({"R": parse_type("Bag(<Base, Base>)")})
    cfg = GenConfig(seed=seed)
    db = gen_db(cfg, schema, rng)
    sugar = q("for x in R where x.1 <= x.2 union sng x", schema)
    manual = q("for x in R union for u in test(x.1 <= x.2) union sng x", schema)
    assert eval_query(sugar, db) == eval_query(manual, db)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9))
def test_for_distributes_over_union_source(seed):
    # for x in (e1 + e1') union e2  ==  (for x in e1 union e2) + (for x in e1' union e2)
    rng = random.Random(seed)
    cfg = GenConfig(seed=seed, mode="inc")
    schema = gen_schema(rng, cfg, 1)
    ty = schema.lookup("R")
    db1 = gen_db(cfg, schema, rng)["R"]
    db2 = gen_db(cfg, schema, random.Random(seed + 1))["R"]
    from nrcivm.typecheck import Schema as S2

    schema2 = S2({"A": ty, "B": ty})
    combined = eval_query(q("for x in A + B union sng x * sng x", schema2), {"A": db1, "B": db2})
    split = bag_add(
        eval_query(q("for x in A union sng x * sng x", schema2), {"A": db1, "B": db2}),
        eval_query(q("for x in B union sng x * sng x", schema2), {"A": db1, "B": db2}),
    )
    assert combined == split


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**9))
def test_eval_deterministic_and_type_sound(seed):
    rng = random.Random(seed)
    cfg = GenConfig(seed=seed, mode="nrc", max_expr_depth=4)
    schema = gen_schema(rng, cfg)
    db = gen_db(cfg, schema, rng)
    h = gen_query(cfg, schema, rng)
    _, ty = check(h, schema)
    v1 = eval_query(h, db)
    v2 = eval_query(h, dict(db))
    assert v1 == v2
    assert render_value(v1) == render_value(v2)
    assert value_typecheck(v1, ty)
