"""Bag group structure, canonical ordering, and dictionary operations."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from nrcivm import types as T
from nrcivm.errors import DictUnionConflict
from nrcivm.gen import GenConfig, gen_value
from nrcivm.values import (
    Bag,
    DictVal,
    Label,
    bag,
    bag_add,
    bag_neg,
    bag_scale,
    canon_key,
    dict_add,
    dict_label_union,
    value_typecheck,
)

TY = T.Bag(T.Prod(T.BASE, T.Bag(T.BASE)))


def rand_bag(seed):
    cfg = GenConfig(seed=seed)
    return gen_value(cfg, TY, random.Random(seed), size=4)


def test_zero_multiplicities_dropped():
    b = Bag({"a": 1, "b": 0})
    assert b == bag("a")
    assert bag_add(bag("a", "b", "b"), Bag({"b": -2, "c": 1})) == bag("a", "c")


def test_group_inverse():
    b = Bag({"a": 3})
    assert bag_neg(b) == Bag({"a": -3})
    assert bag_add(b, bag_neg(b)) == Bag({})


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9), st.integers(0, 10**9), st.integers(0, 10**9))
def test_group_laws(s1, s2, s3):
    a, b, c = rand_bag(s1), rand_bag(s2), rand_bag(s3)
    assert bag_add(bag_add(a, b), c) == bag_add(a, bag_add(b, c))
    assert bag_add(a, b) == bag_add(b, a)
    assert bag_add(a, Bag({})) == a
    assert bag_add(a, bag_neg(a)) == Bag({})


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**9), st.integers(-4, 4))
def test_scale(seed, k):
    a = rand_bag(seed)
    expect = Bag({})
    for _ in range(abs(k)):
        expect = bag_add(expect, a)
    if k < 0:
        expect = bag_neg(expect)
    assert bag_scale(a, k) == expect


def test_canonical_order_ranks():
    vals = [
        (),
        -5,
        7,
        "a",
        "b",
        (1, 2),
        bag(1),
        Label("q1", ()),
    ]
    keys = [canon_key(v) for v in vals]
    assert keys == sorted(keys)
    # ints before strings regardless of content
    assert canon_key(999) < canon_key("0")


def test_value_typecheck():
    v = bag(("a", bag("x1", "x2")), ("b", bag("x3")))
    assert value_typecheck(v, TY)
    assert not value_typecheck(v, T.Bag(T.BASE))
    assert value_typecheck((), T.UNIT)
    assert not value_typecheck(True, T.BASE)  # booleans are not atoms


# --- dictionaries (the worked union/addition examples) ---------------------

L1, L2, L3 = Label("v1", ()), Label("v2", ()), Label("v3", ())


def d(entries):
    return DictVal(entries)


def test_label_union_merges_disjoint_and_agreeing():
    d1 = d({L1: bag("b1"), L2: bag("b2", "b3")})
    d2 = d({L2: bag("b2", "b3"), L3: bag("b4")})
    out = dict_label_union(d1, d2)
    assert out == d({L1: bag("b1"), L2: bag("b2", "b3"), L3: bag("b4")})


def test_label_union_conflict():
    d1 = d({L1: bag("b1"), L2: bag("b2", "b3")})
    d2 = d({L2: bag("b5"), L3: bag("b4")})
    with pytest.raises(DictUnionConflict) as exc:
        dict_label_union(d1, d2)
    assert exc.value.label == L2


def test_label_union_unit():
    d1 = d({L1: bag("b1")})
    assert dict_label_union(d1, DictVal.empty()) == d1
    assert dict_label_union(DictVal.empty(), d1) == d1


def test_dict_add_points():
    out = dict_add(d({L2: bag("b2", "b3")}), d({L2: bag("b5")}))
    assert out == d({L2: bag("b2", "b3", "b5")})


def test_dict_add_doubles_shared_definitions():
    d1 = d({L1: bag("b1"), L2: bag("b2", "b3")})
    d2 = d({L2: bag("b2", "b3"), L3: bag("b4")})
    out = dict_add(d1, d2)
    assert out == d(
        {L1: bag("b1"), L2: Bag({"b2": 2, "b3": 2}), L3: bag("b4")}
    )


def test_dict_add_unit():
    d1 = d({L1: bag("b1")})
    assert dict_add(d1, DictVal.empty()) == d1


def test_dict_add_is_only_modifier():
    # union keeps the (equal) definition; it can never change one
    d1 = d({L1: bag("b1")})
    d2 = d({L1: bag("b1"), L2: bag("x")})
    out = dict_label_union(d1, d2)
    assert out.apply(L1) == bag("b1")


def test_strict_vs_total_application():
    from nrcivm.errors import UnboundLabel

    strict = d({L1: bag("x")})
    with pytest.raises(UnboundLabel):
        strict.apply(L2)
    assert strict.as_total().apply(L2) == Bag({})
    # a label in the support without a definition is an error even when total
    holey = DictVal({}, support=frozenset({L3}), total=True)
    with pytest.raises(UnboundLabel):
        holey.apply(L3)
