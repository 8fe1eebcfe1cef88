"""Typing rules, singleton dispatch, and the positivity restrictions."""

import pytest

from nrcivm import exprs as E
from nrcivm import types as T
from nrcivm.errors import (
    PredicateOnNonFlatTuple,
    SngStarInputDependent,
    TypeMismatch,
    UnboundVariable,
)
from nrcivm.parser import parse_query, parse_type
from nrcivm.typecheck import Schema, check, typecheck

FLAT = Schema({"R": parse_type("Bag(Base)")})
PAIRS = Schema({"R": parse_type("Bag(<Base, Base>)")})
NESTED = Schema({"R": parse_type("Bag(Bag(Base))")})


def test_identity_query():
    assert typecheck(parse_query("for x in R union sng x"), FLAT) == parse_type("Bag(Base)")


def test_related_type(related, movie_schema):
    assert typecheck(related, movie_schema) == parse_type("Bag(<Base, Bag(Base)>)")


def test_predicate_on_bag_rejected():
    e = parse_query("for x in R where x == x union sng x")
    with pytest.raises(PredicateOnNonFlatTuple):
        typecheck(e, NESTED)


def test_predicate_path_must_reach_base():
    e = parse_query("for x in R where x == x union sng x")
    # over atoms this is fine
    assert typecheck(e, FLAT) == parse_type("Bag(Base)")


def test_unbound_variable():
    with pytest.raises(UnboundVariable):
        typecheck(parse_query("sng y"), FLAT)
    with pytest.raises(UnboundVariable):
        typecheck(parse_query("S"), FLAT)


def test_singleton_dispatch():
    # variable singleton
    e, ty = check(parse_query("for x in R union sng x"), FLAT)
    inner = e.body
    assert isinstance(inner, E.SngVar)
    # unit singleton
    e2, ty2 = check(parse_query("sng <>"), FLAT)
    assert isinstance(e2, E.SngUnit) and ty2 == T.Bag(T.UNIT)
    # input-independent bag body: restricted
    e3, _ = check(parse_query("sng (empty[Bag(Base)])"), FLAT)
    assert isinstance(e3, E.SngStar)
    # input-dependent bag body: unrestricted in nrc mode
    e4, _ = check(parse_query("sng R"), FLAT)
    assert isinstance(e4, E.Sng)


def test_sng_star_rejected_in_inc_mode():
    with pytest.raises(SngStarInputDependent):
        check(parse_query("sng R"), FLAT, mode="inc")


def test_sng_star_rejects_let_variables():
    # a let-bound name stands for an updatable bag: not allowed under a
    # restricted singleton either
    e = parse_query("let X = R in sng X")
    with pytest.raises(SngStarInputDependent):
        check(e, FLAT, mode="inc")


def test_let_and_letvar():
    e = parse_query("let X = R in for x in X union sng x")
    assert typecheck(e, FLAT) == parse_type("Bag(Base)")


def test_products_and_flatten():
    assert typecheck(parse_query("R * R"), FLAT) == parse_type("Bag(<Base, Base>)")
    assert typecheck(parse_query("flatten R"), NESTED) == parse_type("Bag(Base)")
    with pytest.raises(TypeMismatch):
        typecheck(parse_query("flatten R"), FLAT)


def test_union_requires_same_type():
    with pytest.raises(TypeMismatch):
        typecheck(parse_query("R + (R * R)"), FLAT)


def test_union_retags_to_dict_add():
    schema = Schema({"D": T.DictType(T.BASE), "E": T.DictType(T.BASE)})
    e, ty = check(parse_query("D + E"), schema)
    assert isinstance(e, E.DictAdd) and ty == T.DictType(T.BASE)


def test_dict_app_typing():
    schema = Schema({"D": T.DictType(T.BASE), "L": T.Bag(T.LABEL)})
    e, ty = check(parse_query("D(L)"), schema)
    assert ty == T.Bag(T.BASE)
    with pytest.raises(TypeMismatch):
        check(parse_query("D(D)"), schema)


def test_dictdef_and_inl():
    schema = Schema({"R": parse_type("Bag(Base)")})
    e, ty = check(parse_query("dict[q9](m: Base){ for x in R union sng m }"), schema)
    assert ty == T.DictType(T.BASE)
    e2, ty2 = check(parse_query("for m in R union label[q9](m)"), schema)
    assert ty2 == T.Bag(T.LABEL)


def test_label_env_must_be_flat():
    schema = Schema({"R": parse_type("Bag(Bag(Base))")})
    with pytest.raises(TypeMismatch):
        check(parse_query("for x in R union label[q1](x)"), NESTED)


def test_delta_rel_types_like_base():
    assert typecheck(parse_query("delta R + R"), FLAT) == parse_type("Bag(Base)")
