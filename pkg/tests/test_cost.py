"""Cost domains: size, orders, supremum, the cost transformation, tcost,
monotonicity and the efficiency property."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from nrcivm import types as T
from nrcivm.cost import (
    CostBag,
    CostProd,
    CostScalar,
    SCALAR,
    bottom,
    cost,
    cost_env_from_instance,
    cost_prec,
    cost_preceq,
    cost_sup,
    is_incremental,
    nat_le,
    nat_lt,
    render_cost,
    render_nat,
    size,
    sym,
    symbolic_cost_env,
    tcost,
)
from nrcivm.delta import Relation, delta, degree, simplify
from nrcivm.errors import ShapeMismatch
from nrcivm.evaluator import eval_query
from nrcivm.gen import GenConfig, gen_db, gen_query, gen_schema, gen_update
from nrcivm.parser import parse_query, parse_type, parse_value
from nrcivm.typecheck import Schema, check
from nrcivm.values import Bag, bag

from conftest import q


def B(card, elem):
    return CostBag(elem, card)


def test_size_worked_example():
    # a two-row bag whose larger inner bag has three elements
    v = parse_value('{ <"Comedy", { "Carnage" }>, <"Animation", { "Up", "Shrek", "Cars" }> }')
    ty = parse_type("Bag(<Base, Bag(Base)>)")
    assert size(v, ty) == B(2, CostProd(SCALAR, B(3, SCALAR)))
    assert render_cost(size(v, ty)) == "2{<1,3{1}>}"


def test_size_empty_bag_is_bottom():
    assert size(Bag({}), parse_type("Bag(Base)")) == B(1, SCALAR)
    assert render_cost(size(Bag({}), parse_type("Bag(Base)"))) == "1{1}"


def test_size_of_movie_relation(movies):
    ty = parse_type("Bag(<Base, Base, Base>)")
    c = size(movies, ty)
    assert c == B(3, CostProd(SCALAR, CostProd(SCALAR, SCALAR)))
    assert render_cost(c) == "3{<1,<1,1>>}"


def test_size_counts_absolute_multiplicities():
    v = Bag({"a": -2, "b": 3})
    assert size(v, parse_type("Bag(Base)")) == B(5, SCALAR)


def test_orders():
    assert cost_prec(B(1, SCALAR), B(3, SCALAR))
    assert not cost_prec(B(3, SCALAR), B(3, SCALAR))
    assert cost_preceq(B(3, SCALAR), B(3, SCALAR))
    # nested shapes: strict on cards, non-strict on elements
    c1 = B(2, CostProd(SCALAR, B(1, SCALAR)))
    c2 = B(3, CostProd(SCALAR, B(2, SCALAR)))
    assert cost_prec(c1, c2)
    assert not cost_prec(c2, c1)
    # inner bag larger than the base's: not incremental
    c3 = B(2, CostProd(SCALAR, B(9, SCALAR)))
    assert not cost_prec(c3, c2)


def test_sup_pointwise():
    c1 = B(2, CostProd(SCALAR, B(3, SCALAR)))
    c2 = B(5, CostProd(SCALAR, B(1, SCALAR)))
    assert cost_sup(c1, c2) == B(5, CostProd(SCALAR, B(3, SCALAR)))


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        cost_prec(B(1, SCALAR), B(1, CostProd(SCALAR, SCALAR)))


def _rand_cost(rng, depth=2):
    if depth == 0 or rng.random() < 0.4:
        return SCALAR
    if rng.random() < 0.5:
        return CostProd(_rand_cost(rng, depth - 1), _rand_cost(rng, depth - 1))
    return CostBag(_rand_cost(rng, depth - 1), rng.randint(1, 9))


def _rand_cost_of_shape(rng, shape):
    if isinstance(shape, CostScalar):
        return SCALAR
    if isinstance(shape, CostProd):
        return CostProd(
            _rand_cost_of_shape(rng, shape.left), _rand_cost_of_shape(rng, shape.right)
        )
    return CostBag(_rand_cost_of_shape(rng, shape.elem), rng.randint(1, 9))


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 10**9))
def test_order_properties(seed):
    rng = random.Random(seed)
    shape = _rand_cost(rng)
    a = _rand_cost_of_shape(rng, shape)
    b = _rand_cost_of_shape(rng, shape)
    c = _rand_cost_of_shape(rng, shape)
    # strict order: irreflexive, transitive
    assert not cost_prec(a, a)
    if cost_prec(a, b) and cost_prec(b, c):
        assert cost_prec(a, c)
    # non-strict: reflexive, transitive
    assert cost_preceq(a, a)
    if cost_preceq(a, b) and cost_preceq(b, c):
        assert cost_preceq(a, c)
    # sup is a least upper bound
    s = cost_sup(a, b)
    assert cost_preceq(a, s) and cost_preceq(b, s)
    if cost_preceq(a, c) and cost_preceq(b, c):
        assert cost_preceq(s, c)


def test_tcost():
    assert tcost(B(3, CostProd(SCALAR, B(3, SCALAR)))) == 12
    assert tcost(B(7, SCALAR)) == 7
    assert tcost(B(2, CostProd(SCALAR, B(3, SCALAR)))) == 8
    n = sym("n")
    assert render_nat(tcost(B(n, CostProd(SCALAR, B(n, SCALAR))))) == "n + n^2"


def test_cost_of_related(related, movie_schema, movies):
    env = cost_env_from_instance({"M": movies}, movie_schema)
    c = cost(related, env)
    assert render_cost(c) == "3{<1,3{1}>}"
    assert tcost(c) == 12
    sym_env = symbolic_cost_env(movie_schema, {"M": sym("n")})
    cn = cost(related, sym_env)
    assert render_cost(cn) == "n{<1,n{1}>}"


def test_cost_of_filter_equals_input():
    schema = Schema({"R": parse_type("Bag(<Base, Base>)")})
    f = q("for x in R where x.1 <= x.2 union sng x", schema, mode="inc")
    r_cost = B(17, CostProd(SCALAR, SCALAR))
    from nrcivm.cost import CostEnv

    env = CostEnv({"R": r_cost})
    assert cost(f, env) == r_cost


def test_cost_of_empty_is_bottom():
    schema = Schema({"R": parse_type("Bag(Base)")})
    env = cost_env_from_instance({}, schema)
    assert cost(q("empty[Bag(<Base, Base>)]", schema), env) == bottom(
        parse_type("Bag(<Base, Base>)")
    )


def test_is_incremental(movies, movies_update):
    ty = parse_type("Bag(<Base, Base, Base>)")
    assert is_incremental(movies_update, movies, ty)
    assert not is_incremental(movies, movies, ty)  # strict order is irreflexive
    # deeper inner bags larger than the base's: not incremental
    nested_ty = parse_type("Bag(Bag(Base))")
    base = Bag({bag(1): 1, bag(2): 1, bag(3): 1})
    upd = Bag({bag(1, 2, 3, 4): 1, bag(5): 1})
    assert not is_incremental(upd, base, nested_ty)


def test_symbolic_comparisons():
    n, d = sym("n"), sym("d")
    from nrcivm.cost import nat_add, nat_mul

    assert nat_le(n, nat_mul(n, n))
    assert nat_lt(n, nat_add(nat_mul(n, n), 1))
    # inconclusive coefficientwise, resolved on the grid: n <= n*n
    assert not nat_lt(nat_mul(n, n), n)
    # d vs n is genuinely incomparable: the grid refutes both strict orders
    assert not nat_lt(n, d) and not nat_lt(d, n)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**9))
def test_efficiency_on_corpus(seed):
    # with an incremental update supplied, the delta costs strictly less
    rng = random.Random(seed)
    cfg = GenConfig(seed=seed, mode="inc", max_expr_depth=4)
    schema = gen_schema(rng, cfg, 1)
    db = gen_db(cfg, schema, rng)
    for _ in range(10):
        if db["R"].weight() >= 2:
            break
        db = gen_db(cfg, schema, random.Random(rng.randrange(10**9)))
    if db["R"].weight() < 2:
        return
    h = simplify(gen_query(cfg, schema, rng))
    if degree(h, rel="R") < 1:
        return
    upd = gen_update(cfg, db["R"], schema.lookup("R"), rng)
    ty = schema.lookup("R")
    if not is_incremental(upd, db["R"], ty):
        return
    env = cost_env_from_instance(db, schema, deltas={("R", 1): upd})
    ch = cost(h, env)
    d = delta(h, Relation("R"), schema=schema)
    cd = cost(d, env)
    assert cost_prec(cd, ch), (render_cost(cd), render_cost(ch))
    assert tcost(cd) < tcost(ch)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9))
def test_monotonicity(seed):
    # raising a variable's cost can only raise the expression's cost
    rng = random.Random(seed)
    cfg = GenConfig(seed=seed, mode="inc", max_expr_depth=4)
    schema = gen_schema(rng, cfg, 1)
    ty = schema.lookup("R")
    h = gen_query(cfg, schema, rng, target=ty)

    # cost h under two comparable bindings for R
    db_small = gen_db(cfg, schema, random.Random(seed + 1))
    bigger = db_small["R"]
    for _ in range(3):
        extra = gen_db(cfg, schema, random.Random(rng.randrange(10**9)))["R"]
        from nrcivm.values import bag_add

        bigger = bag_add(bigger, extra)
    c_small = size(db_small["R"], ty)
    c_big = cost_sup(c_small, size(bigger, ty))
    from nrcivm.cost import CostEnv

    lo = cost(h, CostEnv({"R": c_small}))
    hi = cost(h, CostEnv({"R": c_big}))
    assert cost_preceq(lo, hi)
