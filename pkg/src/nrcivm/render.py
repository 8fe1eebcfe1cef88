"""Deterministic printers for types, values, queries and costs.

Rendering sorts bag elements, dictionary entries and supports by the
canonical value order, so equal values always print byte-identically, and
printing is idempotent with respect to reparsing.
"""

from __future__ import annotations

from . import exprs as E
from . import types as T
from .values import Bag, DictVal, Label, canon_key

# Precedence levels used when printing queries:
#   0 for/let (extend right)   1 sums   2 products   3 unary   4 postfix/atoms


def render_type(ty: T.SchemaType) -> str:
    if ty is T.BASE:
        return "Base"
    if ty is T.UNIT:
        return "Unit"
    if ty is T.LABEL:
        return "Label"
    if isinstance(ty, T.Bag):
        return f"Bag({render_type(ty.elem)})"
    if isinstance(ty, T.DictType):
        return f"Dict({render_type(ty.elem)})"
    if isinstance(ty, T.Prod):
        parts = []
        cur = ty
        while isinstance(cur, T.Prod):
            parts.append(cur.left)
            cur = cur.right
        parts.append(cur)
        return "<" + ", ".join(render_type(p) for p in parts) + ">"
    raise AssertionError(f"unknown type {ty!r}")


def render_value(v) -> str:
    if v == ():
        return "<>"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, tuple):
        parts = []
        cur = v
        while isinstance(cur, tuple) and cur != () and len(cur) == 2:
            parts.append(cur[0])
            cur = cur[1]
        parts.append(cur)
        return "<" + ", ".join(render_value(p) for p in parts) + ">"
    if isinstance(v, Label):
        inner = ", ".join([v.idx] + [render_value(x) for x in v.env])
        return f"@({inner})"
    if isinstance(v, Bag):
        if v.is_empty():
            return "{ }"
        items = []
        for elem, m in v.sorted_items():
            if m == 1:
                items.append(render_value(elem))
            else:
                items.append(f"{render_value(elem)} : {m}")
        return "{ " + ", ".join(items) + " }"
    if isinstance(v, DictVal):
        items = [f"{render_value(l)} => {render_value(b)}" for l, b in v.sorted_entries()]
        extra = sorted(v.support - set(v.entries), key=canon_key)
        s = "[ " + ", ".join(items) if items else "["
        if extra:
            s += " ; supp " + ", ".join(render_value(l) for l in extra)
        return s + (" ]" if items or extra else "]")
    raise AssertionError(f"not a value: {v!r}")


def _render_operand(op) -> str:
    if isinstance(op, E.ConstAtom):
        return render_value(op.value)
    path = "".join(f".{i}" for i in op.path)
    return f"{op.var}{path}"


def render_cond(cond) -> str:
    if isinstance(cond, E.Cmp):
        return f"{_render_operand(cond.lhs)} {cond.op} {_render_operand(cond.rhs)}"
    if isinstance(cond, E.BoolAnd):
        l = render_cond(cond.left)
        r = render_cond(cond.right)
        if isinstance(cond.left, E.BoolOr):
            l = f"({l})"
        if isinstance(cond.right, (E.BoolOr, E.BoolAnd)):
            r = f"({r})"
        return f"{l} && {r}"
    if isinstance(cond, E.BoolOr):
        l = render_cond(cond.left)
        r = render_cond(cond.right)
        if isinstance(cond.right, E.BoolOr):
            r = f"({r})"
        return f"{l} || {r}"
    raise AssertionError(f"bad condition {cond!r}")


def render_query(e: E.Expr) -> str:
    return _rq(e, 0)


def _paren(s: str, ctx: int, p: int) -> str:
    """Parenthesize a construct of precedence ``p`` in a context demanding ``ctx``."""
    return f"({s})" if ctx > p else s


def _rq(e: E.Expr, ctx: int) -> str:
    if isinstance(e, E.ForUnion):
        # Re-sugar `for x in src union for _ in test(c) union body`.
        inner = e.body
        if (
            isinstance(inner, E.ForUnion)
            and isinstance(inner.source, E.Pred)
            and inner.var not in E.free_for_vars(inner.body)
        ):
            s = (
                f"for {e.var} in {_rq(e.source, 1)} where {render_cond(inner.source.cond)} "
                f"union {_rq(inner.body, 0)}"
            )
        else:
            s = f"for {e.var} in {_rq(e.source, 1)} union {_rq(e.body, 0)}"
        return _paren(s, ctx, 0)
    if isinstance(e, E.Let):
        s = f"let {e.name} = {_rq(e.bound, 1)} in {_rq(e.body, 0)}"
        return _paren(s, ctx, 0)
    if isinstance(e, E.Union):
        s = f"{_rq(e.left, 1)} + {_rq(e.right, 2)}"
        return _paren(s, ctx, 1)
    if isinstance(e, E.DictAdd):
        s = f"{_rq(e.left, 1)} + {_rq(e.right, 2)}"
        return _paren(s, ctx, 1)
    if isinstance(e, E.DictUnion):
        s = f"{_rq(e.left, 1)} | {_rq(e.right, 2)}"
        return _paren(s, ctx, 1)
    if isinstance(e, E.Prod):
        s = f"{_rq(e.left, 2)} * {_rq(e.right, 3)}"
        return _paren(s, ctx, 2)
    if isinstance(e, E.Neg):
        return f"neg {_rq(e.body, 3)}"
    if isinstance(e, E.Flatten):
        return f"flatten {_rq(e.body, 3)}"
    if isinstance(e, E.SngVar):
        return f"sng {e.var}"
    if isinstance(e, E.SngUnit):
        return "sng <>"
    if isinstance(e, (E.Sng, E.SngStar)):
        return f"sng ({_rq(e.body, 0)})"
    if isinstance(e, E.Proj):
        return e.var + "".join(f".{i}" for i in e.path)
    if isinstance(e, E.Pred):
        return f"test({render_cond(e.cond)})"
    if isinstance(e, E.Empty):
        return f"empty[{render_type(e.ty)}]"
    if isinstance(e, E.RelVar):
        return e.name
    if isinstance(e, E.LetVar):
        return e.name
    if isinstance(e, E.DeltaRel):
        if e.order == 1:
            return f"delta {e.name}"
        return f"delta^{e.order} {e.name}"
    if isinstance(e, E.InL):
        return f"label[{e.idx}](" + ", ".join(e.env_vars) + ")"
    if isinstance(e, E.DictDef):
        params = ", ".join(
            f"{v}: {render_type(t)}" for v, t in zip(e.env_vars, e.env_types)
        )
        return f"dict[{e.idx}]({params}){{ {_rq(e.body, 0)} }}"
    if isinstance(e, E.DictApp):
        d = _rq(e.dict, 4)
        return f"{d}({_rq(e.key, 0)})"
    raise AssertionError(f"unknown expression node {type(e).__name__}")
