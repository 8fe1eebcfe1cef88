"""Surface syntax for queries, values, types and schema files.

Grammar sketch (queries)::

    expr    := 'for' var 'in' expr ['where' cond] 'union' expr
             | 'let' Name '=' expr 'in' expr
             | sum
    sum     := prod { ('+' | '|') prod }        -- union/dict-add, label union
    prod    := unary { '*' unary }
    unary   := ('neg' | 'flatten' | 'sng') unary | postfix
    postfix := primary { '(' expr ')' }         -- dictionary application
    primary := '(' expr ')' | 'empty' '[' type ']' | 'test' '(' cond ')'
             | 'label' '[' idx ']' '(' [var {',' var}] ')'
             | 'dict' '[' idx ']' '(' [var ':' type {...}] ')' '{' expr '}'
             | 'delta' ['^' int] Name
             | '<' expr {',' expr} '>'          -- tuple: product of lifted parts
             | var ['.' int ...]                -- projection (bare vars only under sng)
             | Name                             -- relation / let variable

Tuple expressions lift their components: a path or variable component stays
a singleton, a general subexpression becomes a singleton occurrence, and the
components are combined with bag product, so ``sng <m.1, e>`` builds the bag
``{<pi1 m, [e]>}``.  Each singleton occurrence is assigned a static index
``q1, q2, ...`` in textual order.

Values: ``{ v : m, ... }`` bags (``: 1`` omissible, negative counts fine),
``<a, b>`` tuples, ``<>`` unit, bare integers, double-quoted strings, labels
``@(q1, v, ...)``, dictionaries ``[ l => bag, ... ; supp l2 ]``.

Relation names and let-variables are capitalized; for-variables lowercase.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import exprs as E
from . import types as T
from .errors import ParseError, TypeMismatch
from .values import Bag, DictVal, Label, value_typecheck

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<int>-?\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<punct>=>|==|!=|<=|&&|\|\||[()\[\]{}<>,.:;@+*|=^])
    """,
    re.VERBOSE,
)

KEYWORDS = {
    "for", "in", "union", "where", "let", "sng", "neg", "flatten",
    "empty", "delta", "label", "dict", "test", "supp", "gen",
}


@dataclass
class Token:
    kind: str  # string | int | name | punct | eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    toks = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", (line, col))
        kind = m.lastgroup
        tok = m.group()
        if kind != "ws":
            toks.append(Token(kind, tok, line, col))
        nl = tok.count("\n")
        if nl:
            line += nl
            col = len(tok) - tok.rfind("\n")
        else:
            col += len(tok)
        pos = m.end()
    toks.append(Token("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.pos = 0
        self.sng_counter = 0
        self.let_scope: list[str] = []

    # -- token plumbing ------------------------------------------------

    def peek(self) -> Token:
        return self.toks[self.pos]

    def next(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def at(self, text: str) -> bool:
        t = self.peek()
        return t.text == text and t.kind in ("punct", "name")

    def eat(self, text: str) -> Token:
        t = self.peek()
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text!r}", (t.line, t.col))
        return self.next()

    def span(self) -> tuple[int, int]:
        t = self.peek()
        return (t.line, t.col)

    def fresh_idx(self) -> str:
        self.sng_counter += 1
        return f"q{self.sng_counter}"

    # -- types -----------------------------------------------------------

    def type_(self) -> T.SchemaType:
        t = self.peek()
        if t.text == "Base":
            self.next()
            return T.BASE
        if t.text == "Unit":
            self.next()
            return T.UNIT
        if t.text == "Label":
            self.next()
            return T.LABEL
        if t.text == "Bag":
            self.next()
            self.eat("(")
            inner = self.type_()
            self.eat(")")
            return T.Bag(inner)
        if t.text == "Dict":
            self.next()
            self.eat("(")
            inner = self.type_()
            self.eat(")")
            return T.DictType(inner)
        if t.text == "<":
            self.next()
            parts = [self.type_()]
            while self.at(","):
                self.next()
                parts.append(self.type_())
            self.eat(">")
            if len(parts) < 2:
                raise ParseError("product type needs at least two components", (t.line, t.col))
            return T.prod_of(parts)
        raise ParseError(f"expected a type, found {t.text!r}", (t.line, t.col))

    # -- queries -----------------------------------------------------------

    def expr(self) -> E.Expr:
        t = self.peek()
        if t.text == "for":
            sp = (t.line, t.col)
            self.next()
            var = self.var_name()
            self.eat("in")
            src = self.sum_()
            cond = None
            if self.at("where"):
                self.next()
                cond = self.cond()
            self.eat("union")
            body = self.expr()
            if cond is not None:
                body = E.ForUnion("_", E.Pred(cond, span=sp), body, span=sp)
            return E.ForUnion(var, src, body, span=sp)
        if t.text == "let":
            sp = (t.line, t.col)
            self.next()
            name = self.rel_name()
            self.eat("=")
            bound = self.expr()
            self.eat("in")
            self.let_scope.append(name)
            try:
                body = self.expr()
            finally:
                self.let_scope.pop()
            return E.Let(name, bound, body, span=sp)
        return self.sum_()

    def sum_(self) -> E.Expr:
        left = self.prod_()
        while True:
            t = self.peek()
            if t.text == "+":
                self.next()
                right = self.prod_()
                left = E.Union(left, right, span=(t.line, t.col))
            elif t.text == "|":
                self.next()
                right = self.prod_()
                left = E.DictUnion(left, right, span=(t.line, t.col))
            else:
                return left

    def prod_(self) -> E.Expr:
        left = self.unary()
        while self.at("*"):
            t = self.next()
            right = self.unary()
            left = E.Prod(left, right, span=(t.line, t.col))
        return left

    def unary(self) -> E.Expr:
        t = self.peek()
        if t.text == "neg":
            self.next()
            return E.Neg(self.unary(), span=(t.line, t.col))
        if t.text == "flatten":
            self.next()
            return E.Flatten(self.unary(), span=(t.line, t.col))
        if t.text == "sng":
            sp = (t.line, t.col)
            self.next()
            return self.sng_arg(sp)
        return self.postfix()

    def sng_arg(self, sp) -> E.Expr:
        t = self.peek()
        if t.text == "<" and self.toks[self.pos + 1].text == ">":
            self.next()
            self.next()
            return E.SngUnit(span=sp)
        if t.text == "<":
            return self.tuple_expr()
        if t.kind == "name" and t.text not in KEYWORDS and t.text[0].islower():
            # bare variable, possibly with a projection path
            if self.toks[self.pos + 1].text == ".":
                return self.lift(self.postfix())
            self.next()
            return E.SngVar(t.text, span=sp)
        body = self.unary()
        return E.Sng(body, self.fresh_idx(), span=sp)

    def lift(self, e: E.Expr) -> E.Expr:
        """Singleton-lift a tuple component: paths stay, bags get wrapped."""
        if isinstance(e, (E.SngVar, E.Proj, E.SngUnit, E.InL)):
            return e
        if isinstance(e, E.Prod):
            return e
        return E.Sng(e, self.fresh_idx(), span=e.span)

    def tuple_expr(self) -> E.Expr:
        sp = self.span()
        self.eat("<")
        parts = [self.tuple_part()]
        while self.at(","):
            self.next()
            parts.append(self.tuple_part())
        self.eat(">")
        if len(parts) < 2:
            raise ParseError("tuple expression needs at least two components", sp)
        out = self.lift(parts[-1])
        for p in reversed(parts[:-1]):
            out = E.Prod(self.lift(p), out, span=sp)
        return out

    def tuple_part(self) -> E.Expr:
        t = self.peek()
        if t.kind == "name" and t.text not in KEYWORDS and t.text[0].islower():
            nxt = self.toks[self.pos + 1].text
            if nxt != ".":
                self.next()
                return E.SngVar(t.text, span=(t.line, t.col))
        return self.expr()

    def postfix(self) -> E.Expr:
        e = self.primary()
        while self.at("("):
            t = self.next()
            key = self.expr()
            self.eat(")")
            e = E.DictApp(e, key, span=(t.line, t.col))
        return e

    def primary(self) -> E.Expr:
        t = self.peek()
        sp = (t.line, t.col)
        if t.text == "(":
            self.next()
            e = self.expr()
            self.eat(")")
            return e
        if t.text == "empty":
            self.next()
            self.eat("[")
            ty = self.type_()
            self.eat("]")
            return E.Empty(ty, span=sp)
        if t.text == "test":
            self.next()
            self.eat("(")
            c = self.cond()
            self.eat(")")
            return E.Pred(c, span=sp)
        if t.text == "delta":
            self.next()
            order = 1
            if self.at("^"):
                self.next()
                n = self.next()
                if n.kind != "int" or int(n.text) < 1:
                    raise ParseError("delta order must be a positive integer", (n.line, n.col))
                order = int(n.text)
            name = self.rel_name()
            return E.DeltaRel(name, order, span=sp)
        if t.text == "label":
            self.next()
            self.eat("[")
            idx = self.idx_name()
            self.eat("]")
            self.eat("(")
            vs = []
            if not self.at(")"):
                vs.append(self.var_name())
                while self.at(","):
                    self.next()
                    vs.append(self.var_name())
            self.eat(")")
            return E.InL(idx, tuple(vs), span=sp)
        if t.text == "dict":
            self.next()
            self.eat("[")
            idx = self.idx_name()
            self.eat("]")
            self.eat("(")
            vs, tys = [], []
            if not self.at(")"):
                while True:
                    vs.append(self.var_name())
                    self.eat(":")
                    tys.append(self.type_())
                    if not self.at(","):
                        break
                    self.next()
            self.eat(")")
            self.eat("{")
            body = self.expr()
            self.eat("}")
            return E.DictDef(idx, tuple(vs), body, env_types=tuple(tys), span=sp)
        if t.text == "<":
            return self.tuple_expr()
        if t.kind == "name" and t.text not in KEYWORDS:
            if t.text[0].isupper():
                self.next()
                if t.text in self.let_scope:
                    return E.LetVar(t.text, span=sp)
                return E.RelVar(t.text, span=sp)
            # lowercase: a projection path (bare variables live under sng)
            self.next()
            path = []
            while self.at("."):
                self.next()
                n = self.next()
                if n.kind != "int" or int(n.text) not in (1, 2):
                    raise ParseError("projection component must be 1 or 2", (n.line, n.col))
                path.append(int(n.text))
            if not path:
                raise ParseError(
                    f"bare variable {t.text!r} is not an expression; use 'sng {t.text}' "
                    f"or a projection",
                    sp,
                )
            return E.Proj(t.text, tuple(path), span=sp)
        raise ParseError(f"expected an expression, found {t.text!r}", sp)

    # -- predicates --------------------------------------------------------

    def cond(self):
        left = self.cond_and()
        while self.at("||"):
            self.next()
            right = self.cond_and()
            left = E.BoolOr(left, right)
        return left

    def cond_and(self):
        left = self.cond_atom()
        while self.at("&&"):
            self.next()
            right = self.cond_atom()
            left = E.BoolAnd(left, right)
        return left

    def cond_atom(self):
        t = self.peek()
        if t.text == "(":
            self.next()
            c = self.cond()
            self.eat(")")
            return c
        lhs = self.operand()
        op = self.next()
        if op.text not in ("==", "!=", "<", "<="):
            raise ParseError(f"expected a comparison, found {op.text!r}", (op.line, op.col))
        rhs = self.operand()
        return E.Cmp(op.text, lhs, rhs)

    def operand(self):
        t = self.peek()
        if t.kind == "int":
            self.next()
            return E.ConstAtom(int(t.text))
        if t.kind == "string":
            self.next()
            return E.ConstAtom(_unquote(t.text))
        if t.kind == "name" and t.text not in KEYWORDS and t.text[0].islower():
            self.next()
            path = []
            while self.at("."):
                self.next()
                n = self.next()
                if n.kind != "int" or int(n.text) not in (1, 2):
                    raise ParseError("projection component must be 1 or 2", (n.line, n.col))
                path.append(int(n.text))
            return E.PathRef(t.text, tuple(path))
        raise ParseError(f"expected a predicate operand, found {t.text!r}", (t.line, t.col))

    # -- names -------------------------------------------------------------

    def var_name(self) -> str:
        t = self.next()
        if t.kind != "name" or t.text in KEYWORDS or not (t.text[0].islower() or t.text[0] == "_"):
            raise ParseError(f"expected a variable name, found {t.text!r}", (t.line, t.col))
        return t.text

    def rel_name(self) -> str:
        t = self.next()
        if t.kind != "name" or not t.text[0].isupper():
            raise ParseError(f"expected a relation name, found {t.text!r}", (t.line, t.col))
        return t.text

    def idx_name(self) -> str:
        t = self.next()
        if t.kind != "name":
            raise ParseError(f"expected a static index, found {t.text!r}", (t.line, t.col))
        return t.text

    # -- values --------------------------------------------------------------

    def value(self):
        t = self.peek()
        if t.kind == "int":
            self.next()
            return int(t.text)
        if t.kind == "string":
            self.next()
            return _unquote(t.text)
        if t.text == "<":
            self.next()
            if self.at(">"):
                self.next()
                return ()
            parts = [self.value()]
            while self.at(","):
                self.next()
                parts.append(self.value())
            self.eat(">")
            if len(parts) < 2:
                raise ParseError("tuple value needs at least two components", (t.line, t.col))
            out = parts[-1]
            for p in reversed(parts[:-1]):
                out = (p, out)
            return out
        if t.text == "@":
            self.next()
            self.eat("(")
            idx = self.idx_name()
            env = []
            while self.at(","):
                self.next()
                env.append(self.value())
            self.eat(")")
            return Label(idx, tuple(env))
        if t.text == "{":
            self.next()
            entries: dict = {}
            if not self.at("}"):
                while True:
                    v = self.value()
                    m = 1
                    if self.at(":"):
                        self.next()
                        n = self.next()
                        if n.kind != "int":
                            raise ParseError("multiplicity must be an integer", (n.line, n.col))
                        m = int(n.text)
                    entries[v] = entries.get(v, 0) + m
                    if not self.at(","):
                        break
                    self.next()
            self.eat("}")
            return Bag(entries)
        if t.text == "[":
            self.next()
            entries: dict = {}
            supp = set()
            if not self.at("]") and not self.at(";"):
                while True:
                    l = self.value()
                    if not isinstance(l, Label):
                        raise ParseError("dictionary keys must be labels", (t.line, t.col))
                    self.eat("=>")
                    b = self.value()
                    if not isinstance(b, Bag):
                        raise ParseError("dictionary entries must be bags", (t.line, t.col))
                    entries[l] = b
                    if not self.at(","):
                        break
                    self.next()
            if self.at(";"):
                self.next()
                self.eat("supp")
                while True:
                    l = self.value()
                    if not isinstance(l, Label):
                        raise ParseError("support members must be labels", (t.line, t.col))
                    supp.add(l)
                    if not self.at(","):
                        break
                    self.next()
            self.eat("]")
            return DictVal(entries, frozenset(supp))
        raise ParseError(f"expected a value, found {t.text!r}", (t.line, t.col))

    def finish(self):
        t = self.peek()
        if t.kind != "eof":
            raise ParseError(f"trailing input starting at {t.text!r}", (t.line, t.col))


def _unquote(s: str) -> str:
    return s[1:-1].replace('\\"', '"').replace("\\\\", "\\")


def parse_query(text: str) -> E.Expr:
    p = _Parser(text)
    e = p.expr()
    p.finish()
    return e


def parse_type(text: str) -> T.SchemaType:
    p = _Parser(text)
    ty = p.type_()
    p.finish()
    return ty


def parse_value(text: str, ty: T.SchemaType | None = None):
    p = _Parser(text)
    v = p.value()
    p.finish()
    if ty is not None and not value_typecheck(v, ty):
        raise TypeMismatch(f"value does not have type {ty!r}")
    return v


def parse_relation_file(text: str) -> tuple[str, T.SchemaType, object]:
    """Parse a relation file: a ``name : type`` header, then a value literal."""
    p = _Parser(text)
    name = p.rel_name()
    p.eat(":")
    ty = p.type_()
    v = p.value()
    p.finish()
    if not value_typecheck(v, ty):
        raise TypeMismatch(f"relation {name}: value does not have declared type {ty!r}")
    return name, ty, v
