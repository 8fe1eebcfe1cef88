"""Command-line front end.

Subcommands: typecheck, eval, delta, degree, cost, shred, ivm (init / apply
/ read / stats), fuzz, oracle-check.  Queries come from an argument or a
file; databases are directories of relation files (a ``Name : type`` header
followed by a value literal).  ``--json`` switches any output to a
structured form.  Exit status: 0 on success, 1 on a domain error (a typed
diagnostic on stderr), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys

from . import engine as eng
from . import exprs as E
from . import types as T
from .cost import (
    CostEnv,
    cost,
    cost_env_from_instance,
    render_cost,
    render_nat,
    sym,
    tcost,
)
from .delta import Relation, degree, delta, delta_stack
from .errors import NrcError
from .evaluator import eval_query
from .gen import (
    GenConfig,
    check_delta_equiv,
    check_shred_equiv,
    check_shredded_delta_equiv,
    gen_db,
    gen_query,
    gen_schema,
    gen_update,
    shrink_instance,
    shrink_query,
)
from .parser import parse_query, parse_relation_file, parse_type, parse_value
from .render import render_query, render_type, render_value
from .shred import ctx_leaves, shred_query
from .typecheck import Schema, check
from .values import Bag, DictVal


def _read_query(args) -> str:
    if args.query_file:
        with open(args.query_file) as f:
            return f.read()
    if args.query:
        return args.query
    return sys.stdin.read()


def _load_db(path: str | None) -> tuple[Schema, dict]:
    rels: dict[str, T.SchemaType] = {}
    db: dict = {}
    if path:
        for fname in sorted(os.listdir(path)):
            full = os.path.join(path, fname)
            if not os.path.isfile(full) or fname.startswith("."):
                continue
            with open(full) as f:
                name, ty, v = parse_relation_file(f.read())
            rels[name] = ty
            db[name] = v
    return Schema(rels), db


def _emit(args, payload: dict, text: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text)


def _value_json(v):
    if v == ():
        return {"unit": True}
    if isinstance(v, (int, str)):
        return v
    if isinstance(v, tuple):
        return {"tuple": [_value_json(v[0]), _value_json(v[1])]}
    if isinstance(v, Bag):
        return {"bag": [[_value_json(x), m] for x, m in v.sorted_items()]}
    if isinstance(v, DictVal):
        return {
            "dict": [[render_value(l), _value_json(b)] for l, b in v.sorted_entries()],
            "supp": sorted(render_value(l) for l in v.support),
        }
    return {"label": render_value(v)}


def cmd_typecheck(args) -> int:
    schema, _db = _load_db(args.db)
    e = parse_query(_read_query(args))
    _e2, ty = check(e, schema, mode="inc" if args.inc else "nrc")
    _emit(args, {"type": render_type(ty)}, render_type(ty))
    return 0


def cmd_eval(args) -> int:
    schema, db = _load_db(args.db)
    e, _ty = check(parse_query(_read_query(args)), schema)
    v = eval_query(e, db)
    _emit(args, {"value": _value_json(v), "text": render_value(v)}, render_value(v))
    return 0


def cmd_delta(args) -> int:
    schema, _db = _load_db(args.db)
    e, _ty = check(parse_query(_read_query(args)), schema, mode="inc")
    if args.order and args.order > 1:
        st = delta_stack(e, Relation(args.rel), schema=schema)
        if args.order > st.depth:
            raise NrcError(
                f"stack for {args.rel} has depth {st.depth}; no level {args.order}"
            )
        d = st.levels[args.order]
    else:
        d = delta(e, Relation(args.rel), schema=schema)
    _emit(args, {"delta": render_query(d)}, render_query(d))
    return 0


def cmd_degree(args) -> int:
    schema, _db = _load_db(args.db)
    e, _ty = check(parse_query(_read_query(args)), schema, mode="inc")
    total = degree(e)
    per_rel = {r: degree(e, rel=r) for r in sorted(E.free_relations(e))}
    text = str(total)
    if per_rel:
        text += "  (" + ", ".join(f"{r}: {d}" for r, d in per_rel.items()) + ")"
    _emit(args, {"degree": total, "per_relation": per_rel}, text)
    return 0


def cmd_cost(args) -> int:
    schema, db = _load_db(args.db)
    e, _ty = check(parse_query(_read_query(args)), schema)
    if args.sizes:
        cards: dict = {}
        for item in args.sizes.split(","):
            name, _, val = item.partition("=")
            name = name.strip()
            val = val.strip()
            cards[name] = int(val) if val.isdigit() else sym(val or f"n_{name}")
        from .cost import symbolic_cost_env

        env = symbolic_cost_env(schema, cards)
    else:
        env = cost_env_from_instance(db, schema)
    c = cost(e, env)
    t = tcost(c)
    text = f"{render_cost(c)}  tcost: {render_nat(t)}"
    _emit(args, {"cost": render_cost(c), "tcost": render_nat(t)}, text)
    return 0


def cmd_shred(args) -> int:
    schema, _db = _load_db(args.db)
    e, _ty = check(parse_query(_read_query(args)), schema)
    depth = args.depth if args.depth is not None and args.depth >= 0 else None
    sq = shred_query(e, schema, depth)
    lines = [f"flat: {render_query(sq.flat)}"]
    ctx = {}
    for path, node in ctx_leaves(sq.ctx):
        key = "".join(str(s) for s in path) or "-"
        ctx[key] = render_query(node.dct)
        lines.append(f"ctx {key}: {ctx[key]}")
    _emit(args, {"flat": render_query(sq.flat), "ctx": ctx}, "\n".join(lines))
    return 0


def _ivm_state_path(args) -> str:
    return args.state


def cmd_ivm(args) -> int:
    if args.action == "init":
        schema, db = _load_db(args.db)
        qtext = _read_query(args)
        e = parse_query(qtext)
        plan = eng.compile(e, schema, args.mode)
        state = eng.initialize(plan, db)
        with open(args.state, "w") as f:
            f.write(eng.save_state(state, render_query(plan.original)))
        _emit(args, {"initialized": True}, f"initialized state at {args.state}")
        return 0
    with open(args.state) as f:
        state, qtext = eng.load_state(f.read())
    if args.action == "apply":
        with open(args.update) as f:
            name, ty, v = parse_relation_file(f.read())
        report = eng.apply_update(state, name, v)
        with open(args.state, "w") as f:
            f.write(eng.save_state(state, qtext))
        _emit(
            args,
            {"applied": name, "phases": report.phases, "touched": report.total},
            f"applied update to {name}; touched {report.total} tuples "
            + " ".join(f"{k}={v}" for k, v in sorted(report.phases.items())),
        )
        return 0
    if args.action == "read":
        v = eng.read_view(state)
        _emit(args, {"view": _value_json(v), "text": render_value(v)}, render_value(v))
        return 0
    if args.action == "stats":
        payload = {
            "phases": state.phases,
            "relations": {n: len(sv.flat) for n, sv in state.base.items()},
            "view_rows": len(state.view_flat),
            "aux": {n: len(v) for n, v in state.aux.items()},
        }
        text = "\n".join(
            [f"view rows: {payload['view_rows']}"]
            + [f"phase {k}: {v}" for k, v in sorted(state.phases.items())]
        )
        _emit(args, payload, text)
        return 0
    raise NrcError(f"unknown ivm action {args.action}")


def _write_counterexample(outdir: str, cx) -> None:
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "query.nrc"), "w") as f:
        f.write(render_query(cx.query) + "\n")
    for name in cx.schema.names():
        if name in cx.db:
            with open(os.path.join(outdir, f"{name}.rel"), "w") as f:
                f.write(
                    f"{name} : {render_type(cx.schema.lookup(name))}\n"
                    + render_value(cx.db[name])
                    + "\n"
                )
    if cx.rel is not None:
        with open(os.path.join(outdir, "update.rel"), "w") as f:
            f.write(
                f"{cx.rel} : {render_type(cx.schema.lookup(cx.rel))}\n"
                + render_value(cx.update)
                + "\n"
            )
    with open(os.path.join(outdir, "kind.txt"), "w") as f:
        f.write(cx.kind + "\n")


def cmd_fuzz(args) -> int:
    cfg = GenConfig(seed=args.seed, mode=args.mode)
    failures = 0
    for i in range(args.cases):
        rng = random.Random(args.seed * 1_000_003 + i)
        schema = gen_schema(rng, cfg)
        db = gen_db(cfg, schema, rng)
        h = gen_query(cfg, schema, rng)
        rel = rng.choice(schema.names())
        upd = gen_update(cfg, db[rel], schema.lookup(rel), rng)
        if cfg.mode == "inc":
            cx = check_delta_equiv(h, schema, db, rel, upd)
        else:
            cx = check_shred_equiv(h, schema, db) or check_shredded_delta_equiv(
                h, schema, db, rel, upd
            )
        if cx is None:
            continue
        failures += 1
        # Minimize before reporting.
        if cx.kind.startswith("shred-preservation"):
            fails = lambda d, u: check_shred_equiv(cx.query, schema, d) is not None
        elif cx.kind.startswith("delta"):
            fails = lambda d, u: check_delta_equiv(cx.query, schema, d, rel, u) is not None
        else:
            fails = (
                lambda d, u: check_shredded_delta_equiv(cx.query, schema, d, rel, u)
                is not None
            )
        db2, upd2 = shrink_instance(fails, dict(cx.db), cx.update, cx.rel)
        cx.db, cx.update = db2, upd2
        print(f"case {i}: {cx.kind} FAILED", file=sys.stderr)
        if args.out:
            _write_counterexample(os.path.join(args.out, f"case{i}"), cx)
        if failures >= args.max_failures:
            break
    msg = f"{args.cases} cases, {failures} failures"
    _emit(args, {"cases": args.cases, "failures": failures}, msg)
    return 1 if failures else 0


def cmd_oracle_check(args) -> int:
    qpath = os.path.join(args.case, "query.nrc")
    with open(qpath) as f:
        h = parse_query(f.read())
    rels: dict[str, T.SchemaType] = {}
    db: dict = {}
    upd_name, upd = None, None
    for fname in sorted(os.listdir(args.case)):
        if not fname.endswith(".rel"):
            continue
        with open(os.path.join(args.case, fname)) as f:
            name, ty, v = parse_relation_file(f.read())
        if fname == "update.rel":
            upd_name, upd = name, v
        else:
            rels[name] = ty
            db[name] = v
    schema = Schema(rels)
    checks = [("shred-preservation", lambda: check_shred_equiv(h, schema, db))]
    if upd_name is not None:
        checks.append(
            ("delta", lambda: check_delta_equiv(h, schema, db, upd_name, upd))
            if not any(isinstance(n, E.Sng) for n in E.walk(check(h, schema)[0]))
            else (
                "shredded-delta",
                lambda: check_shredded_delta_equiv(h, schema, db, upd_name, upd),
            )
        )
    failed = []
    for kind, fn in checks:
        cx = fn()
        if cx is not None:
            failed.append(kind)
            print(cx.describe(), file=sys.stderr)
    msg = "reproduced: " + ", ".join(failed) if failed else "all checks pass"
    _emit(args, {"failed": failed}, msg)
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="nrcivm",
        description="Incremental maintenance for nested bag queries: evaluate, "
        "derive deltas, estimate costs, shred, and maintain views.",
    )
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, query=True):
        if query:
            sp.add_argument("query", nargs="?", help="query text (or stdin)")
            sp.add_argument("--query-file")
        sp.add_argument("--db", help="directory of relation files")
        sp.add_argument("--json", action="store_true")

    sp = sub.add_parser("typecheck", help="type a query against a schema")
    common(sp)
    sp.add_argument("--inc", action="store_true", help="restrict singletons")
    sp.set_defaults(fn=cmd_typecheck)

    sp = sub.add_parser("eval", help="evaluate a query on a database")
    common(sp)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("delta", help="derive a delta query")
    common(sp)
    sp.add_argument("--rel", required=True)
    sp.add_argument("--order", type=int, default=1)
    sp.set_defaults(fn=cmd_delta)

    sp = sub.add_parser("degree", help="degree of a query")
    common(sp)
    sp.set_defaults(fn=cmd_degree)

    sp = sub.add_parser("cost", help="cost bound of a query")
    common(sp)
    sp.add_argument("--sizes", help="symbolic sizes, e.g. M=n,S=5")
    sp.set_defaults(fn=cmd_cost)

    sp = sub.add_parser("shred", help="shred a query into flat + context")
    common(sp)
    sp.add_argument("--depth", type=int, default=None)
    sp.set_defaults(fn=cmd_shred)

    sp = sub.add_parser("ivm", help="maintain a materialized view")
    sp.add_argument("action", choices=["init", "apply", "read", "stats"])
    sp.add_argument("query", nargs="?")
    sp.add_argument("--query-file")
    sp.add_argument("--db")
    sp.add_argument("--state", required=True)
    sp.add_argument("--update", help="update file for apply")
    sp.add_argument("--mode", choices=["classic", "recursive"], default="classic")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(fn=cmd_ivm)

    sp = sub.add_parser("fuzz", help="random corpus checks")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--cases", type=int, default=100)
    sp.add_argument("--mode", choices=["nrc", "inc"], default="nrc")
    sp.add_argument("--out", help="directory for counterexamples")
    sp.add_argument("--max-failures", type=int, default=5)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(fn=cmd_fuzz)

    sp = sub.add_parser("oracle-check", help="re-run a saved counterexample")
    sp.add_argument("case", help="counterexample directory")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(fn=cmd_oracle_check)

    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except NrcError as err:
        print(f"error[{err.code}]: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
