"""Incremental view maintenance for a positive nested bag calculus.

The package is organized around a small pipeline:

    values     -- nested bag values, label dictionaries, canonical ordering
    types      -- schema types and the flat-tuple predicate
    exprs      -- query ASTs (including label constructs)
    typecheck  -- typing rules and the restricted-singleton check
    evaluator  -- reference interpreter
    delta      -- delta rewriting, degree, higher-order delta stacks
    cost       -- cost domains, size, orders, the cost transformation
    shred      -- query/value shredding, nesting, dictionary consistency
    engine     -- maintenance plans and materialized incremental state
    gen        -- random corpus generators and equivalence oracles
    parser     -- surface syntax for queries, values and types
    render     -- deterministic printers
    cli        -- command-line front end
"""

from .types import SchemaType, UNIT, BASE, LABEL, Prod, Bag, DictType, is_flat_tuple
from .values import Bag as BagVal, Label, DictVal, UNIT_VAL, bag, bag_add, bag_neg, canon_key
from .errors import (
    NrcError,
    ParseError,
    TypeMismatch,
    UnboundVariable,
    UnboundLabel,
    PredicateOnNonFlatTuple,
    SngStarInputDependent,
    UnrestrictedSingleton,
    DictUnionConflict,
    InconsistentUpdate,
    ShapeMismatch,
)

__all__ = [
    "SchemaType", "UNIT", "BASE", "LABEL", "Prod", "Bag", "DictType", "is_flat_tuple",
    "BagVal", "Label", "DictVal", "UNIT_VAL", "bag", "bag_add", "bag_neg", "canon_key",
    "NrcError", "ParseError", "TypeMismatch", "UnboundVariable", "UnboundLabel",
    "PredicateOnNonFlatTuple", "SngStarInputDependent", "UnrestrictedSingleton",
    "DictUnionConflict", "InconsistentUpdate", "ShapeMismatch",
]
