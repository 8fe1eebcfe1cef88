import random

import pytest

from nrcivm.parser import parse_query, parse_type, parse_value
from nrcivm.typecheck import Schema, check

RELATED_SRC = """
for m in M union sng <m.1,
  for m2 in M where m2.1 != m.1 && (m2.2.1 == m.2.1 || m2.2.2 == m.2.2)
  union sng m2.1>
"""

MOVIES_SRC = '{ <"Drive", "Drama", "Refn">, <"Skyfall", "Action", "Mendes">, <"Rush", "Action", "Howard"> }'
MOVIES_UPD_SRC = '{ <"Jarhead", "Drama", "Mendes"> }'


@pytest.fixture
def movie_schema():
    return Schema({"M": parse_type("Bag(<Base, Base, Base>)")})


@pytest.fixture
def related(movie_schema):
    e, _ = check(parse_query(RELATED_SRC), movie_schema)
    return e


@pytest.fixture
def movies():
    return parse_value(MOVIES_SRC)


@pytest.fixture
def movies_update():
    return parse_value(MOVIES_UPD_SRC)


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


def q(text, schema=None, mode="nrc"):
    e = parse_query(text)
    if schema is not None:
        e, _ = check(e, schema, mode=mode)
    return e


def big_movie_db(n, seed=0, genres=30, directors=30):
    from nrcivm.values import Bag

    r = random.Random(seed)
    return Bag(
        {
            (f"m{i}", (f"g{r.randrange(genres)}", f"d{r.randrange(directors)}")): 1
            for i in range(n)
        }
    )
