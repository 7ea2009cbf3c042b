"""Differential oracle: the engine vs the brute-force reference evaluator."""

from __future__ import annotations

import random

import pytest

from seeker.sql import analyze, catalog_of, execute, parse

from .reference_sql import reference_eval
from .sqlgen import random_catalog, random_query, rows_equal


@pytest.mark.parametrize("seed", range(40))
def test_engine_matches_reference(seed):
    rng = random.Random(10_000 + seed)
    data = random_catalog(rng)
    for _ in range(5):
        sql = random_query(data, rng)
        stmt = parse(sql)
        plan = analyze(stmt, catalog_of(data))
        engine_rows = list(execute(plan, data).rows)
        ref_rows = reference_eval(stmt, data)
        assert rows_equal(engine_rows, ref_rows), (
            f"divergence on seed {seed}:\n{sql}\n"
            f"engine={sorted(engine_rows)[:10]}\nref={sorted(ref_rows)[:10]}"
        )
