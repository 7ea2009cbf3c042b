"""Seeded random generator of relations and SQL text for differential tests."""

from __future__ import annotations

import math
import random

from seeker.model import ColumnSpec, Dtype, Relation

_WORDS = ["red", "blue", "green", "tariff", "price", "x%y", "a_b", ""]


def random_catalog(rng: random.Random) -> dict[str, Relation]:
    data = {}
    n_tables = rng.randint(1, 3)
    col_counter = 0
    for ti in range(n_tables):
        name = f"t{ti}"
        n_cols = rng.randint(2, 4)
        cols = []
        for _ in range(n_cols):
            dtype = rng.choice([Dtype.INT, Dtype.INT, Dtype.FLOAT, Dtype.TEXT])
            cols.append(ColumnSpec(f"c{col_counter}", dtype))
            col_counter += 1
        n_rows = rng.randint(0, 50)
        rows = []
        for _ in range(n_rows):
            row = []
            for col in cols:
                if rng.random() < 0.1:
                    row.append(None)
                elif col.dtype is Dtype.INT:
                    row.append(rng.randint(-10, 10))
                elif col.dtype is Dtype.FLOAT:
                    row.append(round(rng.uniform(-10, 10), 3))
                else:
                    row.append(rng.choice(_WORDS))
            rows.append(tuple(row))
        data[name] = Relation(name, tuple(cols), tuple(rows))
    return data


def _literal_for(dtype: Dtype, rng: random.Random) -> str:
    if dtype is Dtype.INT:
        return str(rng.randint(-10, 10))
    if dtype is Dtype.FLOAT:
        return repr(round(rng.uniform(-10, 10), 3))
    return "'" + rng.choice(_WORDS).replace("'", "''") + "'"


def _numeric_expr(cols, rng: random.Random, depth: int = 0) -> str:
    numeric = [c for c in cols if c[1] in (Dtype.INT, Dtype.FLOAT)]
    if not numeric or (depth > 1 or rng.random() < 0.4):
        if numeric and rng.random() < 0.7:
            return rng.choice(numeric)[0]
        return str(rng.randint(1, 9))
    op = rng.choice(["+", "-", "*", "/"])
    return (
        f"({_numeric_expr(cols, rng, depth + 1)} {op} "
        f"{_numeric_expr(cols, rng, depth + 1)})"
    )


def _predicate(cols, rng: random.Random) -> str:
    name, dtype = rng.choice(cols)
    roll = rng.random()
    if roll < 0.15:
        return f"{name} IS NULL"
    if roll < 0.25:
        return f"{name} IS NOT NULL"
    if dtype is Dtype.TEXT:
        if rng.random() < 0.5:
            pattern = rng.choice(["red", "b%", "%e%", "_reen", "tar%"])
            return f"{name} LIKE '{pattern}'"
        return f"{name} = {_literal_for(dtype, rng)}"
    op = rng.choice(["=", "!=", "<", "<=", ">", ">="])
    return f"{name} {op} {_literal_for(dtype, rng)}"


def _where_clause(cols, rng: random.Random) -> str:
    n = rng.randint(0, 3)
    if n == 0:
        return ""
    parts = [_predicate(cols, rng) for _ in range(n)]
    joined = parts[0]
    for p in parts[1:]:
        joined = f"{joined} {rng.choice(['AND', 'OR'])} {p}"
    return " WHERE " + joined


def _qualified_cols(data, table_names, use_alias=True):
    cols = []
    for tn in table_names:
        for c in data[tn].columns:
            prefix = f"{tn}." if use_alias else ""
            cols.append((f"{prefix}{c.name}", c.dtype))
    return cols


def random_query(data: dict[str, Relation], rng: random.Random) -> str:
    kind = rng.choice(["simple", "simple", "join", "aggregate", "union"])
    tables = sorted(data)

    if kind == "join" and len(tables) >= 2:
        n_join = rng.randint(2, min(3, len(tables)))
        chosen = rng.sample(tables, n_join)
        cols = _qualified_cols(data, chosen)
        from_sql = chosen[0]
        ok = True
        for left_i in range(1, n_join):
            right = chosen[left_i]
            left_candidates = _qualified_cols(data, chosen[:left_i])
            right_candidates = _qualified_cols(data, [right])
            pairs = [
                (l, r)
                for l, lt in left_candidates
                for r, rt in right_candidates
                if lt == rt
                or (lt in (Dtype.INT, Dtype.FLOAT) and rt in (Dtype.INT, Dtype.FLOAT))
            ]
            if not pairs:
                ok = False
                break
            l, r = rng.choice(pairs)
            jk = rng.choice(["INNER JOIN", "LEFT JOIN"])
            from_sql += f" {jk} {right} ON {l} = {r}"
        if ok:
            n_proj = rng.randint(1, min(4, len(cols)))
            proj_cols = rng.sample(cols, n_proj)
            items = ", ".join(
                f"{c} AS o{i}" for i, (c, _) in enumerate(proj_cols)
            )
            return f"SELECT {items} FROM {from_sql}" + _where_clause(cols, rng)
        kind = "simple"

    if kind == "aggregate":
        table = rng.choice(tables)
        cols = [(c.name, c.dtype) for c in data[table].columns]
        numeric = [c for c in cols if c[1] in (Dtype.INT, Dtype.FLOAT)]
        group_cols = rng.sample(cols, rng.randint(0, min(2, len(cols))))
        items = []
        for i, (name, _) in enumerate(group_cols):
            items.append(f"{name} AS k{i}")
        items.append("COUNT(*) AS n")
        if numeric:
            agg = rng.choice(["SUM", "AVG", "MIN", "MAX"])
            items.append(f"{agg}({rng.choice(numeric)[0]}) AS a0")
        sql = f"SELECT {', '.join(items)} FROM {table}"
        sql += _where_clause(cols, rng)
        if group_cols:
            sql += " GROUP BY " + ", ".join(n for n, _ in group_cols)
            if rng.random() < 0.3:
                sql += f" HAVING COUNT(*) >= {rng.randint(1, 3)}"
        return sql

    if kind == "union":
        table = rng.choice(tables)
        cols = [(c.name, c.dtype) for c in data[table].columns]
        name, dtype = rng.choice(cols)
        left = f"SELECT {name} AS u FROM {table}" + _where_clause(cols, rng)
        right = f"SELECT {name} AS u FROM {table}" + _where_clause(cols, rng)
        return f"{left} UNION ALL {right}"

    table = rng.choice(tables)
    cols = [(c.name, c.dtype) for c in data[table].columns]
    items = []
    out_names = []
    for i in range(rng.randint(1, 4)):
        roll = rng.random()
        if roll < 0.5:
            name, _ = rng.choice(cols)
            items.append(f"{name} AS o{i}")
        elif roll < 0.8:
            items.append(f"{_numeric_expr(cols, rng)} AS o{i}")
        else:
            items.append(f"CAST({rng.choice(cols)[0]} AS text) AS o{i}")
        out_names.append(f"o{i}")
    sql = f"SELECT {', '.join(items)} FROM {table}" + _where_clause(cols, rng)
    if rng.random() < 0.5:
        key = rng.choice(out_names)
        sql += f" ORDER BY {key}{'' if rng.random() < 0.5 else ' DESC'}"
        if rng.random() < 0.5:
            sql += f" LIMIT {rng.randint(0, 20)}"
    return sql


# -- multiset comparison with float tolerance ---------------------------------


def _canon_cell(v):
    if v is None:
        return (0, "")
    if isinstance(v, bool):
        return (1, v)
    if isinstance(v, (int, float)):
        if isinstance(v, float) and math.isnan(v):
            return (2, "nan")
        return (3, float(f"{float(v):.12g}"))
    return (4, v)


def rows_equal(a: list[tuple], b: list[tuple], rel_tol: float = 1e-9) -> bool:
    """Multiset equality over rows, floats compared with tolerance."""
    if len(a) != len(b):
        return False
    ka = sorted(a, key=lambda r: tuple(_canon_cell(v) for v in r))
    kb = sorted(b, key=lambda r: tuple(_canon_cell(v) for v in r))
    for ra, rb in zip(ka, kb):
        if len(ra) != len(rb):
            return False
        for va, vb in zip(ra, rb):
            if va is None or vb is None:
                if va is not vb:
                    return False
            elif isinstance(va, bool) or isinstance(vb, bool):
                if bool(va) != bool(vb):
                    return False
            elif isinstance(va, (int, float)) and isinstance(vb, (int, float)):
                if not math.isclose(va, vb, rel_tol=rel_tol, abs_tol=rel_tol):
                    return False
            elif va != vb:
                return False
    return True
