"""Brute-force reference evaluator for the differential oracle.

Interprets the parsed AST directly over dict-keyed rows: nested loops,
no analysis, no plan. Deliberately shares no evaluation code with
seeker.sql.execute so the two can check each other.
"""

from __future__ import annotations

import re

from seeker.model import Dtype, Relation
from seeker.sql import ast


class RefError(Exception):
    pass


def _lookup(env: dict, table, name):
    if table is not None:
        key = (table, name)
        if key not in env:
            raise RefError(f"unknown column {table}.{name}")
        return env[key]
    hits = [v for (t, n), v in env.items() if n == name]
    keys = {t for (t, n) in env if n == name}
    if not keys:
        raise RefError(f"unknown column {name}")
    if len(keys) > 1:
        raise RefError(f"ambiguous column {name}")
    return hits[0]


def _eval(e, env):
    if isinstance(e, ast.Literal):
        return e.value
    if isinstance(e, ast.ColumnRef):
        return _lookup(env, e.table, e.name)
    if isinstance(e, ast.BinaryOp):
        if e.op == "AND":
            l = _eval(e.left, env)
            r = _eval(e.right, env)
            if l is False or r is False:
                return False
            if l is None or r is None:
                return None
            return True
        if e.op == "OR":
            l = _eval(e.left, env)
            r = _eval(e.right, env)
            if l is True or r is True:
                return True
            if l is None or r is None:
                return None
            return False
        l = _eval(e.left, env)
        r = _eval(e.right, env)
        if l is None or r is None:
            return None
        return {
            "+": lambda: l + r,
            "-": lambda: l - r,
            "*": lambda: l * r,
            "/": lambda: None if r == 0 else l / r,
            "=": lambda: l == r,
            "!=": lambda: l != r,
            "<": lambda: l < r,
            "<=": lambda: l <= r,
            ">": lambda: l > r,
            ">=": lambda: l >= r,
        }[e.op]()
    if isinstance(e, ast.UnaryOp):
        v = _eval(e.operand, env)
        if v is None:
            return None
        return (not v) if e.op == "NOT" else -v
    if isinstance(e, ast.Cast):
        return _ref_cast(_eval(e.operand, env), e.target)
    if isinstance(e, ast.Like):
        v = _eval(e.operand, env)
        p = _eval(e.pattern, env)
        if v is None or p is None:
            return None
        rx = re.escape(p).replace(r"%", ".*").replace(r"_", ".")
        hit = re.fullmatch(rx, v, flags=re.DOTALL) is not None
        return (not hit) if e.negated else hit
    if isinstance(e, ast.IsNull):
        v = _eval(e.operand, env)
        return (v is not None) if e.negated else (v is None)
    raise RefError(f"cannot evaluate {e!r}")


def _ref_cast(v, target: Dtype):
    if v is None:
        return None
    try:
        if target is Dtype.INT:
            return int(v.strip()) if isinstance(v, str) else int(v)
        if target is Dtype.FLOAT:
            return float(v.strip()) if isinstance(v, str) else float(v)
        if target is Dtype.TEXT:
            if isinstance(v, bool):
                return "true" if v else "false"
            return repr(v) if isinstance(v, float) else str(v)
        if target is Dtype.BOOL:
            if isinstance(v, bool):
                return v
            if isinstance(v, int):
                return bool(v)
            if isinstance(v, str) and v.strip().lower() in ("true", "false"):
                return v.strip().lower() == "true"
            raise ValueError(v)
        if target is Dtype.DATE:
            if isinstance(v, str) and re.match(r"^\d{4}-\d{2}-\d{2}$", v.strip()):
                return v.strip()
            raise ValueError(v)
    except (ValueError, TypeError):
        return None
    raise RefError(f"unknown cast target {target}")


def _from_envs(item, data: dict[str, Relation]) -> list[dict]:
    if isinstance(item, ast.TableRef):
        rel = data[item.name]
        alias = item.alias or item.name
        return [
            {(alias, c): v for c, v in zip(rel.column_names(), row)}
            for row in rel.rows
        ]
    left_envs = _from_envs(item.left, data)
    rel = data[item.right.name]
    alias = item.right.alias or item.right.name
    right_envs = [
        {(alias, c): v for c, v in zip(rel.column_names(), row)} for row in rel.rows
    ]
    null_right = {(alias, c): None for c in rel.column_names()}
    out = []
    for le in left_envs:
        matched = False
        for re_ in right_envs:
            merged = {**le, **re_}
            if _eval(item.on, merged) is True:
                out.append(merged)
                matched = True
        if item.kind == "left" and not matched:
            out.append({**le, **null_right})
    return out


def _is_agg_expr(e) -> bool:
    if isinstance(e, ast.FuncCall):
        return True
    if isinstance(e, ast.BinaryOp):
        return _is_agg_expr(e.left) or _is_agg_expr(e.right)
    if isinstance(e, ast.UnaryOp):
        return _is_agg_expr(e.operand)
    if isinstance(e, ast.Cast):
        return _is_agg_expr(e.operand)
    if isinstance(e, ast.Like):
        return _is_agg_expr(e.operand) or _is_agg_expr(e.pattern)
    if isinstance(e, ast.IsNull):
        return _is_agg_expr(e.operand)
    return False


def _eval_agg_expr(e, group: list[dict], group_by: tuple):
    """Evaluate a projection expression in grouped context."""
    for key_ast in group_by:
        if e == key_ast:
            return _eval(key_ast, group[0]) if group else None
    if isinstance(e, ast.FuncCall):
        if isinstance(e.arg, ast.Star):
            return len(group)
        vals = [v for env in group if (v := _eval(e.arg, env)) is not None]
        if e.name == "COUNT":
            return len(vals)
        if not vals:
            return None
        if e.name == "SUM":
            return sum(vals)
        if e.name == "AVG":
            return sum(vals) / len(vals)
        if e.name == "MIN":
            return min(vals)
        return max(vals)
    if isinstance(e, ast.Literal):
        return e.value
    if isinstance(e, ast.BinaryOp):
        l = _eval_agg_expr(e.left, group, group_by)
        r = _eval_agg_expr(e.right, group, group_by)
        if e.op == "AND":
            if l is False or r is False:
                return False
            return None if (l is None or r is None) else True
        if e.op == "OR":
            if l is True or r is True:
                return True
            return None if (l is None or r is None) else False
        if l is None or r is None:
            return None
        return {
            "+": lambda: l + r,
            "-": lambda: l - r,
            "*": lambda: l * r,
            "/": lambda: None if r == 0 else l / r,
            "=": lambda: l == r,
            "!=": lambda: l != r,
            "<": lambda: l < r,
            "<=": lambda: l <= r,
            ">": lambda: l > r,
            ">=": lambda: l >= r,
        }[e.op]()
    if isinstance(e, ast.UnaryOp):
        v = _eval_agg_expr(e.operand, group, group_by)
        if v is None:
            return None
        return (not v) if e.op == "NOT" else -v
    if isinstance(e, ast.Cast):
        return _ref_cast(_eval_agg_expr(e.operand, group, group_by), e.target)
    if isinstance(e, ast.IsNull):
        v = _eval_agg_expr(e.operand, group, group_by)
        return (v is not None) if e.negated else (v is None)
    raise RefError(f"cannot evaluate in aggregate context: {e!r}")


def _run_select(sel: ast.Select, data: dict[str, Relation]) -> list[tuple]:
    envs = _from_envs(sel.from_clause, data) if sel.from_clause else [{}]
    if sel.where is not None:
        envs = [env for env in envs if _eval(sel.where, env) is True]

    has_agg = bool(sel.group_by) or sel.having is not None or any(
        _is_agg_expr(it.expr) for it in sel.items
    )
    if not has_agg:
        out = []
        for env in envs:
            row = []
            for item in sel.items:
                if isinstance(item.expr, ast.Star):
                    row.extend(env[k] for k in env)
                else:
                    row.append(_eval(item.expr, env))
            out.append(tuple(row))
        return out

    groups: dict[tuple, list[dict]] = {}
    if sel.group_by:
        for env in envs:
            key = tuple(_eval(g, env) for g in sel.group_by)
            groups.setdefault(key, []).append(env)
    else:
        groups[()] = envs

    out = []
    for _key, group in groups.items():
        if sel.having is not None:
            if _eval_agg_expr(sel.having, group, sel.group_by) is not True:
                continue
        out.append(
            tuple(
                _eval_agg_expr(it.expr, group, sel.group_by) for it in sel.items
            )
        )
    return out


def _sort_key_cell(v):
    if v is None:
        return (0, 0)
    if isinstance(v, bool):
        return (1, int(v))
    if isinstance(v, (int, float)):
        return (1, v)
    return (2, v)


def reference_eval(stmt, data: dict[str, Relation]) -> list[tuple]:
    """Evaluate a parsed statement and return the result rows."""
    if isinstance(stmt, ast.CreateTableAs):
        query = stmt.query
    else:
        query = stmt
    rows: list[tuple] = []
    for sel in query.selects:
        rows.extend(_run_select(sel, data))

    if query.order_by:
        # the projected row is visible to ORDER BY through output names
        names = _output_names(query.selects[0])
        rows.sort(key=lambda r: tuple(_sort_key_cell(v) for v in r))
        for item in reversed(query.order_by):
            def key(row, item=item):
                env = {("", n): v for n, v in zip(names, row)}
                return _sort_key_cell(_eval(_strip_qualifiers(item.expr), env))

            rows.sort(key=key, reverse=not item.ascending)
    if query.limit is not None:
        rows = rows[: query.limit]
    return rows


def _strip_qualifiers(e):
    if isinstance(e, ast.ColumnRef):
        return ast.ColumnRef(e.name, "")
    if isinstance(e, ast.BinaryOp):
        return ast.BinaryOp(e.op, _strip_qualifiers(e.left), _strip_qualifiers(e.right))
    if isinstance(e, ast.UnaryOp):
        return ast.UnaryOp(e.op, _strip_qualifiers(e.operand))
    if isinstance(e, ast.Cast):
        return ast.Cast(_strip_qualifiers(e.operand), e.target)
    if isinstance(e, ast.IsNull):
        return ast.IsNull(_strip_qualifiers(e.operand), e.negated)
    if isinstance(e, ast.Like):
        return ast.Like(
            _strip_qualifiers(e.operand), _strip_qualifiers(e.pattern), e.negated
        )
    return e


def _output_names(sel: ast.Select) -> list[str]:
    names = []
    counts: dict[str, int] = {}
    for i, item in enumerate(sel.items):
        if item.alias:
            base = item.alias
        elif isinstance(item.expr, ast.ColumnRef):
            base = item.expr.name
        else:
            base = f"col{i}"
        if base in counts:
            counts[base] += 1
            names.append(f"{base}_{counts[base]}")
        else:
            counts[base] = 0
            names.append(base)
    return names
