"""Interpreter for typed plans. Row-at-a-time nested-loop evaluation;
correctness and debuggability over speed (corpora here are ~10^4 rows).

Null semantics (three-valued logic):
  - any comparison or arithmetic with null yields null,
  - WHERE / HAVING / ON keep only rows where the predicate is exactly true,
  - aggregates skip nulls; COUNT(*) counts every row,
  - division by zero and failed CASTs yield null plus a warning record.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from seeker.model import Dtype, ISO_DATE_RE, Relation, SeekerError, UnknownTable

from .analyze import (
    AggregateNode,
    AggSpec,
    FilterNode,
    JoinNode,
    LimitNode,
    PlanNode,
    ProjectNode,
    ScanNode,
    SortNode,
    TAggRef,
    TBinary,
    TCast,
    TColumn,
    TExpr,
    TGroupKeyRef,
    TIsNull,
    TLike,
    TLiteral,
    TUnary,
    TypedPlan,
    UnionAllNode,
)


class SqlRuntimeError(SeekerError):
    pass


@dataclass
class Warning_:
    code: str
    message: str
    row: Optional[tuple] = None


class _Ctx:
    def __init__(self) -> None:
        self.warnings: list[Warning_] = []

    def warn(self, code: str, message: str, row: Optional[tuple] = None) -> None:
        self.warnings.append(Warning_(code, message, row))


# -- expression evaluation ------------------------------------------------------


def _eval(e: TExpr, row: tuple, ctx: _Ctx, env: Optional[dict] = None):
    if isinstance(e, TLiteral):
        return e.value
    if isinstance(e, TColumn):
        return row[e.offset]
    if isinstance(e, TBinary):
        if e.op == "AND":
            left = _eval(e.left, row, ctx, env)
            if left is False:
                return False
            right = _eval(e.right, row, ctx, env)
            if right is False:
                return False
            if left is None or right is None:
                return None
            return True
        if e.op == "OR":
            left = _eval(e.left, row, ctx, env)
            if left is True:
                return True
            right = _eval(e.right, row, ctx, env)
            if right is True:
                return True
            if left is None or right is None:
                return None
            return False
        left = _eval(e.left, row, ctx, env)
        right = _eval(e.right, row, ctx, env)
        if left is None or right is None:
            return None
        if e.op == "+":
            return left + right
        if e.op == "-":
            return left - right
        if e.op == "*":
            return left * right
        if e.op == "/":
            if right == 0:
                ctx.warn("division_by_zero", "division by zero yields null", row)
                return None
            return left / right
        if e.op == "=":
            return left == right
        if e.op == "!=":
            return left != right
        if e.op == "<":
            return left < right
        if e.op == "<=":
            return left <= right
        if e.op == ">":
            return left > right
        if e.op == ">=":
            return left >= right
        raise SqlRuntimeError(f"unknown operator {e.op!r}")
    if isinstance(e, TUnary):
        v = _eval(e.operand, row, ctx, env)
        if v is None:
            return None
        return (not v) if e.op == "NOT" else -v
    if isinstance(e, TCast):
        return _cast(_eval(e.operand, row, ctx, env), e.dtype, ctx, row)
    if isinstance(e, TLike):
        v = _eval(e.operand, row, ctx, env)
        p = _eval(e.pattern, row, ctx, env)
        if v is None or p is None:
            return None
        matched = _like_match(v, p)
        return (not matched) if e.negated else matched
    if isinstance(e, TIsNull):
        v = _eval(e.operand, row, ctx, env)
        return (v is not None) if e.negated else (v is None)
    if isinstance(e, TAggRef):
        assert env is not None, "aggregate outside aggregation context"
        return env["aggs"][e.slot]
    if isinstance(e, TGroupKeyRef):
        assert env is not None, "group key outside aggregation context"
        return env["keys"][e.slot]
    raise SqlRuntimeError(f"cannot evaluate {e!r}")


def _like_match(value: str, pattern: str) -> bool:
    regex = re.escape(pattern).replace(r"%", ".*").replace(r"_", ".")
    return re.fullmatch(regex, value, flags=re.DOTALL) is not None


def _cast(value, target: Dtype, ctx: _Ctx, row: Optional[tuple] = None):
    if value is None:
        return None
    try:
        if target is Dtype.INT:
            if isinstance(value, bool):
                return int(value)
            if isinstance(value, str):
                return int(value.strip())
            return int(value)  # float truncates toward zero
        if target is Dtype.FLOAT:
            if isinstance(value, bool):
                return float(value)
            return float(value.strip()) if isinstance(value, str) else float(value)
        if target is Dtype.TEXT:
            if isinstance(value, bool):
                return "true" if value else "false"
            if isinstance(value, float):
                return repr(value)
            return str(value)
        if target is Dtype.BOOL:
            if isinstance(value, bool):
                return value
            if isinstance(value, int):
                return bool(value)
            if isinstance(value, str):
                low = value.strip().lower()
                if low in ("true", "false"):
                    return low == "true"
            raise ValueError(value)
        if target is Dtype.DATE:
            if isinstance(value, str) and ISO_DATE_RE.match(value.strip()):
                return value.strip()
            raise ValueError(value)
    except (ValueError, TypeError):
        ctx.warn("cast_failed", f"cannot cast {value!r} to {target.value}", row)
        return None
    raise SqlRuntimeError(f"unknown cast target {target!r}")


# -- plan interpretation ---------------------------------------------------------


def _run_node(node: PlanNode, data: dict[str, Relation], ctx: _Ctx) -> list[tuple]:
    if isinstance(node, ScanNode):
        if node.table == "":
            return [()]  # FROM-less select evaluates over one empty row
        if node.table not in data:
            raise UnknownTable(node.table)
        return list(data[node.table].rows)
    if isinstance(node, FilterNode):
        return [
            row
            for row in _run_node(node.child, data, ctx)
            if _eval(node.predicate, row, ctx) is True
        ]
    if isinstance(node, JoinNode):
        left_rows = _run_node(node.left, data, ctx)
        right_rows = _run_node(node.right, data, ctx)
        right_width = len(node.right.schema)
        out = []
        for lrow in left_rows:
            matched = False
            for rrow in right_rows:
                combined = lrow + rrow
                if _eval(node.on, combined, ctx) is True:
                    out.append(combined)
                    matched = True
            if node.kind == "left" and not matched:
                out.append(lrow + (None,) * right_width)
        return out
    if isinstance(node, ProjectNode):
        return [
            tuple(_eval(e, row, ctx) for e in node.exprs)
            for row in _run_node(node.child, data, ctx)
        ]
    if isinstance(node, AggregateNode):
        return _run_aggregate(node, data, ctx)
    if isinstance(node, UnionAllNode):
        out = []
        for child in node.children:
            child_rows = _run_node(child, data, ctx)
            out.extend(_coerce_rows(child_rows, child.schema, node.schema))
        return out
    if isinstance(node, SortNode):
        rows = _run_node(node.child, data, ctx)
        # stable tie-break: full-row lexicographic order first
        rows.sort(key=_row_sort_key)
        for expr, ascending in reversed(node.keys):
            rows.sort(
                key=lambda row: _null_aware_key(_eval(expr, row, ctx)),
                reverse=not ascending,
            )
        return rows
    if isinstance(node, LimitNode):
        return _run_node(node.child, data, ctx)[: node.limit]
    raise SqlRuntimeError(f"unknown plan node {node!r}")


def _coerce_rows(rows, from_schema, to_schema):
    widen = [
        a.dtype is Dtype.INT and b.dtype is Dtype.FLOAT
        for a, b in zip(from_schema, to_schema)
    ]
    if not any(widen):
        return rows
    return [
        tuple(
            float(v) if w and v is not None else v for v, w in zip(row, widen)
        )
        for row in rows
    ]


def _null_aware_key(v):
    # nulls sort before everything; False < True for bools
    if v is None:
        return (0, 0)
    if isinstance(v, bool):
        return (1, int(v))
    if isinstance(v, (int, float)):
        return (1, v)
    return (2, v)


def _row_sort_key(row: tuple):
    return tuple(_null_aware_key(v) for v in row)


def _run_aggregate(node: AggregateNode, data: dict[str, Relation], ctx: _Ctx) -> list[tuple]:
    rows = _run_node(node.child, data, ctx)
    groups: dict[tuple, list[tuple]] = {}
    if node.group_keys:
        for row in rows:
            key = tuple(_eval(k, row, ctx) for k in node.group_keys)
            groups.setdefault(key, []).append(row)
    else:
        groups[()] = rows  # global aggregate: one group even when empty

    out = []
    for key, group_rows in groups.items():
        agg_values = [_compute_agg(spec, group_rows, ctx) for spec in node.aggregates]
        env = {"keys": key, "aggs": agg_values}
        if node.having is not None:
            if _eval(node.having, (), ctx, env) is not True:
                continue
        out.append(tuple(_eval(p, (), ctx, env) for p in node.projections))
    return out


def _compute_agg(spec: AggSpec, rows: list[tuple], ctx: _Ctx):
    if spec.func == "COUNT" and spec.arg is None:
        return len(rows)
    values = [
        v
        for row in rows
        if (v := _eval(spec.arg, row, ctx)) is not None
    ]
    if spec.func == "COUNT":
        return len(values)
    if not values:
        return None
    if spec.func == "SUM":
        return sum(values)
    if spec.func == "AVG":
        return sum(values) / len(values)
    if spec.func == "MIN":
        return min(values)
    if spec.func == "MAX":
        return max(values)
    raise SqlRuntimeError(f"unknown aggregate {spec.func!r}")


def execute(
    plan: TypedPlan,
    data: dict[str, Relation],
    warnings: Optional[list[Warning_]] = None,
    result_name: str = "result",
) -> Relation:
    """Run a typed plan against materialized relations.

    The result relation is named after plan.create_table when set, else
    result_name. Warning records (division by zero, failed casts) are
    appended to the warnings list when one is supplied.
    """
    ctx = _Ctx()
    rows = _run_node(plan.root, data, ctx)
    if warnings is not None:
        warnings.extend(ctx.warnings)
    name = plan.create_table or result_name
    return Relation(name=name, columns=plan.output_schema, rows=tuple(rows))
