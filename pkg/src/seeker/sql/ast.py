"""AST node types for the SQL subset, plus unparse().

The grammar covers SELECT-FROM-WHERE-GROUP BY-HAVING-ORDER BY-LIMIT,
INNER/LEFT JOIN, UNION ALL, CREATE TABLE AS SELECT, arithmetic,
comparisons, AND/OR/NOT, LIKE, IS [NOT] NULL, and CAST between the five
dtypes. Aggregates: COUNT, SUM, AVG, MIN, MAX.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from seeker.model import Dtype

AGGREGATE_NAMES = ("COUNT", "SUM", "AVG", "MIN", "MAX")


@dataclass(frozen=True)
class Literal:
    value: Union[int, float, str, bool, None]


@dataclass(frozen=True)
class ColumnRef:
    name: str
    table: Optional[str] = None


@dataclass(frozen=True)
class Star:
    """Bare * in a select list or COUNT(*)."""


@dataclass(frozen=True)
class BinaryOp:
    op: str  # + - * / = != < <= > >= AND OR
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class UnaryOp:
    op: str  # NOT, -
    operand: "Expr"


@dataclass(frozen=True)
class FuncCall:
    name: str  # uppercase aggregate name
    arg: "Expr"  # Star() for COUNT(*)


@dataclass(frozen=True)
class Cast:
    operand: "Expr"
    target: Dtype


@dataclass(frozen=True)
class Like:
    operand: "Expr"
    pattern: "Expr"
    negated: bool = False


@dataclass(frozen=True)
class IsNull:
    operand: "Expr"
    negated: bool = False


Expr = Union[Literal, ColumnRef, Star, BinaryOp, UnaryOp, FuncCall, Cast, Like, IsNull]


@dataclass(frozen=True)
class SelectItem:
    expr: Expr
    alias: Optional[str] = None


@dataclass(frozen=True)
class TableRef:
    name: str
    alias: Optional[str] = None


@dataclass(frozen=True)
class Join:
    left: "FromItem"
    right: TableRef
    kind: str  # "inner" | "left"
    on: Expr


FromItem = Union[TableRef, Join]


@dataclass(frozen=True)
class OrderItem:
    expr: Expr
    ascending: bool = True


@dataclass(frozen=True)
class Select:
    items: tuple[SelectItem, ...]
    from_clause: Optional[FromItem] = None
    where: Optional[Expr] = None
    group_by: tuple[Expr, ...] = ()
    having: Optional[Expr] = None


@dataclass(frozen=True)
class Query:
    """One or more selects joined by UNION ALL; ORDER BY / LIMIT apply to
    the combined result."""

    selects: tuple[Select, ...]
    order_by: tuple[OrderItem, ...] = ()
    limit: Optional[int] = None


@dataclass(frozen=True)
class CreateTableAs:
    table_name: str
    query: Query


Statement = Union[Query, CreateTableAs]


# ---------------------------------------------------------------------------
# unparse
# ---------------------------------------------------------------------------

_PRECEDENCE = {
    "OR": 1,
    "AND": 2,
    "=": 4,
    "!=": 4,
    "<": 4,
    "<=": 4,
    ">": 4,
    ">=": 4,
    "+": 5,
    "-": 5,
    "*": 6,
    "/": 6,
}


def _unparse_expr(e: Expr, parent_prec: int = 0) -> str:
    if isinstance(e, Literal):
        v = e.value
        if v is None:
            return "NULL"
        if isinstance(v, bool):
            return "TRUE" if v else "FALSE"
        if isinstance(v, str):
            return "'" + v.replace("'", "''") + "'"
        if isinstance(v, float):
            return repr(v)
        return str(v)
    if isinstance(e, ColumnRef):
        return f"{e.table}.{e.name}" if e.table else e.name
    if isinstance(e, Star):
        return "*"
    if isinstance(e, BinaryOp):
        prec = _PRECEDENCE[e.op]
        text = (
            f"{_unparse_expr(e.left, prec)} {e.op} "
            f"{_unparse_expr(e.right, prec + 1)}"
        )
        return f"({text})" if prec < parent_prec else text
    if isinstance(e, UnaryOp):
        if e.op == "NOT":
            inner = _unparse_expr(e.operand, 3)
            return f"NOT {inner}" if parent_prec <= 3 else f"(NOT {inner})"
        return f"-{_unparse_expr(e.operand, 7)}"
    if isinstance(e, FuncCall):
        return f"{e.name}({_unparse_expr(e.arg)})"
    if isinstance(e, Cast):
        return f"CAST({_unparse_expr(e.operand)} AS {e.target.value.upper()})"
    if isinstance(e, Like):
        kw = "NOT LIKE" if e.negated else "LIKE"
        text = f"{_unparse_expr(e.operand, 4)} {kw} {_unparse_expr(e.pattern, 5)}"
        return f"({text})" if parent_prec > 4 else text
    if isinstance(e, IsNull):
        kw = "IS NOT NULL" if e.negated else "IS NULL"
        text = f"{_unparse_expr(e.operand, 4)} {kw}"
        return f"({text})" if parent_prec > 4 else text
    raise TypeError(f"not an expression: {e!r}")


def _unparse_from(item: FromItem) -> str:
    if isinstance(item, TableRef):
        return f"{item.name} AS {item.alias}" if item.alias else item.name
    kw = "LEFT JOIN" if item.kind == "left" else "INNER JOIN"
    return (
        f"{_unparse_from(item.left)} {kw} {_unparse_from(item.right)} "
        f"ON {_unparse_expr(item.on)}"
    )


def _unparse_select(s: Select) -> str:
    parts = [
        "SELECT "
        + ", ".join(
            _unparse_expr(it.expr) + (f" AS {it.alias}" if it.alias else "")
            for it in s.items
        )
    ]
    if s.from_clause is not None:
        parts.append("FROM " + _unparse_from(s.from_clause))
    if s.where is not None:
        parts.append("WHERE " + _unparse_expr(s.where))
    if s.group_by:
        parts.append("GROUP BY " + ", ".join(_unparse_expr(g) for g in s.group_by))
    if s.having is not None:
        parts.append("HAVING " + _unparse_expr(s.having))
    return " ".join(parts)


def unparse(stmt: Statement) -> str:
    """Render a statement back to SQL text; reparsing yields an equal AST."""
    if isinstance(stmt, CreateTableAs):
        return f"CREATE TABLE {stmt.table_name} AS {unparse(stmt.query)}"
    parts = [" UNION ALL ".join(_unparse_select(s) for s in stmt.selects)]
    if stmt.order_by:
        parts.append(
            "ORDER BY "
            + ", ".join(
                _unparse_expr(o.expr) + ("" if o.ascending else " DESC")
                for o in stmt.order_by
            )
        )
    if stmt.limit is not None:
        parts.append(f"LIMIT {stmt.limit}")
    return " ".join(parts)
