"""SQL subset engine: parse -> analyze -> execute over in-memory relations."""

from __future__ import annotations

from typing import Optional

from seeker.model import Relation

from .analyze import (
    AmbiguousColumn,
    Catalog,
    SqlAnalysisError,
    TypeMismatch,
    TypedPlan,
    UnknownColumn,
    analyze,
)
from .ast import CreateTableAs, Query, Statement, unparse
from .csvio import CsvError, parse_csv, relation_to_csv, sanitize_identifier
from .execute import SqlRuntimeError, Warning_, execute
from .lexer import SqlSyntaxError
from .parser import parse

__all__ = [
    "AmbiguousColumn",
    "Catalog",
    "CreateTableAs",
    "CsvError",
    "Query",
    "SqlAnalysisError",
    "SqlRuntimeError",
    "SqlSyntaxError",
    "Statement",
    "TypeMismatch",
    "TypedPlan",
    "UnknownColumn",
    "Warning_",
    "analyze",
    "catalog_of",
    "execute",
    "parse",
    "parse_csv",
    "relation_to_csv",
    "run_statement",
    "sanitize_identifier",
    "unparse",
]


def catalog_of(data: dict[str, Relation]) -> Catalog:
    return Catalog({name: rel.columns for name, rel in data.items()})


def run_statement(
    sql: str,
    data: dict[str, Relation],
    warnings: Optional[list[Warning_]] = None,
    result_name: str = "result",
) -> Relation:
    """Parse, analyze, and execute one statement against data.

    CREATE TABLE AS registers its result into data under the created name,
    making it visible to later statements in Q.
    """
    stmt = parse(sql)
    plan = analyze(stmt, catalog_of(data))
    result = execute(plan, data, warnings=warnings, result_name=result_name)
    if plan.create_table:
        data[plan.create_table] = result
    return result
