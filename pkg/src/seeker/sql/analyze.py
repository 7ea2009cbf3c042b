"""Semantic analysis: resolve names against a catalog, type every
expression, and produce a logical plan (scan -> filter -> join -> project /
aggregate -> sort -> limit) ready for interpretation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from seeker.model import ColumnSpec, Dtype, SeekerError, UnknownTable

from . import ast


class SqlAnalysisError(SeekerError):
    pass


class UnknownColumn(SqlAnalysisError):
    pass


class AmbiguousColumn(SqlAnalysisError):
    pass


class TypeMismatch(SqlAnalysisError):
    pass


class Catalog:
    """Name -> schema mapping for every relation visible to a session."""

    def __init__(self, schemas: Optional[dict[str, tuple[ColumnSpec, ...]]] = None):
        self._schemas: dict[str, tuple[ColumnSpec, ...]] = dict(schemas or {})

    def add(self, name: str, columns: tuple[ColumnSpec, ...]) -> None:
        self._schemas[name] = tuple(columns)

    def schema(self, name: str) -> tuple[ColumnSpec, ...]:
        if name not in self._schemas:
            raise UnknownTable(name)
        return self._schemas[name]

    def __contains__(self, name: str) -> bool:
        return name in self._schemas

    def names(self) -> list[str]:
        return sorted(self._schemas)


# -- typed expressions -------------------------------------------------------


@dataclass(frozen=True)
class TLiteral:
    value: object
    dtype: Optional[Dtype]  # None for the NULL literal


@dataclass(frozen=True)
class TColumn:
    offset: int  # position in the input row
    dtype: Dtype
    table: str  # base table name, for dependency listing
    name: str


@dataclass(frozen=True)
class TBinary:
    op: str
    left: "TExpr"
    right: "TExpr"
    dtype: Optional[Dtype]


@dataclass(frozen=True)
class TUnary:
    op: str
    operand: "TExpr"
    dtype: Optional[Dtype]


@dataclass(frozen=True)
class TCast:
    operand: "TExpr"
    dtype: Dtype


@dataclass(frozen=True)
class TLike:
    operand: "TExpr"
    pattern: "TExpr"
    negated: bool
    dtype: Dtype = Dtype.BOOL


@dataclass(frozen=True)
class TIsNull:
    operand: "TExpr"
    negated: bool
    dtype: Dtype = Dtype.BOOL


@dataclass(frozen=True)
class TAggRef:
    """Reference to an aggregate slot computed by an AggregateNode."""

    slot: int
    dtype: Optional[Dtype]


@dataclass(frozen=True)
class TGroupKeyRef:
    """Reference to a group-by key by position."""

    slot: int
    dtype: Optional[Dtype]


TExpr = Union[TLiteral, TColumn, TBinary, TUnary, TCast, TLike, TIsNull, TAggRef, TGroupKeyRef]


@dataclass(frozen=True)
class AggSpec:
    func: str  # COUNT | SUM | AVG | MIN | MAX
    arg: Optional[TExpr]  # None for COUNT(*)
    dtype: Optional[Dtype]


# -- plan nodes ----------------------------------------------------------------


@dataclass(frozen=True)
class ScanNode:
    table: str
    schema: tuple[ColumnSpec, ...]


@dataclass(frozen=True)
class JoinNode:
    left: "PlanNode"
    right: "PlanNode"
    kind: str  # inner | left
    on: TExpr
    schema: tuple[ColumnSpec, ...]


@dataclass(frozen=True)
class FilterNode:
    child: "PlanNode"
    predicate: TExpr
    schema: tuple[ColumnSpec, ...]


@dataclass(frozen=True)
class ProjectNode:
    child: "PlanNode"
    exprs: tuple[TExpr, ...]
    schema: tuple[ColumnSpec, ...]


@dataclass(frozen=True)
class AggregateNode:
    child: "PlanNode"
    group_keys: tuple[TExpr, ...]
    aggregates: tuple[AggSpec, ...]
    projections: tuple[TExpr, ...]  # over TAggRef/TGroupKeyRef/TLiteral
    having: Optional[TExpr]
    schema: tuple[ColumnSpec, ...]


@dataclass(frozen=True)
class UnionAllNode:
    children: tuple["PlanNode", ...]
    schema: tuple[ColumnSpec, ...]


@dataclass(frozen=True)
class SortNode:
    child: "PlanNode"
    keys: tuple[tuple[TExpr, bool], ...]  # (expr over output row, ascending)
    schema: tuple[ColumnSpec, ...]


@dataclass(frozen=True)
class LimitNode:
    child: "PlanNode"
    limit: int
    schema: tuple[ColumnSpec, ...]


PlanNode = Union[
    ScanNode, JoinNode, FilterNode, ProjectNode, AggregateNode,
    UnionAllNode, SortNode, LimitNode,
]


@dataclass(frozen=True)
class TypedPlan:
    root: PlanNode
    output_schema: tuple[ColumnSpec, ...]
    dependencies: tuple[tuple[str, str], ...]  # (table, column) pairs read
    create_table: Optional[str] = None  # set for CREATE TABLE AS


# -- analysis ------------------------------------------------------------------


@dataclass
class _Scope:
    """Visible columns: alias -> (schema, row offset of first column).

    loose scopes (ORDER BY over projected output) ignore table qualifiers,
    since projection has already flattened them into deduplicated names.
    """

    entries: list[tuple[str, str, tuple[ColumnSpec, ...], int]] = field(
        default_factory=list
    )  # (alias, base table, schema, offset)
    loose: bool = False

    def width(self) -> int:
        return sum(len(schema) for _, _, schema, _ in self.entries)

    def resolve(self, ref: ast.ColumnRef) -> TColumn:
        matches = []
        for alias, base, schema, offset in self.entries:
            if ref.table is not None and ref.table != alias and not self.loose:
                continue
            for i, col in enumerate(schema):
                if col.name == ref.name:
                    matches.append(TColumn(offset + i, col.dtype, base, col.name))
        if not matches:
            qual = f"{ref.table}." if ref.table else ""
            raise UnknownColumn(f"{qual}{ref.name}")
        if len(matches) > 1:
            raise AmbiguousColumn(ref.name)
        return matches[0]


_NUMERIC = (Dtype.INT, Dtype.FLOAT)


def _arith_result(op: str, lt: Optional[Dtype], rt: Optional[Dtype]) -> Optional[Dtype]:
    for t in (lt, rt):
        if t is not None and t not in _NUMERIC:
            raise TypeMismatch(f"arithmetic {op!r} over {t.value}")
    if op == "/":
        return Dtype.FLOAT
    if lt is Dtype.FLOAT or rt is Dtype.FLOAT:
        return Dtype.FLOAT
    if lt is None and rt is None:
        return None
    return Dtype.INT


def _comparable(lt: Optional[Dtype], rt: Optional[Dtype]) -> None:
    if lt is None or rt is None:
        return
    if lt == rt:
        return
    if lt in _NUMERIC and rt in _NUMERIC:
        return
    raise TypeMismatch(f"cannot compare {lt.value} with {rt.value}")


def _require_bool(t: Optional[Dtype], where: str) -> None:
    if t is not None and t is not Dtype.BOOL:
        raise TypeMismatch(f"{where} requires a boolean, got {t.value}")


class _Analyzer:
    def __init__(self, catalog: Catalog):
        self.catalog = catalog
        self.deps: set[tuple[str, str]] = set()

    # -- expressions -----------------------------------------------------------

    def type_expr(self, e: ast.Expr, scope: _Scope, allow_agg: bool = False) -> TExpr:
        if isinstance(e, ast.Literal):
            return TLiteral(e.value, _literal_dtype(e.value))
        if isinstance(e, ast.ColumnRef):
            col = scope.resolve(e)
            self.deps.add((col.table, col.name))
            return col
        if isinstance(e, ast.BinaryOp):
            left = self.type_expr(e.left, scope, allow_agg)
            right = self.type_expr(e.right, scope, allow_agg)
            lt, rt = _dtype_of(left), _dtype_of(right)
            if e.op in ("AND", "OR"):
                _require_bool(lt, e.op)
                _require_bool(rt, e.op)
                return TBinary(e.op, left, right, Dtype.BOOL)
            if e.op in ("=", "!=", "<", "<=", ">", ">="):
                _comparable(lt, rt)
                return TBinary(e.op, left, right, Dtype.BOOL)
            return TBinary(e.op, left, right, _arith_result(e.op, lt, rt))
        if isinstance(e, ast.UnaryOp):
            operand = self.type_expr(e.operand, scope, allow_agg)
            t = _dtype_of(operand)
            if e.op == "NOT":
                _require_bool(t, "NOT")
                return TUnary("NOT", operand, Dtype.BOOL)
            if t is not None and t not in _NUMERIC:
                raise TypeMismatch(f"unary minus over {t.value}")
            return TUnary("-", operand, t)
        if isinstance(e, ast.Cast):
            operand = self.type_expr(e.operand, scope, allow_agg)
            return TCast(operand, e.target)
        if isinstance(e, ast.Like):
            operand = self.type_expr(e.operand, scope, allow_agg)
            pattern = self.type_expr(e.pattern, scope, allow_agg)
            for t in (_dtype_of(operand), _dtype_of(pattern)):
                if t is not None and t is not Dtype.TEXT:
                    raise TypeMismatch(f"LIKE over {t.value}")
            return TLike(operand, pattern, e.negated)
        if isinstance(e, ast.IsNull):
            operand = self.type_expr(e.operand, scope, allow_agg)
            return TIsNull(operand, e.negated)
        if isinstance(e, ast.FuncCall):
            raise TypeMismatch(
                f"aggregate {e.name} not allowed here"
                if not allow_agg
                else f"nested aggregate {e.name}"
            )
        if isinstance(e, ast.Star):
            raise TypeMismatch("* not allowed in this position")
        raise TypeMismatch(f"unsupported expression {e!r}")

    # -- FROM clause -------------------------------------------------------------

    def plan_from(self, item: ast.FromItem, scope: _Scope) -> PlanNode:
        if isinstance(item, ast.TableRef):
            schema = self.catalog.schema(item.name)
            alias = item.alias or item.name
            for existing, _, _, _ in scope.entries:
                if existing == alias:
                    raise SqlAnalysisError(f"duplicate table alias {alias!r}")
            scope.entries.append((alias, item.name, schema, scope.width()))
            return ScanNode(item.name, schema)
        left = self.plan_from(item.left, scope)
        right = self.plan_from(item.right, scope)
        on = self.type_expr(item.on, scope)
        _require_bool(_dtype_of(on), "JOIN ON")
        schema = _concat_schemas(left, right)
        return JoinNode(left, right, item.kind, on, schema)

    # -- SELECT ------------------------------------------------------------

    def plan_select(self, sel: ast.Select) -> PlanNode:
        scope = _Scope()
        if sel.from_clause is not None:
            node = self.plan_from(sel.from_clause, scope)
        else:
            node = None

        if sel.where is not None:
            if node is None:
                raise SqlAnalysisError("WHERE without FROM")
            predicate = self.type_expr(sel.where, scope)
            _require_bool(_dtype_of(predicate), "WHERE")
            node = FilterNode(node, predicate, node.schema)

        has_agg = bool(sel.group_by) or any(
            _contains_aggregate(it.expr) for it in sel.items
        ) or (sel.having is not None)

        if has_agg:
            return self._plan_aggregate(sel, node, scope)
        if sel.having is not None:
            raise SqlAnalysisError("HAVING without aggregation")

        exprs: list[TExpr] = []
        out_cols: list[ColumnSpec] = []
        for i, item in enumerate(sel.items):
            if isinstance(item.expr, ast.Star):
                if node is None:
                    raise SqlAnalysisError("SELECT * without FROM")
                for alias, base, schema, offset in scope.entries:
                    for j, col in enumerate(schema):
                        exprs.append(TColumn(offset + j, col.dtype, base, col.name))
                        self.deps.add((base, col.name))
                        out_cols.append(ColumnSpec(col.name, col.dtype))
                continue
            texpr = self.type_expr(item.expr, scope)
            exprs.append(texpr)
            out_cols.append(_output_column(item, texpr, i))
        _dedupe_names(out_cols)
        schema = tuple(out_cols)
        child = node if node is not None else ScanNode("", ())
        return ProjectNode(child, tuple(exprs), schema)

    def _plan_aggregate(
        self, sel: ast.Select, node: Optional[PlanNode], scope: _Scope
    ) -> PlanNode:
        if node is None:
            raise SqlAnalysisError("aggregation without FROM")

        group_keys = tuple(self.type_expr(g, scope) for g in sel.group_by)
        key_asts = tuple(sel.group_by)

        aggs: list[AggSpec] = []

        def lower(e: ast.Expr) -> TExpr:
            # rewrite over group keys and aggregate slots
            for slot, key_ast in enumerate(key_asts):
                if e == key_ast:
                    return TGroupKeyRef(slot, _dtype_of(group_keys[slot]))
            if isinstance(e, ast.FuncCall):
                if isinstance(e.arg, ast.Star):
                    if e.name != "COUNT":
                        raise TypeMismatch(f"{e.name}(*) is not supported")
                    spec = AggSpec("COUNT", None, Dtype.INT)
                else:
                    arg = self.type_expr(e.arg, scope)
                    spec = AggSpec(e.name, arg, _agg_dtype(e.name, _dtype_of(arg)))
                aggs.append(spec)
                return TAggRef(len(aggs) - 1, spec.dtype)
            if isinstance(e, ast.Literal):
                return TLiteral(e.value, _literal_dtype(e.value))
            if isinstance(e, ast.BinaryOp):
                left, right = lower(e.left), lower(e.right)
                lt, rt = _dtype_of(left), _dtype_of(right)
                if e.op in ("AND", "OR"):
                    _require_bool(lt, e.op)
                    _require_bool(rt, e.op)
                    return TBinary(e.op, left, right, Dtype.BOOL)
                if e.op in ("=", "!=", "<", "<=", ">", ">="):
                    _comparable(lt, rt)
                    return TBinary(e.op, left, right, Dtype.BOOL)
                return TBinary(e.op, left, right, _arith_result(e.op, lt, rt))
            if isinstance(e, ast.UnaryOp):
                operand = lower(e.operand)
                t = _dtype_of(operand)
                if e.op == "NOT":
                    _require_bool(t, "NOT")
                    return TUnary("NOT", operand, Dtype.BOOL)
                return TUnary("-", operand, t)
            if isinstance(e, ast.Cast):
                return TCast(lower(e.operand), e.target)
            if isinstance(e, ast.IsNull):
                return TIsNull(lower(e.operand), e.negated)
            if isinstance(e, ast.Like):
                return TLike(lower(e.operand), lower(e.pattern), e.negated)
            if isinstance(e, ast.ColumnRef):
                raise TypeMismatch(
                    f"column {e.name!r} must appear in GROUP BY or inside an aggregate"
                )
            raise TypeMismatch(f"unsupported expression in aggregation: {e!r}")

        projections: list[TExpr] = []
        out_cols: list[ColumnSpec] = []
        for i, item in enumerate(sel.items):
            if isinstance(item.expr, ast.Star):
                raise TypeMismatch("SELECT * cannot be combined with aggregation")
            texpr = lower(item.expr)
            projections.append(texpr)
            out_cols.append(_output_column(item, texpr, i))
        _dedupe_names(out_cols)

        having = None
        if sel.having is not None:
            having = lower(sel.having)
            _require_bool(_dtype_of(having), "HAVING")

        schema = tuple(out_cols)
        return AggregateNode(
            child=node,
            group_keys=group_keys,
            aggregates=tuple(aggs),
            projections=tuple(projections),
            having=having,
            schema=schema,
        )

    # -- top level -----------------------------------------------------------

    def plan_query(self, q: ast.Query) -> PlanNode:
        children = [self.plan_select(s) for s in q.selects]
        node = children[0]
        if len(children) > 1:
            base = children[0].schema
            unified = list(base)
            for child in children[1:]:
                if len(child.schema) != len(base):
                    raise TypeMismatch(
                        "UNION ALL branches have different column counts"
                    )
                for i, (a, b) in enumerate(zip(unified, child.schema)):
                    unified[i] = ColumnSpec(a.name, _unify(a.dtype, b.dtype))
            node = UnionAllNode(tuple(children), tuple(unified))

        if q.order_by:
            out_scope = _Scope(entries=[("", "", node.schema, 0)], loose=True)
            keys = []
            for item in q.order_by:
                texpr = self._order_key(item.expr, out_scope)
                keys.append((texpr, item.ascending))
            node = SortNode(node, tuple(keys), node.schema)

        if q.limit is not None:
            node = LimitNode(node, q.limit, node.schema)
        return node

    def _order_key(self, e: ast.Expr, out_scope: _Scope) -> TExpr:
        # ORDER BY sees the projected output columns
        analyzer = _Analyzer(self.catalog)
        texpr = analyzer.type_expr(e, out_scope)
        return texpr


def _literal_dtype(v: object) -> Optional[Dtype]:
    if v is None:
        return None
    if isinstance(v, bool):
        return Dtype.BOOL
    if isinstance(v, int):
        return Dtype.INT
    if isinstance(v, float):
        return Dtype.FLOAT
    return Dtype.TEXT


def _dtype_of(e: TExpr) -> Optional[Dtype]:
    return e.dtype


def _agg_dtype(func: str, arg: Optional[Dtype]) -> Optional[Dtype]:
    if func == "COUNT":
        return Dtype.INT
    if func in ("SUM", "AVG"):
        if arg is not None and arg not in _NUMERIC:
            raise TypeMismatch(f"{func} over {arg.value}")
        if func == "AVG":
            return Dtype.FLOAT
        return arg
    if func in ("MIN", "MAX"):
        return arg
    raise TypeMismatch(f"unknown aggregate {func}")


def _unify(a: Dtype, b: Dtype) -> Dtype:
    if a == b:
        return a
    if a in _NUMERIC and b in _NUMERIC:
        return Dtype.FLOAT
    raise TypeMismatch(f"cannot unify {a.value} with {b.value}")


def _contains_aggregate(e: ast.Expr) -> bool:
    if isinstance(e, ast.FuncCall):
        return True
    if isinstance(e, ast.BinaryOp):
        return _contains_aggregate(e.left) or _contains_aggregate(e.right)
    if isinstance(e, ast.UnaryOp):
        return _contains_aggregate(e.operand)
    if isinstance(e, ast.Cast):
        return _contains_aggregate(e.operand)
    if isinstance(e, (ast.Like,)):
        return _contains_aggregate(e.operand) or _contains_aggregate(e.pattern)
    if isinstance(e, ast.IsNull):
        return _contains_aggregate(e.operand)
    return False


def _concat_schemas(left: PlanNode, right: PlanNode) -> tuple[ColumnSpec, ...]:
    return tuple(left.schema) + tuple(right.schema)


_GENERATED = 0


def _output_column(item: ast.SelectItem, texpr: TExpr, index: int) -> ColumnSpec:
    dtype = _dtype_of(texpr) or Dtype.TEXT
    if item.alias:
        return ColumnSpec(item.alias, dtype)
    if isinstance(item.expr, ast.ColumnRef):
        return ColumnSpec(item.expr.name, dtype)
    return ColumnSpec(f"col{index}", dtype)


def _dedupe_names(cols: list[ColumnSpec]) -> None:
    seen: dict[str, int] = {}
    for i, col in enumerate(cols):
        if col.name in seen:
            n = seen[col.name] + 1
            seen[col.name] = n
            cols[i] = ColumnSpec(f"{col.name}_{n}", col.dtype, col.description)
        else:
            seen[col.name] = 0


def analyze(stmt: ast.Statement, catalog: Catalog) -> TypedPlan:
    """Type-check a parsed statement against the catalog.

    Raises UnknownTable / UnknownColumn / TypeMismatch; on success the plan
    carries the output schema and the full (table, column) dependency list.
    """
    create_table = None
    if isinstance(stmt, ast.CreateTableAs):
        create_table = stmt.table_name
        query = stmt.query
    else:
        query = stmt
    analyzer = _Analyzer(catalog)
    root = analyzer.plan_query(query)
    return TypedPlan(
        root=root,
        output_schema=root.schema,
        dependencies=tuple(sorted(analyzer.deps)),
        create_table=create_table,
    )
