"""Recursive-descent parser producing the AST in ast.py."""

from __future__ import annotations

from typing import Optional

from seeker.model import Dtype

from .ast import (
    AGGREGATE_NAMES,
    BinaryOp,
    Cast,
    ColumnRef,
    CreateTableAs,
    FromItem,
    FuncCall,
    IsNull,
    Join,
    Like,
    Literal,
    OrderItem,
    Query,
    Select,
    SelectItem,
    Star,
    Statement,
    TableRef,
    UnaryOp,
)
from .lexer import SqlSyntaxError, Token, tokenize

_DTYPE_NAMES = {d.value.upper(): d for d in Dtype}


class _Parser:
    def __init__(self, sql: str):
        self.tokens = tokenize(sql)
        self.pos = 0

    # -- token plumbing -----------------------------------------------------

    @property
    def cur(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.cur
        self.pos += 1
        return tok

    def at_keyword(self, *words: str) -> bool:
        return self.cur.kind == "KEYWORD" and self.cur.text in words

    def at_symbol(self, *syms: str) -> bool:
        return self.cur.kind == "SYMBOL" and self.cur.text in syms

    def accept_keyword(self, *words: str) -> bool:
        if self.at_keyword(*words):
            self.advance()
            return True
        return False

    def accept_symbol(self, *syms: str) -> bool:
        if self.at_symbol(*syms):
            self.advance()
            return True
        return False

    def expect_keyword(self, word: str) -> Token:
        if not self.at_keyword(word):
            self.fail(f"expected {word}")
        return self.advance()

    def expect_symbol(self, sym: str) -> Token:
        if not self.at_symbol(sym):
            self.fail(f"expected {sym!r}")
        return self.advance()

    def expect_ident(self, what: str = "identifier") -> Token:
        if self.cur.kind != "IDENT":
            self.fail(f"expected {what}")
        return self.advance()

    def fail(self, message: str) -> None:
        tok = self.cur
        shown = tok.text if tok.kind != "EOF" else "end of input"
        raise SqlSyntaxError(
            f"{message}, found {shown!r}", tok.line, tok.col, tok.text
        )

    # -- statements -----------------------------------------------------------

    def parse_statement(self) -> Statement:
        if self.at_keyword("CREATE"):
            stmt = self.parse_create()
        else:
            stmt = self.parse_query()
        if self.cur.kind != "EOF":
            self.fail("unexpected trailing input")
        return stmt

    def parse_create(self) -> CreateTableAs:
        self.expect_keyword("CREATE")
        self.expect_keyword("TABLE")
        name = self.expect_ident("table name").value
        self.expect_keyword("AS")
        return CreateTableAs(table_name=str(name), query=self.parse_query())

    def parse_query(self) -> Query:
        selects = [self.parse_select()]
        while self.at_keyword("UNION"):
            self.advance()
            self.expect_keyword("ALL")
            selects.append(self.parse_select())

        order_by: list[OrderItem] = []
        if self.accept_keyword("ORDER"):
            self.expect_keyword("BY")
            while True:
                expr = self.parse_expr()
                ascending = True
                if self.accept_keyword("DESC"):
                    ascending = False
                else:
                    self.accept_keyword("ASC")
                order_by.append(OrderItem(expr, ascending))
                if not self.accept_symbol(","):
                    break

        limit: Optional[int] = None
        if self.accept_keyword("LIMIT"):
            if self.cur.kind != "NUMBER" or not isinstance(self.cur.value, int):
                self.fail("expected integer LIMIT")
            limit = self.advance().value  # type: ignore[assignment]

        return Query(selects=tuple(selects), order_by=tuple(order_by), limit=limit)

    def parse_select(self) -> Select:
        self.expect_keyword("SELECT")
        items = [self.parse_select_item()]
        while self.accept_symbol(","):
            items.append(self.parse_select_item())

        from_clause: Optional[FromItem] = None
        if self.accept_keyword("FROM"):
            from_clause = self.parse_from()

        where = self.parse_expr() if self.accept_keyword("WHERE") else None

        group_by: list = []
        if self.accept_keyword("GROUP"):
            self.expect_keyword("BY")
            group_by.append(self.parse_expr())
            while self.accept_symbol(","):
                group_by.append(self.parse_expr())

        having = self.parse_expr() if self.accept_keyword("HAVING") else None

        return Select(
            items=tuple(items),
            from_clause=from_clause,
            where=where,
            group_by=tuple(group_by),
            having=having,
        )

    def parse_select_item(self) -> SelectItem:
        if self.at_symbol("*"):
            self.advance()
            return SelectItem(Star())
        expr = self.parse_expr()
        alias = None
        if self.accept_keyword("AS"):
            alias = str(self.expect_ident("alias").value)
        elif self.cur.kind == "IDENT":
            alias = str(self.advance().value)
        return SelectItem(expr, alias)

    def parse_from(self) -> FromItem:
        item: FromItem = self.parse_table_ref()
        while True:
            if self.accept_keyword("INNER"):
                self.expect_keyword("JOIN")
                kind = "inner"
            elif self.at_keyword("LEFT"):
                self.advance()
                self.expect_keyword("JOIN")
                kind = "left"
            elif self.accept_keyword("JOIN"):
                kind = "inner"
            else:
                break
            right = self.parse_table_ref()
            self.expect_keyword("ON")
            on = self.parse_expr()
            item = Join(left=item, right=right, kind=kind, on=on)
        return item

    def parse_table_ref(self) -> TableRef:
        name = str(self.expect_ident("table name").value)
        alias = None
        if self.accept_keyword("AS"):
            alias = str(self.expect_ident("alias").value)
        elif self.cur.kind == "IDENT":
            alias = str(self.advance().value)
        return TableRef(name, alias)

    # -- expressions, precedence climbing -------------------------------------

    def parse_expr(self):
        return self.parse_or()

    def parse_or(self):
        left = self.parse_and()
        while self.at_keyword("OR"):
            self.advance()
            left = BinaryOp("OR", left, self.parse_and())
        return left

    def parse_and(self):
        left = self.parse_not()
        while self.at_keyword("AND"):
            self.advance()
            left = BinaryOp("AND", left, self.parse_not())
        return left

    def parse_not(self):
        if self.accept_keyword("NOT"):
            return UnaryOp("NOT", self.parse_not())
        return self.parse_comparison()

    def parse_comparison(self):
        left = self.parse_additive()
        if self.at_symbol("=", "!=", "<", "<=", ">", ">="):
            op = self.advance().text
            return BinaryOp(op, left, self.parse_additive())
        if self.at_keyword("LIKE"):
            self.advance()
            return Like(left, self.parse_additive())
        if self.at_keyword("NOT"):
            # only NOT LIKE binds here; bare NOT is a prefix operator
            nxt = self.tokens[self.pos + 1]
            if nxt.kind == "KEYWORD" and nxt.text == "LIKE":
                self.advance()
                self.advance()
                return Like(left, self.parse_additive(), negated=True)
        if self.at_keyword("IS"):
            self.advance()
            negated = self.accept_keyword("NOT")
            self.expect_keyword("NULL")
            return IsNull(left, negated)
        return left

    def parse_additive(self):
        left = self.parse_multiplicative()
        while self.at_symbol("+", "-"):
            op = self.advance().text
            left = BinaryOp(op, left, self.parse_multiplicative())
        return left

    def parse_multiplicative(self):
        left = self.parse_unary()
        while self.at_symbol("*", "/"):
            op = self.advance().text
            left = BinaryOp(op, left, self.parse_unary())
        return left

    def parse_unary(self):
        if self.accept_symbol("-"):
            operand = self.parse_unary()
            if isinstance(operand, Literal) and isinstance(operand.value, (int, float)):
                return Literal(-operand.value)
            return UnaryOp("-", operand)
        return self.parse_primary()

    def parse_primary(self):
        tok = self.cur
        if tok.kind == "NUMBER":
            self.advance()
            return Literal(tok.value)
        if tok.kind == "STRING":
            self.advance()
            return Literal(tok.value)
        if self.accept_keyword("NULL"):
            return Literal(None)
        if self.accept_keyword("TRUE"):
            return Literal(True)
        if self.accept_keyword("FALSE"):
            return Literal(False)
        if self.at_keyword("CAST"):
            self.advance()
            self.expect_symbol("(")
            operand = self.parse_expr()
            self.expect_keyword("AS")
            dtype_tok = self.expect_ident("dtype name")
            dtype = _DTYPE_NAMES.get(str(dtype_tok.value).upper())
            if dtype is None:
                raise SqlSyntaxError(
                    f"unknown dtype {dtype_tok.value!r}",
                    dtype_tok.line,
                    dtype_tok.col,
                    str(dtype_tok.value),
                )
            self.expect_symbol(")")
            return Cast(operand, dtype)
        if self.accept_symbol("("):
            expr = self.parse_expr()
            self.expect_symbol(")")
            return expr
        if tok.kind == "IDENT":
            name = str(self.advance().value)
            if self.at_symbol("(") and name.upper() in AGGREGATE_NAMES:
                self.advance()
                if self.accept_symbol("*"):
                    arg = Star()
                else:
                    arg = self.parse_expr()
                self.expect_symbol(")")
                return FuncCall(name.upper(), arg)
            if self.accept_symbol("."):
                col = self.expect_ident("column name")
                return ColumnRef(name=str(col.value), table=name)
            return ColumnRef(name=name)
        self.fail("expected expression")


def parse(sql: str) -> Statement:
    """Parse one SQL statement. Raises SqlSyntaxError with line/column."""
    return _Parser(sql).parse_statement()
