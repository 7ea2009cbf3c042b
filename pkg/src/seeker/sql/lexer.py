"""Tokenizer for the SQL subset. Tracks 1-based line/column for errors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from seeker.model import SeekerError

KEYWORDS = {
    "SELECT", "FROM", "WHERE", "GROUP", "BY", "HAVING", "ORDER", "LIMIT",
    "AS", "ON", "JOIN", "INNER", "LEFT", "UNION", "ALL", "AND", "OR", "NOT",
    "LIKE", "CAST", "CREATE", "TABLE", "IS", "NULL", "TRUE", "FALSE",
    "ASC", "DESC",
}

SYMBOLS = ("<=", ">=", "!=", "<>", "=", "<", ">", "+", "-", "*", "/", "(", ")", ",", ".")


class SqlSyntaxError(SeekerError):
    def __init__(self, message: str, line: int, col: int, token: str = ""):
        self.line = line
        self.col = col
        self.token = token
        super().__init__(f"{message} at line {line}, column {col}")


@dataclass(frozen=True)
class Token:
    kind: str  # KEYWORD | IDENT | NUMBER | STRING | SYMBOL | EOF
    text: str
    value: object  # parsed value for NUMBER/STRING, else text
    line: int
    col: int


def tokenize(sql: str) -> list[Token]:
    return list(_scan(sql))


def _scan(sql: str) -> Iterator[Token]:
    line, col = 1, 1
    i = 0
    n = len(sql)
    while i < n:
        ch = sql[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        start_line, start_col = line, col

        if ch == "'":
            # single-quoted string, '' escapes a quote
            j = i + 1
            buf = []
            while True:
                if j >= n:
                    raise SqlSyntaxError("unterminated string", start_line, start_col)
                if sql[j] == "'":
                    if j + 1 < n and sql[j + 1] == "'":
                        buf.append("'")
                        j += 2
                        continue
                    j += 1
                    break
                buf.append(sql[j])
                j += 1
            text = sql[i:j]
            yield Token("STRING", text, "".join(buf), start_line, start_col)
            col += j - i
            i = j
            continue

        if ch == '"':
            # double-quoted identifier, never a keyword
            j = sql.find('"', i + 1)
            if j == -1:
                raise SqlSyntaxError("unterminated identifier", start_line, start_col)
            name = sql[i + 1 : j]
            yield Token("IDENT", name, name, start_line, start_col)
            col += j + 1 - i
            i = j + 1
            continue

        if ch.isdigit() or (ch == "." and i + 1 < n and sql[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (sql[j].isdigit() or (sql[j] == "." and not seen_dot)):
                if sql[j] == ".":
                    # a dot not followed by a digit is a qualifier, not a decimal
                    if j + 1 >= n or not sql[j + 1].isdigit():
                        break
                    seen_dot = True
                j += 1
            text = sql[i:j]
            value: object = float(text) if "." in text else int(text)
            yield Token("NUMBER", text, value, start_line, start_col)
            col += j - i
            i = j
            continue

        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (sql[j].isalnum() or sql[j] == "_"):
                j += 1
            text = sql[i:j]
            kind = "KEYWORD" if text.upper() in KEYWORDS else "IDENT"
            yield Token(kind, text.upper() if kind == "KEYWORD" else text, text, start_line, start_col)
            col += j - i
            i = j
            continue

        for sym in SYMBOLS:
            if sql.startswith(sym, i):
                canonical = "!=" if sym == "<>" else sym
                yield Token("SYMBOL", canonical, canonical, start_line, start_col)
                col += len(sym)
                i += len(sym)
                break
        else:
            raise SqlSyntaxError(
                f"unexpected character {ch!r}", start_line, start_col, ch
            )
    yield Token("EOF", "", None, line, col)
