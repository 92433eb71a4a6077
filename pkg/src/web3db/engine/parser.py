"""Tokenizer and recursive-descent parser for the supported SQL subset.

Grammar::

    statement := create | insert | select [';']
    create    := CREATE TABLE name '(' name type {',' name type} ')'
    insert    := INSERT INTO name ['(' name {',' name} ')'] VALUES row {',' row}
    select    := SELECT items FROM table [JOIN table ON col '=' col]
                 [WHERE cmp {AND cmp}] [GROUP BY col {',' col}]
                 [ORDER BY key [ASC|DESC] {',' ...}] [LIMIT int]

Constructs outside the subset (OR, subqueries, HAVING, outer joins, ...)
raise ``UnsupportedFeatureError`` naming the construct; anything else that
fails to parse raises ``SqlSyntaxError`` with its line and column.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass
from decimal import Decimal

from ..errors import SqlSyntaxError, UnsupportedFeatureError
from ..storage import Column, to_decimal
from .ast import (
    AGGREGATES,
    COMPARISONS,
    Aggregate,
    ColumnRef,
    Comparison,
    CreateTable,
    Insert,
    Join,
    Literal,
    OrderItem,
    Select,
    SelectItem,
    Star,
    Statement,
    TableRef,
)

KEYWORDS = {
    "select", "from", "where", "and", "group", "by", "order", "asc", "desc",
    "limit", "join", "inner", "on", "as", "create", "table", "insert", "into",
    "values", "date",
}
# Recognized so the error can name them, but not part of the subset.
UNSUPPORTED = {
    "or": "OR", "not": "NOT", "having": "HAVING", "union": "UNION",
    "intersect": "INTERSECT", "except": "EXCEPT", "distinct": "DISTINCT",
    "in": "IN", "like": "LIKE", "between": "BETWEEN", "is": "IS", "null": "NULL",
    "case": "CASE", "exists": "EXISTS", "left": "LEFT JOIN", "right": "RIGHT JOIN",
    "full": "FULL JOIN", "outer": "OUTER JOIN", "cross": "CROSS JOIN",
    "offset": "OFFSET", "update": "UPDATE", "delete": "DELETE", "drop": "DROP",
    "alter": "ALTER", "with": "WITH",
}
TYPE_NAMES = {
    "integer": "integer", "int": "integer", "bigint": "integer",
    "decimal": "decimal", "numeric": "decimal",
    "text": "text", "varchar": "text", "char": "text",
    "date": "date",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|--[^\n]*)
  | (?P<number>\d+(?:\.\d+)?)
  | (?P<string>'(?:[^']|'')*')
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><>|!=|<=|>=|[=<>(),.*;+\-/])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # number, string, ident, keyword, op, eof
    text: str
    offset: int
    line: int
    column: int

    @property
    def lower(self) -> str:
        return self.text.lower()


def tokenize(sql: str) -> list[Token]:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if m is None:
            raise SqlSyntaxError(f"unexpected character {sql[pos]!r}", line, pos - line_start + 1, pos)
        kind = m.lastgroup
        text = m.group()
        if kind != "ws":
            if kind == "ident" and text.lower() in KEYWORDS:
                kind = "keyword"
            tokens.append(Token(kind, text, pos, line, pos - line_start + 1))
        for i, ch in enumerate(text):
            if ch == "\n":
                line += 1
                line_start = pos + i + 1
        pos = m.end()
    tokens.append(Token("eof", "", pos, line, pos - line_start + 1))
    return tokens


class Parser:
    def __init__(self, sql: str):
        self.sql = sql
        self.tokens = tokenize(sql)
        self.i = 0

    # -- token helpers ----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, ahead: int = 1) -> Token:
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def error(self, message: str, tok: Token | None = None) -> SqlSyntaxError:
        tok = tok or self.tok
        return SqlSyntaxError(message, tok.line, tok.column, tok.offset)

    def unsupported(self, construct: str, tok: Token | None = None) -> UnsupportedFeatureError:
        tok = tok or self.tok
        return UnsupportedFeatureError(construct, tok.line, tok.column, tok.offset)

    def check_unsupported(self):
        t = self.tok
        if t.kind == "ident" and t.lower in UNSUPPORTED:
            raise self.unsupported(UNSUPPORTED[t.lower])
        if t.kind == "op" and t.text in "+-/":
            raise self.unsupported("arithmetic expression")

    def at_keyword(self, *words: str) -> bool:
        return self.tok.kind == "keyword" and self.tok.lower in words

    def accept(self, word: str) -> bool:
        if self.at_keyword(word) or (self.tok.kind == "op" and self.tok.text == word):
            self.i += 1
            return True
        return False

    def expect(self, word: str) -> Token:
        if self.at_keyword(word) or (self.tok.kind == "op" and self.tok.text == word):
            return self.advance()
        self.check_unsupported()
        found = self.tok.text or "end of input"
        raise self.error(f"expected {word.upper() if word.isalpha() else repr(word)}, found {found!r}")

    def ident(self, what: str = "identifier") -> str:
        self.check_unsupported()
        if self.tok.kind != "ident":
            found = self.tok.text or "end of input"
            raise self.error(f"expected {what}, found {found!r}")
        return self.advance().text

    # -- statements -------------------------------------------------------

    def statement(self) -> Statement:
        self.check_unsupported()
        if self.at_keyword("select"):
            stmt = self.select()
        elif self.at_keyword("create"):
            stmt = self.create()
        elif self.at_keyword("insert"):
            stmt = self.insert()
        else:
            raise self.error(f"expected SELECT, CREATE or INSERT, found {self.tok.text or 'end of input'!r}")
        self.accept(";")
        if self.tok.kind != "eof":
            self.check_unsupported()
            if self.at_keyword("join"):
                raise self.unsupported("multiple joins")
            raise self.error(f"unexpected {self.tok.text!r}")
        return stmt

    def create(self) -> CreateTable:
        self.expect("create")
        self.expect("table")
        name = self.ident("table name")
        self.expect("(")
        columns = []
        while True:
            col = self.ident("column name")
            type_tok = self.tok
            if type_tok.kind not in ("ident", "keyword") or type_tok.lower not in TYPE_NAMES:
                raise self.error(f"unknown column type {type_tok.text!r}")
            self.advance()
            if self.accept("("):
                # Precision/length arguments are accepted and ignored.
                self.number_token()
                if self.accept(","):
                    self.number_token()
                self.expect(")")
            columns.append(Column(col, TYPE_NAMES[type_tok.lower]))
            if not self.accept(","):
                break
        self.expect(")")
        return CreateTable(name, tuple(columns))

    def insert(self) -> Insert:
        self.expect("insert")
        self.expect("into")
        table = self.ident("table name")
        columns = None
        if self.accept("("):
            columns = [self.ident("column name")]
            while self.accept(","):
                columns.append(self.ident("column name"))
            self.expect(")")
            columns = tuple(columns)
        self.expect("values")
        rows = [self.value_row()]
        while self.accept(","):
            rows.append(self.value_row())
        return Insert(table, columns, tuple(rows))

    def value_row(self) -> tuple[Literal, ...]:
        self.expect("(")
        values = [self.literal()]
        while self.accept(","):
            values.append(self.literal())
        self.expect(")")
        return tuple(values)

    def number_token(self) -> Token:
        if self.tok.kind != "number":
            raise self.error(f"expected a number, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def literal(self) -> Literal:
        t = self.tok
        if t.kind == "op" and t.text == "-" and self.peek().kind == "number":
            self.advance()
            return Literal(-self._number(self.advance()))
        if t.kind == "number":
            return Literal(self._number(self.advance()))
        if t.kind == "string":
            self.advance()
            return Literal(t.text[1:-1].replace("''", "'"))
        if self.at_keyword("date"):
            self.advance()
            s = self.tok
            if s.kind != "string":
                raise self.error("expected a quoted date after DATE")
            self.advance()
            try:
                return Literal(dt.date.fromisoformat(s.text[1:-1]))
            except ValueError:
                raise self.error(f"invalid date literal {s.text}", s) from None
        if t.kind == "op" and t.text == "(" and self.peek().lower == "select":
            raise self.unsupported("subquery")
        self.check_unsupported()
        raise self.error(f"expected a literal, found {t.text or 'end of input'!r}")

    @staticmethod
    def _number(tok: Token) -> int | Decimal:
        return to_decimal(tok.text) if "." in tok.text else int(tok.text)

    def select(self) -> Select:
        self.expect("select")
        items = [self.select_item()]
        while self.accept(","):
            items.append(self.select_item())
        self.expect("from")
        source = self.table_ref()
        if self.tok.kind == "op" and self.tok.text == ",":
            raise self.unsupported("implicit cross join")
        join = None
        if self.at_keyword("join", "inner"):
            join = self.join()
        where: list[Comparison] = []
        if self.accept("where"):
            where.append(self.comparison())
            while self.accept("and"):
                where.append(self.comparison())
            self.check_unsupported()
        group_by: list[ColumnRef] = []
        if self.at_keyword("group"):
            self.advance()
            self.expect("by")
            group_by.append(self.column_ref())
            while self.accept(","):
                group_by.append(self.column_ref())
        self.check_unsupported()
        order_by: list[OrderItem] = []
        if self.at_keyword("order"):
            self.advance()
            self.expect("by")
            order_by.append(self.order_item())
            while self.accept(","):
                order_by.append(self.order_item())
        limit = None
        if self.accept("limit"):
            limit = int(self.number_token().text.split(".")[0])
            self.check_unsupported()
        return Select(tuple(items), source, join, tuple(where), tuple(group_by), tuple(order_by), limit)

    def select_item(self) -> SelectItem:
        self.check_unsupported()
        if self.tok.kind == "op" and self.tok.text == "*":
            self.advance()
            return SelectItem(Star())
        expr = self.value_expr()
        alias = None
        if self.accept("as"):
            alias = self.ident("alias")
        elif self.tok.kind == "ident" and self.tok.lower not in UNSUPPORTED:
            alias = self.advance().text
        return SelectItem(expr, alias)

    def value_expr(self) -> ColumnRef | Aggregate:
        t = self.tok
        if t.kind == "op" and t.text == "(":
            if self.peek().lower == "select":
                raise self.unsupported("subquery")
            raise self.unsupported("parenthesized expression")
        if t.kind == "ident" and t.lower in AGGREGATES and self.peek().text == "(":
            func = self.advance().lower
            self.expect("(")
            if self.tok.kind == "op" and self.tok.text == "*":
                if func != "count":
                    raise self.error(f"{func.upper()}(*) is not valid")
                self.advance()
                arg = None
            else:
                if self.tok.kind == "ident" and self.tok.lower == "distinct":
                    raise self.unsupported("DISTINCT")
                arg = self.column_ref()
            self.expect(")")
            expr = Aggregate(func, arg)
        elif t.kind == "ident" and self.peek().kind == "op" and self.peek().text == "(":
            raise self.unsupported(f"function {t.text}")
        else:
            expr = self.column_ref()
        if self.tok.kind == "op" and self.tok.text in "+-*/":
            raise self.unsupported("arithmetic expression")
        return expr

    def column_ref(self) -> ColumnRef:
        first = self.ident("column name")
        if self.tok.kind == "op" and self.tok.text == ".":
            self.advance()
            return ColumnRef(self.ident("column name"), first)
        return ColumnRef(first)

    def table_ref(self) -> TableRef:
        if self.tok.kind == "op" and self.tok.text == "(":
            raise self.unsupported("subquery")
        name = self.ident("table name")
        alias = None
        if self.accept("as"):
            alias = self.ident("alias")
        elif self.tok.kind == "ident" and self.tok.lower not in UNSUPPORTED:
            alias = self.advance().text
        return TableRef(name, alias)

    def join(self) -> Join:
        self.accept("inner")
        self.expect("join")
        table = self.table_ref()
        self.expect("on")
        left = self.column_ref()
        op = self.tok
        if not (op.kind == "op" and op.text == "="):
            if op.kind == "op" and op.text in COMPARISONS:
                raise self.unsupported("non-equi join")
            raise self.error(f"expected '=' in join condition, found {op.text!r}")
        self.advance()
        right = self.column_ref()
        if self.at_keyword("and"):
            raise self.unsupported("multi-column join condition")
        self.check_unsupported()
        return Join(table, left, right)

    def comparison(self) -> Comparison:
        if self.tok.kind == "ident":
            self.check_unsupported()
        if self.tok.kind == "op" and self.tok.text == "(":
            raise self.unsupported("parenthesized predicate")
        flipped = False
        if self.tok.kind in ("number", "string") or self.at_keyword("date") or (
            self.tok.text == "-" and self.peek().kind == "number"
        ):
            lit = self.literal()
            flipped = True
        else:
            col = self.column_ref()
        op_tok = self.tok
        self.check_unsupported()
        if op_tok.kind != "op" or op_tok.text not in COMPARISONS + ("!=",):
            raise self.error(f"expected a comparison operator, found {op_tok.text or 'end of input'!r}")
        self.advance()
        op = "<>" if op_tok.text == "!=" else op_tok.text
        if flipped:
            if self.tok.kind != "ident":
                raise self.unsupported("literal-to-literal comparison")
            col = self.column_ref()
            op = {"<": ">", ">": "<", "<=": ">=", ">=": "<="}.get(op, op)
        else:
            if self.tok.kind == "ident" and self.tok.lower not in UNSUPPORTED:
                raise self.unsupported("column-to-column comparison")
            lit = self.literal()
        if self.tok.kind == "op" and self.tok.text in "+-*/":
            raise self.unsupported("arithmetic expression")
        return Comparison(col, op, lit)

    def order_item(self) -> OrderItem:
        expr = self.value_expr()
        descending = False
        if self.accept("desc"):
            descending = True
        else:
            self.accept("asc")
        return OrderItem(expr, descending)


def parse(sql: str) -> Statement:
    if not isinstance(sql, str):
        raise TypeError("sql must be text")
    return Parser(sql).statement()
