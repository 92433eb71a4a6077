import datetime as dt
from decimal import Decimal

import pytest

from corpus import EXTRA_PARSE_QUERIES, QUERIES
from web3db.engine import parse, to_sql
from web3db.engine.ast import Aggregate, ColumnRef, CreateTable, Insert, Select
from web3db.errors import SqlSyntaxError, UnsupportedFeatureError

ROUND_TRIP = QUERIES + EXTRA_PARSE_QUERIES


def test_corpus_size():
    assert len(ROUND_TRIP) == 50


@pytest.mark.parametrize("sql", ROUND_TRIP)
def test_pretty_print_reparses_to_equal_ast(sql):
    ast = parse(sql)
    assert parse(to_sql(ast)) == ast


def test_grammar_exercise():
    ast = parse("SELECT a, SUM(b) FROM t WHERE c > 5 GROUP BY a ORDER BY a ASC LIMIT 10")
    assert isinstance(ast, Select)
    assert len(ast.where) == 1 and ast.where[0].op == ">"
    assert [i.expr for i in ast.items][1] == Aggregate("sum", ColumnRef("b"))
    assert ast.group_by == (ColumnRef("a"),)
    assert ast.order_by[0].descending is False
    assert ast.limit == 10


def test_equi_join():
    ast = parse("SELECT * FROM t1 JOIN t2 ON t1.k = t2.k")
    assert ast.join.table.name == "t2"
    assert ast.join.left == ColumnRef("k", "t1") and ast.join.right == ColumnRef("k", "t2")


def test_literals():
    ins = parse("INSERT INTO t VALUES (-1, 2.50, 'it''s', DATE '2021-02-03')")
    assert isinstance(ins, Insert)
    assert [lit.value for lit in ins.rows[0]] == [-1, Decimal("2.5000"), "it's", dt.date(2021, 2, 3)]
    ct = parse("CREATE TABLE x (a INT, b NUMERIC, c VARCHAR, d DATE)")
    assert isinstance(ct, CreateTable)
    assert [c.type for c in ct.columns] == ["integer", "decimal", "text", "date"]


def test_flipped_comparison_normalized():
    assert parse("SELECT a FROM t WHERE 5 < a").where == parse("SELECT a FROM t WHERE a > 5").where


@pytest.mark.parametrize(
    "sql,construct",
    [
        ("SELECT * FROM t WHERE a = 1 OR b = 2", "OR"),
        ("SELECT a FROM t GROUP BY a HAVING a > 1", "HAVING"),
        ("SELECT DISTINCT a FROM t", "DISTINCT"),
        ("SELECT a FROM t WHERE a IN (1, 2)", "IN"),
        ("SELECT a FROM t WHERE b LIKE 'x'", "LIKE"),
        ("SELECT a FROM t LEFT JOIN u ON t.a = u.a", "LEFT JOIN"),
        ("SELECT a FROM (SELECT a FROM t)", "subquery"),
        ("SELECT a FROM t WHERE a = (SELECT 1)", "subquery"),
        ("SELECT a + 1 FROM t", "arithmetic expression"),
        ("SELECT a FROM t WHERE a = b", "column-to-column comparison"),
        ("SELECT a FROM t JOIN u ON t.a < u.a", "non-equi join"),
        ("SELECT a FROM t JOIN u ON t.a = u.a JOIN v ON u.a = v.a", "multiple joins"),
        ("SELECT a FROM t, u", "implicit cross join"),
        ("SELECT UPPER(a) FROM t", "function UPPER"),
        ("DELETE FROM t", "DELETE"),
    ],
)
def test_unsupported_constructs_are_named(sql, construct):
    with pytest.raises(UnsupportedFeatureError) as info:
        parse(sql)
    assert construct in info.value.construct
    assert construct in str(info.value)


@pytest.mark.parametrize(
    "sql,line,column",
    [
        ("SELEC a FROM t", 1, 1),
        ("SELECT a FROM", 1, 14),
        ("SELECT a\nFROM t\nWHERE a >", 3, 10),
        ("SELECT a FROM t LIMIT x", 1, 23),
        ("SELECT a FROM t WHERE a = 'open", 1, 27),
        ("SELECT SUM(*) FROM t", 1, 12),
    ],
)
def test_syntax_error_positions(sql, line, column):
    with pytest.raises(SqlSyntaxError) as info:
        parse(sql)
    err = info.value
    assert not isinstance(err, UnsupportedFeatureError)
    assert (err.line, err.column) == (line, column)
    assert f"line {line}, column {column}" in str(err)


def test_trailing_garbage_is_error():
    with pytest.raises(SqlSyntaxError):
        parse("SELECT a FROM t garbage more")
