"""Parser and pretty-printer: fixtures, round trips, and failure modes."""

from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fsj import ParseError, parse_expr, parse_program, render_expr, render_program
from fsj.gen import GenConfig, generate_program
from fsj.syntax import (
    EMPTY,
    Assign,
    EffectBrace,
    Empty,
    FieldAccess,
    Invoke,
    Let,
    Loc,
    New,
    Seq,
    Subscribe,
    Var,
)

from conftest import CORPUS


# ---------------------------------------------------------------- shapes


def test_seq_groups_to_the_right():
    e = parse_expr("unit; unit; unit")
    assert isinstance(e, Seq)
    assert isinstance(e.second, Seq)
    assert not isinstance(e.first, Seq)


def test_parenthesized_seq_groups_left():
    e = parse_expr("(unit; unit); unit")
    assert isinstance(e, Seq)
    assert isinstance(e.first, Seq)


def test_let_body_extends_right():
    # the write and the read both belong to the body
    e = parse_expr("let x = new A() in x.f = x; x.f")
    assert isinstance(e, Let)
    assert isinstance(e.body, Seq)
    assert isinstance(e.body.first, Assign)


def test_let_bound_stops_at_in():
    e = parse_expr("let x = new A() in let y = x in y")
    assert isinstance(e, Let)
    assert isinstance(e.bound, New)
    assert isinstance(e.body, Let)


def test_assign_binds_tighter_than_seq():
    e = parse_expr("x.f = y; z")
    assert isinstance(e, Seq)
    assert isinstance(e.first, Assign)
    assert isinstance(e.second, Var)


def test_assign_value_may_be_assign():
    # chained writes associate to the right
    e = parse_expr("x.f = y.g = z")
    assert isinstance(e, Assign)
    assert isinstance(e.value, Assign)


def test_subscribe_parses_to_node():
    e = parse_expr("x.f.subscribe(y.g = x.f)")
    assert isinstance(e, Subscribe)
    assert e.fname == "f"
    assert isinstance(e.recv, Var)
    assert isinstance(e.handler, Assign)


def test_subscribe_on_chained_receiver():
    e = parse_expr("x.a.b.subscribe(unit)")
    assert isinstance(e, Subscribe)
    assert e.fname == "b"
    assert isinstance(e.recv, FieldAccess)


def test_postfix_on_new():
    e = parse_expr("new A().m(new B())")
    assert isinstance(e, Invoke)
    assert isinstance(e.recv, New)


def test_field_chain():
    e = parse_expr("x.a.b.c")
    assert isinstance(e, FieldAccess)
    assert e.fname == "c"
    assert isinstance(e.recv, FieldAccess)


def test_unit_literal():
    assert isinstance(parse_expr("unit"), Empty)


def test_this_is_a_variable():
    e = parse_expr("this.f")
    assert isinstance(e, FieldAccess)
    assert e.recv == Var("this")


def test_comments_are_skipped():
    e = parse_expr("unit; // trailing words\nunit")
    assert isinstance(e, Seq)


def test_member_dispatch():
    p = parse_program(
        """
        class A extends Object {
          signal A derived = this.src;
          signal A src;
          A plain;
          A(A src, A plain) { super(); this.src = src; this.plain = plain; }
          A id(A x) { x }
          Unit nop() { unit }
        }
        unit
        """
    )
    cl = p.classes[0]
    assert [f.name for f in cl.composites] == ["derived"]
    assert [f.name for f in cl.sources] == ["src", "plain"]
    assert [m.name for m in cl.methods] == ["id", "nop"]
    assert [q.name for q in cl.ctor.params] == ["src", "plain"]
    assert cl.ctor.field_inits == [("src", "src"), ("plain", "plain")]


def test_initializer_stops_at_semicolon():
    # the ';' after the initializer ends the member, not a sequence
    p = parse_program(
        """
        class A extends Object {
          signal A echo = this.src;
          signal A src;
          A(A src) { super(); this.src = src; }
        }
        unit
        """
    )
    assert isinstance(p.classes[0].composites[0].init, FieldAccess)


def test_initializer_seq_requires_parens():
    p = parse_program(
        """
        class A extends Object {
          signal A echo = (unit; this.src);
          signal A src;
          A(A src) { super(); this.src = src; }
        }
        unit
        """
    )
    assert isinstance(p.classes[0].composites[0].init, Seq)


# ---------------------------------------------------------------- errors


@pytest.mark.parametrize(
    "text",
    [
        "",
        "let = new A() in x",
        "let x new A() in x",
        "x.",
        "x.f = ",
        "new class()",
        "x.f.subscribe(unit",
        "(unit; unit",
        "unit unit",
        "let let = unit in unit",
        "x.this",
        "@1",
        "{ unit }@1.f",
        "x;; y",
    ],
)
def test_bad_expressions_raise(text):
    with pytest.raises(ParseError):
        parse_expr(text)


@pytest.mark.parametrize(
    "text",
    [
        "class A { }",
        "class A extends Object { A() { super(); } }",  # missing main
        "class extends Object { } unit",
        "class A extends Object { B() { super(); } } unit",  # ctor name mismatch
        "class A extends Object { A f } unit",
        "class A extends Object { A() { } } unit",  # ctor without super call
        "class A extends Object { signal A; } unit",
        "class A extends Object { A() { super(); } } unit extra",
    ],
)
def test_bad_programs_raise(text):
    with pytest.raises(ParseError):
        parse_program(text)


@pytest.mark.parametrize("word", ["class", "extends", "let", "in", "new", "signal", "super", "this", "unit", "subscribe", "Unit"])
def test_reserved_words_are_not_binders(word):
    with pytest.raises(ParseError):
        parse_expr(f"let {word} = new A() in unit")


def test_error_carries_position():
    try:
        parse_program("class A extends Object {\n  ?\n}\nunit")
    except ParseError as err:
        assert err.line == 2
        assert err.col == 3
    else:
        pytest.fail("expected a parse error")


def test_error_lists_expectations():
    try:
        parse_expr("")
    except ParseError as err:
        assert err.expected
    else:
        pytest.fail("expected a parse error")


# ------------------------------------------------------------ rendering


def test_render_runtime_forms():
    assert render_expr(Loc(7)) == "@7"
    brace = EffectBrace(EMPTY, (7, "f"))
    assert render_expr(brace) == "{ unit }@7.f"


def test_runtime_forms_do_not_parse_back():
    with pytest.raises(ParseError):
        parse_expr(render_expr(Loc(7)))
    with pytest.raises(ParseError):
        parse_expr(render_expr(EffectBrace(EMPTY, (7, "f"))))


def test_render_parenthesizes_nested_seq():
    e = Seq(Seq(EMPTY, EMPTY), EMPTY)
    assert render_expr(e) == "(unit; unit); unit"
    assert parse_expr(render_expr(e)) == e


def test_render_parenthesizes_let_under_postfix():
    e = FieldAccess(Let("x", New("A", ()), Var("x")), "f")
    assert render_expr(e) == "(let x = new A() in x).f"
    assert parse_expr(render_expr(e)) == e


@pytest.mark.parametrize("path", sorted(CORPUS.glob("**/*.fsj")), ids=lambda p: p.name)
def test_corpus_round_trips(path: Path):
    program = parse_program(path.read_text())
    text = render_program(program)
    again = parse_program(text)
    assert render_program(again) == text


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_generated_programs_round_trip(seed: int):
    program = generate_program(GenConfig(seed=seed))
    text = render_program(program)
    assert render_program(parse_program(text)) == text


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=80))
def test_parser_is_total(text: str):
    """Arbitrary input either parses or raises ParseError, nothing else."""
    try:
        parse_program(text)
    except ParseError:
        pass
