"""Abstract syntax, parser, and pretty-printer for `.fsj` programs.

The surface syntax is Java-flavored.  A program is any number of class
declarations followed by a single main expression:

    class Cell extends Object {
        signal Nat doubled = this.n.plus(this.n);
        signal Nat n;
        Cell(Nat n) { super(); this.n = n; }
        Nat bump(Nat by) { this.n.plus(by) }
    }
    let c = new Cell(new Zero()) in (c.n = new Succ(new Zero()); c.doubled)

A field declared with an initializer is a composite field: reading it
re-evaluates the initializer against the current object graph.  A field
declared without one is a source field: it holds a location and can be
assigned.  `signal` marks a field as observable through `subscribe`.

Expression forms: variables, `this`, field access `e.f`, method call
`e.m(e, ...)`, instance creation `new C(e, ...)`, field assignment
`e.f = e`, sequencing `e; e`, handler registration `e.f.subscribe(e)`,
`let x = e in e`, and the unit literal `unit`.

`;` associates to the right and binds loosest, a `let` body extends as
far right as possible, and `=` takes an assignment-level expression on
the right, so `a.f = b; c` is a sequence whose head is the assignment.
Parentheses override all of this.

Two forms exist only at runtime and are printed but never parsed:
locations (`@7`) and pending-effect braces (`{ e }@7.f`, an effect
waiting on field `f` of the object at location 7).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


RESERVED = frozenset(
    {
        "class",
        "extends",
        "signal",
        "super",
        "this",
        "let",
        "in",
        "new",
        "subscribe",
        "unit",
        "Unit",
        "Object",
    }
)

UNIT = "Unit"
OBJECT = "Object"


@dataclass(frozen=True)
class Span:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int, expected: frozenset[str] = frozenset()):
        super().__init__(message)
        self.message = message
        self.line = line
        self.col = col
        self.expected = expected

    def __str__(self) -> str:
        if self.expected:
            alts = ", ".join(sorted(self.expected))
            return f"{self.line}:{self.col}: {self.message} (expected: {alts})"
        return f"{self.line}:{self.col}: {self.message}"


# =========================================================================
# expressions


@dataclass(frozen=True)
class Expr:
    span: Span | None = field(default=None, compare=False, repr=False, kw_only=True)


@dataclass(frozen=True)
class Var(Expr):
    """A variable reference; `this` parses to Var("this")."""

    name: str


@dataclass(frozen=True)
class FieldAccess(Expr):
    recv: Expr
    fname: str


@dataclass(frozen=True)
class Invoke(Expr):
    recv: Expr
    method: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class New(Expr):
    cls: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class Assign(Expr):
    recv: Expr
    fname: str
    value: Expr


@dataclass(frozen=True)
class Seq(Expr):
    first: Expr
    second: Expr


@dataclass(frozen=True)
class Subscribe(Expr):
    recv: Expr
    fname: str
    handler: Expr


@dataclass(frozen=True)
class Let(Expr):
    var: str
    bound: Expr
    body: Expr


@dataclass(frozen=True)
class Empty(Expr):
    """The unit literal; the sole inhabitant of type Unit."""


@dataclass(frozen=True)
class Loc(Expr):
    """Runtime only: a store location. Never produced by the parser."""

    loc: int


Key = tuple[int, str]


@dataclass(frozen=True)
class EffectBrace(Expr):
    """Runtime only: a pending effect on `key`, run once `body` is unit."""

    body: Expr
    key: Key


EMPTY = Empty()


# =========================================================================
# declarations


class Modifier(Enum):
    SIGNAL = "signal"
    PLAIN = ""


@dataclass
class CompositeField:
    """Field with an initializer; reads re-evaluate the initializer."""

    modifier: Modifier
    ftype: str
    name: str
    init: Expr
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass
class SourceField:
    """Field without an initializer; holds a location, assignable."""

    modifier: Modifier
    ftype: str
    name: str
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass
class Param:
    ptype: str
    name: str


@dataclass
class CtorDecl:
    name: str
    params: list[Param]
    super_args: list[str]
    field_inits: list[tuple[str, str]]  # (field, param), canonically (f, f)
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass
class MethodDecl:
    ret: str  # class name or "Unit"
    name: str
    params: list[Param]
    body: Expr
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass
class ClassDecl:
    name: str
    parent: str
    composites: list[CompositeField]
    sources: list[SourceField]
    ctor: CtorDecl
    methods: list[MethodDecl]
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass
class Program:
    classes: list[ClassDecl]
    main: Expr


# =========================================================================
# lexer

_PUNCT = frozenset("{}();,.=")


@dataclass(frozen=True)
class _Token:
    kind: str  # "ident", "kw", "punct", "eof"
    text: str
    line: int
    col: int


def _lex(text: str) -> list[_Token]:
    toks: list[_Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "/" and text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c.isascii() and (c.isalpha() or c == "_"):
            j = i
            while j < n and text[j].isascii() and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "kw" if word in RESERVED else "ident"
            toks.append(_Token(kind, word, line, col))
            col += j - i
            i = j
            continue
        if c in _PUNCT:
            toks.append(_Token("punct", c, line, col))
            i += 1
            col += 1
            continue
        raise ParseError(f"stray character {c!r}", line, col)
    toks.append(_Token("eof", "", line, col))
    return toks


# =========================================================================
# parser


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.toks = tokens
        self.pos = 0

    def _peek(self, ahead: int = 0) -> _Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def _next(self) -> _Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def _at(self, text: str) -> bool:
        return self._peek().text == text and self._peek().kind in ("kw", "punct")

    def _fail(self, message: str, expected: set[str] = frozenset()) -> ParseError:
        t = self._peek()
        shown = t.text if t.kind != "eof" else "end of input"
        return ParseError(f"{message}, found {shown!r}", t.line, t.col, frozenset(expected))

    def _expect(self, text: str) -> _Token:
        if not self._at(text):
            raise self._fail("unexpected token", {text})
        return self._next()

    def _ident(self, what: str) -> _Token:
        t = self._peek()
        if t.kind != "ident":
            raise self._fail(f"expected {what}", {"identifier"})
        return self._next()

    def _typename(self, allow_unit: bool = False) -> _Token:
        t = self._peek()
        if t.kind == "ident" or t.text == OBJECT or (allow_unit and t.text == UNIT):
            return self._next()
        expected = {"class name"} | ({UNIT} if allow_unit else set())
        raise self._fail("expected a type", expected)

    # ---- program and declarations

    def program(self) -> Program:
        classes = []
        while self._at("class"):
            classes.append(self.class_decl())
        main = self.expr()
        if self._peek().kind != "eof":
            raise self._fail("trailing input after main expression", {"end of input"})
        return Program(classes, main)

    def class_decl(self) -> ClassDecl:
        start = self._expect("class")
        name = self._ident("class name").text
        self._expect("extends")
        parent = self._typename().text
        self._expect("{")
        composites: list[CompositeField] = []
        sources: list[SourceField] = []
        ctor: CtorDecl | None = None
        methods: list[MethodDecl] = []
        while not self._at("}"):
            member = self._member(name)
            if isinstance(member, CompositeField):
                composites.append(member)
            elif isinstance(member, SourceField):
                sources.append(member)
            elif isinstance(member, MethodDecl):
                methods.append(member)
            else:
                if ctor is not None:
                    raise ParseError(
                        f"duplicate constructor in class {name}", member.span.line, member.span.col
                    )
                ctor = member
        close = self._expect("}")
        if ctor is None:
            raise ParseError(
                f"class {name} has no constructor", close.line, close.col
            )
        return ClassDecl(name, parent, composites, sources, ctor, methods,
                         span=Span(start.line, start.col))

    def _member(self, class_name: str):
        t = self._peek()
        span = Span(t.line, t.col)
        if self._at("signal"):
            self._next()
            return self._field_decl(Modifier.SIGNAL, span)
        if self._at(UNIT):
            self._next()
            return self._method_decl(UNIT, span)
        # one leading type/name token; "(" right after means a constructor
        head = self._typename()
        if self._at("("):
            if head.text != class_name:
                raise ParseError(
                    f"constructor name {head.text!r} must match class {class_name!r}",
                    head.line, head.col,
                )
            return self._ctor_decl(head.text, span)
        if self._peek().kind == "ident" and self._peek(1).text == "(":
            return self._method_decl(head.text, span)
        return self._field_decl(Modifier.PLAIN, span, typ=head.text)

    def _field_decl(self, modifier: Modifier, span: Span, typ: str | None = None):
        if typ is None:
            typ = self._typename().text
        name = self._ident("field name").text
        if self._at("="):
            self._next()
            # assignment level, so the terminating ';' is unambiguous;
            # sequences or lets in an initializer need parentheses
            init = self._assign()
            self._expect(";")
            return CompositeField(modifier, typ, name, init, span=span)
        self._expect(";")
        return SourceField(modifier, typ, name, span=span)

    def _ctor_decl(self, name: str, span: Span) -> CtorDecl:
        params = self._params()
        self._expect("{")
        self._expect("super")
        self._expect("(")
        super_args: list[str] = []
        if not self._at(")"):
            super_args.append(self._ident("argument name").text)
            while self._at(","):
                self._next()
                super_args.append(self._ident("argument name").text)
        self._expect(")")
        self._expect(";")
        inits: list[tuple[str, str]] = []
        while self._at("this"):
            self._next()
            self._expect(".")
            fname = self._ident("field name").text
            self._expect("=")
            pname = self._ident("parameter name").text
            self._expect(";")
            inits.append((fname, pname))
        self._expect("}")
        return CtorDecl(name, params, super_args, inits, span=span)

    def _method_decl(self, ret: str, span: Span) -> MethodDecl:
        name = self._ident("method name").text
        params = self._params()
        self._expect("{")
        body = self.expr()
        self._expect("}")
        return MethodDecl(ret, name, params, body, span=span)

    def _params(self) -> list[Param]:
        self._expect("(")
        params: list[Param] = []
        if not self._at(")"):
            while True:
                ptype = self._typename().text
                pname = self._ident("parameter name").text
                params.append(Param(ptype, pname))
                if not self._at(","):
                    break
                self._next()
        self._expect(")")
        return params

    # ---- expressions

    def expr(self) -> Expr:
        if self._at("let"):
            start = self._next()
            var = self._ident("variable name").text
            self._expect("=")
            bound = self.expr()
            self._expect("in")
            body = self.expr()
            return Let(var, bound, body, span=Span(start.line, start.col))
        first = self._assign()
        if self._at(";"):
            self._next()
            rest = self.expr()
            return Seq(first, rest, span=first.span)
        return first

    def _assign(self) -> Expr:
        target = self._postfix()
        if self._at("="):
            eq = self._next()
            if not isinstance(target, FieldAccess):
                raise ParseError(
                    "assignment target must be a field access", eq.line, eq.col
                )
            value = self._assign()
            return Assign(target.recv, target.fname, value, span=target.span)
        return target

    def _postfix(self) -> Expr:
        e = self._primary()
        while self._at("."):
            dot = self._next()
            if self._at("subscribe"):
                self._next()
                if not isinstance(e, FieldAccess):
                    raise ParseError(
                        "subscribe must follow a field access", dot.line, dot.col
                    )
                self._expect("(")
                handler = self.expr()
                self._expect(")")
                e = Subscribe(e.recv, e.fname, handler, span=e.span)
                continue
            name = self._ident("field or method name").text
            if self._at("("):
                e = Invoke(e, name, tuple(self._args()), span=e.span)
            else:
                e = FieldAccess(e, name, span=e.span)
        return e

    def _args(self) -> list[Expr]:
        self._expect("(")
        args: list[Expr] = []
        if not self._at(")"):
            args.append(self.expr())
            while self._at(","):
                self._next()
                args.append(self.expr())
        self._expect(")")
        return args

    def _primary(self) -> Expr:
        t = self._peek()
        span = Span(t.line, t.col)
        if self._at("unit"):
            self._next()
            return Empty(span=span)
        if self._at("this"):
            self._next()
            return Var("this", span=span)
        if self._at("new"):
            self._next()
            cls = self._typename().text
            return New(cls, tuple(self._args()), span=span)
        if self._at("("):
            self._next()
            e = self.expr()
            self._expect(")")
            return e
        if t.kind == "ident":
            self._next()
            return Var(t.text, span=span)
        raise self._fail(
            "expected an expression", {"unit", "this", "new", "let", "(", "identifier"}
        )


def parse_program(text: str) -> Program:
    return _Parser(_lex(text)).program()


def parse_expr(text: str) -> Expr:
    p = _Parser(_lex(text))
    e = p.expr()
    if p._peek().kind != "eof":
        raise p._fail("trailing input after expression", {"end of input"})
    return e


# =========================================================================
# pretty-printer

# Precedence levels, loosest first. A node rendered in a position that
# demands a tighter level gets parenthesized, so render/parse round-trips.
_SEQ, _ASSIGN, _POSTFIX, _ATOM = 0, 1, 2, 3


def _level(e: Expr) -> int:
    match e:
        case Seq() | Let():
            return _SEQ
        case Assign():
            return _ASSIGN
        case FieldAccess() | Invoke() | Subscribe():
            return _POSTFIX
        case _:
            return _ATOM


def render_expr(e: Expr, level: int = _SEQ) -> str:
    match e:
        case Var(name=x):
            out = x
        case FieldAccess(recv=r, fname=f):
            out = f"{render_expr(r, _POSTFIX)}.{f}"
        case Invoke(recv=r, method=m, args=args):
            inner = ", ".join(render_expr(a) for a in args)
            out = f"{render_expr(r, _POSTFIX)}.{m}({inner})"
        case New(cls=c, args=args):
            inner = ", ".join(render_expr(a) for a in args)
            out = f"new {c}({inner})"
        case Assign(recv=r, fname=f, value=v):
            out = f"{render_expr(r, _POSTFIX)}.{f} = {render_expr(v, _ASSIGN)}"
        case Seq(first=a, second=b):
            out = f"{render_expr(a, _ASSIGN)}; {render_expr(b)}"
        case Subscribe(recv=r, fname=f, handler=h):
            out = f"{render_expr(r, _POSTFIX)}.{f}.subscribe({render_expr(h)})"
        case Let(var=x, bound=b, body=body):
            out = f"let {x} = {render_expr(b)} in {render_expr(body)}"
        case Empty():
            out = "unit"
        case Loc(loc=l):
            out = f"@{l}"
        case EffectBrace(body=b, key=(l, f)):
            out = f"{{ {render_expr(b)} }}@{l}.{f}"
        case _:
            raise ValueError(f"cannot render {e!r}")
    if _level(e) < level:
        return f"({out})"
    return out


def _render_modifier(m: Modifier) -> str:
    return "signal " if m is Modifier.SIGNAL else ""


def render_program(p: Program) -> str:
    chunks = []
    for cl in p.classes:
        lines = [f"class {cl.name} extends {cl.parent} {{"]
        for cf in cl.composites:
            # initializers sit at assignment level, see _field_decl
            init = render_expr(cf.init, _ASSIGN)
            lines.append(
                f"  {_render_modifier(cf.modifier)}{cf.ftype} {cf.name} = {init};"
            )
        for sf in cl.sources:
            lines.append(f"  {_render_modifier(sf.modifier)}{sf.ftype} {sf.name};")
        k = cl.ctor
        params = ", ".join(f"{q.ptype} {q.name}" for q in k.params)
        sup = ", ".join(k.super_args)
        inits = "".join(f" this.{f} = {x};" for f, x in k.field_inits)
        lines.append(f"  {k.name}({params}) {{ super({sup});{inits} }}")
        for m in cl.methods:
            ps = ", ".join(f"{q.ptype} {q.name}" for q in m.params)
            lines.append(f"  {m.ret} {m.name}({ps}) {{ {render_expr(m.body)} }}")
        lines.append("}")
        chunks.append("\n".join(lines))
    chunks.append(render_expr(p.main))
    return "\n\n".join(chunks) + "\n"


def iter_subexprs(e: Expr):
    """Yield e and every expression nested inside it, outermost first."""
    yield e
    match e:
        case FieldAccess(recv=r):
            yield from iter_subexprs(r)
        case Invoke(recv=r, args=args):
            yield from iter_subexprs(r)
            for a in args:
                yield from iter_subexprs(a)
        case New(args=args):
            for a in args:
                yield from iter_subexprs(a)
        case Assign(recv=r, value=v):
            yield from iter_subexprs(r)
            yield from iter_subexprs(v)
        case Seq(first=a, second=b):
            yield from iter_subexprs(a)
            yield from iter_subexprs(b)
        case Subscribe(recv=r, handler=h):
            yield from iter_subexprs(r)
            yield from iter_subexprs(h)
        case Let(bound=b, body=body):
            yield from iter_subexprs(b)
            yield from iter_subexprs(body)
        case EffectBrace(body=b):
            yield from iter_subexprs(b)
