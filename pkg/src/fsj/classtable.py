"""Class table construction and member lookup.

Builds a name-indexed table from a parsed program and validates the
global assumptions everything downstream relies on: the extends graph is
acyclic and reaches Object, no field is declared twice or shadows an
inherited one, method names are never overloaded (an override must keep
the exact signature), parameter names are distinct, and each constructor
has the canonical shape

    C(<inherited source fields>, <own source fields>) {
        super(<inherited>); this.f = f; ...
    }

i.e. it forwards the superclass portion and initializes exactly this
class's uninitialized fields, in declaration order.  Only the local half
of that shape is checked here; whether the forwarded portion matches the
superclass is a typing concern (see typecheck.check_class).

Lookups treat Object as a fieldless, methodless root that is always
present.  Field lists are ordered superclass-first, which is also the
argument order of `new C(...)`.
"""

from __future__ import annotations

from dataclasses import dataclass

from .syntax import (
    OBJECT,
    ClassDecl,
    CompositeField,
    Expr,
    Modifier,
    Program,
    SourceField,
)


class ClassTableError(Exception):
    pass


class DuplicateClassError(ClassTableError):
    pass


class UnknownParentError(ClassTableError):
    pass


class CycleError(ClassTableError):
    pass


class DuplicateFieldError(ClassTableError):
    pass


class OverloadError(ClassTableError):
    pass


class DuplicateParamError(ClassTableError):
    pass


class CtorMismatchError(ClassTableError):
    pass


class UnknownClassError(ClassTableError):
    pass


@dataclass
class ClassTable:
    decls: dict[str, ClassDecl]
    _composites: dict[str, tuple[CompositeField, ...]]
    _sources: dict[str, tuple[SourceField, ...]]

    def __contains__(self, name: str) -> bool:
        return name == OBJECT or name in self.decls

    def decl(self, name: str) -> ClassDecl:
        if name not in self.decls:
            raise UnknownClassError(name)
        return self.decls[name]

    def parent(self, name: str) -> str | None:
        if name == OBJECT:
            return None
        return self.decl(name).parent

    def ancestry(self, name: str):
        """Yield name and its superclasses up to and including Object."""
        cur: str | None = name
        while cur is not None:
            yield cur
            cur = self.parent(cur)

    def composite(self, name: str) -> tuple[CompositeField, ...]:
        """Initialized fields of name, superclass fields first."""
        if name == OBJECT:
            return ()
        if name not in self._composites:
            raise UnknownClassError(name)
        return self._composites[name]

    def source(self, name: str) -> tuple[SourceField, ...]:
        """Uninitialized fields of name, superclass fields first."""
        if name == OBJECT:
            return ()
        if name not in self._sources:
            raise UnknownClassError(name)
        return self._sources[name]

    def ftype(self, name: str, fname: str) -> tuple[Modifier, str] | None:
        """Modifier and declared type of field fname, or None."""
        for cf in self.composite(name):
            if cf.name == fname:
                return (cf.modifier, cf.ftype)
        for sf in self.source(name):
            if sf.name == fname:
                return (sf.modifier, sf.ftype)
        return None

    def find_method(self, method: str, name: str):
        """Nearest declaration of method on name's chain, or None."""
        for cls in self.ancestry(name):
            if cls == OBJECT:
                return None
            for m in self.decl(cls).methods:
                if m.name == method:
                    return m
        return None

    def mbody(self, method: str, name: str) -> tuple[list[str], Expr] | None:
        m = self.find_method(method, name)
        if m is None:
            return None
        return ([p.name for p in m.params], m.body)

    def mtype(self, method: str, name: str) -> tuple[list[str], str] | None:
        m = self.find_method(method, name)
        if m is None:
            return None
        return ([p.ptype for p in m.params], m.ret)


def _check_ctor_local(decl: ClassDecl) -> None:
    k = decl.ctor
    own = [(f.ftype, f.name) for f in decl.sources]
    names = [p.name for p in k.params]
    if len(set(names)) != len(names):
        raise CtorMismatchError(f"{decl.name}: duplicate constructor parameter")
    if len(k.params) < len(own):
        raise CtorMismatchError(
            f"{decl.name}: constructor takes fewer parameters than declared source fields"
        )
    split = len(k.params) - len(own)
    super_part, own_part = k.params[:split], k.params[split:]
    if [(p.ptype, p.name) for p in own_part] != own:
        raise CtorMismatchError(
            f"{decl.name}: trailing constructor parameters must mirror the class's"
            " own source fields in declaration order"
        )
    if k.super_args != [p.name for p in super_part]:
        raise CtorMismatchError(
            f"{decl.name}: super(...) must forward the leading parameters in order"
        )
    if k.field_inits != [(n, n) for _, n in own]:
        raise CtorMismatchError(
            f"{decl.name}: constructor body must be exactly"
            " 'this.f = f;' for each own source field, in order"
        )


def build_class_table(program: Program) -> ClassTable:
    decls: dict[str, ClassDecl] = {}
    for cl in program.classes:
        if cl.name in decls or cl.name == OBJECT:
            raise DuplicateClassError(cl.name)
        decls[cl.name] = cl

    for cl in program.classes:
        if cl.parent != OBJECT and cl.parent not in decls:
            raise UnknownParentError(f"{cl.name} extends unknown class {cl.parent}")

    # Every parent chain must reach Object without revisiting a class.
    for cl in program.classes:
        seen = {cl.name}
        cur = cl.parent
        while cur != OBJECT:
            if cur in seen:
                raise CycleError(f"inheritance cycle through {cur}")
            seen.add(cur)
            cur = decls[cur].parent

    table = ClassTable(decls, {}, {})

    def chain_fields(name: str) -> tuple[tuple[CompositeField, ...], tuple[SourceField, ...]]:
        if name == OBJECT:
            return (), ()
        if name not in table._composites:
            pc, ps = chain_fields(decls[name].parent)
            table._composites[name] = pc + tuple(decls[name].composites)
            table._sources[name] = ps + tuple(decls[name].sources)
        return table._composites[name], table._sources[name]

    for cl in program.classes:
        own = [f.name for f in cl.composites] + [f.name for f in cl.sources]
        if len(set(own)) != len(own):
            raise DuplicateFieldError(f"duplicate field in class {cl.name}")
        inherited_c, inherited_s = chain_fields(cl.parent)
        inherited = {f.name for f in inherited_c} | {f.name for f in inherited_s}
        clash = inherited.intersection(own)
        if clash:
            raise DuplicateFieldError(
                f"{cl.name} hides inherited field {sorted(clash)[0]}"
            )
        chain_fields(cl.name)

        seen_methods: dict[str, tuple[list[str], str]] = {}
        for m in cl.methods:
            pnames = [p.name for p in m.params]
            if len(set(pnames)) != len(pnames):
                raise DuplicateParamError(f"{cl.name}.{m.name}: duplicate parameter")
            sig = ([p.ptype for p in m.params], m.ret)
            if m.name in seen_methods:
                raise OverloadError(f"{cl.name} declares {m.name} twice")
            seen_methods[m.name] = sig
            inherited_sig = table.mtype(m.name, cl.parent)
            if inherited_sig is not None and inherited_sig != sig:
                raise OverloadError(
                    f"{cl.name}.{m.name} changes the inherited signature"
                )

        _check_ctor_local(cl)

    return table
