"""Executable soundness oracles.

The calculus promises that a well-typed program never gets stuck, that
every reduction preserves typing, and that specific whole-run facts hold
about the two propagation styles:

  subject-reduction   each step's result types to a subtype of the
                      previous type, the store typing only grows, and
                      both stores stay well typed against it
  progress            a well-typed expression is a location, unit, or
                      can step; the machine never wedges before fuel
  plain-write-silent  writing a plain field yields unit, touches no
                      handler state, and enqueues nothing
  handler-delivery    a handler registered on a field downstream of a
                      written signal shows up in the pending work the
                      write's brace expands to
  pull-preserves-stores  reading an initialized field changes no store
  source-only-writes  no reduction ever writes an initialized field,
                      statically rejected and dynamically re-checked

`audit_run` drives the machine one step at a time and re-derives every
one of these from the public interpreter and checker APIs only; it never
peeks at interpreter internals, so an interpreter bug cannot silently
excuse itself.  The generative campaign feeds it seeded random programs;
scenario checks replay curated programs with structural assertions.
"""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

from .classtable import ClassTable, build_class_table
from .gen import GenConfig, generate_program, shrink
from .interp import (
    MachineState,
    StuckError,
    effect,
    handlers_of,
    initial_state,
    is_terminal,
    run,
    step,
)
from .syntax import (
    Empty,
    Expr,
    Key,
    Loc,
    Modifier,
    New,
    Program,
    Seq,
    iter_subexprs,
    parse_program,
)
from .typecheck import UNIT, TypingError, check_program, is_subtype, type_expr

CAMPAIGN_FUEL = 2_000

P_SUBJECT_REDUCTION = "subject_reduction"
P_PROGRESS = "progress"
P_PLAIN_SILENT = "plain_write_silent"
P_DELIVERY = "handler_delivery"
P_PULL_PURE = "pull_preserves_stores"
P_SOURCE_ONLY = "source_only_writes"


@dataclass
class PropertyReport:
    prop: str
    subject: str  # corpus file name or "seed=<n>"
    outcome: str  # "pass" | "violation" | "fuel" | "stuck"
    step: int | None = None
    detail: str | None = None

    @property
    def ok(self) -> bool:
        return self.outcome != "violation"

    def line(self) -> str:
        extra = f" step={self.step}" if self.step is not None else ""
        note = f" ({self.detail})" if self.detail and not self.ok else ""
        return f"{self.subject} theorem={self.prop} result={self.outcome}{extra}{note}"


def check_store_typing(
    ct: ClassTable,
    store: dict,
    handlers: dict[Key, Expr],
    store_typing: dict[int, str],
) -> str | None:
    """Both stores well typed against the store typing; None when fine.

    Every location is typed at exactly its object's class and each
    stored field location must fit the declared field type; every
    registered handler must type to Unit over locations alone.
    """
    if store.keys() != store_typing.keys():
        return "object store and store typing have different domains"
    for l, obj in store.items():
        if store_typing[l] != obj.cls:
            return f"@{l} typed {store_typing[l]} but stores a {obj.cls}"
        as_new = New(obj.cls, tuple(Loc(a) for a in obj.fields))
        try:
            t = type_expr(ct, {}, store_typing, as_new)
        except TypingError as err:
            return f"@{l} holds an ill-typed object: {err.message}"
        if t != obj.cls:
            return f"@{l} re-types to {t}, expected {obj.cls}"
    for (l, f), h in handlers.items():
        if l not in store_typing:
            return f"handler key @{l}.{f} names an unknown location"
        try:
            t = type_expr(ct, {}, store_typing, h)
        except TypingError as err:
            return f"handlers on @{l}.{f} ill-typed: {err.message}"
        if t != UNIT:
            return f"handlers on @{l}.{f} have type {t}, expected Unit"
    return None


@dataclass
class AuditResult:
    status: str  # "terminal" | "fuel" | "stuck" | "violated"
    steps: int
    violation: PropertyReport | None
    rules: Counter = field(default_factory=Counter)
    state: MachineState | None = None


def audit_run(
    ct: ClassTable,
    main: Expr,
    subject: str = "<main>",
    fuel: int = CAMPAIGN_FUEL,
    mutations: frozenset[str] = frozenset(),
) -> AuditResult:
    """Step the machine under every per-step soundness check at once."""
    rules: Counter = Counter()
    t_prev = type_expr(ct, {}, {}, main)  # caller guarantees this succeeds
    st = initial_state(main)

    def bad(prop: str, msg: str) -> AuditResult:
        report = PropertyReport(prop, subject, "violation", step=st.steps, detail=msg)
        return AuditResult("violated", st.steps, report, rules, st)

    while st.steps < fuel:
        before_store = dict(st.store)
        before_handlers = dict(st.handlers)
        before_typing = dict(st.store_typing)
        try:
            out = step(ct, st, mutations)
        except StuckError:
            return AuditResult("stuck", st.steps, None, rules, st)
        if out is None:
            return AuditResult("terminal", st.steps, None, rules, st)
        rules[out.rule] += 1
        nst = out.state

        try:
            t_now = type_expr(ct, {}, nst.store_typing, nst.expr)
        except TypingError as err:
            st = nst
            return bad(P_SUBJECT_REDUCTION, f"untypable after {out.rule}: {err.message}")
        if not is_subtype(ct, t_now, t_prev):
            st = nst
            return bad(P_SUBJECT_REDUCTION, f"type grew from {t_prev} to {t_now} on {out.rule}")
        missing = [l for l in before_typing if nst.store_typing.get(l) != before_typing[l]]
        if missing:
            st = nst
            return bad(P_SUBJECT_REDUCTION, f"store typing dropped or retyped @{missing[0]}")
        msg = check_store_typing(ct, nst.store, nst.handlers, nst.store_typing)
        if msg is not None:
            st = nst
            return bad(P_SUBJECT_REDUCTION, f"after {out.rule}: {msg}")

        if out.rule == "R-FIELDS" and (
            nst.store != before_store
            or nst.handlers != before_handlers
            or nst.store_typing != before_typing
        ):
            st = nst
            return bad(P_PULL_PURE, "a pull changed a store")

        if out.rule in ("R-ASSIGN", "R-ASSIGNS"):
            ev = next(e for e in out.events if e.kind in ("plain-write", "signal-write"))
            cls = nst.store[ev.loc].cls
            sf = next((s for s in ct.source(cls) if s.name == ev.fname), None)
            if sf is None:
                st = nst
                return bad(P_SOURCE_ONLY, f"{out.rule} wrote initialized field {cls}.{ev.fname}")
            enqueued = any(e.kind == "handler-enqueue" for e in out.events)
            if sf.modifier is Modifier.SIGNAL and (out.rule != "R-ASSIGNS" or not enqueued):
                st = nst
                return bad(
                    P_DELIVERY,
                    f"write to signal field {cls}.{ev.fname} scheduled no notification",
                )
            if sf.modifier is not Modifier.SIGNAL and (
                out.rule != "R-ASSIGN" or enqueued or nst.handlers != before_handlers
            ):
                st = nst
                return bad(
                    P_PLAIN_SILENT,
                    f"write to unmodified field {cls}.{ev.fname} scheduled notification work",
                )

        t_prev = t_now
        st = nst

    if is_terminal(st.expr):
        return AuditResult("terminal", st.steps, None, rules, st)
    return AuditResult("fuel", st.steps, None, rules, st)


def check_subject_reduction(
    ct: ClassTable,
    main: Expr,
    subject: str = "<main>",
    fuel: int = CAMPAIGN_FUEL,
    mutations: frozenset[str] = frozenset(),
) -> PropertyReport:
    """Per-step typing preservation; stuck and fuel are distinct outcomes."""
    res = audit_run(ct, main, subject, fuel, mutations)
    if res.status == "violated":
        return res.violation
    if res.status in ("stuck", "fuel"):
        return PropertyReport(P_SUBJECT_REDUCTION, subject, res.status, step=res.steps)
    return PropertyReport(P_SUBJECT_REDUCTION, subject, "pass", step=res.steps)


def check_progress(
    ct: ClassTable,
    main: Expr,
    subject: str = "<main>",
    fuel: int = CAMPAIGN_FUEL,
    mutations: frozenset[str] = frozenset(),
) -> PropertyReport:
    """A well-typed program only stops at a location or unit."""
    res = run(ct, main, fuel=fuel, mutations=mutations, collect_trace=False)
    if res.status == "stuck":
        return PropertyReport(
            P_PROGRESS, subject, "violation", step=res.state.steps, detail=res.stuck_message
        )
    if res.status == "fuel":
        return PropertyReport(P_PROGRESS, subject, "fuel", step=res.state.steps)
    return PropertyReport(P_PROGRESS, subject, "pass", step=res.state.steps)


# =========================================================================
# curated scenario checks


def plain_write_silent(
    ct: ClassTable, main: Expr, subject: str, fuel: int = CAMPAIGN_FUEL
) -> PropertyReport:
    """Plain-field writes reduce to unit and never touch handler state."""
    st = initial_state(main)
    writes = 0
    while st.steps < fuel:
        before_handlers = dict(st.handlers)
        try:
            out = step(ct, st)
        except StuckError as err:
            return PropertyReport(P_PLAIN_SILENT, subject, "violation", st.steps, str(err))
        if out is None:
            break
        if out.rule == "R-ASSIGN":
            writes += 1
            if any(e.kind == "handler-enqueue" for e in out.events):
                return PropertyReport(
                    P_PLAIN_SILENT, subject, "violation", st.steps,
                    "plain write enqueued handlers",
                )
            if out.state.handlers != before_handlers:
                return PropertyReport(
                    P_PLAIN_SILENT, subject, "violation", st.steps,
                    "plain write changed the handler store",
                )
        st = out.state
    if writes == 0:
        return PropertyReport(
            P_PLAIN_SILENT, subject, "violation", None, "scenario exercised no plain write"
        )
    if not isinstance(st.expr, (Empty, Loc)):
        return PropertyReport(P_PLAIN_SILENT, subject, "fuel", st.steps)
    return PropertyReport(P_PLAIN_SILENT, subject, "pass", st.steps)


def handler_delivery(
    ct: ClassTable, main: Expr, subject: str, fuel: int = CAMPAIGN_FUEL
) -> PropertyReport:
    """Every registered handler reachable from a write is delivered.

    Handlers sitting on the written field itself must show up in the work
    the write schedules; handlers on fields derived from it must show up
    in the continuation that runs once that work is done. Both sides are
    recomputed from the public dependency functions and compared against
    the machine's actual next expression.
    """
    st = initial_state(main)
    registered: list[tuple[Key, Expr]] = []
    delivered = 0
    while st.steps < fuel:
        try:
            out = step(ct, st)
        except StuckError as err:
            return PropertyReport(P_DELIVERY, subject, "violation", st.steps, str(err))
        if out is None:
            break
        if out.rule == "R-SUBSCRIBE":
            ev = next(e for e in out.events if e.kind == "subscribe")
            key = (ev.loc, ev.fname)
            stored = out.state.handlers[key]
            assert isinstance(stored, Seq)
            registered.append((key, stored.second))
        if out.rule == "R-ASSIGNS":
            # handlers on the written field run as the scheduled payload
            ev = next(e for e in out.events if e.kind == "signal-write")
            key = (ev.loc, ev.fname)
            for hkey, h in registered:
                if hkey == key:
                    delivered += 1
                    if not _occurs(h, out.state.expr):
                        return PropertyReport(
                            P_DELIVERY, subject, "violation", st.steps,
                            f"handler on @{key[0]}.{key[1]} missing from its write",
                        )
        if out.rule == "R-ASSIGNCONT":
            # the brace that just finished names the written key
            key = _finished_brace_key(st.expr)
            if key is not None:
                affected = effect(ct, st.store, key)
                expansion = handlers_of(ct, st.handlers, st.store, key)
                for hkey, h in registered:
                    if hkey in affected:
                        delivered += 1
                        if not _occurs(h, expansion):
                            return PropertyReport(
                                P_DELIVERY, subject, "violation", st.steps,
                                f"handler on @{hkey[0]}.{hkey[1]} missing from expansion",
                            )
                        if not _occurs(h, out.state.expr):
                            return PropertyReport(
                                P_DELIVERY, subject, "violation", st.steps,
                                "handler missing from the machine expression",
                            )
        st = out.state
    if delivered == 0:
        return PropertyReport(
            P_DELIVERY, subject, "violation", None, "scenario delivered no handler"
        )
    return PropertyReport(P_DELIVERY, subject, "pass", st.steps)


def _finished_brace_key(e: Expr) -> Key | None:
    """Key of the innermost brace whose body is unit, depth first."""
    from .syntax import EffectBrace

    found = None
    for sub in iter_subexprs(e):
        if isinstance(sub, EffectBrace) and isinstance(sub.body, Empty):
            found = sub.key
    return found


def _occurs(needle: Expr, hay: Expr) -> bool:
    return any(sub == needle for sub in iter_subexprs(hay))


def pull_preserves_stores(
    ct: ClassTable, main: Expr, subject: str, fuel: int = CAMPAIGN_FUEL
) -> PropertyReport:
    """Every initialized-field read leaves all three stores untouched."""
    st = initial_state(main)
    pulls = 0
    while st.steps < fuel:
        snap = (dict(st.store), dict(st.handlers), dict(st.store_typing))
        try:
            out = step(ct, st)
        except StuckError as err:
            return PropertyReport(P_PULL_PURE, subject, "violation", st.steps, str(err))
        if out is None:
            break
        if out.rule == "R-FIELDS":
            pulls += 1
            after = (out.state.store, out.state.handlers, out.state.store_typing)
            if snap != after:
                return PropertyReport(
                    P_PULL_PURE, subject, "violation", st.steps, "pull changed a store"
                )
        st = out.state
    if pulls == 0:
        return PropertyReport(
            P_PULL_PURE, subject, "violation", None, "scenario exercised no pull"
        )
    return PropertyReport(P_PULL_PURE, subject, "pass", st.steps)


def source_only_writes(
    ct: ClassTable, main: Expr, subject: str, fuel: int = CAMPAIGN_FUEL
) -> PropertyReport:
    """No write step ever lands on an initialized field."""
    st = initial_state(main)
    while st.steps < fuel:
        try:
            out = step(ct, st)
        except StuckError as err:
            return PropertyReport(P_SOURCE_ONLY, subject, "violation", st.steps, str(err))
        if out is None:
            break
        if out.rule in ("R-ASSIGN", "R-ASSIGNS"):
            ev = next(e for e in out.events if e.kind.endswith("-write"))
            cls = out.state.store[ev.loc].cls
            if not any(sf.name == ev.fname for sf in ct.source(cls)):
                return PropertyReport(
                    P_SOURCE_ONLY, subject, "violation", st.steps,
                    f"wrote initialized field {cls}.{ev.fname}",
                )
        st = out.state
    return PropertyReport(P_SOURCE_ONLY, subject, "pass", st.steps)


# =========================================================================
# campaign


@dataclass
class CampaignResult:
    count: int
    reports: list[tuple[int, PropertyReport]]
    elapsed: float
    rules: Counter

    @property
    def violations(self) -> list[tuple[int, PropertyReport]]:
        return [(s, r) for s, r in self.reports if not r.ok]

    def tally(self) -> dict[str, Counter]:
        out: dict[str, Counter] = {}
        for _, r in self.reports:
            out.setdefault(r.prop, Counter())[r.outcome] += 1
        return out


def campaign(
    count: int,
    base_seed: int = 0,
    fuel: int = CAMPAIGN_FUEL,
    config: GenConfig | None = None,
    mutations: frozenset[str] = frozenset(),
) -> CampaignResult:
    """Generate `count` seeded programs and audit each one."""
    started = time.perf_counter()
    reports: list[tuple[int, PropertyReport]] = []
    rules: Counter = Counter()
    base_cfg = config or GenConfig()
    for seed in range(base_seed, base_seed + count):
        cfg = replace(base_cfg, seed=seed)
        label = f"seed={seed}"
        program = generate_program(cfg)
        ct = build_class_table(program)
        report = check_program(ct, program)
        if not report.ok:
            detail = "; ".join(str(e) for e in report.errors[:3])
            reports.append(
                (seed, PropertyReport("well_typed_generation", label, "violation", None, detail))
            )
            continue
        res = audit_run(ct, program.main, label, fuel, mutations)
        rules.update(res.rules)
        if res.status == "violated":
            reports.append((seed, res.violation))
        else:
            sr_outcome = {"terminal": "pass", "fuel": "fuel", "stuck": "stuck"}[res.status]
            reports.append(
                (seed, PropertyReport(P_SUBJECT_REDUCTION, label, sr_outcome, res.steps))
            )
        reports.append((seed, check_progress(ct, program.main, label, fuel, mutations)))
    return CampaignResult(count, reports, time.perf_counter() - started, rules)


def shrink_campaign_failure(seed: int, prop: str, fuel: int = CAMPAIGN_FUEL,
                            config: GenConfig | None = None,
                            mutations: frozenset[str] = frozenset()) -> Program:
    """Re-derive and minimize the failing program for one campaign seed."""
    cfg = replace(config or GenConfig(), seed=seed)
    program = generate_program(cfg)

    def still_fails(p: Program) -> bool:
        try:
            ct = build_class_table(p)
            if not check_program(ct, p).ok:
                return prop == "well_typed_generation"
            res = audit_run(ct, p.main, fuel=fuel, mutations=mutations)
            if prop == P_PROGRESS:
                return res.status == "stuck"
            return res.status == "violated" and res.violation.prop == prop
        except Exception:
            return False

    return shrink(program, still_fails)


# =========================================================================
# corpus loading and the scenario suite


def load_corpus(corpus_dir: Path) -> list[tuple[str, Program, ClassTable]]:
    """Parse, table, and type check every well-typed corpus program."""
    out = []
    for path in sorted(corpus_dir.glob("*.fsj")):
        program = parse_program(path.read_text())
        ct = build_class_table(program)
        report = check_program(ct, program)
        if not report.ok:
            raise ValueError(f"{path.name}: corpus program failed checking: {report.errors[0]}")
        out.append((path.name, program, ct))
    return out


def scenario_suite(corpus_dir: Path, fuel: int = CAMPAIGN_FUEL) -> list[PropertyReport]:
    """Replay the curated scenarios with structural assertions."""
    reports: list[PropertyReport] = []

    def load(name: str):
        program = parse_program((corpus_dir / name).read_text())
        return build_class_table(program), program

    ct, p = load("plain_assign.fsj")
    reports.append(plain_write_silent(ct, p.main, "plain_assign.fsj", fuel))

    ct, p = load("handler_delivery.fsj")
    reports.append(handler_delivery(ct, p.main, "handler_delivery.fsj", fuel))

    for name in ("peano_pull.fsj", "signal_chain.fsj"):
        ct, p = load(name)
        reports.append(pull_preserves_stores(ct, p.main, name, fuel))

    # static half of the write restriction: the checker must reject it
    from .typecheck import ErrKind

    bad_path = corpus_dir / "illtyped" / "composite_assign.fsj"
    program = parse_program(bad_path.read_text())
    ct = build_class_table(program)
    report = check_program(ct, program)
    rejected = any(e.kind is ErrKind.ASSIGN_TO_COMPOSITE for e in report.errors)
    reports.append(
        PropertyReport(
            P_SOURCE_ONLY,
            "illtyped/composite_assign.fsj",
            "pass" if rejected else "violation",
            detail=None if rejected else "checker accepted a write to an initialized field",
        )
    )

    for name, program, ct in load_corpus(corpus_dir):
        reports.append(source_only_writes(ct, program.main, name, fuel))

    return reports
