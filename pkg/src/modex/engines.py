"""Solvers built from propagators.

``gen_check`` and ``propagate_search`` are plain depth-first searches.
``learning_solve`` and ``cdl_solve`` keep a pool of explaining propagators,
always apply the simplest one that changes the state, and add explanations
and model-forbidding clauses to the pool as they go.  ``cdl_solve``
analyses every conflict down to clauses and backjumps.

Branching is deterministic: lowest unknown atom first, true before false.
"""
from __future__ import annotations

import json
from array import array
from dataclasses import dataclass, field
from typing import Callable

from . import kernels
from .algebra import (
    Clause,
    ModuleExpr,
    ModuleInterpretation,
    desugar,
    format_lit,
    lit_code,
    sort_models,
)
from .explain import (
    ExplainingPropagator,
    build_explaining,
    clausal_explanation,
    implicit_reason,
    lift,
)
from .lattice import PartialStructure, Signature
from .propagators import Propagator, build_propagator, forbid_model_checker, _sig_of

ENGINES = ("gc", "prop", "learn", "cdl")
STRATEGIES = ("best", "checker")


@dataclass
class EngineConfig:
    engine: str = "cdl"
    strategy: str = "best"
    limit: int | None = None
    restart: str = "off"
    trace: bool = False
    seed: int = 0
    #: run the online contract checks (explanations, progress, trail replay)
    check: bool = False

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}; expected one of {', '.join(ENGINES)}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.limit is not None and self.limit < 1:
            raise ValueError("model limit must be positive")
        parse_restart(self.restart)


def parse_restart(text: str) -> tuple[str, int]:
    if text in ("off", "conflict"):
        return text, 1
    if text.startswith("luby:"):
        try:
            base = int(text[5:])
        except ValueError:
            base = 0
        if base >= 1:
            return "luby", base
    raise ValueError(f"bad restart policy {text!r}; expected off, conflict or luby:<n>")


def luby(i: int) -> int:
    """The i-th element (1-based) of the Luby sequence 1 1 2 1 1 2 4 ..."""
    k = 1
    while (1 << k) - 1 < i:
        k += 1
    while i != (1 << k) - 1:
        i -= (1 << (k - 1)) - 1
        k = 1
        while (1 << k) - 1 < i:
            k += 1
    return 1 << (k - 1)


@dataclass
class SolveResult:
    models: list[PartialStructure]
    trace: list[str] = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    #: (clause, models found before it was learned, backjump state) per learned clause
    learned: list = field(default_factory=list)
    #: (explaining propagator, state, explanation) per emitted explanation (check mode)
    explanations: list = field(default_factory=list)
    #: contract violations seen online (check mode)
    violations: list = field(default_factory=list)

    def stats_json(self) -> str:
        return json.dumps(self.stats, sort_keys=True)


class _Tracer:
    def __init__(self, sig: Signature, on: bool):
        self.sig = sig
        self.on = on
        self.lines: list[str] = []

    def atom(self, k: int, v: int) -> str:
        return f"{self.sig.format_atom(k)}={'tf'[v - 1]}"

    def emit(self, line: str) -> None:
        if self.on:
            self.lines.append(line)

    def model(self, m: PartialStructure) -> None:
        if self.on:
            body = ", ".join(self.atom(k, v) for k, v in enumerate(m.data))
            self.lines.append(f"MODEL {{{body}}}")

    def clause(self, c: Clause) -> str:
        return "[" + " ".join(format_lit(self.sig, l) for l in c) + "]"


# ---------------------------------------------------------------------------
# Algorithm: generate and check


def gen_check(p: Propagator, b: PartialStructure, cfg: EngineConfig | None = None) -> SolveResult:
    """Enumerate every two-valued refinement of ``b`` and keep the fixpoints of ``p``."""
    cfg = cfg or EngineConfig(engine="gc")
    tr = _Tracer(b.sig, cfg.trace)
    models: list[PartialStructure] = []
    stats = {"engine": "gc", "decisions": 0, "checks": 0}
    if b.consistent:
        stack = [(b.data, 0)]
        while stack:
            data, level = stack.pop()
            k = kernels.first_unknown(data)
            if k < 0:
                cand = PartialStructure(b.sig, data)
                stats["checks"] += 1
                if p(cand) == cand:
                    models.append(cand)
                    tr.model(cand)
                    if cfg.limit is not None and len(models) >= cfg.limit:
                        break
                continue
            stats["decisions"] += 1
            for v in (2, 1):
                buf = bytearray(data)
                buf[k] = v
                stack.append((bytes(buf), level + 1))
            if tr.on:
                tr.emit(f"DECIDE {tr.atom(k, 1)}@{level + 1}")
    stats["models"] = len(models)
    return SolveResult(sort_models(models), tr.lines, stats)


# ---------------------------------------------------------------------------
# Algorithm: propagate and search


def propagate_search(p: Propagator, b: PartialStructure, cfg: EngineConfig | None = None,
                     limit: int | None = None) -> SolveResult:
    """Depth-first search that applies ``p`` before every choice."""
    cfg = cfg or EngineConfig(engine="prop")
    if limit is None:
        limit = cfg.limit
    tr = _Tracer(b.sig, cfg.trace)
    models: list[PartialStructure] = []
    stats = {"engine": "prop", "decisions": 0, "propagations": 0, "conflicts": 0}

    def rec(cur: PartialStructure, level: int) -> bool:
        nxt = p(cur)
        stats["propagations"] += 1
        if tr.on and nxt != cur:
            for k in range(len(cur.data)):
                if cur.data[k] != nxt.data[k] and nxt.data[k] in (1, 2):
                    tr.emit(f"PROP P0 {tr.atom(k, nxt.data[k])}")
        cur = nxt
        s = kernels.status(cur.data)
        if s == 2:
            stats["conflicts"] += 1
            if tr.on:
                tr.emit(f"CONFLICT {cur.sig.format_atom(len(cur.data) - 1)}")
            return False
        if s == 0:
            if p(cur) == cur:
                models.append(cur)
                tr.model(cur)
                return limit is not None and len(models) >= limit
            return False
        k = kernels.first_unknown(cur.data)
        for v in (1, 2):
            stats["decisions"] += 1
            if tr.on:
                tr.emit(f"DECIDE {tr.atom(k, v)}@{level + 1}")
            if rec(cur.update(k, v), level + 1):
                return True
        return False

    if b.consistent:
        rec(b, 0)
    stats["models"] = len(models)
    return SolveResult(sort_models(models), tr.lines, stats)


# ---------------------------------------------------------------------------
# the pool of explaining propagators


class _Pool:
    """Explaining propagators indexed by insertion id, deduplicated by key.

    Clause-form members also live in one flat clause database ordered by
    owner id, so the first firing clause belongs to the simplest member
    that changes the state.
    """

    def __init__(self):
        self.members: list[ExplainingPropagator] = []
        self.by_key: dict = {}
        self.lits = array("i")
        self.offsets = array("i", [0])
        self.owner = array("i")
        self.local: dict[int, tuple[array, array]] = {}
        self.others: list[int] = []

    def add(self, ep: ExplainingPropagator) -> tuple[int, bool]:
        pid = self.by_key.get(ep.key)
        if pid is not None:
            return pid, False
        pid = len(self.members)
        self.members.append(ep)
        self.by_key[ep.key] = pid
        if ep.rank == 0 and ep.clauses is not None:
            ll = array("i")
            oo = array("i", [0])
            for c in ep.clauses:
                self.lits.extend(c)
                self.offsets.append(len(self.lits))
                self.owner.append(pid)
                ll.extend(c)
                oo.append(len(ll))
            self.local[pid] = (ll, oo)
        else:
            self.others.append(pid)
            self.others.sort(key=lambda i: (self.members[i].rank, i))
        return pid, True

    def apply_all(self, b: PartialStructure, upto: int | None = None) -> PartialStructure:
        """One combined step of the members with id below ``upto``: the lub of their outputs."""
        upto = len(self.members) if upto is None else upto
        out = b
        cut = 0
        while cut < len(self.owner) and self.owner[cut] < upto:
            cut += 1
        # clause members that fire nothing leave ``b`` unchanged
        if cut and kernels.first_firing(b.data, self.lits, self.offsets[:cut + 1]) >= 0:
            for pid in self.local:
                if pid < upto:
                    out = out | self.members[pid].p(b)
        for pid in self.others:
            if pid < upto:
                out = out | self.members[pid].p(b)
        return out


_DECISION = ("decision",)
_INITIAL = ("initial",)


class _Learner:
    """Shared machinery of the learning and conflict-driven solvers."""

    def __init__(self, ep: ExplainingPropagator, b: PartialStructure, cfg: EngineConfig):
        self.cfg = cfg
        self.sig = b.sig
        self.b0 = b
        self.tr = _Tracer(b.sig, cfg.trace)
        self.pool = _Pool()
        self.root_id, _ = self.pool.add(ep)
        self.models: list[PartialStructure] = []
        self.result = SolveResult([], self.tr.lines)
        self.stats = {"engine": cfg.engine, "decisions": 0, "propagations": 0, "conflicts": 0,
                      "learned": 0, "restarts": 0, "explanations": 0}
        self.mark = 0
        self.reset()

    # trail -------------------------------------------------------------

    def reset(self) -> None:
        self.cur = bytearray(self.b0.data)
        self.level = 0
        self.trail: list[int] = []
        self.info: dict[int, tuple] = {}  # atom -> (level, reason, position)
        self.level_states: list[bytes] = []
        self.level_trail: list[int] = []
        self.steps: list[tuple] = []
        self.step_cache: dict = {}
        for k, v in enumerate(self.b0.data):
            if v in (1, 2):
                self._assign(k, v, _INITIAL)

    def _assign(self, atom: int, v: int, reason: tuple) -> None:
        self.cur[atom] = v
        self.info[atom] = (self.level, reason, len(self.trail))
        self.trail.append(atom)

    def state(self) -> PartialStructure:
        return PartialStructure(self.sig, bytes(self.cur))

    def decide(self) -> None:
        k = kernels.first_unknown(bytes(self.cur))
        self.level_states.append(bytes(self.cur))
        self.level_trail.append(len(self.trail))
        self.level += 1
        self.stats["decisions"] += 1
        self.tr.emit(f"DECIDE {self.tr.atom(k, 1)}@{self.level}")
        self._assign(k, 1, _DECISION)

    def backjump(self, level: int) -> None:
        self.cur = bytearray(self.level_states[level])
        cut = self.level_trail[level]
        for a in self.trail[cut:]:
            del self.info[a]
        del self.trail[cut:]
        del self.level_states[level:]
        del self.level_trail[level:]
        self.level = level

    # propagation -------------------------------------------------------

    def propagate(self):
        """Run the pool to a fixpoint.  Returns ``None`` or a conflict descriptor."""
        pool = self.pool
        while True:
            data = bytes(self.cur)
            k = kernels.first_firing(data, pool.lits, pool.offsets) if len(pool.offsets) > 1 else -1
            if k >= 0:
                pid = pool.owner[k]
                ll, oo = pool.local[pid]
                ep = pool.members[pid]
                _, derived, conflict = kernels.up_trace(data, ll, oo)
                self.stats["propagations"] += 1
                for lit, ci in derived:
                    v = 1 + (lit & 1)
                    self._assign(lit >> 1, v, ("clause", ep.clauses[ci]))
                    self.tr.emit(f"PROP P{pid} {self.tr.atom(lit >> 1, v)}")
                if conflict >= 0:
                    self.mark = len(pool.members)
                    c = ep.clauses[conflict]
                    self._conflict_line(c)
                    return ("clause", c)
                continue
            pre = PartialStructure(self.sig, data)
            for pid in pool.others:
                ep = pool.members[pid]
                out = ep.p(pre)
                if out == pre:
                    continue
                self.stats["propagations"] += 1
                self.mark = len(pool.members)
                x = self._explain(ep, pre, out)
                step = len(self.steps)
                self.steps.append((pid, pre, x))
                tr_on = self.tr.on
                if not out.consistent:
                    atoms = [a for a in range(len(data)) if out.data[a] == 3 and data[a] != 3]
                    self.tr.emit(f"CONFLICT {self.sig.format_atom(max(atoms))}")
                    return ("step", step)
                for a in range(len(data)):
                    if data[a] == 0 and out.data[a] != 0:
                        self._assign(a, out.data[a], ("step", step))
                        if tr_on:
                            self.tr.emit(f"PROP P{pid} {self.tr.atom(a, out.data[a])}")
                break
            else:
                return None

    def _conflict_line(self, c: Clause) -> None:
        if self.tr.on:
            self.tr.emit(f"CONFLICT {self.sig.format_atom(max(c.atoms)) if c else '-'}")

    def _explain(self, ep: ExplainingPropagator, pre: PartialStructure, out: PartialStructure):
        x = ep.explain(pre)
        if x is None:
            return None
        self.stats["explanations"] += 1
        if self.cfg.check:
            self._check_explanation(ep, pre, x, out)
        pid, new = self.pool.add(x)
        if self.tr.on:
            body = " ".join(self.tr.clause(c) for c in x.clauses) if x.clauses is not None else x.name
            self.tr.emit(f"EXPLAIN P{self.pool.by_key[ep.key]} -> P{pid} {body}")
        return x

    def _check_explanation(self, ep, pre, x, out=None) -> None:
        self.result.explanations.append((ep, pre, x))
        if not ep.p(pre) <= x.p(pre):
            self.result.violations.append(("explains-propagation", ep.name, x.name))
        if x.rank >= ep.rank:
            self.result.violations.append(("rank", ep.name, x.name))

    # reasons -----------------------------------------------------------

    def _step_reasons(self, step: int):
        hit = self.step_cache.get(step)
        if hit is not None:
            return hit
        _, pre, x = self.steps[step]
        y = x
        while y is not None and not (y.rank == 0 and y.clauses is not None):
            z = y.explain(pre)
            if z is not None and self.cfg.check:
                self._check_explanation(y, pre, z)
            y = z
        if y is None:
            hit = ({}, None, pre)
        else:
            reasons, conf = clausal_explanation(y.clauses, pre)
            hit = (reasons, conf, pre)
        self.step_cache[step] = hit
        return hit

    def reason_clause(self, atom: int) -> Clause | None:
        level, reason, _ = self.info[atom]
        if reason[0] == "clause":
            return reason[1]
        if reason[0] == "step":
            reasons, conf, pre = self._step_reasons(reason[1])
            lit = lit_code(atom, self.cur[atom] == 1)
            c = reasons.get(lit)
            if c is not None:
                return c
            if conf is not None:
                return Clause(sorted(set(conf) | {lit}))
            return implicit_reason(pre, lit)
        return None

    def conflict_clause(self, conflict) -> Clause:
        kind, payload = conflict
        if kind == "clause":
            return payload
        reasons, conf, pre = self._step_reasons(payload)
        if conf is not None:
            return conf
        return implicit_reason(pre)

    # conflict analysis -------------------------------------------------

    def analyze(self, conflict: Clause):
        """First-UIP resolution.  Returns ``(learned, backjump level)`` or
        ``None`` when the conflict does not depend on any decision."""
        info = self.info
        c = set(conflict)
        if not c:
            return None
        top = max(info[l >> 1][0] for l in c)
        if top == 0:
            return None
        while True:
            at_top = [l for l in c if info[l >> 1][0] == top]
            if len(at_top) == 1:
                break
            l = max(at_top, key=lambda m: info[m >> 1][2])
            reason = self.reason_clause(l >> 1)
            if reason is None:
                raise AssertionError("conflict analysis reached a decision that is not the last one at its level")
            c = set(resolve_minimal(Clause(sorted(c)), reason, l >> 1))
        learned = Clause(sorted(c))
        others = [info[l >> 1][0] for l in c if info[l >> 1][0] != top]
        return learned, max(others, default=0)

    # bookkeeping -------------------------------------------------------

    def record_model(self) -> PartialStructure:
        m = self.state()
        self.models.append(m)
        self.tr.model(m)
        return m

    def replay_ok(self) -> bool:
        buf = bytearray(self.b0.data)
        for a in self.trail:
            buf[a] = self.cur[a]
        return bytes(buf) == bytes(self.cur)

    def finish(self) -> SolveResult:
        self.stats["models"] = len(self.models)
        self.stats["pool"] = len(self.pool.members)
        self.result.models = sort_models(self.models)
        self.result.stats = self.stats
        return self.result

    def limit_reached(self) -> bool:
        return self.cfg.limit is not None and len(self.models) >= self.cfg.limit


def resolve_minimal(c1: Clause, c2: Clause, pivot: int) -> Clause:
    """Resolve on atom ``pivot`` (positive in one clause, negative in the other)."""
    pos, neg = lit_code(pivot, True), lit_code(pivot, False)
    if pos in c1 and neg in c2:
        pass
    elif neg in c1 and pos in c2:
        pass
    else:
        raise ValueError("pivot must occur with opposite signs in the two clauses")
    rest = (set(c1) | set(c2)) - {pos, neg}
    out = Clause.make(rest)
    if out is None:
        raise ValueError("resolvent is tautological; conflict analysis order is broken")
    return out


# ---------------------------------------------------------------------------
# Algorithm: learning solver


def learning_solve(ep: ExplainingPropagator, b: PartialStructure, cfg: EngineConfig | None = None) -> SolveResult:
    """Propagate with the simplest changing pool member, learn explanations
    and forbid found models, backtrack chronologically."""
    cfg = cfg or EngineConfig(engine="learn")
    st = _Learner(ep, b, cfg)
    if not b.consistent:
        return st.finish()
    choices: list[tuple[int, bool]] = []  # (atom, false branch taken)
    while True:
        conflict = st.propagate()
        if cfg.check and conflict is None and not st.replay_ok():
            st.result.violations.append(("trail",))
        backtrack = False
        if conflict is not None:
            st.stats["conflicts"] += 1
            backtrack = True
        elif kernels.status(bytes(st.cur)) == 0:
            m = st.record_model()
            if st.limit_reached():
                break
            st.pool.add(lift(forbid_model_checker(m)))
            backtrack = True
        if backtrack:
            while choices and choices[-1][1]:
                choices.pop()
            if not choices:
                break
            atom, _ = choices.pop()
            lvl = len(choices)
            st.backjump(lvl)
            st.level_states.append(bytes(st.cur))
            st.level_trail.append(len(st.trail))
            st.level = lvl + 1
            st.tr.emit(f"DECIDE {st.tr.atom(atom, 2)}@{st.level}")
            st._assign(atom, 2, _DECISION)
            choices.append((atom, True))
            continue
        st.decide()
        choices.append((st.trail[-1], False))
    return st.finish()


# ---------------------------------------------------------------------------
# Algorithm: conflict-driven learning


def cdl_solve(ep: ExplainingPropagator, b: PartialStructure, cfg: EngineConfig | None = None) -> SolveResult:
    """Learning solver where every conflict is analysed to a learned clause
    and the search backjumps.  A found model is forbidden by a clause that
    is analysed like any other conflict."""
    cfg = cfg or EngineConfig(engine="cdl")
    st = _Learner(ep, b, cfg)
    if not b.consistent:
        return st.finish()
    policy, base = parse_restart(cfg.restart)
    since_restart = 0
    luby_i = 1
    while True:
        conflict = st.propagate()
        if cfg.check and conflict is None and not st.replay_ok():
            st.result.violations.append(("trail",))
        forbid = None
        if conflict is not None:
            st.stats["conflicts"] += 1
            cclause = st.conflict_clause(conflict)
        elif kernels.status(bytes(st.cur)) == 0:
            m = st.record_model()
            if st.limit_reached():
                break
            forbid = lift(forbid_model_checker(m))
            cclause = forbid.clauses[0]
            st.mark = len(st.pool.members)
            st._conflict_line(cclause)
        else:
            st.decide()
            continue
        found = tuple(st.models)
        res = st.analyze(cclause)
        if res is None:
            if forbid is not None:
                st.pool.add(forbid)
            break
        learned, level = res
        learned_ep = lift_clause(learned)
        st.backjump(level)
        bj = st.state()
        if cfg.check:
            # compare with the pool as it was before the conflicting step
            before = st.pool.apply_all(bj, st.mark)
            after = before | learned_ep.p(bj)
            if not after > before:
                st.result.violations.append(("progress", st.tr.clause(learned), level))
        if forbid is not None:
            st.pool.add(forbid)
        pid, _ = st.pool.add(learned_ep)
        st.stats["learned"] += 1
        st.result.learned.append((learned, found, bj))
        st.tr.emit(f"LEARN {st.tr.clause(learned)} backjump={level}")
        since_restart += 1
        if policy == "conflict" or (policy == "luby" and since_restart >= base * luby(luby_i)):
            if policy == "luby":
                luby_i += 1
            since_restart = 0
            st.stats["restarts"] += 1
            st.tr.emit("RESTART")
            st.reset()
    return st.finish()


def lift_clause(c: Clause) -> ExplainingPropagator:
    from .propagators import unit_propagator

    return lift(unit_propagator([c], name="learned"))


# ---------------------------------------------------------------------------
# binding expressions to engines


def make_engine_input(e: ModuleExpr, interp: ModuleInterpretation, cfg: EngineConfig,
                      sig: Signature | None = None):
    """The propagator (gc, prop) or explaining propagator (learn, cdl) for ``e``."""
    sig = _sig_of(interp, sig)
    e = desugar(e)
    if cfg.engine in ("gc", "prop"):
        return build_propagator(e, interp, cfg.strategy, sig=sig)
    if cfg.strategy == "checker":
        return lift(build_propagator(e, interp, "checker", sig=sig))
    return build_explaining(e, interp, sig=sig)


def run_engine(engine_input, b: PartialStructure, cfg: EngineConfig) -> SolveResult:
    if cfg.engine == "gc":
        return gen_check(engine_input, b, cfg)
    if cfg.engine == "prop":
        return propagate_search(engine_input, b, cfg)
    if cfg.engine == "learn":
        return learning_solve(engine_input, b, cfg)
    return cdl_solve(engine_input, b, cfg)


def solve(e: ModuleExpr, interp: ModuleInterpretation, b: PartialStructure,
          cfg: EngineConfig | None = None) -> SolveResult:
    cfg = cfg or EngineConfig()
    return run_engine(make_engine_input(e, interp, cfg, sig=b.sig), b, cfg)


def solver_from(e: ModuleExpr, interp: ModuleInterpretation, cfg: EngineConfig | None = None,
                sig: Signature | None = None) -> Callable[..., list[PartialStructure]]:
    """A solver function ``solve(b, limit=None) -> models`` running the configured engine."""
    cfg = cfg or EngineConfig()
    inp = make_engine_input(e, interp, cfg, sig=sig)

    def run(b: PartialStructure, limit: int | None = None) -> list[PartialStructure]:
        c = cfg if limit is None else EngineConfig(cfg.engine, cfg.strategy, limit, cfg.restart, cfg.trace,
                                                    cfg.seed, cfg.check)
        return run_engine(inp, b, c).models

    return run
