"""Propagators: monotone, information-preserving maps on partial structures.

Primitives (unit propagation, bounds transfer, equality transfer, checkers)
and combinators mirroring the algebra.  ``build_propagator`` assembles a
propagator for a whole expression.

Builders wrap every node with :func:`saturated`, which sends inconsistent
outputs to the all-I structure.  That keeps monotonicity, does not change
the two-valued fixpoints, and makes the checker the least precise
propagator on every consistent input (including two-valued non-models).
"""
from __future__ import annotations

import itertools
from array import array
from collections import Counter
from typing import Callable, Iterable, Sequence

from . import kernels
from .algebra import (
    Atomic,
    AtomicModuleDef,
    BoundsLeq,
    Bot,
    Clause,
    ClauseBody,
    Complement,
    ExprError,
    FullRelation,
    ModuleExpr,
    ModuleInterpretation,
    Plus,
    Product,
    Project,
    Select,
    SelectTheta,
    TableBody,
    TransitiveClosure,
    clause_from_structure,
    entailed_equalities,
    eval_module,
    lit_code,
    module_table,
    ORACLE_MAX_ATOMS,
)
from .lattice import PartialStructure, Signature

SolverFn = Callable[..., list]

# ---------------------------------------------------------------------------
# instrumentation

#: Global counters.  ``propagate`` counts propagator calls.  Solvers built by
#: :func:`search_solver` count their own invocations as ``solver:<frame>``,
#: where the frame is the innermost combinator running at the time
#: (``toplevel`` outside any).  A projection pushes ``project`` when its input
#: is two-valued on the projected symbols and ``project:partial`` otherwise.
COUNTERS: Counter = Counter()
_FRAMES: list[str] = []


def reset_counters() -> None:
    COUNTERS.clear()


def _record_solver_call() -> None:
    COUNTERS["solver:" + (_FRAMES[-1] if _FRAMES else "toplevel")] += 1


# ---------------------------------------------------------------------------
# the propagator object

_CACHE_LIMIT = 1 << 14


class Propagator:
    """A named, ranked, memoised map on partial structures.

    ``fn`` must be pure; results are cached by input bytes.  ``rank`` orders
    propagators by simplicity (0 for clause-form propagators).  ``tag`` is
    the expression the propagator was built for; engines never read it.
    """

    __slots__ = ("fn", "rank", "name", "kind", "tag", "key", "clauses", "_cache")

    def __init__(self, fn: Callable[[PartialStructure], PartialStructure], *, rank: int = 1,
                 name: str = "", kind: str = "custom", tag: ModuleExpr | None = None, key=None,
                 clauses: Sequence[Clause] | None = None):
        self.fn = fn
        self.rank = rank
        self.name = name or kind
        self.kind = kind
        self.tag = tag
        self.key = key if key is not None else ("obj", id(self))
        self.clauses = clauses
        self._cache: dict = {}

    def __call__(self, b: PartialStructure) -> PartialStructure:
        COUNTERS["propagate"] += 1
        hit = self._cache.get(b.data)
        if hit is not None:
            return hit
        out = self.fn(b)
        if len(self._cache) >= _CACHE_LIMIT:
            self._cache.clear()
        self._cache[b.data] = out
        return out

    propagate = __call__

    def __repr__(self) -> str:
        return f"<Propagator {self.name} rank={self.rank}>"


def top_of(b: PartialStructure) -> PartialStructure:
    return PartialStructure.top(b.sig)


def saturate(b: PartialStructure) -> PartialStructure:
    """All-I if ``b`` is inconsistent, else ``b``."""
    return b if b.consistent else top_of(b)


def saturated(p: Propagator) -> Propagator:
    if p.kind.startswith("sat:") or p.kind in ("clauses", "top", "checker"):
        return p

    def fn(b):
        if not b.consistent:
            return top_of(b)
        return saturate(p(b))

    return Propagator(fn, rank=p.rank, name=p.name, kind="sat:" + p.kind, tag=p.tag,
                      clauses=p.clauses)


def identity() -> Propagator:
    return Propagator(lambda b: b, rank=0, kind="identity", key=("identity",))


def constant_top() -> Propagator:
    return Propagator(top_of, rank=1, kind="top", tag=Bot(), key=("top",))


# ---------------------------------------------------------------------------
# checkers


def checker_from_member(member: Callable[[PartialStructure], bool], *, rank: int = 1,
                        name: str = "checker", tag=None) -> Propagator:
    def fn(b):
        s = kernels.status(b.data)
        if s == 1:
            return b
        if s == 0 and member(b):
            return b
        return top_of(b)

    return Propagator(fn, rank=rank, name=name, kind="checker", tag=tag)


def checker_of(e: ModuleExpr, interp: ModuleInterpretation, sig: Signature | None = None) -> Propagator:
    """The least precise propagator for ``e``: rejects two-valued non-models only."""
    sig = _sig_of(interp, sig)
    if isinstance(e, Atomic):
        d = interp[e.name]
        return checker_from_member(lambda b: d.member_bits(b.to_bits()), name=f"check:{e.name}", tag=e)
    if len(sig) <= ORACLE_MAX_ATOMS:
        table = module_table(e, interp, sig)
        return checker_from_member(lambda b: bool(table[b.to_bits()]), name="check", tag=e)
    return checker_from_member(lambda b: eval_module(e, interp, b), name="check", tag=e)


def complement_checker(p: Propagator) -> Propagator:
    """Checker for the complement of ``module(p)``.

    A two-valued input that ``p`` leaves unchanged is rejected; any other
    two-valued input is not a fixpoint of ``p`` and is accepted.
    """

    def fn(b):
        s = kernels.status(b.data)
        if s == 1:
            return b
        if s == 2:
            return top_of(b)
        return top_of(b) if p(b) == b else b

    return Propagator(fn, rank=p.rank + 1, name=f"not({p.name})", kind="complement")


def checker_product(p1: Propagator, p2: Propagator) -> Propagator:
    def fn(b):
        s = kernels.status(b.data)
        if s == 1:
            return b
        if s == 2:
            return top_of(b)
        return p1(b) | p2(b)

    return Propagator(fn, rank=1 + max(p1.rank, p2.rank), name=f"cprod({p1.name},{p2.name})",
                      kind="checker-product")


def checker_project(delta: Iterable[str], p: Propagator, inner_solver: SolverFn) -> Propagator:
    delta = frozenset(delta)

    def fn(b):
        s = kernels.status(b.data)
        if s == 1:
            return b
        if s == 2:
            return top_of(b)
        _FRAMES.append("checker-project")
        try:
            found = inner_solver(b.restrict(delta), limit=1)
        finally:
            _FRAMES.pop()
        return b if found else top_of(b)

    return Propagator(fn, rank=p.rank + 1, name=f"cproj({p.name})", kind="checker-project")


def checker_select(q: str, r: str, p: Propagator) -> Propagator:
    def fn(b):
        s = kernels.status(b.data)
        if s == 1:
            return b
        if s == 2:
            return top_of(b)
        if p(b) != b:
            return top_of(b)
        sig = b.sig
        for a, c in zip(sig.pred_range(q), sig.pred_range(r)):
            if b.data[a] != b.data[c]:
                return top_of(b)
        return b

    return Propagator(fn, rank=p.rank + 1, name=f"csel({p.name})", kind="checker-select")


# ---------------------------------------------------------------------------
# generic operations


def compose(p1: Propagator, p2: Propagator) -> Propagator:
    """``b -> p1(p2(b))``."""
    if p1.tag is not None and p2.tag is not None and p1.tag != p2.tag:
        raise ValueError("compose expects propagators for the same module")
    return Propagator(lambda b: p1(p2(b)), rank=max(p1.rank, p2.rank), name=f"{p1.name}.{p2.name}",
                      kind="compose", tag=p1.tag if p1.tag is not None else p2.tag)


def fixpoint(p: Propagator) -> Propagator:
    """Iterate ``p`` until nothing changes."""

    def fn(b):
        cap = 2 * len(b.sig) + 1
        cur = b
        for _ in range(cap + 1):
            nxt = p(cur)
            if nxt == cur:
                return cur
            cur = nxt
        raise RuntimeError(f"{p.name} did not reach a fixpoint in {cap} steps; is it information-preserving?")

    return Propagator(fn, rank=p.rank, name=f"fix({p.name})", kind="fixpoint", tag=p.tag)


def optimal_from_solver(solve: SolverFn, *, name: str = "optimal", tag=None) -> Propagator:
    """``b -> glb(solve(b))``; all-I when there are no models."""

    def fn(b):
        models = solve(b)
        if not models:
            return top_of(b)
        out = models[0]
        for m in models[1:]:
            out = out & m
        return out

    return Propagator(fn, rank=1, name=name, kind="optimal", tag=tag)


def module_of(p: Propagator, sig: Signature, max_atoms: int = 16) -> list[PartialStructure]:
    """Two-valued fixpoints of ``p`` (the module it is a propagator for)."""
    if len(sig) > max_atoms:
        raise ValueError(f"signature has {len(sig)} atoms; module_of enumerates at most {max_atoms}")
    out = []
    for x in range(1 << len(sig)):
        i = PartialStructure.from_bits(sig, x)
        if p(i) == i:
            out.append(i)
    return out


# ---------------------------------------------------------------------------
# combinators that propagate


def product_prop(p: Propagator, q: Propagator) -> Propagator:
    """``b -> lub(p(b), q(b))``."""

    def fn(b):
        _FRAMES.append("product")
        try:
            return p(b) | q(b)
        finally:
            _FRAMES.pop()

    return Propagator(fn, rank=1 + max(p.rank, q.rank), name=f"prod({p.name},{q.name})", kind="product")


def _two_valued_on(b: PartialStructure, idx: Sequence[int]) -> bool:
    d = b.data
    return all(d[k] in (1, 2) for k in idx)


def project_prop(delta: Iterable[str], p: Propagator, inner_solver: SolverFn,
                 memo: dict | None = None) -> Propagator:
    """Propagate on the projected symbols only; keep the rest of ``b`` as is.

    The inner solver is consulted only when ``b`` is two-valued on ``delta``;
    its verdicts are cached in ``memo`` (keyed by the restricted structure).
    """
    delta = frozenset(delta)
    if memo is None:
        memo = {}

    def fn(b):
        if not b.consistent:
            return top_of(b)
        sig = b.sig
        bd = b.restrict(delta)
        full = _two_valued_on(b, sig.indices(delta))
        _FRAMES.append("project" if full else "project:partial")
        try:
            if full:
                hit = memo.get(bd.data)
                if hit is None:
                    hit = bool(inner_solver(bd, limit=1))
                    memo[bd.data] = hit
                if not hit:
                    return top_of(b)
            inner = p(bd)
        finally:
            _FRAMES.pop()
        return inner.restrict(delta) | b.restrict(sig.predicates - delta)

    return Propagator(fn, rank=p.rank + 1, name=f"proj({p.name})", kind="project")


def _equalize(b: PartialStructure, q: str, r: str) -> PartialStructure:
    sig = b.sig
    buf = bytearray(b.data)
    for a, c in zip(sig.pred_range(q), sig.pred_range(r)):
        v = buf[a] | buf[c]
        buf[a] = buf[c] = v
    return PartialStructure(sig, bytes(buf))


def select_prop(q: str, r: str, p: Propagator) -> Propagator:
    """Apply ``p`` and then make ``q`` and ``r`` agree by joining their values."""

    def fn(b):
        if b.sig.arity(q) != b.sig.arity(r):
            raise ExprError(f"select {q}=={r}: arity mismatch")
        _FRAMES.append("select")
        try:
            return _equalize(p(b), q, r)
        finally:
            _FRAMES.pop()

    return Propagator(fn, rank=p.rank + 1, name=f"sel[{q}={r}]({p.name})", kind="select")


def disjoin_prop(p1: Propagator, p2: Propagator) -> Propagator:
    """Keep only what both sides derive.

    Each side is saturated first so a side that rejects a structure counts
    as deriving everything.
    """

    def fn(b):
        _FRAMES.append("disjoin")
        try:
            return saturate(p1(b)) & saturate(p2(b))
        finally:
            _FRAMES.pop()

    return Propagator(fn, rank=1 + max(p1.rank, p2.rank), name=f"or({p1.name},{p2.name})", kind="disjoin")


def negation_nested(tau_inner: Iterable[str], solve: SolverFn,
                    explain_fn: Callable[[PartialStructure], PartialStructure] | None = None) -> Propagator:
    """Propagator for the complement of a projection, backed by an inner solver.

    Conflicts (all-I) exactly when ``b`` is two-valued on ``tau_inner`` and
    the inner solver finds a model extending ``b`` restricted to it.
    ``explain_fn`` is used by the explaining variant in ``explain``.
    """
    tau_inner = frozenset(tau_inner)
    memo: dict = {}

    def fn(b):
        if not b.consistent:
            return top_of(b)
        if not _two_valued_on(b, b.sig.indices(tau_inner)):
            return b
        bd = b.restrict(tau_inner)
        hit = memo.get(bd.data)
        if hit is None:
            _FRAMES.append("negation")
            try:
                hit = bool(solve(bd, limit=1))
            finally:
                _FRAMES.pop()
            memo[bd.data] = hit
        return top_of(b) if hit else b

    return Propagator(fn, rank=2, name="nested-neg", kind="negation")


# ---------------------------------------------------------------------------
# primitives


def _flatten(clauses: Sequence[Clause]) -> tuple[array, array]:
    lits = array("i")
    offsets = array("i", [0])
    for c in clauses:
        lits.extend(c)
        offsets.append(len(lits))
    return lits, offsets


def unit_propagator(clauses: Iterable[Clause], *, name: str = "up", tag=None) -> Propagator:
    """Unit propagation to a fixpoint; an all-false clause yields all-I.

    Rank 0.  Pool deduplication uses the sorted clause tuple as key.
    """
    cls = tuple(sorted(set(clauses)))
    lits, offsets = _flatten(cls)
    has_empty = any(len(c) == 0 for c in cls)

    def fn(b):
        if has_empty or not b.consistent:
            return top_of(b)
        out = kernels.unit_propagate(b.data, lits, offsets)
        if kernels.status(out) == 2:
            return top_of(b)
        return PartialStructure(b.sig, out)

    p = Propagator(fn, rank=0, name=name, kind="clauses", tag=tag, key=("clauses", cls), clauses=cls)
    return p


def clause_arrays(p: Propagator) -> tuple[array, array]:
    return _flatten(p.clauses or ())


def forbid_model_checker(i: PartialStructure) -> Propagator:
    """Rejects exactly ``i``; also unit-propagates the clause forbidding it."""
    if not i.two_valued:
        raise ValueError("forbid_model_checker needs a two-valued structure")
    return unit_propagator([clause_from_structure(i)], name="forbid")


def bounds_leq_propagator(sig: Signature, qc: str, qd: str) -> Propagator:
    """Bounds transfer for ``c <= d`` in threshold encoding.

    ``qd(n)`` at least true pushes its value into ``qc(n)``; ``qc(n)`` at
    least false pushes its value into ``qd(n)``.  Both rules read the input.
    """
    c = list(sig.pred_range(qc))
    d = list(sig.pred_range(qd))
    if len(c) != len(d) or sig.arity(qc) != 1 or sig.arity(qd) != 1:
        raise ExprError("bounds_leq needs two unary predicates")

    def fn(b):
        src = b.data
        buf = bytearray(src)
        for kc, kd in zip(c, d):
            if src[kd] & 1:
                buf[kc] |= src[kd]
            if src[kc] & 2:
                buf[kd] |= src[kc]
        return PartialStructure(b.sig, bytes(buf))

    return Propagator(fn, rank=1, name=f"bounds[{qc}<={qd}]", kind="bounds")


def threshold_clauses(sig: Signature, preds: Iterable[str]) -> list[Clause]:
    """``q(n) -> q(n+1)`` along the domain order, for each unary ``q``."""
    out = []
    for q in preds:
        r = list(sig.pred_range(q))
        for lo, hi in zip(r, r[1:]):
            out.append(Clause.make([lit_code(lo, False), lit_code(hi, True)]))
    return out


def bounds_clauses(sig: Signature, qc: str, qd: str) -> list[Clause]:
    """The clauses ``qc(n) or not qd(n)``, one per domain element."""
    return [Clause.make([lit_code(kc, True), lit_code(kd, False)])
            for kc, kd in zip(sig.pred_range(qc), sig.pred_range(qd))]


def equality_tuple_clauses(sig: Signature, q: str, r: str, args: Sequence[str]) -> list[Clause]:
    a = sig.index(q, args)
    c = sig.index(r, args)
    return [Clause.make([lit_code(a, True), lit_code(c, False)]),
            Clause.make([lit_code(a, False), lit_code(c, True)])]


def equality_tuple_propagator(sig: Signature, q: str, r: str, args: Sequence[str]) -> Propagator:
    """Joins ``q(args)`` and ``r(args)``; written as two clauses, so rank 0."""
    return unit_propagator(equality_tuple_clauses(sig, q, r, args), name=f"eq[{q}={r}]")


def equality_propagator(sig: Signature, q: str, r: str) -> Propagator:
    """Joins ``q`` and ``r`` tuple by tuple."""
    if sig.arity(q) != sig.arity(r):
        raise ExprError(f"{q}=={r}: arity mismatch")
    return Propagator(lambda b: _equalize(b, q, r), rank=1, name=f"eq[{q}={r}]", kind="equality")


def tc_forward_propagator(sig: Signature, edge: str, trans: str) -> Propagator:
    """Forward closure for ``trans = closure(edge)``.

    True edges force true closure entries along paths.  Once every edge atom
    is decided, closure entries off the closure are forced false.
    """
    n = len(sig.domain)
    e0 = sig.pred_range(edge).start
    t0 = sig.pred_range(trans).start
    from .algebra import transitive_closure

    def fn(b):
        if not b.consistent:
            return top_of(b)
        src = b.data
        edges = [(x, y) for x in range(n) for y in range(n) if src[e0 + x * n + y] & 1]
        decided = all(src[e0 + k] in (1, 2) for k in range(n * n))
        tc = transitive_closure(n, edges)
        buf = bytearray(src)
        for x in range(n):
            for y in range(n):
                k = t0 + x * n + y
                if (x, y) in tc:
                    buf[k] |= 1
                elif decided:
                    buf[k] |= 2
        return PartialStructure(b.sig, bytes(buf))

    return Propagator(fn, rank=1, name=f"tc[{edge}->{trans}]", kind="tc")


def atomic_propagator(d: AtomicModuleDef, e: Atomic) -> Propagator:
    """The natural propagator of an atomic module (saturated)."""
    body, sig = d.body, d.sig
    if isinstance(body, ClauseBody):
        return unit_propagator(body.clauses, name=f"up:{d.name}", tag=e)
    check = checker_from_member(lambda b: d.member_bits(b.to_bits()), name=f"check:{d.name}", tag=e)
    if isinstance(body, (TableBody, FullRelation)):
        return check
    if isinstance(body, TransitiveClosure):
        fwd = fixpoint(tc_forward_propagator(sig, body.edge, body.trans))
        p = saturated(product_prop(fwd, check))
        p.rank, p.name, p.tag = 1, f"tc:{d.name}", e
        return p
    if isinstance(body, BoundsLeq):
        mono = unit_propagator(threshold_clauses(sig, (body.qc, body.qd)))
        p = saturated(fixpoint(product_prop(bounds_leq_propagator(sig, body.qc, body.qd), mono)))
        p.rank, p.name, p.tag = 1, f"bounds:{d.name}", e
        return p
    raise TypeError(f"unsupported atomic body {body!r}")


# ---------------------------------------------------------------------------
# assembling


def _sig_of(interp: ModuleInterpretation, sig: Signature | None) -> Signature:
    if sig is not None:
        return sig
    for d in interp.values():
        return d.sig
    raise ValueError("cannot infer the signature from an empty interpretation; pass sig=")


def search_solver(p: Propagator) -> SolverFn:
    """Propagate-and-search over ``p`` as a solver function."""

    def solve(b, limit=None):
        from .engines import propagate_search

        _record_solver_call()
        return propagate_search(p, b, limit=limit).models

    return solve


def build_propagator(e: ModuleExpr, interp: ModuleInterpretation, strategy: str = "best",
                     sig: Signature | None = None) -> Propagator:
    """Propagator for ``e`` from the natural propagators of its atomic modules.

    ``strategy='best'`` uses the propagating combinators, ``'checker'`` the
    checking ones.  Complements always use the complement checker.
    """
    if strategy not in ("best", "checker"):
        raise ValueError(f"unknown strategy {strategy!r}")
    sig = _sig_of(interp, sig)
    return _build(e, interp, strategy, sig)


def _build(e, interp, strategy, sig) -> Propagator:
    if isinstance(e, Bot):
        return constant_top()
    if isinstance(e, Atomic):
        try:
            d = interp[e.name]
        except KeyError:
            raise ExprError(f"unknown module {e.name!r}") from None
        return atomic_propagator(d, e)
    if isinstance(e, Product):
        p1 = _build(e.left, interp, strategy, sig)
        p2 = _build(e.right, interp, strategy, sig)
        p = product_prop(p1, p2) if strategy == "best" else checker_product(p1, p2)
    elif isinstance(e, Complement):
        p = complement_checker(_build(e.expr, interp, strategy, sig))
    elif isinstance(e, Project):
        inner = _build(e.expr, interp, strategy, sig)
        solver = search_solver(inner)
        p = project_prop(e.delta, inner, solver) if strategy == "best" else checker_project(e.delta, inner, solver)
    elif isinstance(e, Select):
        inner = _build(e.expr, interp, strategy, sig)
        p = select_prop(e.q, e.r, inner) if strategy == "best" else checker_select(e.q, e.r, inner)
    elif isinstance(e, Plus):
        p = disjoin_prop(_build(e.left, interp, strategy, sig), _build(e.right, interp, strategy, sig))
    elif isinstance(e, SelectTheta):
        from .algebra import desugar

        p = _build(desugar(e), interp, strategy, sig)
        if strategy == "best":
            for q, r in sorted(entailed_equalities(e.theta)):
                p = select_prop(q, r, p)
    else:
        raise ExprError(f"not a module expression: {e!r}")
    p = saturated(p)
    p.tag = e
    return p


def random_structure(sig: Signature, rng, p_unknown: float = 0.4, p_incons: float = 0.0) -> PartialStructure:
    """Random partial structure (test helper)."""
    buf = bytearray(len(sig))
    for k in range(len(sig)):
        x = rng.random()
        if x < p_incons:
            buf[k] = 3
        elif x < p_incons + p_unknown:
            buf[k] = 0
        else:
            buf[k] = 1 if rng.random() < 0.5 else 2
    return PartialStructure(sig, bytes(buf))


def random_refinement(b: PartialStructure, rng, p_step: float = 0.3) -> PartialStructure:
    """Random ``b2 >= b``: each atom may gain bits."""
    buf = bytearray(b.data)
    for k in range(len(buf)):
        if rng.random() < p_step:
            buf[k] |= rng.choice((1, 2, 3))
    return PartialStructure(b.sig, bytes(buf))


def all_structures(sig: Signature, values: Sequence[int] = (0, 1, 2, 3)) -> Iterable[PartialStructure]:
    for combo in itertools.product(values, repeat=len(sig)):
        yield PartialStructure(sig, bytes(combo))
