"""Explaining propagators.

An explaining propagator pairs a propagator ``p`` with a function ``c``
that, given a state, returns ``None`` (unexplained) or a simpler explaining
propagator that derives at least what ``p`` derives there and is a
consequence of ``p``'s module.  Rank 0 means clause form; the engines can
only resolve over rank-0 explanations.
"""
from __future__ import annotations

import itertools
from typing import Callable, Iterable, Sequence

from . import kernels
from .algebra import (
    Atomic,
    BoundsLeq,
    Bot,
    Clause,
    ClauseBody,
    Complement,
    ExprError,
    ModuleExpr,
    ModuleInterpretation,
    Plus,
    Product,
    Project,
    Select,
    SelectTheta,
    clause_from_structure,
    desugar,
    lit_code,
)
from .lattice import PartialStructure, Signature
from .propagators import (
    Propagator,
    _flatten,
    atomic_propagator,
    bounds_clauses,
    bounds_leq_propagator,
    build_propagator,
    complement_checker,
    constant_top,
    equality_propagator,
    equality_tuple_clauses,
    negation_nested,
    product_prop,
    project_prop,
    saturated,
    search_solver,
    threshold_clauses,
    _FRAMES,
    _sig_of,
)

Explainer = Callable[[PartialStructure], "ExplainingPropagator | None"]


class ExplainingPropagator:
    """``(p, c)``: a propagator with an explanation function."""

    __slots__ = ("p", "c", "key", "_memo")

    def __init__(self, p: Propagator, c: Explainer | None = None, key=None):
        self.p = p
        self.c = c
        self.key = key if key is not None else p.key
        self._memo: dict = {}

    @property
    def rank(self) -> int:
        return self.p.rank

    @property
    def clauses(self) -> tuple[Clause, ...] | None:
        return self.p.clauses

    @property
    def name(self) -> str:
        return self.p.name

    def __call__(self, b: PartialStructure) -> PartialStructure:
        return self.p(b)

    def explain(self, b: PartialStructure) -> "ExplainingPropagator | None":
        if self.c is None:
            return None
        hit = self._memo.get(b.data, 0)
        if hit != 0:
            return hit
        out = self.c(b)
        self._memo[b.data] = out
        return out

    def explains_propagation(self, b: PartialStructure) -> bool:
        return self.p(b) == b or self.explain(b) is not None

    def __repr__(self) -> str:
        return f"<ExplainingPropagator {self.p.name} rank={self.rank}>"


def lift(p: Propagator) -> ExplainingPropagator:
    """Pair ``p`` with the explanation that never explains."""
    return ExplainingPropagator(p, None)


def clause_ep(clauses: Iterable[Clause], name: str = "up") -> ExplainingPropagator:
    from .propagators import unit_propagator

    return lift(unit_propagator(clauses, name=name))


# ---------------------------------------------------------------------------
# clause-level reasoning at a state


def clausal_explanation(clauses: Sequence[Clause], b: PartialStructure):
    """Replay unit propagation of ``clauses`` on consistent ``b``.

    Returns ``(reasons, conflict)``: ``reasons`` maps each derived literal to
    a clause made of that literal plus literals false in ``b`` (the inputs
    the derivation used); ``conflict`` is such a clause with every literal
    false in ``b``, or ``None``.
    """
    lits, offsets = _flatten(clauses)
    out, derived, conflict = kernels.up_trace(b.data, lits, offsets)
    src = b.data
    reason_idx: dict[int, int] = {}
    support: dict[int, frozenset] = {}

    def sup(atom: int) -> frozenset:
        """False input literals supporting the value of ``atom``."""
        hit = support.get(atom)
        if hit is not None:
            return hit
        if src[atom]:
            # input literal false in b: the opposite of its value
            s = frozenset((lit_code(atom, src[atom] != 1),))
        else:
            k = reason_idx[atom]
            acc = set()
            for j in range(offsets[k], offsets[k + 1]):
                m = lits[j]
                if m >> 1 != atom:
                    acc |= sup(m >> 1)
            s = frozenset(acc)
        support[atom] = s
        return s

    reasons: dict[int, Clause] = {}
    for lit, k in derived:
        reason_idx[lit >> 1] = k
        reasons[lit] = Clause(sorted(sup(lit >> 1) | {lit}))
    conf = None
    if conflict >= 0:
        acc = set()
        for j in range(offsets[conflict], offsets[conflict + 1]):
            acc |= sup(lits[j] >> 1)
        conf = Clause(sorted(acc))
    return reasons, conf


def implicit_reason(pre: PartialStructure, lit: int | None = None) -> Clause:
    """``not pre or lit``: valid for any propagator that derived ``lit`` at ``pre``."""
    c = clause_from_structure(pre)
    if lit is None:
        return c
    return Clause(sorted(set(c) | {lit}))


# ---------------------------------------------------------------------------
# combinators


def _sat(p: Propagator) -> Propagator:
    return saturated(p)


def e_product(ep1: ExplainingPropagator, ep2: ExplainingPropagator) -> ExplainingPropagator:
    """Product; explains when each side either fixes ``b`` or explains itself.

    A rank-0 side that propagates serves as its own explanation, and two
    clause-form explanations merge into one clause set.
    """
    p = _sat(product_prop(ep1.p, ep2.p))

    def side(ep, b):
        if ep.p(b) == b:
            return "fix"
        x = ep.explain(b)
        if x is None and ep.rank == 0:
            x = ep
        return x

    def c(b):
        if p(b) == b:
            return None
        x1 = side(ep1, b)
        x2 = side(ep2, b)
        if x1 is None or x2 is None:
            return None
        parts = [x for x in (x1, x2) if x != "fix"]
        if len(parts) == 1:
            return parts[0]
        return combine(parts[0], parts[1])

    return ExplainingPropagator(p, c, key=("prod", ep1.key, ep2.key))


def combine(x1: ExplainingPropagator, x2: ExplainingPropagator) -> ExplainingPropagator:
    """Product of two explanations, merging clause sets."""
    if x1.clauses is not None and x2.clauses is not None and x1.rank == 0 and x2.rank == 0:
        return clause_ep(set(x1.clauses) | set(x2.clauses))
    return e_product(x1, x2)


def e_project(delta: Iterable[str], ep: ExplainingPropagator, inner_solver) -> ExplainingPropagator:
    """Projection.  Clause-form inner explanations are projected by replaying
    them on ``b`` restricted to ``delta`` and keeping the derivations of
    projected atoms as clauses over projected atoms only."""
    delta = frozenset(delta)
    verdicts: dict = {}
    p = _sat(project_prop(delta, ep.p, inner_solver, memo=verdicts))

    def c(b):
        if not b.consistent or p(b) == b:
            return None
        if verdicts.get(b.restrict(delta).data) is False:
            return None
        bd = b.restrict(delta)
        x = ep.explain(bd)
        if x is None:
            if ep.rank == 0 and ep.p(bd) != bd:
                x = ep
            else:
                return None
        if x.clauses is not None and x.rank == 0:
            keep = set(bd.sig.indices(delta))
            reasons, conf = clausal_explanation(x.clauses, bd)
            if conf is not None:
                return clause_ep([conf])
            cls = [r for lit, r in reasons.items() if lit >> 1 in keep]
            if not cls:
                return None
            return clause_ep(cls)
        return e_project(delta, x, search_solver(x.p))

    return ExplainingPropagator(p, c, key=("proj", delta, ep.key))


def _two_valued_on(b: PartialStructure, delta) -> bool:
    d = b.data
    return all(d[k] in (1, 2) for k in b.sig.indices(delta))


def equality_explainer(sig: Signature, q: str, r: str) -> ExplainingPropagator:
    """Tuple-wise equality, explained by the two clauses of each differing tuple."""
    p = _sat(equality_propagator(sig, q, r))
    arity = sig.arity(q)
    tuples = list(itertools.product(sig.domain, repeat=arity))

    def c(b):
        if p(b) == b:
            return None
        cls = []
        for args in tuples:
            if b[sig.index(q, args)] != b[sig.index(r, args)]:
                cls.extend(equality_tuple_clauses(sig, q, r, args))
        return clause_ep(cls, name=f"eq[{q}={r}]")

    return ExplainingPropagator(p, c, key=("eq", q, r))


def e_select(q: str, r: str, ep: ExplainingPropagator, sig: Signature) -> ExplainingPropagator:
    return e_product(ep, equality_explainer(sig, q, r))


def bounds_explainer(sig: Signature, qc: str, qd: str) -> ExplainingPropagator:
    """Bounds transfer explained by ``qc(n) or not qd(n)`` for every ``n``
    where one of the two literals is already false."""
    p = bounds_leq_propagator(sig, qc, qd)
    cls = bounds_clauses(sig, qc, qd)
    pairs = list(zip(sig.pred_range(qc), sig.pred_range(qd)))

    def c(b):
        if p(b) == b:
            return None
        d = b.data
        chosen = [cl for cl, (kc, kd) in zip(cls, pairs) if d[kc] & 2 or d[kd] & 1]
        return clause_ep(chosen, name=f"bounds[{qc}<={qd}]")

    return ExplainingPropagator(p, c, key=("bounds", qc, qd))


def greedy_witness(delta: frozenset, solve, max_free: int = 8):
    """Shrink a rejected assignment to a smaller partial one whose every
    two-valued completion over ``delta`` is still accepted by ``solve``."""
    memo: dict = {}

    def accepted_everywhere(w: PartialStructure) -> bool:
        free = [k for k in w.sig.indices(delta) if w.data[k] == 0]
        if len(free) > max_free:
            return False
        for bits in range(1 << len(free)):
            buf = bytearray(w.data)
            for j, k in enumerate(free):
                buf[k] = 1 if bits >> j & 1 else 2
            key = bytes(buf)
            hit = memo.get(key)
            if hit is None:
                hit = bool(solve(PartialStructure(w.sig, key), limit=1))
                memo[key] = hit
            if not hit:
                return False
        return True

    def shrink(bd: PartialStructure) -> PartialStructure:
        w = bd
        for k in bd.sig.indices(delta):
            buf = bytearray(w.data)
            buf[k] = 0
            cand = PartialStructure(w.sig, bytes(buf))
            if accepted_everywhere(cand):
                w = cand
        return w

    return shrink


def negation_explainer(tau_inner: Iterable[str], solve, explain_fn=None, rank: int = 2) -> ExplainingPropagator:
    """Complement of a projection checked by a nested solver.

    A conflict is explained by the clause forbidding ``explain_fn(b|tau)``
    (by default ``b|tau`` itself).
    """
    tau_inner = frozenset(tau_inner)
    p = negation_nested(tau_inner, solve, explain_fn)
    p.rank = max(rank, 1)
    fn = explain_fn or (lambda bd: bd)

    def c(b):
        if not b.consistent or p(b) == b:
            return None
        _FRAMES.append("negation")
        try:
            w = fn(b.restrict(tau_inner))
        finally:
            _FRAMES.pop()
        return clause_ep([clause_from_structure(w)], name="witness")

    return ExplainingPropagator(p, c, key=("neg", tau_inner, id(solve)))


# ---------------------------------------------------------------------------
# assembly


def build_explaining(e: ModuleExpr, interp: ModuleInterpretation, sig: Signature | None = None,
                     shrink_witness: bool = True) -> ExplainingPropagator:
    """Explaining propagator for ``e``, mirroring ``build_propagator(best)``."""
    sig = _sig_of(interp, sig)
    return _build(desugar(e), interp, sig, shrink_witness)


def _build(e, interp, sig, shrink) -> ExplainingPropagator:
    if isinstance(e, Bot):
        return lift(constant_top())
    if isinstance(e, Atomic):
        try:
            d = interp[e.name]
        except KeyError:
            raise ExprError(f"unknown module {e.name!r}") from None
        body = d.body
        if isinstance(body, ClauseBody):
            return lift(atomic_propagator(d, e))
        if isinstance(body, BoundsLeq):
            mono = clause_ep(threshold_clauses(sig, (body.qc, body.qd)))
            return e_product(bounds_explainer(sig, body.qc, body.qd), mono)
        return lift(atomic_propagator(d, e))
    if isinstance(e, Product):
        return e_product(_build(e.left, interp, sig, shrink), _build(e.right, interp, sig, shrink))
    if isinstance(e, Complement):
        if isinstance(e.expr, Project):
            inner = build_propagator(e.expr.expr, interp, "best", sig=sig)
            solve = search_solver(inner)
            delta = frozenset(e.expr.delta)
            fn = greedy_witness(delta, solve) if shrink else None
            return negation_explainer(delta, solve, fn, rank=inner.rank + 2)
        child = _build(e.expr, interp, sig, shrink)
        return lift(_sat(complement_checker(child.p)))
    if isinstance(e, Project):
        child = _build(e.expr, interp, sig, shrink)
        return e_project(e.delta, child, search_solver(child.p))
    if isinstance(e, Select):
        return e_select(e.q, e.r, _build(e.expr, interp, sig, shrink), sig)
    if isinstance(e, (Plus, SelectTheta)):
        return _build(desugar(e), interp, sig, shrink)
    raise ExprError(f"not a module expression: {e!r}")


def explanation_chain(ep: ExplainingPropagator, b: PartialStructure) -> list[ExplainingPropagator]:
    """``[ep, c(b), c(c(b))(b), ...]`` until unexplained."""
    chain = [ep]
    cur = ep
    while True:
        x = cur.explain(b)
        if x is None:
            return chain
        if x.rank >= cur.rank:
            raise AssertionError(f"explanation rank {x.rank} not below {cur.rank}")
        chain.append(x)
        cur = x
