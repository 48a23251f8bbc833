"""Module expressions, atomic module definitions and their reference semantics.

Everything here is brute force on purpose: ``eval_module`` follows the
set-theoretic definitions literally and ``enumerate_models`` computes the
denotation of an expression as a boolean table over all two-valued
structures.  The engines are checked against these.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

import numpy as np

from .lattice import F, T, DomainAtom, PartialStructure, Signature, SignatureError

log = logging.getLogger(__name__)

#: Largest signature the enumeration oracle accepts.
ORACLE_MAX_ATOMS = 22


class ExprError(ValueError):
    """Ill-formed expression: unknown module, arity clash, bad selection."""


# ---------------------------------------------------------------------------
# literals and clauses


def lit_code(atom: int, positive: bool) -> int:
    return 2 * atom + (0 if positive else 1)


def lit_atom(lit: int) -> int:
    return lit >> 1


def lit_positive(lit: int) -> bool:
    return not lit & 1


def lit_neg(lit: int) -> int:
    return lit ^ 1


class Clause(tuple):
    """Sorted tuple of literal codes without duplicates.

    Use :meth:`make`; it returns ``None`` for tautologies.
    """

    __slots__ = ()

    @classmethod
    def make(cls, lits: Iterable[int]) -> "Clause | None":
        s = set(lits)
        if any(l ^ 1 in s for l in s):
            return None
        return cls(sorted(s))

    @property
    def atoms(self) -> list[int]:
        return [l >> 1 for l in self]

    def satisfied_by_bits(self, bits: int) -> bool:
        for l in self:
            if (bits >> (l >> 1) & 1) != (l & 1):
                return True
        return False

    def format(self, sig: Signature) -> str:
        if not self:
            return "[]"
        return "[" + " ".join(format_lit(sig, l) for l in self) + "]"


def format_lit(sig: Signature, lit: int) -> str:
    return ("" if lit_positive(lit) else "-") + sig.format_atom(lit >> 1)


def make_clauses(raw: Iterable[Iterable[int]], where: str = "") -> list[Clause]:
    """Build clauses, dropping tautologies (with a warning) and duplicates."""
    out: list[Clause] = []
    seen = set()
    for lits in raw:
        c = Clause.make(lits)
        if c is None:
            log.warning("dropping tautological clause%s", f" in {where}" if where else "")
            continue
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out


# ---------------------------------------------------------------------------
# atomic module bodies


class AtomicBody:
    """Membership test for an atomic module over the atoms of its vocabulary."""

    kind = "abstract"

    def member_bits(self, bits: int) -> bool:
        raise NotImplementedError

    def atoms_read(self, sig: Signature) -> set[int]:
        raise NotImplementedError

    def local_models(self, sig: Signature, local: list[int]) -> Iterable[int] | None:
        """Bitmasks (over the full signature, zero outside ``local``) of all models.

        ``None`` means "no shortcut, filter every local assignment".
        """
        return None


@dataclass(frozen=True)
class TableBody(AtomicBody):
    """Explicit list of models, each given by its set of true atoms."""

    rows: tuple[frozenset, ...]
    voc_mask: int = 0
    kind = "table"

    def member_bits(self, bits: int) -> bool:
        return (bits & self.voc_mask) in self._rowmasks

    @property
    def _rowmasks(self) -> frozenset:
        return frozenset(sum(1 << a for a in row) for row in self.rows)

    def atoms_read(self, sig):
        return {k for k in range(len(sig)) if self.voc_mask >> k & 1}

    def local_models(self, sig, local):
        return sorted(self._rowmasks)


@dataclass(frozen=True)
class ClauseBody(AtomicBody):
    clauses: tuple[Clause, ...]
    kind = "clause"

    def member_bits(self, bits: int) -> bool:
        return all(c.satisfied_by_bits(bits) for c in self.clauses)

    def atoms_read(self, sig):
        return {a for c in self.clauses for a in c.atoms}


@dataclass(frozen=True)
class TransitiveClosure(AtomicBody):
    """``trans`` is the transitive closure (paths of length >= 1) of ``edge``."""

    edge: str
    trans: str
    kind = "transitive_closure"

    def member_bits(self, bits: int) -> bool:
        raise RuntimeError("bind to a signature first")

    def atoms_read(self, sig):
        return set(sig.pred_range(self.edge)) | set(sig.pred_range(self.trans))


def transitive_closure(n: int, edges: Iterable[tuple[int, int]]) -> set[tuple[int, int]]:
    """Pairs (x, y) joined by a path of length >= 1."""
    succ = [set() for _ in range(n)]
    for x, y in edges:
        succ[x].add(y)
    out = set()
    for x in range(n):
        seen = set()
        stack = list(succ[x])
        while stack:
            y = stack.pop()
            if y in seen:
                continue
            seen.add(y)
            stack.extend(succ[y])
        out.update((x, y) for y in seen)
    return out


@dataclass(frozen=True)
class FullRelation(AtomicBody):
    pred: str
    kind = "full_relation"


@dataclass(frozen=True)
class BoundsLeq(AtomicBody):
    """Threshold encodings ``qc(n) <=> c <= n`` and ``qd(n) <=> d <= n`` with c <= d."""

    qc: str
    qd: str
    kind = "bounds_leq"


BUILTIN_KINDS = {
    "transitive_closure": (TransitiveClosure, 2),
    "full_relation": (FullRelation, 1),
    "bounds_leq": (BoundsLeq, 2),
}


class AtomicModuleDef:
    """An atomic module: declared vocabulary plus a body bound to a signature."""

    def __init__(self, name: str, voc: Iterable[str], body: AtomicBody, sig: Signature):
        self.name = name
        self.voc = sig.check_subvocab(voc)
        self.body = body
        self.sig = sig
        self._local = sig.indices(self.voc)
        self._vmask = sum(1 << k for k in self._local)
        self._check()
        self._member = self._bind()

    def __repr__(self):
        return f"AtomicModuleDef({self.name!r}, voc={sorted(self.voc)}, kind={self.body.kind})"

    def _check(self):
        sig, body = self.sig, self.body
        if isinstance(body, TransitiveClosure):
            for p in (body.edge, body.trans):
                if sig.arity(p) != 2:
                    raise ExprError(f"{self.name}: {p} must be binary")
        elif isinstance(body, BoundsLeq):
            for p in (body.qc, body.qd):
                if sig.arity(p) != 1:
                    raise ExprError(f"{self.name}: {p} must be unary")
        elif isinstance(body, FullRelation):
            sig.arity(body.pred)
        stray = self.atoms_read() - set(self._local)
        if stray:
            names = ", ".join(sig.format_atom(a) for a in sorted(stray))
            raise ExprError(f"{self.name}: body reads atoms outside its vocabulary: {names}")

    def atoms_read(self) -> set[int]:
        b = self.body
        if isinstance(b, FullRelation):
            return set(self.sig.pred_range(b.pred))
        if isinstance(b, BoundsLeq):
            return set(self.sig.pred_range(b.qc)) | set(self.sig.pred_range(b.qd))
        return b.atoms_read(self.sig)

    def _bind(self):
        sig, b = self.sig, self.body
        if isinstance(b, (TableBody, ClauseBody)):
            return b.member_bits
        if isinstance(b, TransitiveClosure):
            n = len(sig.domain)
            e0 = sig.pred_range(b.edge).start
            t0 = sig.pred_range(b.trans).start

            def member(bits):
                edges = [(x, y) for x in range(n) for y in range(n) if bits >> (e0 + x * n + y) & 1]
                tc = transitive_closure(n, edges)
                for x in range(n):
                    for y in range(n):
                        if bool(bits >> (t0 + x * n + y) & 1) != ((x, y) in tc):
                            return False
                return True

            return member
        if isinstance(b, FullRelation):
            m = sum(1 << k for k in sig.pred_range(b.pred))
            return lambda bits: bits & m == m
        if isinstance(b, BoundsLeq):
            c = list(sig.pred_range(b.qc))
            d = list(sig.pred_range(b.qd))

            def member(bits):
                for q in (c, d):
                    for lo, hi in zip(q, q[1:]):
                        if bits >> lo & 1 and not bits >> hi & 1:
                            return False
                for kc, kd in zip(c, d):
                    if bits >> kd & 1 and not bits >> kc & 1:
                        return False
                return True

            return member
        raise TypeError(f"unsupported body {b!r}")

    def member_bits(self, bits: int) -> bool:
        return self._member(bits)

    def local_models(self) -> list[int]:
        """All models as bitmasks, zero outside the module's vocabulary."""
        b = self.body
        if isinstance(b, TransitiveClosure):
            return self._tc_models()
        shortcut = b.local_models(self.sig, self._local) if isinstance(b, TableBody) else None
        if shortcut is not None:
            return [x for x in shortcut if self._member(x)]
        return [x for x in self._all_local() if self._member(x)]

    def _all_local(self):
        local = self._local
        for y in range(1 << len(local)):
            x = 0
            for j, k in enumerate(local):
                if y >> j & 1:
                    x |= 1 << k
            yield x

    def _tc_models(self) -> list[int]:
        sig, b = self.sig, self.body
        n = len(sig.domain)
        e0 = sig.pred_range(b.edge).start
        t0 = sig.pred_range(b.trans).start
        pairs = [(x, y) for x in range(n) for y in range(n)]
        extra = [k for k in self._local if k not in sig.pred_range(b.edge) and k not in sig.pred_range(b.trans)]
        out = []
        for ebits in range(1 << len(pairs)):
            edges = [p for j, p in enumerate(pairs) if ebits >> j & 1]
            x = 0
            for (u, v) in edges:
                x |= 1 << (e0 + u * n + v)
            for (u, v) in transitive_closure(n, edges):
                x |= 1 << (t0 + u * n + v)
            for sub in itertools.product((0, 1), repeat=len(extra)):
                y = x
                for bit, k in zip(sub, extra):
                    y |= bit << k
                out.append(y)
        return out


def atomic_member(d: AtomicModuleDef, i: PartialStructure) -> bool:
    if not i.two_valued:
        raise ValueError("membership is only defined on two-valued structures")
    return d.member_bits(i.to_bits())


ModuleInterpretation = Mapping[str, AtomicModuleDef]


# ---------------------------------------------------------------------------
# expressions


@dataclass(frozen=True)
class Bot:
    pass


@dataclass(frozen=True)
class Atomic:
    name: str


@dataclass(frozen=True)
class Product:
    left: "ModuleExpr"
    right: "ModuleExpr"


@dataclass(frozen=True)
class Complement:
    expr: "ModuleExpr"


@dataclass(frozen=True)
class Project:
    delta: frozenset
    expr: "ModuleExpr"


@dataclass(frozen=True)
class Select:
    q: str
    r: str
    expr: "ModuleExpr"


@dataclass(frozen=True)
class Plus:
    left: "ModuleExpr"
    right: "ModuleExpr"


@dataclass(frozen=True)
class SelectTheta:
    theta: "Theta"
    expr: "ModuleExpr"


ModuleExpr = Union[Bot, Atomic, Product, Complement, Project, Select, Plus, SelectTheta]


# selection formulas over equality atoms


@dataclass(frozen=True)
class Eq:
    q: str
    r: str


@dataclass(frozen=True)
class Not:
    arg: "Theta"


@dataclass(frozen=True)
class And:
    left: "Theta"
    right: "Theta"


@dataclass(frozen=True)
class Or:
    left: "Theta"
    right: "Theta"


Theta = Union[Eq, Not, And, Or]

THETA_MAX_ATOMS = 16


def _pair(q: str, r: str) -> tuple[str, str]:
    return (q, r) if q <= r else (r, q)


def theta_atoms(theta: Theta) -> list[tuple[str, str]]:
    out: list[tuple[str, str]] = []

    def walk(t):
        if isinstance(t, Eq):
            p = _pair(t.q, t.r)
            if p not in out:
                out.append(p)
        elif isinstance(t, Not):
            walk(t.arg)
        elif isinstance(t, (And, Or)):
            walk(t.left)
            walk(t.right)
        else:
            raise ExprError(f"malformed selection formula: {t!r}")

    walk(theta)
    return out


def theta_holds(theta: Theta, val: Mapping[tuple[str, str], bool]) -> bool:
    if isinstance(theta, Eq):
        return theta.q == theta.r or val[_pair(theta.q, theta.r)]
    if isinstance(theta, Not):
        return not theta_holds(theta.arg, val)
    if isinstance(theta, And):
        return theta_holds(theta.left, val) and theta_holds(theta.right, val)
    if isinstance(theta, Or):
        return theta_holds(theta.left, val) or theta_holds(theta.right, val)
    raise ExprError(f"malformed selection formula: {theta!r}")


def entailed_equalities(theta: Theta) -> set[tuple[str, str]]:
    """Equalities Q==R true in every row of the truth table of ``theta``.

    Equality atoms are treated as independent propositions; the result is
    then closed under transitivity.  Pairs are reported with sorted names.
    """
    atoms = [p for p in theta_atoms(theta) if p[0] != p[1]]
    if len(atoms) > THETA_MAX_ATOMS:
        raise ExprError(f"selection formula has {len(atoms)} equality atoms (max {THETA_MAX_ATOMS})")
    entailed = set(atoms)
    for row in itertools.product((False, True), repeat=len(atoms)):
        val = dict(zip(atoms, row))
        if theta_holds(theta, val):
            entailed &= {p for p in atoms if val[p]}
    # transitive closure over predicate names
    names = sorted({n for p in entailed for n in p})
    parent = {n: n for n in names}

    def find(n):
        while parent[n] != n:
            parent[n] = parent[parent[n]]
            n = parent[n]
        return n

    for q, r in entailed:
        parent[find(q)] = find(r)
    out = set()
    for q, r in itertools.combinations(names, 2):
        if find(q) == find(r):
            out.add((q, r))
    return out


def _top_equalities(theta: Theta) -> set[tuple[str, str]]:
    if isinstance(theta, Eq):
        return {_pair(theta.q, theta.r)}
    if isinstance(theta, And):
        return _top_equalities(theta.left) | _top_equalities(theta.right)
    return set()


def desugar(e: ModuleExpr) -> ModuleExpr:
    """Rewrite disjunction and formula selection into the minimal syntax.

    ``E1 + E2`` becomes ``-(-E1 * -E2)``.  A formula selection is rewritten
    recursively (negation ``E * -sel(E)``, conjunction by nesting,
    disjunction by ``+``); every equality entailed by the formula that is not
    already a top-level conjunct is added as an extra ``select`` so the
    derived equality is visible to propagation.
    """
    if isinstance(e, (Bot, Atomic)):
        return e
    if isinstance(e, Product):
        return Product(desugar(e.left), desugar(e.right))
    if isinstance(e, Complement):
        return Complement(desugar(e.expr))
    if isinstance(e, Project):
        return Project(e.delta, desugar(e.expr))
    if isinstance(e, Select):
        return Select(e.q, e.r, desugar(e.expr))
    if isinstance(e, Plus):
        return Complement(Product(Complement(desugar(e.left)), Complement(desugar(e.right))))
    if isinstance(e, SelectTheta):
        inner = desugar(e.expr)
        out = _rewrite_theta(e.theta, inner)
        extra = sorted(entailed_equalities(e.theta) - _top_equalities(e.theta))
        for q, r in reversed(extra):
            out = Select(q, r, out)
        return out
    raise ExprError(f"not a module expression: {e!r}")


def _rewrite_theta(theta: Theta, e: ModuleExpr) -> ModuleExpr:
    if isinstance(theta, Eq):
        return Select(theta.q, theta.r, e)
    if isinstance(theta, Not):
        return Product(e, Complement(_rewrite_theta(theta.arg, e)))
    if isinstance(theta, And):
        return _rewrite_theta(theta.left, _rewrite_theta(theta.right, e))
    if isinstance(theta, Or):
        return Complement(Product(Complement(_rewrite_theta(theta.left, e)),
                                  Complement(_rewrite_theta(theta.right, e))))
    raise ExprError(f"malformed selection formula: {theta!r}")


def is_minimal(e: ModuleExpr) -> bool:
    if isinstance(e, (Bot, Atomic)):
        return True
    if isinstance(e, (Plus, SelectTheta)):
        return False
    if isinstance(e, Product):
        return is_minimal(e.left) and is_minimal(e.right)
    return is_minimal(e.expr)


def vocabulary_of(e: ModuleExpr, interp: ModuleInterpretation, sig: Signature) -> frozenset[str]:
    if isinstance(e, Bot):
        return sig.predicates
    if isinstance(e, Atomic):
        try:
            return interp[e.name].voc
        except KeyError:
            raise ExprError(f"unknown module {e.name!r}") from None
    if isinstance(e, (Product, Plus)):
        return vocabulary_of(e.left, interp, sig) | vocabulary_of(e.right, interp, sig)
    if isinstance(e, Project):
        return frozenset(e.delta)
    return vocabulary_of(e.expr, interp, sig)


def check_expr(e: ModuleExpr, interp: ModuleInterpretation, sig: Signature) -> None:
    """Raise :class:`ExprError` unless names resolve and arities line up."""
    if isinstance(e, Bot):
        return
    if isinstance(e, Atomic):
        vocabulary_of(e, interp, sig)
        return
    if isinstance(e, (Product, Plus)):
        check_expr(e.left, interp, sig)
        check_expr(e.right, interp, sig)
        return
    check_expr(e.expr, interp, sig)
    if isinstance(e, Project):
        try:
            sig.check_subvocab(e.delta)
        except SignatureError as exc:
            raise ExprError(f"projection: {exc}") from None
    elif isinstance(e, Select):
        _check_eq(e.q, e.r, e.expr, interp, sig)
    elif isinstance(e, SelectTheta):
        for q, r in theta_atoms(e.theta):
            _check_eq(q, r, e.expr, interp, sig)


def _check_eq(q, r, inner, interp, sig):
    voc = vocabulary_of(inner, interp, sig)
    for p in (q, r):
        if p not in voc:
            raise ExprError(f"selection {q}=={r}: {p} is not in the vocabulary of the selected module")
    if sig.arity(q) != sig.arity(r):
        raise ExprError(f"selection {q}=={r}: arity mismatch")


# ---------------------------------------------------------------------------
# reference semantics


def _pred_pairs(sig: Signature, q: str, r: str) -> list[tuple[int, int]]:
    return list(zip(sig.pred_range(q), sig.pred_range(r)))


def eval_module(e: ModuleExpr, interp: ModuleInterpretation, i: PartialStructure) -> bool:
    """Membership of a two-valued structure, straight from the definitions."""
    if not i.two_valued:
        raise ValueError("eval_module needs a two-valued structure")
    return _eval_bits(e, interp, i.sig, i.to_bits())


def _eval_bits(e, interp, sig, bits):
    if isinstance(e, Bot):
        return False
    if isinstance(e, Atomic):
        return interp[e.name].member_bits(bits)
    if isinstance(e, Product):
        return _eval_bits(e.left, interp, sig, bits) and _eval_bits(e.right, interp, sig, bits)
    if isinstance(e, Complement):
        return not _eval_bits(e.expr, interp, sig, bits)
    if isinstance(e, Select):
        if any((bits >> a & 1) != (bits >> b & 1) for a, b in _pred_pairs(sig, e.q, e.r)):
            return False
        return _eval_bits(e.expr, interp, sig, bits)
    if isinstance(e, Project):
        keep = sum(1 << k for k in sig.indices(e.delta))
        free = [k for k in range(len(sig)) if not keep >> k & 1]
        base = bits & keep
        for y in range(1 << len(free)):
            x = base
            for j, k in enumerate(free):
                if y >> j & 1:
                    x |= 1 << k
            if _eval_bits(e.expr, interp, sig, x):
                return True
        return False
    if isinstance(e, (Plus, SelectTheta)):
        return _eval_bits(desugar(e), interp, sig, bits)
    raise ExprError(f"not a module expression: {e!r}")


def module_table(e: ModuleExpr, interp: ModuleInterpretation, sig: Signature) -> np.ndarray:
    """Boolean vector over all two-valued structures (indexed by true-atom bitmask)."""
    n = len(sig)
    if n > ORACLE_MAX_ATOMS:
        raise ValueError(f"signature has {n} atoms; the enumeration oracle handles at most {ORACLE_MAX_ATOMS}")
    xs = np.arange(1 << n, dtype=np.int64)
    cache: dict = {}

    def bit(k):
        return (xs >> k) & 1

    def gather(positions):
        key = np.zeros_like(xs)
        for j, k in enumerate(positions):
            key |= bit(k) << j
        return key

    def table(e):
        hit = cache.get(e)
        if hit is not None:
            return hit
        if isinstance(e, Bot):
            out = np.zeros(1 << n, dtype=bool)
        elif isinstance(e, Atomic):
            d = interp[e.name]
            local = d._local
            lut = np.zeros(1 << len(local), dtype=bool)
            pos = {k: j for j, k in enumerate(local)}
            for x in d.local_models():
                y = 0
                for k, j in pos.items():
                    if x >> k & 1:
                        y |= 1 << j
                lut[y] = True
            out = lut[gather(local)]
        elif isinstance(e, Product):
            out = table(e.left) & table(e.right)
        elif isinstance(e, Complement):
            out = ~table(e.expr)
        elif isinstance(e, Select):
            out = table(e.expr).copy()
            for a, b in _pred_pairs(sig, e.q, e.r):
                out &= bit(a) == bit(b)
        elif isinstance(e, Project):
            keep = sum(1 << k for k in sig.indices(e.delta))
            keys = xs & keep
            has = np.zeros(1 << n, dtype=bool)
            has[keys[table(e.expr)]] = True
            out = has[keys]
        elif isinstance(e, (Plus, SelectTheta)):
            out = table(desugar(e))
        else:
            raise ExprError(f"not a module expression: {e!r}")
        cache[e] = out
        return out

    return table(e)


def canonical_key(sig: Signature, bits: int) -> int:
    """Sort key giving lexicographic order by atom index with T before F."""
    n = len(sig)
    key = 0
    for k in range(n):
        key = (key << 1) | (0 if bits >> k & 1 else 1)
    return key


def sort_models(models: Iterable[PartialStructure]) -> list[PartialStructure]:
    models = list(models)
    if not models:
        return models
    sig = models[0].sig
    return sorted(models, key=lambda m: canonical_key(sig, m.to_bits()))


def enumerate_models(e: ModuleExpr, interp: ModuleInterpretation, b: PartialStructure) -> list[PartialStructure]:
    """All two-valued structures above ``b`` in the module, in canonical order."""
    if not b.consistent:
        return []
    sig = b.sig
    tab = module_table(e, interp, sig)
    tmask = sum(1 << k for k, v in enumerate(b.data) if v == T)
    fmask = sum(1 << k for k, v in enumerate(b.data) if v == F)
    xs = np.flatnonzero(tab)
    xs = xs[((xs & tmask) == tmask) & ((xs & fmask) == 0)]
    return sort_models(PartialStructure.from_bits(sig, int(x)) for x in xs)


def count_models(e: ModuleExpr, interp: ModuleInterpretation, sig: Signature) -> int:
    return int(module_table(e, interp, sig).sum())


def project_models(models: Iterable[PartialStructure], delta: Iterable[str]) -> list[PartialStructure]:
    """Restrict to ``delta`` and drop duplicates, keeping first-seen order."""
    seen = {}
    for m in models:
        r = m.restrict(delta)
        seen.setdefault(r, None)
    return list(seen)


def all_two_valued(sig: Signature) -> Iterable[PartialStructure]:
    for x in range(1 << len(sig)):
        yield PartialStructure.from_bits(sig, x)


def clause_from_structure(b: PartialStructure) -> Clause:
    """The clause forbidding every structure above ``b``: negation of its literals."""
    lits = []
    for k, v in enumerate(b.data):
        if v == T:
            lits.append(lit_code(k, False))
        elif v == F:
            lits.append(lit_code(k, True))
    return Clause(sorted(lits))


def atom_of(sig: Signature, pred: str, *args: str) -> int:
    return sig.index(DomainAtom(pred, tuple(args)))
