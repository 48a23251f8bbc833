"""Random problem instances for property tests and the cross-check suite."""
from __future__ import annotations

import random
from dataclasses import dataclass

from .algebra import (
    Atomic,
    AtomicModuleDef,
    BoundsLeq,
    Bot,
    ClauseBody,
    Complement,
    FullRelation,
    ModuleExpr,
    Product,
    Project,
    Select,
    TableBody,
    TransitiveClosure,
    lit_code,
    make_clauses,
    vocabulary_of,
)
from .lattice import PartialStructure, Signature
from .propagators import random_structure


@dataclass
class Instance:
    sig: Signature
    interp: dict[str, AtomicModuleDef]
    expr: ModuleExpr
    b: PartialStructure
    seed: int

    def describe(self) -> str:
        from .frontend.parser import format_expr

        mods = ", ".join(f"{n}:{d.body.kind}" for n, d in self.interp.items())
        return f"seed={self.seed} atoms={len(self.sig)} modules=[{mods}] expr={format_expr(self.expr)}"


def random_signature(rng: random.Random, max_atoms: int = 12) -> Signature:
    n = rng.choice((2, 2, 2, 3))
    domain = "abc"[:n]
    budget = rng.randint(4, max_atoms)
    vocab = []
    used = 0
    # sometimes reserve room for a builtin's shape
    shape = rng.random()
    if shape < 0.2 and 2 * n * n <= budget:
        vocab += [("E", 2), ("T", 2)]
        used += 2 * n * n
    elif shape < 0.4 and 2 * n <= budget:
        vocab += [("C", 1), ("D", 1)]
        used += 2 * n
    while used < budget:
        room = budget - used
        choices = [0] + ([1] if room >= n else []) + ([2] if room >= n * n else [])
        ar = rng.choice(choices)
        vocab.append((f"P{len(vocab)}", ar))
        used += n ** ar
    return Signature(domain, vocab)


def _random_clause_body(rng, sig, voc) -> ClauseBody:
    atoms = sig.indices(voc)
    raw = []
    for _ in range(rng.randint(1, 4)):
        size = rng.randint(1, min(3, len(atoms)))
        raw.append([lit_code(a, rng.random() < 0.5) for a in rng.sample(atoms, size)])
    clauses = make_clauses(raw)
    if not clauses:
        clauses = make_clauses([[lit_code(atoms[0], True), lit_code(atoms[-1], True)]])
    return ClauseBody(tuple(clauses))


def _random_table_body(rng, sig, voc) -> TableBody:
    atoms = sig.indices(voc)
    rows = set()
    for _ in range(rng.randint(1, 5)):
        rows.add(frozenset(a for a in atoms if rng.random() < 0.5))
    return TableBody(tuple(sorted(rows, key=sorted)), sum(1 << a for a in atoms))


def _builtin_options(sig: Signature):
    preds = dict(sig.vocab)
    out = [("full_relation", (p,)) for p in preds]
    bins = [p for p, a in preds.items() if a == 2]
    uns = [p for p, a in preds.items() if a == 1]
    for i, p in enumerate(bins):
        for q in bins[i + 1:]:
            out.append(("transitive_closure", (p, q)))
    for i, p in enumerate(uns):
        for q in uns[i + 1:]:
            out.append(("bounds_leq", (p, q)))
    return out


def random_module(rng: random.Random, sig: Signature, name: str, kind: str | None = None) -> AtomicModuleDef:
    preds = [p for p, _ in sig.vocab]
    kind = kind or rng.choice(("clause", "clause", "table", "builtin"))
    if kind == "builtin":
        opts = _builtin_options(sig)
        special = [o for o in opts if o[0] != "full_relation"]
        bname, args = rng.choice(special) if special and rng.random() < 0.7 else rng.choice(opts)
        cls = {"full_relation": FullRelation, "transitive_closure": TransitiveClosure, "bounds_leq": BoundsLeq}[bname]
        return AtomicModuleDef(name, args, cls(*args), sig)
    voc = rng.sample(preds, rng.randint(1, min(3, len(preds))))
    if kind == "table":
        # keep explicit tables small
        while len(sig.indices(voc)) > 6 and len(voc) > 1:
            voc.pop()
        if len(sig.indices(voc)) > 6:
            return AtomicModuleDef(name, voc, _random_clause_body(rng, sig, voc), sig)
        return AtomicModuleDef(name, voc, _random_table_body(rng, sig, voc), sig)
    return AtomicModuleDef(name, voc, _random_clause_body(rng, sig, voc), sig)


def random_expr(rng: random.Random, sig: Signature, interp, depth: int) -> ModuleExpr:
    """A random expression over the minimal operations, at most ``depth`` deep."""
    names = sorted(interp)
    if depth == 0 or rng.random() < 0.25:
        return Bot() if rng.random() < 0.03 else Atomic(rng.choice(names))
    op = rng.choice(("product", "product", "complement", "project", "select"))
    if op == "product":
        return Product(random_expr(rng, sig, interp, depth - 1), random_expr(rng, sig, interp, depth - 1))
    inner = random_expr(rng, sig, interp, depth - 1)
    if op == "complement":
        return Complement(inner)
    voc = sorted(vocabulary_of(inner, interp, sig))
    if op == "project":
        keep = [p for p in voc if rng.random() < 0.5]
        return Project(frozenset(keep), inner)
    pairs = [(q, r) for q in voc for r in voc if q < r and sig.arity(q) == sig.arity(r)]
    if not pairs:
        return Complement(inner)
    q, r = rng.choice(pairs)
    return Select(q, r, inner)


def random_instance(seed: int, max_atoms: int = 12, max_depth: int = 3, p_unknown: float = 0.75) -> Instance:
    rng = random.Random(seed)
    sig = random_signature(rng, max_atoms)
    interp = {}
    for j in range(rng.randint(1, 3)):
        name = f"M{j}"
        interp[name] = random_module(rng, sig, name)
    expr = random_expr(rng, sig, interp, rng.randint(1, max_depth))
    b = random_structure(sig, rng, p_unknown=p_unknown)
    return Instance(sig, interp, expr, b, seed)
