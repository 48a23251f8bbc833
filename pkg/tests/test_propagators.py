import random

import pytest

from modex.algebra import Atomic, Bot, desugar, enumerate_models, eval_module
from modex.frontend import parse_problem
from modex.lattice import I, PartialStructure, Signature, T, U
from modex.propagators import (
    COUNTERS,
    Propagator,
    bounds_leq_propagator,
    build_propagator,
    checker_of,
    complement_checker,
    compose,
    disjoin_prop,
    equality_propagator,
    fixpoint,
    forbid_model_checker,
    identity,
    module_of,
    negation_nested,
    optimal_from_solver,
    product_prop,
    project_prop,
    random_refinement,
    random_structure,
    reset_counters,
    search_solver,
    select_prop,
    unit_propagator,
)
from modex.algebra import lit_code, make_clauses, Clause
from modex.randgen import random_instance


def problem(text):
    return parse_problem(text)


def S(sig, **vals):
    return PartialStructure.from_values(sig, vals)


PQ = problem("domain x ; vocab p/0, q/0 ; module M := clause { p | q } ; module U := clause { p ; -p } ; solve M ;")
SIG = PQ.sig


def clauses(sig, *raw):
    return make_clauses([[lit_code(sig.parse_atom(a.lstrip("-")), not a.startswith("-")) for a in c] for c in raw])


def one_step_up(sig, cls):
    """A single round of the unit rule, reading only the input."""

    def fn(b):
        buf = bytearray(b.data)
        for c in cls:
            open_ = [l for l in c if not b.data[l >> 1] & (2 - (l & 1))]
            if len(open_) == 1:
                l = open_[0]
                buf[l >> 1] |= 1 + (l & 1)
        return PartialStructure(b.sig, bytes(buf))

    return Propagator(fn, rank=0, name="up1")


def refinement_pairs(sig, rng, n, p_incons=0.05):
    for _ in range(n):
        b = random_structure(sig, rng, p_unknown=0.6, p_incons=p_incons)
        yield b, random_refinement(b, rng)


def assert_laws(p, sig, rng, n=200):
    for b, b2 in refinement_pairs(sig, rng, n):
        out, out2 = p(b), p(b2)
        assert b <= out, (p.name, b, out)
        assert out <= out2, (p.name, b, b2)


# checkers and generic operations


def test_checker_examples():
    c = checker_of(Atomic("M"), PQ.interp)
    tf = S(SIG, p="t", q="f")
    assert c(tf) == tf
    assert c(S(SIG, p="f", q="f")) == PartialStructure.top(SIG)
    assert c(PartialStructure.bottom(SIG)) == PartialStructure.bottom(SIG)


def test_compose_examples():
    chain = Signature(["x"], [("p1", 0), ("p2", 0), ("p3", 0)])
    up1 = one_step_up(chain, clauses(chain, ["-p1", "p2"], ["-p2", "p3"]))
    b = S(chain, p1="t")
    assert up1(b)["p3"] == U
    assert compose(up1, up1)(b)["p3"] == T
    p = unit_propagator(clauses(SIG, ["p", "q"]))
    rng = random.Random(1)
    for b, _ in refinement_pairs(SIG, rng, 50):
        assert compose(identity(), p)(b) == p(b)
        assert compose(p, identity())(b) == p(b)


def test_fixpoint_examples():
    chain = Signature(["x"], [("p1", 0), ("p2", 0), ("p3", 0)])
    up1 = one_step_up(chain, clauses(chain, ["-p1", "p2"], ["-p2", "p3"]))
    assert fixpoint(up1)(S(chain, p1="t")) == S(chain, p1="t", p2="t", p3="t")
    rng = random.Random(2)
    for b, _ in refinement_pairs(chain, rng, 50):
        assert fixpoint(identity())(b) == b
        assert up1(b) <= fixpoint(up1)(b)


def test_compose_grows_both_outputs():
    rng = random.Random(3)
    for seed in range(20):
        inst = random_instance(seed, max_atoms=8)
        e = desugar(inst.expr)
        p1 = build_propagator(e, inst.interp, "best")
        p2 = build_propagator(e, inst.interp, "checker")
        both = compose(p1, p2)
        for b, _ in refinement_pairs(inst.sig, rng, 20):
            out = both(b)
            assert p1(b) <= out and p2(b) <= out


def test_optimal_from_solver_examples():
    m = PQ.interp
    opt = optimal_from_solver(lambda b, limit=None: enumerate_models(Atomic("M"), m, b))
    assert opt(S(SIG, p="f")) == S(SIG, p="f", q="t")
    assert opt(PartialStructure.bottom(SIG)) == PartialStructure.bottom(SIG)
    unsat = optimal_from_solver(lambda b, limit=None: enumerate_models(Atomic("U"), m, b))
    assert unsat(S(SIG, q="t")) == PartialStructure.top(SIG)


def test_module_of_examples():
    m = PQ.interp
    assert set(module_of(checker_of(Atomic("M"), m), SIG)) == set(enumerate_models(Atomic("M"), m, PartialStructure.bottom(SIG)))
    assert len(module_of(identity(), SIG)) == 4
    assert len(module_of(unit_propagator(clauses(SIG, ["p", "q"])), SIG)) == 3


# propagating combinators


def test_product_examples():
    sig = SIG
    pt = Propagator(lambda b: b | S(sig, p="t"), name="pt")
    pf = Propagator(lambda b: b | S(sig, p="f"), name="pf")
    assert product_prop(pt, pf)(PartialStructure.bottom(sig))["p"] == I
    rng = random.Random(4)
    up = unit_propagator(clauses(sig, ["p", "q"]))
    for b, _ in refinement_pairs(sig, rng, 50):
        assert product_prop(up, identity())(b) == up(b)


def test_product_of_module_propagators_is_a_product_propagator():
    spec = problem("""domain a b ; vocab P/1, Q/1 ;
        module A := clause { P(a) | Q(a) ; -P(b) | Q(b) } ;
        module B := clause { -Q(a) | -Q(b) } ;
        expr E := A * B ; solve E ;""")
    pa = unit_propagator(spec.interp["A"].body.clauses)
    pb = unit_propagator(spec.interp["B"].body.clauses)
    models = enumerate_models(spec.goal, spec.interp, PartialStructure.bottom(spec.sig))
    assert set(module_of(product_prop(pa, pb), spec.sig)) == set(models)
    fx = fixpoint(product_prop(pa, pb))
    assert module_of(fx, spec.sig) == module_of(product_prop(pa, pb), spec.sig)


def test_project_examples():
    spec = problem("""domain a b ; vocab P/1, Q/1 ;
        module A := clause { -P(a) | Q(a) ; -P(a) | -Q(a) } ;
        expr E := project {P} (A) ; solve E ;""")
    sig = spec.sig
    inner = build_propagator(Atomic("A"), spec.interp)
    proj = project_prop(["P"], inner, search_solver(inner))
    assert proj(S(sig, **{"P(a)": "i"})) == PartialStructure.top(sig)
    # P(a) true has no witness for Q(a)
    assert proj(S(sig, **{"P(a)": "t", "P(b)": "f"})) == PartialStructure.top(sig)
    ok = S(sig, **{"P(a)": "f", "P(b)": "t", "Q(b)": "f"})
    assert proj(ok) == ok


def test_project_of_bounds_without_d_information_is_identity():
    sig = Signature([str(n) for n in range(1, 101)], [("C", 1), ("D", 1)])
    b = bounds_state(sig)
    bounds = bounds_leq_propagator(sig, "C", "D")

    def no_solver(b, limit=None):
        raise AssertionError("projection must not search on partial input")

    assert project_prop(["C"], bounds, no_solver)(b) == b


def test_select_examples():
    sig = Signature(["a"], [("Q", 1), ("R", 1)])
    sel = select_prop("Q", "R", identity())
    assert sel(S(sig, **{"Q(a)": "t"})) == S(sig, **{"Q(a)": "t", "R(a)": "t"})
    assert sel(S(sig, **{"Q(a)": "t", "R(a)": "f"})) == S(sig, **{"Q(a)": "i", "R(a)": "i"})
    same = S(sig, **{"Q(a)": "f", "R(a)": "f"})
    assert sel(same) == same


def test_complement_checker_examples():
    c = complement_checker(checker_of(Atomic("M"), PQ.interp))
    ff = S(SIG, p="f", q="f")
    assert c(ff) == ff
    assert c(S(SIG, p="t", q="f")) == PartialStructure.top(SIG)
    part = S(SIG, p="t")
    assert c(part) == part


def test_disjunction_examples():
    sig = Signature(["x"], [("p", 0), ("q", 0)])
    qt = Propagator(lambda b: b | S(sig, q="t"), name="qt")
    assert disjoin_prop(qt, qt)(PartialStructure.bottom(sig))["q"] == T
    assert disjoin_prop(qt, identity())(PartialStructure.bottom(sig))["q"] == U


def test_disjunction_dominates_rewrite_and_is_sound():
    spec = problem("""domain a b ; vocab P/1, Q/1 ;
        module A := clause { P(a) ; -Q(b) } ;
        module B := clause { -P(a) | Q(a) ; Q(b) } ;
        expr D := A + B ; solve D ;""")
    sig = spec.sig
    pa = build_propagator(Atomic("A"), spec.interp)
    pb = build_propagator(Atomic("B"), spec.interp)
    plus = disjoin_prop(pa, pb)
    rewrite = build_propagator(desugar(spec.goal), spec.interp, "checker")
    rng = random.Random(5)
    for _ in range(300):
        b = random_structure(sig, rng, p_unknown=0.6)
        assert rewrite(b) <= plus(b)
    assert set(module_of(plus, sig)) == set(module_of(pa, sig)) | set(module_of(pb, sig))


def test_negation_nested_examples():
    spec = problem("""domain x ; vocab p/0, r/0 ;
        module M := clause { -p | r } ; expr N := -project {p} (M) ; solve N ;""")
    sig = spec.sig
    inner = build_propagator(Atomic("M"), spec.interp)
    neg = negation_nested(["p"], search_solver(inner))
    assert neg(S(sig, p="t")) == PartialStructure.top(sig)
    assert neg(S(sig, r="f")) == S(sig, r="f")


# primitives


def test_unit_propagator_examples():
    up = unit_propagator(clauses(SIG, ["p", "-q"]))
    assert up(S(SIG, q="t")) == S(SIG, p="t", q="t")
    assert unit_propagator(clauses(SIG, ["p"], ["-p"]))(PartialStructure.bottom(SIG))["p"] == I
    assert unit_propagator(clauses(SIG, ["p", "q"]))(PartialStructure.bottom(SIG)) == PartialStructure.bottom(SIG)


def test_empty_clause_rejects_everything():
    up = unit_propagator([Clause()])
    assert up(PartialStructure.bottom(SIG)) == PartialStructure.top(SIG)


def bounds_state(sig):
    """c in [10, 90] and d in [20, 80] as threshold atoms C(n) <=> c <= n."""
    vals = {}
    for n in range(1, 101):
        vals[f"C({n})"] = "f" if n < 10 else ("t" if n >= 90 else "u")
        vals[f"D({n})"] = "f" if n < 20 else ("t" if n >= 80 else "u")
    return S(sig, **{k: v for k, v in vals.items() if v != "u"})


def test_bounds_examples():
    sig = Signature([str(n) for n in range(1, 101)], [("C", 1), ("D", 1)])
    p = bounds_leq_propagator(sig, "C", "D")
    b = bounds_state(sig)
    out = p(b)
    for n in range(1, 101):
        want = T if n >= 80 else (U if n >= 10 else 2)
        assert out[f"C({n})"] == want
        assert out[f"D({n})"] == b[f"D({n})"]
    quiet = S(sig, **{"C(5)": "t", "D(7)": "f"})
    assert p(quiet) == quiet
    clash = p(S(sig, **{"D(50)": "t", "C(50)": "f"}))
    assert clash["C(50)"] == I and clash["D(50)"] == I


def test_equality_examples():
    sig = Signature(["a"], [("Q", 1), ("R", 1)])
    eq = equality_propagator(sig, "Q", "R")
    assert eq(S(sig, **{"Q(a)": "t"})) == S(sig, **{"Q(a)": "t", "R(a)": "t"})
    assert eq(S(sig, **{"Q(a)": "t", "R(a)": "f"})) == S(sig, **{"Q(a)": "i", "R(a)": "i"})
    same = S(sig, **{"Q(a)": "t", "R(a)": "t"})
    assert eq(same) == same


def test_forbid_model_examples():
    i = S(SIG, p="t", q="f")
    fb = forbid_model_checker(i)
    assert fb(i) == PartialStructure.top(SIG)
    other = S(SIG, p="f", q="f")
    assert fb(other) == other
    assert fb(S(SIG, p="t")) == S(SIG, p="t", q="t")


def test_build_examples():
    assert build_propagator(Bot(), PQ.interp)(PartialStructure.bottom(SIG)) == PartialStructure.top(SIG)
    spec = problem("""domain a b ; vocab P/1, Q/1 ;
        module A := clause { P(a) | Q(b) } ; module B := clause { -Q(b) | P(b) ; -P(a) } ;
        expr E := A * B ; solve E ;""")
    built = build_propagator(spec.goal, spec.interp)
    direct = product_prop(unit_propagator(spec.interp["A"].body.clauses),
                          unit_propagator(spec.interp["B"].body.clauses))
    assert module_of(built, spec.sig) == module_of(direct, spec.sig)


# laws over random instances


@pytest.mark.parametrize("strategy", ["best", "checker"])
def test_built_propagators_obey_the_laws(strategy):
    rng = random.Random(6)
    for seed in range(30):
        inst = random_instance(seed, max_atoms=9)
        p = build_propagator(desugar(inst.expr), inst.interp, strategy)
        assert_laws(p, inst.sig, rng, n=40)


@pytest.mark.parametrize("strategy", ["best", "checker"])
def test_module_propagator_law(strategy):
    for seed in range(25):
        inst = random_instance(seed, max_atoms=9)
        e = desugar(inst.expr)
        p = build_propagator(e, inst.interp, strategy)
        for bits in range(1 << len(inst.sig)):
            i = PartialStructure.from_bits(inst.sig, bits)
            assert (p(i) == i) == eval_module(e, inst.interp, i), inst.describe()


def test_models_are_preserved():
    rng = random.Random(7)
    for seed in range(40):
        inst = random_instance(seed, max_atoms=9)
        e = desugar(inst.expr)
        p = build_propagator(e, inst.interp)
        for _ in range(10):
            b = random_structure(inst.sig, rng, p_unknown=0.7)
            out = p(b)
            for m in enumerate_models(e, inst.interp, b):
                assert out <= m


def test_checker_is_least_and_optimal_is_greatest():
    rng = random.Random(8)
    for seed in range(30):
        inst = random_instance(seed, max_atoms=9)
        e = desugar(inst.expr)
        check = checker_of(e, inst.interp)
        opt = optimal_from_solver(lambda b, limit=None: enumerate_models(e, inst.interp, b))
        built = [build_propagator(e, inst.interp, s) for s in ("best", "checker")]
        for _ in range(15):
            b = random_structure(inst.sig, rng, p_unknown=0.7)
            for p in built:
                assert check(b) <= p(b) <= opt(b)


def test_product_and_select_never_search():
    spec = problem("""domain a b ; vocab P/1, Q/1, R/1 ;
        module A := clause { P(a) | Q(a) ; -P(b) | R(b) } ;
        module B := table { {P(a), Q(a)} ; {R(a), R(b)} ; {} } with voc {P, Q, R} ;
        expr E := select P==Q (A * B) * project {P, R} (A) ; solve E ;""")
    p = build_propagator(spec.goal, spec.interp)
    rng = random.Random(9)
    reset_counters()
    for _ in range(200):
        p(random_structure(spec.sig, rng, p_unknown=0.5))
    assert COUNTERS["solver:product"] == 0
    assert COUNTERS["solver:select"] == 0
    assert COUNTERS["solver:project:partial"] == 0
    assert COUNTERS["solver:project"] > 0
