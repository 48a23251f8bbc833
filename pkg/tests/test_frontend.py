import io
import json

import pytest

from modex.algebra import Atomic, Complement, Plus, Product, Project, desugar
from modex.frontend import (
    ParseError,
    StructureFormatError,
    cross_check,
    dumps_structure,
    format_expr,
    format_problem,
    parse_problem,
    read_models,
    read_structure,
    write_models,
    write_structure,
)
from modex.frontend.cli import main
from modex.frontend.parser import spec_key
from modex.lattice import PartialStructure, Signature, U


def fixture_files(fixtures_dir):
    return sorted(fixtures_dir.glob("*.mx"))


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# parser


def test_disconnected_graph_parses_to_the_expected_tree(fixtures_dir):
    spec = parse_problem((fixtures_dir / "disconnected2.mx").read_text())
    assert spec.goal == Project(frozenset({"Edge"}), Product(Atomic("Mt"), Complement(Atomic("Mf"))))
    assert spec.sig.domain == ("a", "b")
    assert spec.interp["Mt"].body.kind == "transitive_closure"
    assert spec.goal_vocabulary() == {"Edge"}


def test_plus_parses_and_desugars():
    spec = parse_problem("""domain a ; vocab P/1 ;
        module M1 := clause { P(a) } ; module M2 := clause { -P(a) } ;
        expr D := M1 + M2 ; solve D ;""")
    assert spec.goal == Plus(Atomic("M1"), Atomic("M2"))
    assert desugar(spec.goal) == Complement(Product(Complement(Atomic("M1")), Complement(Atomic("M2"))))


def test_precedence_and_printing():
    spec = parse_problem("""domain a ; vocab P/1, Q/1 ;
        module A := clause { P(a) } ; module B := clause { Q(a) } ;
        expr E := A + -B * A ; solve E ;""")
    assert spec.goal == Plus(Atomic("A"), Product(Complement(Atomic("B")), Atomic("A")))
    assert format_expr(spec.goal) == "(A + (-B * A))"


@pytest.mark.parametrize("text, where, needle", [
    ("domain a ; vocab P/1 ; solve M1 ;", (1, 30), "unknown"),
    ("domain a ; vocab P/1 ;\nmodule M := clause { P(a) | } ; solve M ;", (2, 29), ""),
    ("domain a ; vocab P/1 ; module M := clause { P(a, a) } ; solve M ;", (1, 45), "P(a,a)"),
    ("domain a ; vocab P/1 ; module M := clause { P(a) } ;\nexpr E := project {Z} (M) ; solve E ;", (2, 20), "Z"),
    ("domain a ; vocab P/1 ; module M := clause { P(a) } ; module M := clause { P(a) } ; solve M ;", (1, 54), "twice"),
])
def test_parse_errors_are_positioned(text, where, needle):
    with pytest.raises(ParseError) as info:
        parse_problem(text)
    err = info.value
    assert (err.line, err.col) == where, str(err)
    assert needle in str(err)


def test_missing_solve_is_an_error():
    with pytest.raises(ParseError):
        parse_problem("domain a ; vocab P/1 ; module M := clause { P(a) } ;")


def test_print_parse_round_trip_on_every_fixture(fixtures_dir):
    for path in fixture_files(fixtures_dir):
        spec = parse_problem(path.read_text())
        again = parse_problem(format_problem(spec))
        assert spec_key(again) == spec_key(spec), path.name
        assert format_problem(again) == format_problem(spec)


# structure files


def bounds_state():
    sig = Signature([str(n) for n in range(1, 101)], [("C", 1), ("D", 1)])
    vals = {}
    for n in range(1, 101):
        if n < 10 or n >= 90:
            vals[f"C({n})"] = "f" if n < 10 else "t"
        if n < 20 or n >= 80:
            vals[f"D({n})"] = "f" if n < 20 else "t"
    return PartialStructure.from_values(sig, vals)


def test_bounds_state_round_trips_byte_identically(tmp_path):
    b = bounds_state()
    text = dumps_structure(b)
    path = tmp_path / "b.json"
    write_structure(b, str(path))
    assert path.read_text() == text
    back = read_structure(str(path), b.sig)
    assert back == b
    assert dumps_structure(back) == text
    obj = json.loads(text)
    assert obj["format"] == "modex/1" and len(obj["atoms"]) == 9 + 11 + 19 + 21


def test_missing_atoms_means_all_unknown():
    sig = Signature(["a"], [("P", 1)])
    b = read_structure(io.StringIO('{"domain": ["a"], "vocab": {"P": 1}}'), sig)
    assert b == PartialStructure.bottom(sig)
    assert b["P(a)"] == U


@pytest.mark.parametrize("doc, pointer", [
    ('{"domain": ["a"], "vocab": {"P": 1}, "atoms": {"P(a)": "x"}}', "/atoms/P(a)"),
    ('{"domain": ["a"], "vocab": {"P": 1}, "atoms": {"P(b)": "t"}}', "/atoms/P(b)"),
    ('{"domain": ["a"], "vocab": {"P": 1}, "format": "modex/9"}', "/format"),
    ('{"domain": ["a", "b"], "vocab": {"P": 1}}', "/domain"),
    ('{"vocab": {"P": 1}}', ""),
])
def test_structure_errors_carry_a_pointer(doc, pointer):
    sig = Signature(["a"], [("P", 1)])
    with pytest.raises(StructureFormatError) as info:
        read_structure(io.StringIO(doc), sig)
    assert info.value.pointer == pointer


def test_models_round_trip_in_order(tmp_path):
    sig = Signature(["x"], [("p", 0), ("q", 0)])
    models = [PartialStructure.from_bits(sig, k) for k in (3, 1, 2)]
    path = tmp_path / "m.json"
    write_models(models, sig, str(path))
    assert read_models(str(path), sig) == models


# command line


def test_solve_disconnected_projected(capsys, fixtures_dir):
    code, out, _ = run_cli(capsys, "solve", "--problem", str(fixtures_dir / "disconnected2.mx"),
                           "--engine", "cdl", "--project-output")
    assert code == 0
    assert out.splitlines()[0] == "12 models"
    assert len(out.splitlines()) == 13


def test_solve_unsat(capsys, fixtures_dir):
    code, out, _ = run_cli(capsys, "solve", "--problem", str(fixtures_dir / "unsat.mx"))
    assert code == 1 and out == "0 models\n"


def test_usage_errors_exit_2(capsys, fixtures_dir, tmp_path):
    golden = str(fixtures_dir / "golden.mx")
    assert run_cli(capsys, "solve", "--problem", golden, "--bogus")[0] == 2
    assert run_cli(capsys, "solve", "--problem", golden, "--first", "0")[0] == 2
    assert run_cli(capsys, "solve", "--problem", golden, "--restart", "sometimes")[0] == 2
    assert run_cli(capsys, "solve", "--problem", str(tmp_path / "missing.mx"))[0] == 2
    bad = tmp_path / "bad.mx"
    bad.write_text("domain a ; vocab P/1 ; solve Nope ;")
    code, _, err = run_cli(capsys, "solve", "--problem", str(bad))
    assert code == 2 and "line 1" in err


def test_solve_input_file_overrides_init(capsys, fixtures_dir, tmp_path):
    spec = parse_problem((fixtures_dir / "golden.mx").read_text())
    inp = tmp_path / "in.json"
    write_structure(PartialStructure.from_values(spec.sig, {"q": "t"}), str(inp))
    code, out, _ = run_cli(capsys, "solve", "--problem", str(fixtures_dir / "golden.mx"), "--input", str(inp))
    assert code == 0 and out.splitlines() == ["1 models", "{p=f, q=t}"]


def test_solve_writes_trace_stats_and_output(capsys, fixtures_dir, tmp_path):
    trace = tmp_path / "trace.txt"
    models = tmp_path / "models.json"
    code, out, err = run_cli(capsys, "solve", "--problem", str(fixtures_dir / "golden.mx"), "--trace", str(trace),
                             "--stats", "--output", str(models))
    assert code == 0
    assert trace.read_text().splitlines()[:2] == ["DECIDE p=t@1", "PROP P0 q=t"]
    stats = json.loads(err)
    assert stats["models"] == 2 and stats["engine"] == "cdl" and "counters" in stats
    spec = parse_problem((fixtures_dir / "golden.mx").read_text())
    assert len(read_models(str(models), spec.sig)) == 2


def test_trace_reports_entailed_equalities(capsys, fixtures_dir):
    _, _, err = run_cli(capsys, "solve", "--problem", str(fixtures_dir / "plus_theta.mx"), "--trace", "-")
    assert err.splitlines()[0] == "ENTAIL P==Q"


def test_first_k(capsys, fixtures_dir):
    code, out, _ = run_cli(capsys, "solve", "--problem", str(fixtures_dir / "disconnected2.mx"), "--first", "3")
    assert code == 0 and out.splitlines()[0] == "3 models"


def test_solve_output_is_deterministic(capsys, fixtures_dir):
    args = ("solve", "--problem", str(fixtures_dir / "negation.mx"), "--trace", "-", "--stats")
    assert run_cli(capsys, *args) == run_cli(capsys, *args)


def test_check_every_fixture(capsys, fixtures_dir):
    for path in fixture_files(fixtures_dir):
        code, out, _ = run_cli(capsys, "check", "--problem", str(path), "--oracle")
        assert code == 0, (path.name, out)


def test_check_reports_a_broken_propagator(capsys, fixtures_dir):
    code, out, _ = run_cli(capsys, "check", "--problem", str(fixtures_dir / "golden.mx"), "--oracle",
                           "--inject-fault")
    assert code == 1 and "missing" in out


def test_check_refuses_over_budget(capsys, fixtures_dir):
    code, _, err = run_cli(capsys, "check", "--problem", str(fixtures_dir / "disconnected2.mx"), "--oracle",
                           "--budget", "4")
    assert code == 2 and "budget" in err


def test_check_engine_list_errors(capsys, fixtures_dir):
    golden = str(fixtures_dir / "golden.mx")
    assert run_cli(capsys, "check", "--problem", golden, "--engines", "gc,dpll")[0] == 2
    assert run_cli(capsys, "check", "--problem", golden, "--engines", "gc", "--strategy", "best")[0] == 2


def test_cross_check_without_oracle_compares_engines(fixtures_dir):
    spec = parse_problem((fixtures_dir / "table.mx").read_text())
    report = cross_check(spec, oracle=False, strategies=("best", "checker"))
    assert report.ok and len(report.results) == 8
