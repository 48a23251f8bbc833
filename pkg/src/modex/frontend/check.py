"""Cross-check harness: run several engines and the enumeration oracle side by side."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..algebra import desugar, enumerate_models, sort_models
from ..engines import ENGINES, EngineConfig, make_engine_input, run_engine
from ..explain import ExplainingPropagator
from ..lattice import PartialStructure
from ..propagators import Propagator, top_of
from .io import format_model
from .parser import ProblemSpec

DEFAULT_BUDGET = 16


class OracleBudgetError(ValueError):
    pass


@dataclass
class CheckReport:
    reference: str
    expected: list[PartialStructure]
    results: dict[str, list[PartialStructure]] = field(default_factory=dict)
    diffs: dict[str, tuple[list, list]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.diffs

    def format(self, max_shown: int = 5) -> str:
        lines = [f"reference {self.reference}: {len(self.expected)} models"]
        for name, models in self.results.items():
            if name not in self.diffs:
                lines.append(f"{name}: {len(models)} models, agrees")
                continue
            missing, extra = self.diffs[name]
            lines.append(f"{name}: {len(models)} models, {len(missing)} missing, {len(extra)} extra")
            for m in missing[:max_shown]:
                lines.append(f"  - {format_model(m)}")
            for m in extra[:max_shown]:
                lines.append(f"  + {format_model(m)}")
        return "\n".join(lines)


def broken(inp, victim: PartialStructure):
    """Test hook: a copy of ``inp`` that wrongly rejects the structure ``victim``."""
    inner = inp.p if isinstance(inp, ExplainingPropagator) else inp

    def fn(b):
        return top_of(b) if b == victim else inner(b)

    p = Propagator(fn, rank=max(1, inner.rank), name="faulty", kind="faulty")
    return ExplainingPropagator(p, None) if isinstance(inp, ExplainingPropagator) else p


def cross_check(spec: ProblemSpec, b: PartialStructure | None = None, engines=ENGINES,
                strategies=("best",), oracle: bool = True, budget: int = DEFAULT_BUDGET,
                fault: bool = False) -> CheckReport:
    """Compare the model sets of ``engines`` x ``strategies`` with each other or with the oracle.

    ``fault`` breaks every engine's propagator so that it rejects the first
    reference model; the report must then show a difference.
    """
    b = b if b is not None else spec.initial()
    goal = desugar(spec.goal)
    if oracle:
        if len(spec.sig) > budget:
            raise OracleBudgetError(f"signature has {len(spec.sig)} atoms; the oracle budget is {budget} "
                                    f"(raise it with --budget)")
        expected = enumerate_models(goal, spec.interp, b)
        reference = "oracle"
    else:
        expected = None
        reference = ""
    report = CheckReport(reference, expected or [])
    for eng in engines:
        for strat in strategies:
            name = f"{eng}/{strat}"
            cfg = EngineConfig(engine=eng, strategy=strat)
            inp = make_engine_input(goal, spec.interp, cfg, sig=spec.sig)
            if fault:
                if expected is None:
                    expected = sort_models(run_engine(inp, b, cfg).models)
                    reference = name
                    report = CheckReport(reference, expected)
                if expected:
                    inp = broken(inp, expected[0])
            models = sort_models(run_engine(inp, b, cfg).models)
            report.results[name] = models
            if expected is None:
                expected = models
                report = CheckReport(name, models, {name: models})
                continue
            want, got = set(expected), set(models)
            if want != got or len(models) != len(got):
                report.diffs[name] = ([m for m in expected if m not in got], [m for m in models if m not in want])
    return report
