"""Model expansion over an algebra of modules.

Subpackages and modules:

* ``lattice``: four-valued partial structures.
* ``algebra``: atomic modules, module expressions and the reference semantics.
* ``propagators``: propagators, checkers and their combinators.
* ``explain``: explaining propagators.
* ``engines``: generate-and-check, propagate-and-search, learning and
  conflict-driven learning solvers.
* ``frontend``: problem DSL, JSON structure files and the ``modex`` command.
"""
from .kernels import BACKEND
from .lattice import F, I, PartialStructure, Signature, T, TruthValue, U
from .algebra import (
    Atomic,
    AtomicModuleDef,
    Bot,
    Complement,
    Plus,
    Product,
    Project,
    Select,
    SelectTheta,
    desugar,
    enumerate_models,
)
from .engines import EngineConfig, SolveResult, solve

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "F", "I", "PartialStructure", "Signature", "T", "TruthValue", "U", "Atomic",
    "AtomicModuleDef", "Bot", "Complement", "Plus", "Product", "Project", "Select", "SelectTheta",
    "desugar", "enumerate_models", "EngineConfig", "SolveResult", "solve",
]
