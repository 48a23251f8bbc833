"""Four-valued truth values and partial structures over a fixed finite domain.

Atoms are indexed densely: predicates in vocabulary order, and per predicate
the argument tuples in lexicographic order over the domain's element order.
A :class:`PartialStructure` is an immutable byte string over that index.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple

from . import kernels


class TruthValue(enum.IntEnum):
    """Truth values encoded as (true bit, false bit)."""

    U = 0
    T = 1
    F = 2
    I = 3

    @property
    def symbol(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "TruthValue":
        try:
            return cls[text.upper()]
        except KeyError:
            raise ValueError(f"not a truth value: {text!r}") from None


U, T, F, I = TruthValue.U, TruthValue.T, TruthValue.F, TruthValue.I


def lub_tv(a: TruthValue, b: TruthValue) -> TruthValue:
    return TruthValue(a | b)


def glb_tv(a: TruthValue, b: TruthValue) -> TruthValue:
    return TruthValue(a & b)


def leq_tv(a: TruthValue, b: TruthValue) -> bool:
    return a & b == a


class SignatureError(ValueError):
    """Structures or atoms used against the wrong domain/vocabulary."""


class DomainAtom(NamedTuple):
    pred: str
    args: tuple[str, ...] = ()

    def __str__(self) -> str:
        if not self.args:
            return self.pred
        return f"{self.pred}({','.join(self.args)})"


@dataclass(frozen=True)
class Signature:
    """A domain together with a vocabulary of predicate symbols.

    ``vocab`` maps predicate names to arities; its iteration order fixes the
    atom index layout.
    """

    domain: tuple[str, ...]
    vocab: tuple[tuple[str, int], ...]
    _offsets: dict = field(init=False, repr=False, compare=False, hash=False)
    _atoms: tuple = field(init=False, repr=False, compare=False, hash=False)
    _index: dict = field(init=False, repr=False, compare=False, hash=False)
    _elem: dict = field(init=False, repr=False, compare=False, hash=False)
    _masks: dict = field(init=False, repr=False, compare=False, hash=False)

    def __init__(self, domain: Iterable[str], vocab: Mapping[str, int] | Iterable[tuple[str, int]]):
        domain = tuple(domain)
        if not domain:
            raise SignatureError("domain must be nonempty")
        if len(set(domain)) != len(domain):
            raise SignatureError("duplicate domain element")
        pairs = tuple(vocab.items()) if isinstance(vocab, Mapping) else tuple(vocab)
        names = [p for p, _ in pairs]
        if len(set(names)) != len(names):
            raise SignatureError("duplicate predicate symbol")
        for name, arity in pairs:
            if arity < 0:
                raise SignatureError(f"negative arity for {name}")
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "vocab", tuple((p, int(a)) for p, a in pairs))

        offsets = {}
        atoms = []
        for name, arity in self.vocab:
            offsets[name] = len(atoms)
            for args in itertools.product(domain, repeat=arity):
                atoms.append(DomainAtom(name, args))
        object.__setattr__(self, "_offsets", offsets)
        object.__setattr__(self, "_atoms", tuple(atoms))
        object.__setattr__(self, "_index", {a: i for i, a in enumerate(atoms)})
        object.__setattr__(self, "_elem", {d: i for i, d in enumerate(domain)})
        object.__setattr__(self, "_masks", {})

    def __len__(self) -> int:
        return len(self._atoms)

    @property
    def predicates(self) -> frozenset[str]:
        return frozenset(self._offsets)

    def arity(self, pred: str) -> int:
        try:
            return dict(self.vocab)[pred]
        except KeyError:
            raise SignatureError(f"unknown predicate {pred!r}") from None

    @property
    def atoms(self) -> tuple[DomainAtom, ...]:
        return self._atoms

    def atom(self, index: int) -> DomainAtom:
        return self._atoms[index]

    def index(self, atom: DomainAtom | str, args: Iterable[str] | None = None) -> int:
        if isinstance(atom, str):
            atom = DomainAtom(atom, tuple(args or ()))
        try:
            return self._index[atom]
        except KeyError:
            raise SignatureError(f"atom {atom} is not in the signature") from None

    def pred_range(self, pred: str) -> range:
        """Index range of all atoms of ``pred``."""
        start = self._offsets[pred]
        return range(start, start + len(self.domain) ** self.arity(pred))

    def indices(self, preds: Iterable[str]) -> list[int]:
        out = []
        for p in preds:
            if p not in self._offsets:
                raise SignatureError(f"unknown predicate {p!r}")
            out.extend(self.pred_range(p))
        return sorted(out)

    def mask(self, preds: Iterable[str]) -> bytes:
        """Structure-shaped mask: 3 on atoms of ``preds``, 0 elsewhere."""
        key = frozenset(preds)
        m = self._masks.get(key)
        if m is None:
            buf = bytearray(len(self))
            for i in self.indices(key):
                buf[i] = 3
            m = bytes(buf)
            self._masks[key] = m
        return m

    def check_subvocab(self, preds: Iterable[str]) -> frozenset[str]:
        preds = frozenset(preds)
        missing = preds - self.predicates
        if missing:
            raise SignatureError(f"not in the vocabulary: {sorted(missing)}")
        return preds

    def format_atom(self, index: int) -> str:
        return str(self._atoms[index])

    def parse_atom(self, text: str) -> int:
        text = text.strip()
        if "(" in text:
            if not text.endswith(")"):
                raise SignatureError(f"malformed atom {text!r}")
            pred, rest = text[:-1].split("(", 1)
            args = tuple(a.strip() for a in rest.split(",")) if rest.strip() else ()
        else:
            pred, args = text, ()
        return self.index(DomainAtom(pred.strip(), args))


class Classification(enum.Enum):
    CONSISTENT_2V = "two-valued"
    CONSISTENT_PARTIAL = "partial"
    INCONSISTENT = "inconsistent"


_STATUS = (Classification.CONSISTENT_2V, Classification.CONSISTENT_PARTIAL, Classification.INCONSISTENT)


class PartialStructure:
    """Immutable assignment of a truth value to every atom of a signature."""

    __slots__ = ("sig", "data", "_hash")

    def __init__(self, sig: Signature, data: bytes):
        if len(data) != len(sig):
            raise SignatureError("data length does not match the signature")
        self.sig = sig
        self.data = bytes(data)
        self._hash = None

    # constructors -----------------------------------------------------------

    @classmethod
    def bottom(cls, sig: Signature) -> "PartialStructure":
        return cls(sig, bytes(len(sig)))

    @classmethod
    def top(cls, sig: Signature) -> "PartialStructure":
        return cls(sig, b"\x03" * len(sig))

    @classmethod
    def from_values(cls, sig: Signature, values: Mapping) -> "PartialStructure":
        """Build from ``{atom: value}``; atoms may be indices, DomainAtoms or text."""
        buf = bytearray(len(sig))
        for atom, v in values.items():
            buf[_resolve(sig, atom)] = TruthValue.parse(v) if isinstance(v, str) else TruthValue(v)
        return cls(sig, bytes(buf))

    @classmethod
    def from_bits(cls, sig: Signature, bits: int) -> "PartialStructure":
        """Two-valued structure whose atom ``k`` is true iff bit ``k`` is set."""
        return cls(sig, bytes(1 if bits >> k & 1 else 2 for k in range(len(sig))))

    # access -----------------------------------------------------------------

    def __getitem__(self, atom) -> TruthValue:
        return TruthValue(self.data[_resolve(self.sig, atom)])

    def items(self) -> Iterator[tuple[DomainAtom, TruthValue]]:
        for a, v in zip(self.sig.atoms, self.data):
            yield a, TruthValue(v)

    def true_atoms(self) -> list[DomainAtom]:
        return [a for a, v in zip(self.sig.atoms, self.data) if v == T]

    def to_bits(self) -> int:
        """Bitmask of true atoms (only meaningful for two-valued structures)."""
        bits = 0
        for k, v in enumerate(self.data):
            if v & 1:
                bits |= 1 << k
        return bits

    def classify(self) -> Classification:
        return _STATUS[kernels.status(self.data)]

    @property
    def consistent(self) -> bool:
        return kernels.status(self.data) != 2

    @property
    def two_valued(self) -> bool:
        return kernels.status(self.data) == 0

    # order and lattice ------------------------------------------------------

    def _same(self, other: "PartialStructure") -> None:
        if self.sig != other.sig:
            raise SignatureError("structures over different signatures")

    def __le__(self, other: "PartialStructure") -> bool:
        self._same(other)
        return kernels.leq(self.data, other.data)

    def __ge__(self, other: "PartialStructure") -> bool:
        return other.__le__(self)

    def __lt__(self, other: "PartialStructure") -> bool:
        return self != other and self <= other

    def __gt__(self, other: "PartialStructure") -> bool:
        return other.__lt__(self)

    def __or__(self, other: "PartialStructure") -> "PartialStructure":
        self._same(other)
        return PartialStructure(self.sig, kernels.lub(self.data, other.data))

    def __and__(self, other: "PartialStructure") -> "PartialStructure":
        self._same(other)
        return PartialStructure(self.sig, kernels.glb(self.data, other.data))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PartialStructure):
            return NotImplemented
        return self.data == other.data and self.sig == other.sig

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self.data)
        return self._hash

    def __repr__(self) -> str:
        shown = ", ".join(f"{a}:{TruthValue(v).symbol}" for a, v in zip(self.sig.atoms, self.data) if v)
        return f"PartialStructure({{{shown}}})"

    def restrict(self, delta: Iterable[str]) -> "PartialStructure":
        return restrict(self, delta)

    def update(self, atom, v: TruthValue) -> "PartialStructure":
        return update(self, atom, v)


def _resolve(sig: Signature, atom) -> int:
    if isinstance(atom, int):
        if not 0 <= atom < len(sig):
            raise SignatureError(f"atom index {atom} out of range")
        return atom
    if isinstance(atom, str):
        return sig.parse_atom(atom)
    return sig.index(DomainAtom(*atom))


def leq_p(b1: PartialStructure, b2: PartialStructure) -> bool:
    return b1 <= b2


def lub_struct(bs: Iterable[PartialStructure]) -> PartialStructure:
    bs = list(bs)
    if not bs:
        raise ValueError("lub of an empty set needs a signature; pass at least one structure")
    out = bs[0]
    for b in bs[1:]:
        out = out | b
    return out


def glb_struct(bs: Iterable[PartialStructure], sig: Signature | None = None) -> PartialStructure:
    """Pointwise meet; the meet of nothing is the all-inconsistent structure."""
    bs = list(bs)
    if not bs:
        if sig is None:
            raise ValueError("glb of an empty set needs the signature")
        return PartialStructure.top(sig)
    out = bs[0]
    for b in bs[1:]:
        out = out & b
    return out


def restrict(b: PartialStructure, delta: Iterable[str]) -> PartialStructure:
    """Keep values of atoms over ``delta``; every other atom becomes U."""
    delta = b.sig.check_subvocab(delta)
    return PartialStructure(b.sig, kernels.glb(b.data, b.sig.mask(delta)))


def update(b: PartialStructure, atom, v: TruthValue) -> PartialStructure:
    """Copy of ``b`` with one atom overwritten (not joined)."""
    k = _resolve(b.sig, atom)
    buf = bytearray(b.data)
    buf[k] = TruthValue(v)
    return PartialStructure(b.sig, bytes(buf))


def classify(b: PartialStructure) -> Classification:
    return b.classify()
