from array import array

import pytest
from hypothesis import given, strategies as st

from modex import _pykernels, kernels

BACKENDS = [_pykernels]
try:
    from modex import _ckernels

    BACKENDS.append(_ckernels)
except ImportError:  # extension not built
    _ckernels = None

structs = st.integers(1, 10).flatmap(lambda n: st.binary(min_size=n, max_size=n).map(lambda b: bytes(x & 3 for x in b)))


def pair(n):
    cell = st.integers(0, 3)
    return st.tuples(st.lists(cell, min_size=n, max_size=n), st.lists(cell, min_size=n, max_size=n))


pairs = st.integers(1, 10).flatmap(pair).map(lambda t: (bytes(t[0]), bytes(t[1])))


@st.composite
def clause_db(draw):
    n = draw(st.integers(1, 6))
    data = bytes(draw(st.lists(st.integers(0, 2), min_size=n, max_size=n)))
    clauses = draw(st.lists(st.lists(st.integers(0, 2 * n - 1), min_size=0, max_size=3), max_size=6))
    lits = array("i")
    offsets = array("i", [0])
    for c in clauses:
        lits.extend(c)
        offsets.append(len(lits))
    return data, lits, offsets


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")
    assert "python" in kernels.available_backends()


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.BACKEND)
def test_examples(mod):
    assert mod.lub(bytes([1, 0]), bytes([2, 2])) == bytes([3, 2])
    assert mod.glb(bytes([3, 1]), bytes([1, 2])) == bytes([1, 0])
    assert mod.leq(bytes([0, 1]), bytes([2, 1]))
    assert not mod.leq(bytes([1]), bytes([2]))
    assert mod.status(bytes([1, 2])) == 0
    assert mod.status(bytes([1, 0])) == 1
    assert mod.status(bytes([3, 0])) == 2
    assert mod.first_unknown(bytes([1, 2, 0])) == 2
    assert mod.first_unknown(bytes([1, 2])) == -1


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.BACKEND)
def test_unit_propagate_chain(mod):
    # clauses -p1 | p2, -p2 | p3 with p1 true
    lits = array("i", [1, 2, 3, 4])
    offsets = array("i", [0, 2, 4])
    assert mod.unit_propagate(bytes([1, 0, 0]), lits, offsets) == bytes([1, 1, 1])
    out, derived, conflict = mod.up_trace(bytes([1, 0, 0]), lits, offsets)
    assert out == bytes([1, 1, 1])
    assert derived == [(2, 0), (4, 1)]
    assert conflict == -1


@pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")
@given(pairs)
def test_lattice_kernels_agree(ab):
    a, b = ab
    assert _ckernels.lub(a, b) == _pykernels.lub(a, b)
    assert _ckernels.glb(a, b) == _pykernels.glb(a, b)
    assert bool(_ckernels.leq(a, b)) == bool(_pykernels.leq(a, b))
    assert _ckernels.status(a) == _pykernels.status(a)
    assert _ckernels.first_unknown(a) == _pykernels.first_unknown(a)


@pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")
@given(clause_db())
def test_clause_kernels_agree(db):
    data, lits, offsets = db
    assert _ckernels.unit_propagate(data, lits, offsets) == _pykernels.unit_propagate(data, lits, offsets)
    assert _ckernels.first_firing(data, lits, offsets) == _pykernels.first_firing(data, lits, offsets)
    assert _ckernels.up_trace(data, lits, offsets) == _pykernels.up_trace(data, lits, offsets)


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.BACKEND)
@given(db=clause_db())
def test_unit_propagate_is_monotone_and_inflationary(mod, db):
    data, lits, offsets = db
    out = mod.unit_propagate(data, lits, offsets)
    assert _pykernels.leq(data, out)
    assert mod.unit_propagate(out, lits, offsets) == out
