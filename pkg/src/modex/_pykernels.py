"""Pure-Python kernels over encoded structures.

A structure is a ``bytes`` object with one cell per domain atom holding the
truth value as two bits: bit 0 is "true", bit 1 is "false" (so U=0, T=1,
F=2, I=3).  With this encoding lub is bitwise or, glb is bitwise and.

Clauses are stored flat: ``lits`` holds literal codes ``2*atom + neg`` and
clause ``k`` spans ``lits[offsets[k]:offsets[k+1]]``.
"""

BACKEND = "python"


def lub(a, b):
    n = len(a)
    return (int.from_bytes(a, "little") | int.from_bytes(b, "little")).to_bytes(n, "little")


def glb(a, b):
    n = len(a)
    return (int.from_bytes(a, "little") & int.from_bytes(b, "little")).to_bytes(n, "little")


def leq(a, b):
    x = int.from_bytes(a, "little")
    return x & int.from_bytes(b, "little") == x


def status(a):
    """0 if two-valued, 1 if consistent but partial, 2 if inconsistent."""
    if 3 in a:
        return 2
    if 0 in a:
        return 1
    return 0


def first_unknown(a):
    return a.find(0)


def unit_propagate(data, lits, offsets):
    """Monotone unit propagation to a fixpoint.

    A literal whose other clause-mates are all false gets its satisfying bit
    joined in.  On an all-false clause this puts I on every atom of the clause.
    """
    out = bytearray(data)
    nclauses = len(offsets) - 1
    changed = True
    while changed:
        changed = False
        for k in range(nclauses):
            lo, hi = offsets[k], offsets[k + 1]
            nonfalse = 0
            last = -1
            for j in range(lo, hi):
                lit = lits[j]
                if not out[lit >> 1] & (2 - (lit & 1)):
                    nonfalse += 1
                    last = lit
                    if nonfalse > 1:
                        break
            if nonfalse == 0:
                for j in range(lo, hi):
                    lit = lits[j]
                    a = lit >> 1
                    bit = 1 + (lit & 1)
                    if not out[a] & bit:
                        out[a] |= bit
                        changed = True
            elif nonfalse == 1:
                a = last >> 1
                bit = 1 + (last & 1)
                if not out[a] & bit:
                    out[a] |= bit
                    changed = True
    return bytes(out)


def first_firing(data, lits, offsets, start=0):
    """Index of the first clause (from ``start``) that is unit or false, else -1.

    Only meaningful on consistent data.
    """
    nclauses = len(offsets) - 1
    for k in range(start, nclauses):
        nonfalse = 0
        sat = False
        for j in range(offsets[k], offsets[k + 1]):
            lit = lits[j]
            v = data[lit >> 1]
            if v & (1 + (lit & 1)):
                sat = True
                break
            if not v & (2 - (lit & 1)):
                nonfalse += 1
                if nonfalse > 1:
                    break
        if not sat and nonfalse <= 1:
            return k
    return -1


def up_trace(data, lits, offsets):
    """Classic unit propagation on consistent data, recording reasons.

    Returns ``(out, derived, conflict)`` where ``derived`` lists
    ``(lit, clause_index)`` in derivation order, ``out`` is the consistent
    state after those derivations and ``conflict`` is the index of the first
    all-false clause met (or -1).
    """
    out = bytearray(data)
    derived = []
    nclauses = len(offsets) - 1
    changed = True
    while changed:
        changed = False
        for k in range(nclauses):
            nonfalse = 0
            last = -1
            sat = False
            for j in range(offsets[k], offsets[k + 1]):
                lit = lits[j]
                v = out[lit >> 1]
                if v & (1 + (lit & 1)):
                    sat = True
                    break
                if not v & (2 - (lit & 1)):
                    nonfalse += 1
                    last = lit
            if sat:
                continue
            if nonfalse == 0:
                return bytes(out), derived, k
            if nonfalse == 1:
                out[last >> 1] = 1 + (last & 1)
                derived.append((last, k))
                changed = True
    return bytes(out), derived, -1
