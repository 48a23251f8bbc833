# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled counterparts of ``modex._pykernels`` (same API, same results)."""

from libc.string cimport memchr

BACKEND = "cython"


def lub(const unsigned char[:] a, const unsigned char[:] b):
    cdef Py_ssize_t i, n = a.shape[0]
    out = bytearray(n)
    cdef unsigned char[:] o = out
    for i in range(n):
        o[i] = a[i] | b[i]
    return bytes(out)


def glb(const unsigned char[:] a, const unsigned char[:] b):
    cdef Py_ssize_t i, n = a.shape[0]
    out = bytearray(n)
    cdef unsigned char[:] o = out
    for i in range(n):
        o[i] = a[i] & b[i]
    return bytes(out)


def leq(const unsigned char[:] a, const unsigned char[:] b):
    cdef Py_ssize_t i, n = a.shape[0]
    for i in range(n):
        if a[i] & ~b[i]:
            return False
    return True


cdef inline const unsigned char* _buf(object a, Py_ssize_t* n) except? NULL:
    cdef const unsigned char[:] view
    if type(a) is bytes:
        n[0] = len(<bytes>a)
        return <const unsigned char*>(<bytes>a)
    view = a
    n[0] = view.shape[0]
    if n[0] == 0:
        return NULL
    return &view[0]


def status(a):
    """0 if two-valued, 1 if consistent but partial, 2 if inconsistent."""
    cdef Py_ssize_t n
    cdef const unsigned char* p = _buf(a, &n)
    if n == 0:
        return 0
    if memchr(p, 3, n) != NULL:
        return 2
    if memchr(p, 0, n) != NULL:
        return 1
    return 0


def first_unknown(a):
    cdef Py_ssize_t n
    cdef const unsigned char* p = _buf(a, &n)
    if n == 0:
        return -1
    cdef const unsigned char* q = <const unsigned char*>memchr(p, 0, n)
    if q == NULL:
        return -1
    return q - p


def unit_propagate(const unsigned char[:] data, const int[:] lits, const int[:] offsets):
    cdef Py_ssize_t n = data.shape[0]
    cdef Py_ssize_t nclauses = offsets.shape[0] - 1
    cdef Py_ssize_t k, j, lo, hi
    cdef int lit, last, nonfalse, a
    cdef unsigned char bit
    cdef bint changed = True
    out = bytearray(data)
    cdef unsigned char[:] o = out
    while changed:
        changed = False
        for k in range(nclauses):
            lo = offsets[k]
            hi = offsets[k + 1]
            nonfalse = 0
            last = -1
            for j in range(lo, hi):
                lit = lits[j]
                if not (o[lit >> 1] & (2 - (lit & 1))):
                    nonfalse += 1
                    last = lit
                    if nonfalse > 1:
                        break
            if nonfalse == 0:
                for j in range(lo, hi):
                    lit = lits[j]
                    a = lit >> 1
                    bit = 1 + (lit & 1)
                    if not (o[a] & bit):
                        o[a] |= bit
                        changed = True
            elif nonfalse == 1:
                a = last >> 1
                bit = 1 + (last & 1)
                if not (o[a] & bit):
                    o[a] |= bit
                    changed = True
    return bytes(out)


def first_firing(const unsigned char[:] data, const int[:] lits, const int[:] offsets, Py_ssize_t start=0):
    cdef Py_ssize_t nclauses = offsets.shape[0] - 1
    cdef Py_ssize_t k, j
    cdef int lit, nonfalse
    cdef unsigned char v
    cdef bint sat
    for k in range(start, nclauses):
        nonfalse = 0
        sat = False
        for j in range(offsets[k], offsets[k + 1]):
            lit = lits[j]
            v = data[lit >> 1]
            if v & (1 + (lit & 1)):
                sat = True
                break
            if not (v & (2 - (lit & 1))):
                nonfalse += 1
                if nonfalse > 1:
                    break
        if not sat and nonfalse <= 1:
            return k
    return -1


def up_trace(const unsigned char[:] data, const int[:] lits, const int[:] offsets):
    cdef Py_ssize_t nclauses = offsets.shape[0] - 1
    cdef Py_ssize_t k, j
    cdef int lit, last, nonfalse
    cdef unsigned char v
    cdef bint sat, changed = True
    out = bytearray(data)
    cdef unsigned char[:] o = out
    derived = []
    while changed:
        changed = False
        for k in range(nclauses):
            nonfalse = 0
            last = -1
            sat = False
            for j in range(offsets[k], offsets[k + 1]):
                lit = lits[j]
                v = o[lit >> 1]
                if v & (1 + (lit & 1)):
                    sat = True
                    break
                if not (v & (2 - (lit & 1))):
                    nonfalse += 1
                    last = lit
            if sat:
                continue
            if nonfalse == 0:
                return bytes(out), derived, k
            if nonfalse == 1:
                o[last >> 1] = 1 + (last & 1)
                derived.append((last, k))
                changed = True
    return bytes(out), derived, -1
