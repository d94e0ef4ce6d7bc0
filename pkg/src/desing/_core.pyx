# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: all-pairs shortest paths, correspondence
distortion, and the exact correspondence feasibility search.

Signatures and results match ``desing._core_py`` exactly.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libc.stdint cimport uint64_t

cnp.import_array()


def floyd_warshall(double[:, :] d):
    cdef Py_ssize_t n = d.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double dik, alt
    out_arr = np.array(d, dtype=np.float64, copy=True)
    cdef double[:, :] out = out_arr
    for k in range(n):
        for i in range(n):
            dik = out[i, k]
            if dik == np.inf:
                continue
            for j in range(n):
                alt = dik + out[k, j]
                if alt < out[i, j]:
                    out[i, j] = alt
    return out_arr


def correspondence_distortion(double[:, :] da, double[:, :] db,
                              long[:] ra, long[:] rb):
    cdef Py_ssize_t m = ra.shape[0]
    cdef Py_ssize_t i, j
    cdef double best = 0.0, v
    for i in range(m):
        for j in range(i + 1, m):
            v = fabs(da[ra[i], ra[j]] - db[rb[i], rb[j]])
            if v > best:
                best = v
    return best


def pair_distortion(double[:, :] da, double[:, :] db, long[:] ra, long[:] rb,
                    long a, long b):
    cdef Py_ssize_t m = ra.shape[0]
    cdef Py_ssize_t i
    cdef double best = 0.0, v
    for i in range(m):
        v = fabs(da[a, ra[i]] - db[b, rb[i]])
        if v > best:
            best = v
    return best


cdef int _popcount(uint64_t x):
    cdef int c = 0
    while x:
        x &= x - 1
        c += 1
    return c


cdef bint _search(int a, int na, int nb, uint64_t allowed, uint64_t covered,
                  uint64_t* compat, uint64_t* rowmask, uint64_t* colmask):
    cdef int b, aa, bb
    cdef uint64_t full_b = ((<uint64_t>1) << nb) - 1
    cdef uint64_t p
    # prune: remaining rows and uncovered columns still need a pair
    for aa in range(a, na):
        if not (allowed & rowmask[aa]):
            return False
    for bb in range(nb):
        if not (covered >> bb) & 1 and not (allowed & colmask[bb]):
            return False
    if a < na:
        for b in range(nb):
            p = (<uint64_t>1) << (a * nb + b)
            if allowed & p:
                if _search(a + 1, na, nb, allowed & compat[a * nb + b],
                           covered | ((<uint64_t>1) << b), compat, rowmask, colmask):
                    return True
        return False
    if covered == full_b:
        return True
    for bb in range(nb):
        if not (covered >> bb) & 1:
            break
    for aa in range(na):
        p = (<uint64_t>1) << (aa * nb + bb)
        if allowed & p:
            if _search(na, na, nb, allowed & compat[aa * nb + bb],
                       covered | ((<uint64_t>1) << bb), compat, rowmask, colmask):
                return True
    return False


def correspondence_feasible(double[:, :] da, double[:, :] db, double delta):
    """True iff some correspondence has distortion <= delta (|A|*|B| <= 64)."""
    cdef int na = da.shape[0], nb = db.shape[0]
    cdef int p, q, a1, b1, a2, b2
    cdef uint64_t compat[64]
    cdef uint64_t rowmask[64]
    cdef uint64_t colmask[64]
    if na * nb > 64:
        raise ValueError("feasibility search limited to |A|*|B| <= 64")
    for p in range(na * nb):
        compat[p] = 0
        a1 = p // nb
        b1 = p % nb
        for q in range(na * nb):
            a2 = q // nb
            b2 = q % nb
            if fabs(da[a1, a2] - db[b1, b2]) <= delta:
                compat[p] |= (<uint64_t>1) << q
    for a1 in range(na):
        rowmask[a1] = 0
        for b1 in range(nb):
            rowmask[a1] |= (<uint64_t>1) << (a1 * nb + b1)
    for b1 in range(nb):
        colmask[b1] = 0
        for a1 in range(na):
            colmask[b1] |= (<uint64_t>1) << (a1 * nb + b1)
    cdef uint64_t allowed = 0
    for p in range(na * nb):
        allowed |= (<uint64_t>1) << p
    return bool(_search(0, na, nb, allowed, 0, compat, rowmask, colmask))
