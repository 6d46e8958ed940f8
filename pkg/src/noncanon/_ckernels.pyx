# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def volterra_trapezoid(f, double C, double h):
    fa = np.ascontiguousarray(f, dtype=np.complex128)
    cdef double[::1] fr = np.ascontiguousarray(fa.real)
    cdef double[::1] fi = np.ascontiguousarray(fa.imag)
    cdef Py_ssize_t n = fa.shape[0] - 1
    out = np.empty(n + 1, dtype=np.complex128)
    # real and imaginary parts kept apart so the convolution is plain double arithmetic
    Fr_arr = np.zeros(n + 1)
    Fi_arr = np.zeros(n + 1)
    cdef double[::1] Fr = Fr_arr
    cdef double[::1] Fi = Fi_arr
    cdef Py_ssize_t i, j
    cdef double sr, si, pr, pi_, gr = 0.0, gi = 0.0, nr, ni, dr, di, dd
    cdef double a = 0.5 * C * h
    Fr[0] = 1.0
    if n == 0:
        out[0] = 1.0
        return out
    dr = 1.0 + a * 0.5 * h * fr[0]
    di = a * 0.5 * h * fi[0]
    dd = dr * dr + di * di
    for i in range(1, n + 1):
        sr = 0.0
        si = 0.0
        for j in range(1, i):
            sr += fr[i - j] * Fr[j] - fi[i - j] * Fi[j]
            si += fr[i - j] * Fi[j] + fi[i - j] * Fr[j]
        pr = h * (0.5 * fr[i] + sr)
        pi_ = h * (0.5 * fi[i] + si)
        nr = Fr[i - 1] - a * (gr + pr)
        ni = Fi[i - 1] - a * (gi + pi_)
        Fr[i] = (nr * dr + ni * di) / dd
        Fi[i] = (ni * dr - nr * di) / dd
        gr = pr + 0.5 * h * (fr[0] * Fr[i] - fi[0] * Fi[i])
        gi = pi_ + 0.5 * h * (fr[0] * Fi[i] + fi[0] * Fr[i])
    out.real = Fr_arr
    out.imag = Fi_arr
    return out


def coincidence_histogram(int N, int m):
    if N < 1 or m < 1:
        raise ValueError("need N >= 1 and m >= 1")
    if m > 16:
        raise ValueError("m > 16 not supported")
    cdef long long[16] digits
    cdef long long[16] runs
    cdef long long[16] work
    cdef long long total = 1
    cdef long long t, key, base = m + 1
    cdef int i, j, k, nruns, tmp, pos
    for i in range(m):
        total *= N
        digits[i] = 0
    cdef long long[256] table_key
    cdef long long[256] table_count
    cdef int ntable = 0, slot
    keys = {}
    for t in range(total):
        # insertion sort a copy of the digits
        for i in range(m):
            work[i] = digits[i]
        for i in range(1, m):
            tmp = work[i]
            j = i - 1
            while j >= 0 and work[j] > tmp:
                work[j + 1] = work[j]
                j -= 1
            work[j + 1] = tmp
        nruns = 0
        i = 0
        while i < m:
            j = i
            while j < m and work[j] == work[i]:
                j += 1
            runs[nruns] = j - i
            nruns += 1
            i = j
        # sort run lengths descending
        for i in range(1, nruns):
            tmp = runs[i]
            j = i - 1
            while j >= 0 and runs[j] < tmp:
                runs[j + 1] = runs[j]
                j -= 1
            runs[j + 1] = tmp
        key = 0
        for i in range(nruns):
            key = key * base + runs[i]
        slot = -1
        for k in range(ntable):
            if table_key[k] == key:
                slot = k
                break
        if slot < 0:
            slot = ntable
            ntable += 1
            table_key[slot] = key
            table_count[slot] = 0
            keys[key] = tuple([runs[k] for k in range(nruns)])
        table_count[slot] += 1
        # odometer increment
        pos = m - 1
        while pos >= 0:
            digits[pos] += 1
            if digits[pos] < N:
                break
            digits[pos] = 0
            pos -= 1
    return {keys[table_key[k]]: int(table_count[k]) for k in range(ntable)}
