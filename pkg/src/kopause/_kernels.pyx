# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for jamo (de)composition and silent-run scanning."""
from cpython.unicode cimport PyUnicode_FromKindAndData, PyUnicode_4BYTE_KIND
from libc.stdlib cimport malloc, free

from kopause.errors import CompositionError

cdef enum:
    SBASE = 0xAC00
    SCOUNT = 11172
    LBASE = 0x1100
    LCOUNT = 19
    VBASE = 0x1161
    VCOUNT = 21
    TBASE = 0x11A7
    TCOUNT = 28
    NCOUNT = 588


def decompose_to_jamo(str text):
    cdef Py_ssize_t n = len(text), i, m = 0
    cdef Py_UCS4 c
    cdef long s, t
    cdef Py_UCS4 *buf = <Py_UCS4 *> malloc((3 * n + 1) * sizeof(Py_UCS4))
    if buf == NULL:
        raise MemoryError()
    try:
        for i in range(n):
            c = text[i]
            s = <long> c - SBASE
            if 0 <= s < SCOUNT:
                buf[m] = LBASE + s // NCOUNT
                buf[m + 1] = VBASE + (s % NCOUNT) // TCOUNT
                m += 2
                t = s % TCOUNT
                if t:
                    buf[m] = TBASE + t
                    m += 1
            else:
                buf[m] = c
                m += 1
        return PyUnicode_FromKindAndData(PyUnicode_4BYTE_KIND, buf, m)
    finally:
        free(buf)


def compose_from_jamo(str text):
    cdef Py_ssize_t n = len(text), i = 0, m = 0
    cdef Py_UCS4 c, v, t
    cdef long s
    cdef Py_UCS4 *buf = <Py_UCS4 *> malloc((n + 1) * sizeof(Py_UCS4))
    if buf == NULL:
        raise MemoryError()
    try:
        while i < n:
            c = text[i]
            if LBASE <= c < LBASE + LCOUNT:
                if i + 1 >= n:
                    raise CompositionError(i, "lead consonant without a following vowel")
                v = text[i + 1]
                if not (VBASE <= v < VBASE + VCOUNT):
                    raise CompositionError(i, "lead consonant without a following vowel")
                s = SBASE + ((<long> c - LBASE) * VCOUNT + <long> v - VBASE) * TCOUNT
                i += 2
                if i < n:
                    t = text[i]
                    if TBASE < t < TBASE + TCOUNT:
                        s += <long> t - TBASE
                        i += 1
                buf[m] = <Py_UCS4> s
            elif VBASE <= c < VBASE + VCOUNT:
                raise CompositionError(i, "vowel without a preceding lead consonant")
            elif TBASE < c < TBASE + TCOUNT:
                raise CompositionError(i, "tail consonant without a preceding syllable")
            else:
                buf[m] = c
                i += 1
            m += 1
        return PyUnicode_FromKindAndData(PyUnicode_4BYTE_KIND, buf, m)
    finally:
        free(buf)


def silent_runs(const double[::1] energy, double threshold):
    """Maximal ``[start, end)`` runs where ``energy < threshold``."""
    cdef Py_ssize_t n = energy.shape[0], i, start = -1
    runs = []
    for i in range(n):
        if energy[i] < threshold:
            if start < 0:
                start = i
        elif start >= 0:
            runs.append((start, i))
            start = -1
    if start >= 0:
        runs.append((start, n))
    return runs
