# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: coincidence matching and event CSV formatting/parsing.

Semantics mirror the reference implementations in ``_pykernels``.
"""
import numpy as np

cimport numpy as cnp
from cpython.bytes cimport PyBytes_FromStringAndSize
from libc.stdint cimport int8_t, int64_t, uint8_t, uint64_t
from libc.stdlib cimport free, malloc

cnp.import_array()


def match_window(const int64_t[::1] d0_times, const int64_t[::1] idler_times,
                 uint8_t[::1] consumed, int64_t delay, int64_t window, int policy,
                 Py_ssize_t lo=0):
    cdef Py_ssize_t n0 = d0_times.shape[0]
    cdef Py_ssize_t ni = idler_times.shape[0]
    cdef cnp.ndarray[int64_t, ndim=1] match_arr = np.full(n0, -1, dtype=np.int64)
    cdef int64_t[::1] match = match_arr
    cdef Py_ssize_t i, j, best
    cdef int64_t t, r, ar, best_r
    for i in range(n0):
        t = d0_times[i] + delay
        while lo < ni and 2 * (idler_times[lo] - t) <= -window:
            lo += 1
        best = -1
        best_r = 0
        j = lo
        while j < ni:
            r = idler_times[j] - t
            if 2 * r >= window:
                break
            if not consumed[j]:
                ar = r if r >= 0 else -r
                if best < 0 or ar < best_r:
                    best = j
                    best_r = ar
                    if policy == 1:
                        break
            j += 1
        if best >= 0:
            consumed[best] = 1
            match[i] = best
    return match_arr, lo


cdef enum:
    MAX_DIGITS = 18


cdef inline Py_ssize_t _put_u64(char* buf, Py_ssize_t pos, uint64_t v) nogil:
    cdef char tmp[24]
    cdef int n = 0
    if v == 0:
        buf[pos] = 48
        return pos + 1
    while v > 0:
        tmp[n] = <char>(48 + v % 10)
        v //= 10
        n += 1
    while n > 0:
        n -= 1
        buf[pos] = tmp[n]
        pos += 1
    return pos


cdef inline Py_ssize_t _put_i64(char* buf, Py_ssize_t pos, int64_t v) nogil:
    if v < 0:
        buf[pos] = 45
        return _put_u64(buf, pos + 1, <uint64_t>(-(v + 1)) + 1)
    return _put_u64(buf, pos, <uint64_t>v)


def format_rows(const uint64_t[::1] event_id, const int8_t[::1] detector,
                const int64_t[::1] time_ps, const int64_t[::1] x_um):
    cdef Py_ssize_t n = event_id.shape[0]
    cdef Py_ssize_t i, pos = 0
    cdef char* buf = <char*>malloc(n * 72 + 1)
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                pos = _put_u64(buf, pos, event_id[i])
                buf[pos] = 44
                buf[pos + 1] = 68
                buf[pos + 2] = <char>(48 + detector[i])
                buf[pos + 3] = 44
                pos = _put_i64(buf, pos + 4, time_ps[i])
                buf[pos] = 44
                pos += 1
                if detector[i] == 0:
                    pos = _put_i64(buf, pos, x_um[i])
                buf[pos] = 10
                pos += 1
        return PyBytes_FromStringAndSize(buf, pos)
    finally:
        free(buf)


cdef inline Py_ssize_t _digits(const unsigned char[::1] data, Py_ssize_t pos,
                               Py_ssize_t end, int64_t* value) nogil:
    # parse 1..MAX_DIGITS ASCII digits; returns new position or -1
    cdef Py_ssize_t start = pos
    cdef int64_t v = 0
    while pos < end and 48 <= data[pos] <= 57:
        if pos - start >= MAX_DIGITS:
            return -1
        v = v * 10 + (data[pos] - 48)
        pos += 1
    if pos == start:
        return -1
    value[0] = v
    return pos


def parse_rows(const unsigned char[::1] data, int64_t last_t, int64_t last_id):
    """Parse complete LF-terminated event rows.

    Returns ``(event_id, detector, time_ps, x_um, error_row, last_t, last_id)``;
    ``error_row`` is the 0-based index of the first invalid row or -1, and the
    arrays hold the rows before it.
    """
    cdef Py_ssize_t end = data.shape[0]
    cdef Py_ssize_t n_lines = 0, i
    for i in range(end):
        if data[i] == 10:
            n_lines += 1
    ids_arr = np.empty(n_lines, dtype=np.uint64)
    det_arr = np.empty(n_lines, dtype=np.int8)
    t_arr = np.empty(n_lines, dtype=np.int64)
    x_arr = np.zeros(n_lines, dtype=np.int64)
    cdef uint64_t[::1] ids = ids_arr
    cdef int8_t[::1] det = det_arr
    cdef int64_t[::1] tt = t_arr
    cdef int64_t[::1] xx = x_arr
    cdef Py_ssize_t pos = 0, row = 0, error_row = -1
    cdef int64_t eid, t, x
    cdef int d, neg
    with nogil:
        while pos < end:
            pos = _digits(data, pos, end, &eid)
            if pos < 0 or pos + 4 > end or data[pos] != 44 or data[pos + 1] != 68:
                error_row = row
                break
            d = data[pos + 2] - 48
            if d < 0 or d > 4 or data[pos + 3] != 44:
                error_row = row
                break
            pos = _digits(data, pos + 4, end, &t)
            if pos < 0 or pos >= end or data[pos] != 44:
                error_row = row
                break
            pos += 1
            x = 0
            if d == 0:
                neg = 0
                if pos < end and data[pos] == 45:
                    neg = 1
                    pos += 1
                pos = _digits(data, pos, end, &x)
                if pos < 0:
                    error_row = row
                    break
                if neg:
                    x = -x
            if pos >= end or data[pos] != 10:
                error_row = row
                break
            pos += 1
            if t < last_t or (t == last_t and eid <= last_id):
                error_row = row
                break
            ids[row] = <uint64_t>eid
            det[row] = <int8_t>d
            tt[row] = t
            xx[row] = x
            last_t = t
            last_id = eid
            row += 1
    return (ids_arr[:row], det_arr[:row], t_arr[:row], x_arr[:row],
            error_row, last_t, last_id)
