# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.

Each function has a numpy twin in :mod:`cltlab._fallback` with the same
signature and, operation for operation, the same floating point arithmetic.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, INFINITY
from libc.stdint cimport uint64_t, int64_t, int8_t

cnp.import_array()

cdef double TWO_M53 = 1.0 / 9007199254740992.0


def doubling_orbit(const uint64_t[:, ::1] words, Py_ssize_t length):
    """Points F^j x, j < length, of x whose binary digits are the bits of ``words``.

    Row i of ``words`` is the digit stream of one sample, most significant
    bit first; it needs at least ``length // 64 + 2`` words.
    """
    cdef Py_ssize_t n = words.shape[0]
    cdef Py_ssize_t i, j, w
    cdef unsigned int s
    cdef uint64_t hi
    out = np.empty((n, length), dtype=np.float64)
    cdef double[:, ::1] o = out
    if words.shape[1] < length // 64 + 2:
        raise ValueError("not enough digit words for the requested length")
    with nogil:
        for i in range(n):
            for j in range(length):
                w = j >> 6
                s = j & 63
                if s == 0:
                    hi = words[i, w]
                else:
                    hi = (words[i, w] << s) | (words[i, w + 1] >> (64 - s))
                o[i, j] = <double>(hi >> 11) * TWO_M53
    return out


def toral_orbit(const uint64_t[::1] x, const uint64_t[::1] y,
                int64_t a, int64_t b, int64_t c, int64_t d, Py_ssize_t length):
    """Orbit of lattice points (x, y) / 2**64 under the integer matrix [[a, b], [c, d]].

    Arithmetic is exact modulo 2**64; only the returned coordinates are rounded.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, j
    cdef uint64_t X, Y, Xn
    cdef uint64_t ua = <uint64_t>a, ub = <uint64_t>b, uc = <uint64_t>c, ud = <uint64_t>d
    out = np.empty((n, length, 2), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    with nogil:
        for i in range(n):
            X = x[i]
            Y = y[i]
            for j in range(length):
                o[i, j, 0] = <double>(X >> 11) * TWO_M53
                o[i, j, 1] = <double>(Y >> 11) * TWO_M53
                Xn = ua * X + ub * Y
                Y = uc * X + ud * Y
                X = Xn
    return out


def trace_rays(const double[::1] ox, const double[::1] oy,
               const double[::1] dx, const double[::1] dy,
               const int64_t[::1] exclude,
               const double[::1] cx, const double[::1] cy, const double[::1] rad,
               double cap):
    """First scatterer hit by each ray in the periodically unfolded plane.

    Returns ``(sid, t, off_i, off_j, status)``; ``status`` is 0 on a hit and 1
    when no hit occurs within flight length ``cap``. The copy of scatterer
    ``exclude[k]`` with lattice offset (0, 0) is skipped (departure disk).
    """
    cdef Py_ssize_t n = ox.shape[0]
    cdef Py_ssize_t ns = cx.shape[0]
    cdef Py_ssize_t k, s
    cdef int64_t ix, iy, di, dj, stepx, stepy, oi, oj
    cdef double tmaxx, tmaxy, tdx, tdy, texit, best, wx, wy, bb, px, py, disc, t, R
    cdef int64_t bsid, boi, boj

    sid = np.full(n, -1, dtype=np.int64)
    tout = np.full(n, INFINITY, dtype=np.float64)
    offi = np.zeros(n, dtype=np.int64)
    offj = np.zeros(n, dtype=np.int64)
    status = np.zeros(n, dtype=np.int8)
    cdef int64_t[::1] sid_v = sid, offi_v = offi, offj_v = offj
    cdef double[::1] t_v = tout
    cdef int8_t[::1] st_v = status

    with nogil:
        for k in range(n):
            ix = <int64_t>floor(ox[k])
            iy = <int64_t>floor(oy[k])
            if dx[k] > 0:
                stepx = 1
                tmaxx = ((ix + 1) - ox[k]) / dx[k]
                tdx = 1.0 / dx[k]
            elif dx[k] < 0:
                stepx = -1
                tmaxx = (ox[k] - ix) / (-dx[k])
                tdx = -1.0 / dx[k]
            else:
                stepx = 0
                tmaxx = INFINITY
                tdx = INFINITY
            if dy[k] > 0:
                stepy = 1
                tmaxy = ((iy + 1) - oy[k]) / dy[k]
                tdy = 1.0 / dy[k]
            elif dy[k] < 0:
                stepy = -1
                tmaxy = (oy[k] - iy) / (-dy[k])
                tdy = -1.0 / dy[k]
            else:
                stepy = 0
                tmaxy = INFINITY
                tdy = INFINITY
            best = INFINITY
            bsid = -1
            boi = 0
            boj = 0
            while True:
                for s in range(ns):
                    R = rad[s]
                    for di in range(-1, 2):
                        for dj in range(-1, 2):
                            oi = ix + di
                            oj = iy + dj
                            if s == exclude[k] and oi == 0 and oj == 0:
                                continue
                            wx = ox[k] - (cx[s] + oi)
                            wy = oy[k] - (cy[s] + oj)
                            bb = wx * dx[k] + wy * dy[k]
                            px = wx - bb * dx[k]
                            py = wy - bb * dy[k]
                            disc = R * R - (px * px + py * py)
                            if disc < 0:
                                continue
                            t = -bb - sqrt(disc)
                            if t > 1e-12 and t < best:
                                best = t
                                bsid = s
                                boi = oi
                                boj = oj
                texit = tmaxx if tmaxx < tmaxy else tmaxy
                if best <= texit:
                    break
                if texit > cap:
                    break
                if tmaxx < tmaxy:
                    ix = ix + stepx
                    tmaxx = tmaxx + tdx
                else:
                    iy = iy + stepy
                    tmaxy = tmaxy + tdy
            if best <= cap:
                sid_v[k] = bsid
                t_v[k] = best
                offi_v[k] = boi
                offj_v[k] = boj
            else:
                st_v[k] = 1
    return sid, tout, offi, offj, status
