# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hit-and-run chain.

Mirrors ``aurlab._fallback`` operation for operation; both must stay in sync
so that batches are bit-identical whichever backend is loaded.
"""
from libc.math cimport sqrt, fabs, INFINITY

cdef int BISECT_ITERS = 50

cdef int ELLIPSOIDAL = 0
cdef int BOX = 1
cdef int DIAMOND = 2
cdef int BUDGET = 3


cdef inline double _l1_at(double[::1] x, double[::1] u, double t, Py_ssize_t d) nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(d):
        acc += fabs(x[i] + t * u[i])
    return acc


cdef double _l1_reach(double[::1] x, double[::1] u, double sign, double upper,
                      double rho, Py_ssize_t d) nogil:
    cdef double lo = 0.0, hi = upper, mid
    cdef int it
    if _l1_at(x, u, sign * upper, d) <= rho:
        return upper
    for it in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if _l1_at(x, u, sign * mid, d) <= rho:
            lo = mid
        else:
            hi = mid
    return lo


cdef void _box_clip(double[::1] x, double[::1] u, double cap, Py_ssize_t d,
                    double* tmin, double* tmax) nogil:
    cdef double lo = -INFINITY, hi = INFINITY, a, b, ui
    cdef Py_ssize_t i
    for i in range(d):
        ui = u[i]
        if ui > 0.0:
            a = (cap - x[i]) / ui
            b = (-cap - x[i]) / ui
        elif ui < 0.0:
            a = (-cap - x[i]) / ui
            b = (cap - x[i]) / ui
        else:
            continue
        if a < hi:
            hi = a
        if b > lo:
            lo = b
    tmin[0] = lo
    tmax[0] = hi


cdef void _chord(int kind, double rho, double gamma, double[::1] x, double[::1] u,
                 Py_ssize_t d, double* tmin, double* tmax) nogil:
    cdef double a, b, c, disc, sq, q, ax, au, upper
    cdef Py_ssize_t i
    if kind == ELLIPSOIDAL:
        a = 0.0
        b = 0.0
        c = 0.0
        for i in range(d):
            a += u[i] * u[i]
            b += x[i] * u[i]
            c += x[i] * x[i]
        c = c - rho * rho
        disc = b * b - a * c
        if disc < 0.0:
            disc = 0.0
        sq = sqrt(disc)
        if b >= 0.0:
            q = -(b + sq)
        else:
            q = -b + sq
        if q == 0.0:
            tmin[0] = 0.0
            tmax[0] = 0.0
        elif b >= 0.0:
            tmin[0] = q / a
            tmax[0] = c / q
        else:
            tmin[0] = c / q
            tmax[0] = q / a
    elif kind == BOX:
        _box_clip(x, u, rho, d, tmin, tmax)
    elif kind == DIAMOND:
        ax = 0.0
        au = 0.0
        for i in range(d):
            ax += fabs(x[i])
            au += fabs(u[i])
        upper = (rho + ax) / au
        tmax[0] = _l1_reach(x, u, 1.0, upper, rho, d)
        tmin[0] = -_l1_reach(x, u, -1.0, upper, rho, d)
    else:
        _box_clip(x, u, gamma, d, tmin, tmax)
        tmax[0] = _l1_reach(x, u, 1.0, tmax[0], rho, d)
        tmin[0] = -_l1_reach(x, u, -1.0, -tmin[0], rho, d)


def run_chain(int kind, double rho, double gamma, double[::1] x,
              double[:, ::1] dirs, double[::1] unif, long long step0,
              long long burn_in, long long thinning, double[:, ::1] out,
              Py_ssize_t out_pos):
    """Advance the chain over one block of pre-drawn randomness.

    ``x`` is updated in place.  The state after global step ``s`` (1-based)
    is written to ``out`` when ``s > burn_in`` and ``(s - burn_in) % thinning
    == 0``.  Returns the next free row of ``out``.
    """
    cdef Py_ssize_t m = dirs.shape[0], d = dirs.shape[1], j, i
    cdef Py_ssize_t cap = out.shape[0]
    cdef double tmin, tmax, t
    cdef long long s
    with nogil:
        for j in range(m):
            _chord(kind, rho, gamma, x, dirs[j], d, &tmin, &tmax)
            if tmax < tmin:
                tmin = 0.0
                tmax = 0.0
            t = tmin + unif[j] * (tmax - tmin)
            for i in range(d):
                x[i] = x[i] + t * dirs[j, i]
            s = step0 + j + 1
            if s > burn_in and (s - burn_in) % thinning == 0 and out_pos < cap:
                for i in range(d):
                    out[out_pos, i] = x[i]
                out_pos += 1
    return out_pos
