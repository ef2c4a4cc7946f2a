# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 kernels for the M/M/1/K forward equations."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, floor
from libc.stdlib cimport malloc, free

cnp.import_array()

BACKEND = "compiled"


cdef inline void _rhs(const double* p, double* out, int n, double lam, double mu) noexcept nogil:
    cdef int j, K = n - 1
    if K == 0:
        out[0] = 0.0
        return
    out[0] = -lam * p[0] + mu * p[1]
    for j in range(1, K):
        out[j] = lam * p[j - 1] + mu * p[j + 1] - (lam + mu) * p[j]
    out[K] = lam * p[K - 1] - mu * p[K]


cdef inline void _rk4_step(double* p, int n, double lam, double mu, double h,
                           double* k1, double* k2, double* k3, double* k4, double* tmp,
                           double renorm_tol) noexcept nogil:
    cdef int j
    cdef double s = 0.0
    _rhs(p, k1, n, lam, mu)
    for j in range(n):
        tmp[j] = p[j] + 0.5 * h * k1[j]
    _rhs(tmp, k2, n, lam, mu)
    for j in range(n):
        tmp[j] = p[j] + 0.5 * h * k2[j]
    _rhs(tmp, k3, n, lam, mu)
    for j in range(n):
        tmp[j] = p[j] + h * k3[j]
    _rhs(tmp, k4, n, lam, mu)
    for j in range(n):
        p[j] += h * (k1[j] + 2.0 * (k2[j] + k3[j]) + k4[j]) / 6.0
        s += p[j]
    if fabs(s - 1.0) > renorm_tol and s > 0.0:
        for j in range(n):
            p[j] /= s


DEF BAND = 9


cdef void _propagator(double* M, int n, double lam, double mu, double h, double* work) noexcept nogil:
    """Banded RK4 step map: row i holds the weights of p[i-4 .. i+4].

    The forward equations are linear with constant rates, so applying one RK4
    step to each unit vector e_j yields the exact step matrix. Its bandwidth
    is 4 since each of the four stages widens the stencil by one.
    """
    cdef int i, j
    cdef double* e = work + 5 * n
    for i in range(n * BAND):
        M[i] = 0.0
    for j in range(n):
        for i in range(n):
            e[i] = 0.0
        e[j] = 1.0
        _rk4_step(e, n, lam, mu, h, work, work + n, work + 2 * n, work + 3 * n, work + 4 * n, 1e300)
        for i in range(n):
            if -4 <= j - i <= 4:
                M[i * BAND + (j - i + 4)] = e[i]


cdef inline void _apply(const double* M, double* pp, double* q, int n, double renorm_tol) noexcept nogil:
    """One step on the zero-padded state pp (pp[4 + j] = p[j])."""
    cdef int i, k
    cdef double acc, s = 0.0
    cdef const double* row
    cdef double* src
    for i in range(n):
        row = M + i * BAND
        src = pp + i
        acc = 0.0
        for k in range(BAND):
            acc += row[k] * src[k]
        q[i] = acc
        s += acc
    if fabs(s - 1.0) > renorm_tol and s > 0.0:
        for i in range(n):
            pp[i + 4] = q[i] / s
    else:
        for i in range(n):
            pp[i + 4] = q[i]


cdef inline double _d0(const double* pp, int n, double lam, double mu) noexcept nogil:
    # d/dt of p[0] on the padded state
    if n < 2:
        return 0.0
    return -lam * pp[4] + mu * pp[5]


cdef inline double _dK(const double* pp, int n, double lam, double mu) noexcept nogil:
    if n < 2:
        return 0.0
    return lam * pp[n + 2] - mu * pp[n + 3]


cdef int _integrate(double* p, int n, double lam, double mu, double duration, double h,
                    double renorm_tol, double* avg0, double* avgK, int correct=0) noexcept nogil:
    """Advance p in place; optionally accumulate trapezoid integrals of p[0], p[K].

    With ``correct`` the trapezoid sums get the Euler-Maclaurin endpoint term
    -h^2/12 (f'(b) - f'(a)) per uniform stretch, using exact derivatives.
    """
    cdef double* work = <double*> malloc((8 * n + 8 + n * BAND) * sizeof(double))
    if work == NULL:
        return -1
    cdef double* q = work + 6 * n
    cdef double* pp = work + 7 * n
    cdef double* M = work + 8 * n + 8
    cdef double hh, last, a0 = 0.0, aK = 0.0, prev0, prevK
    cdef int i, n_full, K = n - 1
    for i in range(n + 8):
        pp[i] = 0.0
    for i in range(n):
        pp[i + 4] = p[i]
    n_full = <int> floor(duration / h)
    if duration - n_full * h <= 1e-12 * duration and n_full > 0:
        n_full -= 1
    last = duration - n_full * h
    cdef double g0 = _d0(pp, n, lam, mu), gK = _dK(pp, n, lam, mu), c0 = 0.0, cK = 0.0
    if n_full > 0:
        _propagator(M, n, lam, mu, h, work)
    for i in range(n_full + 1):
        if i == n_full:
            if correct and n_full > 0:
                c0 += h * h / 12.0 * (_d0(pp, n, lam, mu) - g0)
                cK += h * h / 12.0 * (_dK(pp, n, lam, mu) - gK)
                g0 = _d0(pp, n, lam, mu)
                gK = _dK(pp, n, lam, mu)
            if last <= 0.0:
                break
            _propagator(M, n, lam, mu, last, work)
            hh = last
        else:
            hh = h
        prev0 = pp[4]
        prevK = pp[4 + K]
        _apply(M, pp, q, n, renorm_tol)
        a0 += 0.5 * hh * (prev0 + pp[4])
        aK += 0.5 * hh * (prevK + pp[4 + K])
    if correct and last > 0.0:
        c0 += last * last / 12.0 * (_d0(pp, n, lam, mu) - g0)
        cK += last * last / 12.0 * (_dK(pp, n, lam, mu) - gK)
    a0 -= c0
    aK -= cK
    for i in range(n):
        p[i] = pp[i + 4]
    free(work)
    if avg0 != NULL:
        avg0[0] = a0
        avgK[0] = aK
    return 0


def rhs(double[::1] pi, double lam, double mu):
    cdef Py_ssize_t n = pi.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    _rhs(&pi[0], &o[0], <int> n, lam, mu)
    return out


def evolve(pi, double lam, double mu, double duration, double h, double renorm_tol=1e-12):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] p = np.array(pi, dtype=np.float64, copy=True)
    if duration <= 0.0:
        return p
    if _integrate(<double*> p.data, <int> p.shape[0], lam, mu, duration, h, renorm_tol, NULL, NULL) != 0:
        raise MemoryError()
    return p


def evolve_average(pi, double lam, double mu, double duration, double h, double renorm_tol=1e-12,
                   bint end_correction=True):
    """Return (final distribution, time-average of p[0], time-average of p[K])."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] p = np.array(pi, dtype=np.float64, copy=True)
    cdef double a0 = 0.0, aK = 0.0
    if duration <= 0.0:
        raise ValueError("duration must be > 0")
    if _integrate(<double*> p.data, <int> p.shape[0], lam, mu, duration, h, renorm_tol, &a0, &aK, end_correction) != 0:
        raise MemoryError()
    return p, a0 / duration, aK / duration


def point_mass_probs(long[::1] capacity, long[::1] start, double[::1] lam, double[::1] mu,
                     double[::1] duration, double[::1] h, long[::1] lo, long[::1] hi,
                     double renorm_tol=1e-12):
    """Batch: start at a point mass, evolve, return P(lo <= state <= hi) per job."""
    cdef Py_ssize_t m = capacity.shape[0], i
    cdef int n, j, maxn = 1
    out = np.zeros(m)
    cdef double[::1] o = out
    for i in range(m):
        if capacity[i] + 1 > maxn:
            maxn = capacity[i] + 1
    cdef double* p = <double*> malloc(maxn * sizeof(double))
    if p == NULL:
        raise MemoryError()
    cdef double s
    with nogil:
        for i in range(m):
            n = <int> capacity[i] + 1
            if lo[i] > hi[i]:
                continue
            for j in range(n):
                p[j] = 0.0
            p[start[i]] = 1.0
            if duration[i] > 0.0:
                _integrate(p, n, lam[i], mu[i], duration[i], h[i], renorm_tol, NULL, NULL)
            s = 0.0
            for j in range(lo[i], hi[i] + 1):
                s += p[j]
            o[i] = s
    free(p)
    return out


cdef void _shift(const double* p, double* out, int n, int direction) noexcept nogil:
    cdef int k, K = n - 1
    if K == 0:
        out[0] = p[0]
        return
    for k in range(n):
        out[k] = 0.0
    if direction < 0:
        out[0] = p[0] + p[1]
        for k in range(1, K):
            out[k] = p[k + 1]
    else:
        out[K] = p[K] + p[K - 1]
        for k in range(1, K):
            out[k] = p[k - 1]


def arrival_impacts(long[::1] capacity, long[::1] start, double[::1] lam1, double[::1] mu1,
                    double[::1] dur1, double[::1] h1, double[::1] lam2, double[::1] mu2,
                    double span2, double[::1] h2, int direction, double renorm_tol=1e-12,
                    bint end_correction=True):
    """Batch: point mass -> arrival distribution -> boundary averages with and without one shift.

    Returns (avg0, avgK, shifted avg0, shifted avgK) arrays over the window ``span2``.
    ``direction`` is -1 for a rental, +1 for a return.
    """
    cdef Py_ssize_t m = capacity.shape[0], i
    cdef int n, j, maxn = 1
    out = np.zeros((4, m))
    cdef double[:, ::1] o = out
    for i in range(m):
        if capacity[i] + 1 > maxn:
            maxn = capacity[i] + 1
    cdef double* p = <double*> malloc(2 * maxn * sizeof(double))
    if p == NULL:
        raise MemoryError()
    cdef double* q = p + maxn
    cdef double a0, aK
    with nogil:
        for i in range(m):
            n = <int> capacity[i] + 1
            for j in range(n):
                p[j] = 0.0
            p[start[i]] = 1.0
            if dur1[i] > 0.0:
                _integrate(p, n, lam1[i], mu1[i], dur1[i], h1[i], renorm_tol, NULL, NULL)
            for j in range(n):
                if p[j] < 0.0:
                    p[j] = 0.0
            _shift(p, q, n, direction)
            _integrate(p, n, lam2[i], mu2[i], span2, h2[i], renorm_tol, &a0, &aK, end_correction)
            o[0, i] = a0 / span2
            o[1, i] = aK / span2
            _integrate(q, n, lam2[i], mu2[i], span2, h2[i], renorm_tol, &a0, &aK, end_correction)
            o[2, i] = a0 / span2
            o[3, i] = aK / span2
    free(p)
    return out
