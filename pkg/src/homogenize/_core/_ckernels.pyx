# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled orbit kernels.

Every kernel advances a batch of ``M`` independent trajectories in place and
optionally records the visited states time-major, ``out[k, m]``.  The
semantics must stay identical to :mod:`homogenize._core._pykernels`.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport pow, isfinite

cnp.import_array()

ctypedef unsigned long long u64

cdef u64 MASK53 = (<u64>1 << 53) - 1
cdef double INV53 = 1.0 / 9007199254740992.0


def doubling_orbit(u64[::1] s, const u64[:, ::1] noise, Py_ssize_t n, bint record):
    cdef Py_ssize_t M = s.shape[0]
    cdef Py_ssize_t m, k
    cdef u64 st, bit
    cdef double[:, ::1] o
    out = None
    if record:
        out = np.empty((n, M), dtype=np.float64)
        o = out
    # time outer, trajectory inner: the time-major output is written contiguously
    with nogil:
        for k in range(n):
            for m in range(M):
                st = s[m]
                if record:
                    o[k, m] = <double>st * INV53
                bit = (noise[m, k >> 6] >> (k & 63)) & 1
                s[m] = ((st << 1) & MASK53) | bit
    return out


def pm_orbit(double[::1] x, const u64[:, ::1] noise, Py_ssize_t n, double alpha,
             bint record):
    cdef Py_ssize_t M = x.shape[0]
    cdef Py_ssize_t m, k
    cdef double xi, c = pow(2.0, alpha)
    cdef u64 bit
    cdef double[:, ::1] o
    out = None
    if record:
        out = np.empty((n, M), dtype=np.float64)
        o = out
    with nogil:
        for k in range(n):
            for m in range(M):
                xi = x[m]
                if record:
                    o[k, m] = xi
                if xi < 0.5:
                    xi = xi * (1.0 + c * pow(xi, alpha))
                    if xi >= 1.0:
                        xi = 1.0 - INV53
                else:
                    bit = (noise[m, k >> 6] >> (k & 63)) & 1
                    xi = (2.0 * xi - 1.0) + <double>bit * INV53
                x[m] = xi
    return out


def cat_orbit(u64[:, ::1] s, Py_ssize_t n, bint record):
    cdef Py_ssize_t M = s.shape[0]
    cdef Py_ssize_t m, k
    cdef u64 a, b, a2
    cdef double[:, :, ::1] o
    out = None
    if record:
        out = np.empty((n, M, 2), dtype=np.float64)
        o = out
    with nogil:
        for k in range(n):
            for m in range(M):
                a = s[m, 0]
                b = s[m, 1]
                if record:
                    o[k, m, 0] = <double>a * INV53
                    o[k, m, 1] = <double>b * INV53
                a2 = (2 * a + b) & MASK53
                s[m, 1] = (a + b) & MASK53
                s[m, 0] = a2
    return out


cdef inline void _lorenz_rhs(double x, double y, double z, double sg, double rh,
                             double bt, double* dx, double* dy, double* dz) noexcept nogil:
    dx[0] = sg * (y - x)
    dy[0] = x * (rh - z) - y
    dz[0] = x * y - bt * z


def lorenz_orbit(double[:, ::1] state, double h, Py_ssize_t substeps, Py_ssize_t n,
                 double sigma, double rho, double beta, bint record):
    """Classical RK4 with step ``h``; a sample is taken every ``substeps`` steps.

    Returns the recorded samples (or None) and the number of the first
    trajectory that went non-finite, or -1.
    """
    cdef Py_ssize_t M = state.shape[0]
    cdef Py_ssize_t m, k, j
    cdef double x, y, z
    cdef double k1x, k1y, k1z, k2x, k2y, k2z, k3x, k3y, k3z, k4x, k4y, k4z
    cdef double h2 = 0.5 * h, h6 = h / 6.0
    cdef Py_ssize_t bad = -1
    cdef double[:, :, ::1] o
    out = None
    if record:
        out = np.empty((n, M, 3), dtype=np.float64)
        o = out
    with nogil:
        for k in range(n):
            for m in range(M):
                x = state[m, 0]
                y = state[m, 1]
                z = state[m, 2]
                if record:
                    o[k, m, 0] = x
                    o[k, m, 1] = y
                    o[k, m, 2] = z
                for j in range(substeps):
                    _lorenz_rhs(x, y, z, sigma, rho, beta, &k1x, &k1y, &k1z)
                    _lorenz_rhs(x + h2 * k1x, y + h2 * k1y, z + h2 * k1z,
                                sigma, rho, beta, &k2x, &k2y, &k2z)
                    _lorenz_rhs(x + h2 * k2x, y + h2 * k2y, z + h2 * k2z,
                                sigma, rho, beta, &k3x, &k3y, &k3z)
                    _lorenz_rhs(x + h * k3x, y + h * k3y, z + h * k3z,
                                sigma, rho, beta, &k4x, &k4y, &k4z)
                    x = x + h6 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
                    y = y + h6 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
                    z = z + h6 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
                if bad < 0 and not (isfinite(x) and isfinite(y) and isfinite(z)):
                    bad = m
                state[m, 0] = x
                state[m, 1] = y
                state[m, 2] = z
    return out, bad
