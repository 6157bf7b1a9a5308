# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner-loop derivatives; see ``_kernels_py`` for the reference."""

from libc.math cimport cos, sin, sqrt


def gem_rhs(const double complex[::1] at, const double[::1] xi, double s, double tau,
            double zeta, double h, double complex drive, double complex[::1] out):
    cdef Py_ssize_t k, m = at.shape[0]
    cdef double complex run = 0, ak, ph, c
    cdef double zh = zeta * h, phase
    cdef double complex src = sqrt(zeta) * drive
    for k in range(m):
        phase = -s * tau * xi[k]
        ph = cos(phase) + 1j * sin(phase)
        ak = ph * at[k]
        run = run + ak
        c = -zh * (run - 0.5 * ak) - src
        out[k] = ph.conjugate() * c
    return complex(run.real, run.imag)


def bloch_rhs(const double[:] x, const double[:] y, const double[:] z,
              const double[::1] delta, const double[::1] weights,
              double gs, double gamma, double complex nu,
              double[:] dx, double[:] dy, double[:] dz):
    cdef Py_ssize_t k, m = x.shape[0]
    cdef double re = nu.real, im = nu.imag
    cdef double px = 0, py = 0
    for k in range(m):
        dx[k] = -2.0 * delta[k] * y[k] - 2.0 * gs * re * z[k] - 0.5 * gamma * x[k]
        dy[k] = 2.0 * delta[k] * x[k] + 2.0 * gs * im * z[k] - 0.5 * gamma * y[k]
        dz[k] = 2.0 * gs * (re * x[k] - im * y[k]) - gamma * (1.0 + z[k])
        px += weights[k] * x[k]
        py += weights[k] * y[k]
    return complex(0.5 * px, -0.5 * py)
