"""Pure numpy versions of the inner-loop derivatives.

These are the reference implementations; ``_ckernels`` mirrors them
operation by operation.
"""

from __future__ import annotations

import math

import numpy as np


def gem_rhs(at, xi, s, tau, zeta, h, drive, out):
    """Memory derivative in the frame rotating with the gradient.

    ``at`` holds ``exp(i s xi tau) a``. With ``a = exp(-i s xi tau) at`` the
    lab-frame coupling is ``c = -zeta h (cumsum(a) - a/2) - sqrt(zeta) drive``
    and ``out = exp(i s xi tau) c``. The running sum with half the current
    cell is the lower-limit integral; it makes ``h sum |a|^2`` change by
    exactly ``|b_in|^2 - |b_out|^2``. Returns ``sum(a)``.
    """
    ph = np.exp(-1j * s * tau * xi)
    a = ph * at
    cum = np.cumsum(a)
    cum -= 0.5 * a
    cum *= -zeta * h
    cum -= math.sqrt(zeta) * drive
    np.multiply(np.conj(ph), cum, out=out)
    return complex(a.sum())


def bloch_rhs(x, y, z, delta, weights, gs, gamma, nu, dx, dy, dz):
    """Bloch derivatives for every detuning class; returns ``sum w (x - i y) / 2``.

    ``gs`` is the signed coupling ``g * s`` and ``nu`` the cavity amplitude.
    """
    re, im = nu.real, nu.imag
    dx[:] = -2.0 * delta * y - 2.0 * gs * re * z - 0.5 * gamma * x
    dy[:] = 2.0 * delta * x + 2.0 * gs * im * z - 0.5 * gamma * y
    dz[:] = 2.0 * gs * (re * x - im * y) - gamma * (1.0 + z)
    return complex(0.5 * np.dot(weights, x), -0.5 * np.dot(weights, y))
