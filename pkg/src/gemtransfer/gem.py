"""Gradient echo memory in frequency space.

The memory is a continuum of modes ``a(xi)`` on ``[-xi_max, xi_max]`` with

    da/dt = -i s xi a - zeta * int_{-xi_max}^{xi} a(xi') dxi' - sqrt(zeta) b_in
    b_out = sqrt(zeta) * int a(xi) dxi + b_in

where ``s`` is the gradient sign. The input enters with a minus sign so that
``d/dt int |a|^2 = |b_in|^2 - |b_out|^2`` holds exactly (standard cascaded
input-output convention). With this convention a write/flip/read cycle
followed by the phase plate returns ``-(1 - exp(-2 pi zeta)) b_in(T - t)``,
a time-reversed copy of the input with the attenuation applied once to the
amplitude.
"""

from __future__ import annotations

import cmath
import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .core import Grid1D, ParameterError, Signal, default_dt, trapezoid

__all__ = [
    "LANCZOS_G",
    "LANCZOS_COEFFICIENTS",
    "GridResolutionWarning",
    "GemField",
    "ChiCoefficient",
    "complex_log_gamma",
    "chi",
    "phase_plate",
    "broadband_factor",
    "broadband_transfer",
    "gem_step",
    "gem_run",
    "gem_store_analytic",
    "kummer_imag",
    "default_xi_grid",
]

# Lanczos approximation, g = 7, nine terms; relative error ~1e-15 for Re z >= 1/2.
LANCZOS_G = 7.0
LANCZOS_COEFFICIENTS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


class GridResolutionWarning(UserWarning):
    """The detuning grid is too coarse for the signal it has to carry."""


def complex_log_gamma(z, coefficients=LANCZOS_COEFFICIENTS, g=LANCZOS_G) -> complex:
    """log Gamma(z) for ``Re z > 0``, continuous branch (matches Stirling).

    Uses the Lanczos series in logarithmic form; arguments with
    ``Re z < 1/2`` go through the reflection formula.
    """
    z = complex(z)
    if z.real <= 0 and z.imag == 0 and z.real == math.floor(z.real):
        raise ParameterError(f"Gamma has a pole at {z.real:g}")
    if z.real < 0.5:
        # reflection: Gamma(z) Gamma(1-z) = pi / sin(pi z)
        return (
            cmath.log(math.pi)
            - cmath.log(cmath.sin(math.pi * z))
            - complex_log_gamma(1 - z, coefficients, g)
        )
    z -= 1
    acc = coefficients[0]
    for k, c in enumerate(coefficients[1:], 1):
        acc += c / (z + k)
    t = z + g + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * cmath.log(t) - t + cmath.log(acc)


@dataclass(frozen=True)
class ChiCoefficient:
    """``chi(zeta) = sqrt(zeta) exp(-pi zeta / 2) / Gamma(1 - i zeta)``."""

    value: complex
    zeta: float

    @property
    def arg(self) -> float:
        return cmath.phase(self.value)

    @property
    def modulus_squared(self) -> float:
        return abs(self.value) ** 2


def chi(zeta: float, coefficients=LANCZOS_COEFFICIENTS) -> ChiCoefficient:
    if not zeta > 0:
        raise ParameterError(f"optical depth must be positive, got {zeta!r}")
    log_chi = 0.5 * math.log(zeta) - 0.5 * math.pi * zeta - complex_log_gamma(
        1 - 1j * zeta, coefficients
    )
    return ChiCoefficient(cmath.exp(log_chi), float(zeta))


def broadband_factor(zeta: float) -> float:
    """Amplitude efficiency ``1 - exp(-2 pi zeta)`` of a full store/recall cycle."""
    return -math.expm1(-2 * math.pi * zeta)


def phase_plate(t, t_write, zeta, xi_max, chi_arg=None, clamp=None, printed=False):
    """Unit-modulus correction applied to the memory output at time ``T + t``.

    For ``t < 0`` the plate is transparent. For ``t >= 0`` it removes the
    logarithmic chirp ``exp(-2 i zeta ln(t xi_max))`` and the constant phase
    of ``chi^2`` that the read-out acquires. ``printed=True`` selects the
    variant ``zeta ln(t (T - t) xi_max^2)``, which only agrees with the
    chirp at ``t = T / 2`` and is kept for comparison.

    ``t`` may be an array. Log arguments are clamped below at ``clamp``
    (default: half of the default step for this ``xi_max``).
    """
    if chi_arg is None:
        chi_arg = chi(zeta).arg
    if clamp is None:
        clamp = 0.5 * default_dt(xi_max)
    t = np.asarray(t, dtype=float)
    tc = np.maximum(t, clamp)
    if printed:
        phase = zeta * np.log(tc * np.maximum(t_write - t, clamp) * xi_max**2)
    else:
        phase = 2.0 * zeta * np.log(tc * xi_max)
    out = np.where(t < 0, 1.0 + 0j, np.exp(1j * (phase - 2.0 * chi_arg)))
    return out[()] if out.ndim == 0 else out


def broadband_transfer(b_in: Signal, zeta: float, t_write: float) -> Signal:
    """Ideal memory response: ``b'(T + t) = -(1 - e^{-2 pi zeta}) b_in(T - t)``.

    ``b_in`` must lie on the lattice ``k * dt`` inside ``[0, T]``; missing
    samples are taken as zero. The result is sampled on ``[T, 2T]`` with the
    same spacing.
    """
    dt = b_in.dt
    n = int(round(t_write / dt))
    k0 = int(round(b_in.t0 / dt))
    if abs(n * dt - t_write) > 1e-9 * t_write or abs(k0 * dt - b_in.t0) > 1e-9 * max(dt, abs(b_in.t0)):
        raise ParameterError("signal samples must lie on a lattice that contains 0 and T")
    if k0 < 0 or k0 + len(b_in.samples) - 1 > n:
        raise ParameterError("input signal must be contained in [0, T]")
    full = np.zeros(n + 1, dtype=complex)
    full[k0 : k0 + len(b_in.samples)] = b_in.samples
    return Signal(float(t_write), dt, -broadband_factor(zeta) * full[::-1])


def default_xi_grid(xi_max: float, t_write: float, m: int | None = None, target: float = 0.25) -> Grid1D:
    """Detuning grid for a memory that has to hold a signal for ``t_write``.

    A stored component acquires the phase ``xi * tau``; the grid must keep
    ``spacing * t_write`` below ``target`` or the discrete memory dephases
    against the continuum. With ``m=None`` the smallest power of two (at
    least 512) meeting that bound is used.
    """
    if m is None:
        need = 2.0 * xi_max * t_write / target + 1
        m = max(512, 1 << int(math.ceil(math.log2(need))))
    return Grid1D.symmetric(xi_max, m)


@dataclass(frozen=True)
class GemField:
    """Spin-wave amplitudes ``a(xi)`` on a symmetric detuning grid."""

    grid: Grid1D
    amps: np.ndarray = field(repr=False)
    s: int = 1

    def __post_init__(self):
        if not self.grid.is_symmetric:
            raise ParameterError("memory grid must be symmetric about zero")
        if self.s not in (1, -1):
            raise ParameterError("gradient sign must be +1 or -1")
        amps = np.array(self.amps, dtype=complex)
        if amps.shape != (self.grid.m,):
            raise ParameterError("amplitude array does not match the grid")
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def empty(cls, grid: Grid1D, s: int = 1) -> "GemField":
        return cls(grid, np.zeros(grid.m, complex), s)

    def flipped(self) -> "GemField":
        return replace(self, s=-self.s)

    def excitation(self) -> float:
        """Stored excitation ``h * sum |a|^2`` (the measure used by the dynamics)."""
        return float(self.grid.spacing * np.sum(np.abs(self.amps) ** 2))

    def integral(self) -> complex:
        return complex(self.grid.spacing * np.sum(self.amps))


def _check_resolution(grid: Grid1D, bandwidth: float) -> None:
    if bandwidth > 0 and bandwidth / grid.spacing < 8:
        import warnings

        warnings.warn(
            f"xi grid spacing {grid.spacing:g} gives fewer than 8 points per {bandwidth:g} of bandwidth",
            GridResolutionWarning,
            stacklevel=3,
        )


def gem_step(field: GemField, b_in, zeta: float, dt: float, kappa_in: float | None = None):
    """Advance the memory by one RK4 step and return ``(field, b_out)``.

    ``b_in`` is either a single sample held over the step or the three
    values at ``t, t + dt/2, t + dt``. With ``kappa_in`` set, ``b_in`` is a
    cavity amplitude and the injected field is ``sqrt(kappa_in) * b_in``.
    ``b_out`` is the output at the end of the step.
    """
    if not zeta >= 0:
        raise ParameterError("zeta must be non-negative")
    grid = field.grid
    _check_resolution(grid, kappa_in or 0.0)
    vals = np.broadcast_to(np.asarray(b_in, dtype=complex), (3,)) if np.ndim(b_in) else np.full(3, complex(b_in))
    if kappa_in is not None:
        vals = math.sqrt(kappa_in) * vals
    xi = grid.points
    h = grid.spacing
    s = float(field.s)
    buf = np.empty(grid.m, complex)

    # integrating-factor RK4: the gradient rotation is applied exactly and
    # only the coupling is approximated
    def deriv(at, tau, drive):
        kernels.gem_rhs(at, xi, s, tau, zeta, h, drive, buf)
        return buf.copy()

    a = field.amps
    k1 = deriv(a, 0.0, vals[0])
    k2 = deriv(a + 0.5 * dt * k1, 0.5 * dt, vals[1])
    k3 = deriv(a + 0.5 * dt * k2, 0.5 * dt, vals[1])
    k4 = deriv(a + dt * k3, dt, vals[2])
    new = np.exp(-1j * s * xi * dt) * (a + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
    b_out = math.sqrt(zeta) * h * new.sum() + vals[2]
    return GemField(grid, new, field.s), complex(b_out)


def gem_run(field: GemField, b_in: Signal, zeta: float):
    """Drive the memory with a whole signal; returns ``(field, b_out)``.

    Steps are ``2 * b_in.dt`` long so the RK4 midpoints fall on samples.
    The output signal has the spacing of those steps and starts at
    ``b_in.t0``.
    """
    samples = b_in.samples
    if len(samples) % 2 == 0:
        raise ParameterError("gem_run needs an odd number of samples")
    dt = 2 * b_in.dt
    out = [math.sqrt(zeta) * field.integral() + samples[0]]
    for k in range(0, len(samples) - 1, 2):
        field, b = gem_step(field, samples[k : k + 3], zeta, dt)
        out.append(b)
    return field, Signal(b_in.t0, dt, np.array(out))


def _kummer_series(a: complex, y: np.ndarray) -> np.ndarray:
    """Power series of ``1F1(a; 1; i y)``; used only for small ``y``."""
    z = 1j * y
    term = np.ones_like(z)
    total = term.copy()
    for n in range(200):
        term = term * (a + n) / (n + 1) ** 2 * z
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _kummer_switch(zeta: float) -> float:
    # past this point the asymptotic series reaches ~1e-13 before diverging
    return 40.0 + 8.0 * zeta * zeta


@functools.lru_cache(maxsize=16)
def _kummer_table(zeta: float):
    """Quintic Hermite spline of ``w(y) = 1F1(i zeta; 1; i y)`` on ``[1, switch]``.

    With ``z = i y`` Kummer's equation becomes
    ``i y w'' + (i + y) w' + i zeta w = 0``; it is integrated from ``y = 1``
    where the power series is exact to rounding.
    """
    from scipy.integrate import solve_ivp
    from scipy.interpolate import BPoly

    a = 1j * zeta
    y0 = 1.0
    w0 = _kummer_series(a, np.array([y0]))[0]
    # derivative: d/dy 1F1(a;1;iy) = i a 1F1(a+1; 2; iy)
    z = 1j * y0
    term, total = 1.0 + 0j, 1.0 + 0j
    for n in range(60):
        term = term * (a + 1 + n) / ((n + 1) * (n + 2)) * z
        total += term
    dw0 = 1j * a * total

    def rhs(y, u):
        w, dw = u[0] + 1j * u[1], u[2] + 1j * u[3]
        d2 = -((1j + y) * dw + 1j * zeta * w) / (1j * y)
        return [dw.real, dw.imag, d2.real, d2.imag]

    top = _kummer_switch(zeta) + 1.0
    ys = np.arange(y0, top + 0.02, 0.02)
    sol = solve_ivp(rhs, (y0, ys[-1]), [w0.real, w0.imag, dw0.real, dw0.imag],
                    method="DOP853", t_eval=ys, rtol=1e-13, atol=1e-15)
    w = sol.y[0] + 1j * sol.y[1]
    dw = sol.y[2] + 1j * sol.y[3]
    d2 = -((1j + ys) * dw + 1j * zeta * w) / (1j * ys)
    parts = [BPoly.from_derivatives(ys, np.stack([f(w), f(dw), f(d2)], axis=1)) for f in (np.real, np.imag)]
    return lambda y: parts[0](y) + 1j * parts[1](y)


def kummer_imag(zeta: float, y) -> np.ndarray:
    """Confluent hypergeometric ``1F1(i zeta; 1; i y)`` for real ``y >= 0``.

    Power series for ``y < 1``, a spline of the integrated Kummer equation
    up to ``40 + 8 zeta^2`` and the two-sided asymptotic expansion beyond.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ParameterError("kummer_imag needs y >= 0")
    a = 1j * zeta
    out = np.empty(y.shape, complex)
    switch = _kummer_switch(zeta)
    small = y < 1.0
    if small.any():
        out[small] = _kummer_series(a, y[small])
    mid = ~small & (y < switch)
    if mid.any():
        out[mid] = _kummer_table(float(zeta))(y[mid])
    big = y >= switch
    if big.any():
        yb = y[big]
        z = 1j * yb
        log_z = np.log(yb) + 0.5j * math.pi
        inv_gamma_1ma = cmath.exp(-complex_log_gamma(1 - a))
        # 1/Gamma(i zeta) = i zeta / Gamma(1 + i zeta)
        inv_gamma_a = a * cmath.exp(-complex_log_gamma(1 + a))
        first = _asymptotic_sum(lambda s: (a + s) * (a + s), -1.0 / z)
        second = _asymptotic_sum(lambda s: (1 - a + s) * (1 - a + s), 1.0 / z)
        lead = np.exp(1j * math.pi * a - a * log_z) * inv_gamma_1ma
        tail = np.exp(z + (a - 1) * log_z) * inv_gamma_a
        out[big] = lead * first + tail * second
    return out


def _asymptotic_sum(coef, w, max_terms: int = 200):
    """Sum ``sum_s prod_{r<s} coef(r) / (r + 1) * w^s``, stopping at the smallest term."""
    term = np.ones_like(w)
    total = term.copy()
    live = np.ones(w.shape, bool)
    prev = np.abs(term)
    for s in range(max_terms):
        nxt = term * coef(s) / (s + 1) * w
        mag = np.abs(nxt)
        live &= (mag < prev) & (mag > 1e-17)
        if not live.any():
            break
        total = np.where(live, total + nxt, total)
        term, prev = nxt, mag
    return total


def gem_store_analytic(
    b_in: Signal,
    zeta: float,
    xi_grid: Grid1D,
    t_write: float,
    kernel: str = "exact",
    clamp: float | None = None,
) -> GemField:
    """Memory contents at ``T`` after writing ``b_in`` with ``s = +1``.

    ``kernel="broadband"`` is the infinite-bandwidth result

        a(xi, T) = -chi * int_0^T e^{-i xi (T-t) - i zeta ln((T-t) xi_max)} b(t) dt,

    whose error is of order ``zeta * bandwidth / xi_max``.
    ``kernel="exact"`` uses the finite-band Green's function
    ``-sqrt(zeta) e^{-i xi tau} 1F1(i zeta; 1; i (xi + xi_max) tau)``,
    which the broadband formula approximates for large ``(xi + xi_max) tau``.
    The time integral uses the trapezoid rule on the signal samples.
    """
    if not zeta > 0:
        raise ParameterError("zeta must be positive")
    t = b_in.times
    if t[0] < -1e-12 or t[-1] > t_write * (1 + 1e-12):
        raise ParameterError("input signal must be contained in [0, T]")
    if not np.any(b_in.samples):
        return GemField.empty(xi_grid)
    xi = xi_grid.points
    tau = t_write - t
    xi_max = xi_grid.hi
    out = np.empty(len(xi), complex)
    rows = max(1, 2_000_000 // max(len(t), 1))
    if kernel == "broadband":
        c = chi(zeta).value
        if clamp is None:
            clamp = 0.5 * b_in.dt
        log_phase = np.exp(-1j * zeta * np.log(np.maximum(tau, clamp) * xi_max)) * b_in.samples
        for i in range(0, len(xi), rows):
            ker = np.exp(-1j * np.outer(xi[i : i + rows], tau))
            out[i : i + rows] = -c * trapezoid(ker * log_phase, dx=b_in.dt, axis=1)
    elif kernel == "exact":
        rz = math.sqrt(zeta)
        for i in range(0, len(xi), rows):
            xr = xi[i : i + rows, None]
            ker = np.exp(-1j * xr * tau) * kummer_imag(zeta, (xr + xi_max) * tau)
            out[i : i + rows] = -rz * trapezoid(ker * b_in.samples, dx=b_in.dt, axis=1)
    else:
        raise ParameterError(f"unknown kernel {kernel!r}")
    return GemField(xi_grid, out, 1)
