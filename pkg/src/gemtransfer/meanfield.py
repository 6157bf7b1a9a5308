"""Mean-field (large N) emitter and transfer solvers.

Per detuning class ``Delta`` with Bloch vector ``(x, y, z)`` (``z = +1``
excited) and cavity amplitude ``nu``, gradient-free ion side ``s = +1``
for the emitter and ``s = -1`` for the receiver::

    dx  = -2 Delta y - 2 g s z Re(nu) - gamma x / 2
    dy  =  2 Delta x + 2 g s z Im(nu) - gamma y / 2
    dz  =  2 g s (x Re(nu) - y Im(nu)) - gamma (1 + z)
    dnu = -g s P - kappa nu / 2 - sqrt(kappa) b_in,   P = sum_k w_k (x_k - i y_k) / 2

where the weights ``w_k`` sum to the ion number. A single class at
``Delta = 0`` with weight ``N`` is the homogeneous model. Linearized about
the ground state these reduce to the single-excitation amplitude equations
with ``<sigma> = (x - i y) / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .analysis import (
    BlochVector,
    TrajectoryRecord,
    TransferResult,
    fidelity_bloch,
)
from .core import ParameterError, PhysParams, default_dt, integrate_fixed_rk4, trapezoid
from .gem import GemField, broadband_factor, chi, default_xi_grid, phase_plate

__all__ = [
    "BlochVector",
    "MeanFieldState",
    "EnsembleClasses",
    "solve_meanfield_emitter",
    "solve_meanfield_transfer",
    "solve_meanfield_imbalanced",
    "imbalance_curve",
    "transfer_ensembles",
]


@dataclass(frozen=True)
class EnsembleClasses:
    """Detuning classes of one ensemble: ``deltas`` and ion ``weights``."""

    deltas: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        d = np.ascontiguousarray(self.deltas, dtype=float)
        w = np.ascontiguousarray(self.weights, dtype=float)
        if d.shape != w.shape or d.ndim != 1 or len(d) == 0:
            raise ParameterError("deltas and weights must be equal-length 1-D arrays")
        if np.any(w < 0):
            raise ParameterError("class weights must be non-negative")
        object.__setattr__(self, "deltas", d)
        object.__setattr__(self, "weights", w)

    @classmethod
    def homogeneous(cls, n: float) -> "EnsembleClasses":
        return cls(np.zeros(1), np.array([float(n)]))

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @property
    def size(self) -> int:
        return len(self.deltas)


@dataclass(frozen=True)
class MeanFieldState:
    bloch_em: BlochVector
    bloch_re: BlochVector
    nu_em: complex
    nu_re: complex
    gem: Optional[GemField] = None


def _average_bloch(x, y, z, weights) -> BlochVector:
    n = weights.sum()
    return BlochVector(float(weights @ x / n), float(weights @ y / n), float(weights @ z / n))


def solve_meanfield_emitter(params: PhysParams, t_final: Optional[float] = None, dt: Optional[float] = None, every: int = 1):
    """Emitter alone, cavity output lost to the channel. Returns ``(record, eta)``.

    ``eta = int_0^T kappa |nu|^2 dt / (N cos^2(theta0/2))``; ``nan`` when
    the initial state holds no excitation.
    """
    n, g, gamma, kappa = params.n_em, params.g, params.gamma, params.kappa
    t_final = params.t_write if t_final is None else t_final
    dt = dt or default_dt(kappa, 2 * g * math.sqrt(n), gamma)
    b0 = BlochVector.from_angles(params.theta0, params.phi0)
    delta = np.zeros(1)
    w = np.array([n])
    dx, dy, dz = np.empty(1), np.empty(1), np.empty(1)

    def rhs(t, y):
        d = np.empty_like(y)
        nu = y[3]
        pol = kernels.bloch_rhs(y[0:1].real, y[1:2].real, y[2:3].real, delta, w, g, gamma, nu, dx, dy, dz)
        d[0], d[1], d[2] = dx[0], dy[0], dz[0]
        d[3] = -g * pol - 0.5 * kappa * nu
        return d

    excited0 = n * b0.excited

    def observe(t, y):
        e_s = n * (1 + y[2].real) / 2
        e_c = abs(y[3]) ** 2
        # extra columns: <sigma> = (x - i y)/2 split as (re, ., ., im) and nu
        return [e_s, e_c, 0.0, 0.0, 0.0, (e_s + e_c) / excited0 if excited0 > 0 else 1.0,
                y[0].real / 2, y[3].real, y[3].imag, -y[1].real / 2]

    y0 = np.array([b0.x, b0.y, b0.z, 0.0], complex)
    traj = integrate_fixed_rk4(y0, rhs, (0.0, t_final), dt, observe, every)
    obs = np.asarray(traj.observed)
    rec = TrajectoryRecord(traj.times, *obs[:, :6].T, n_em=n, n_re=params.n_re)
    rec.extras.update(nu=obs[:, 7] + 1j * obs[:, 8], sigma=obs[:, 6] + 1j * obs[:, 9])
    if excited0 == 0:
        return rec, float("nan")
    # output energy from the fine-step integral of kappa |nu|^2
    eta = kappa * trapezoid(obs[:, 1], x=traj.times) / excited0
    return rec, float(eta)


def transfer_ensembles(
    params: PhysParams,
    em: EnsembleClasses,
    re: EnsembleClasses,
    gem_mode: str = "broadband",
    dt: Optional[float] = None,
    m_xi: Optional[int] = None,
    every: int = 1,
    dense: bool = False,
):
    """Emitter -> memory -> receiver transfer for arbitrary detuning classes.

    Returns ``(TrajectoryRecord, TransferResult)``. The fidelity compares
    the initial emitter Bloch vector with the weight-averaged receiver
    Bloch vector at ``2T``.
    """
    if gem_mode not in ("broadband", "discretized"):
        raise ParameterError(f"unknown gem_mode {gem_mode!r}")
    g, gamma, kappa, zeta = params.g, params.gamma, params.kappa, params.zeta
    T, xi_max = params.t_write, params.xi_max
    if gem_mode == "discretized":
        params.check_broadband()
    span = max(np.max(np.abs(em.deltas)), np.max(np.abs(re.deltas)))
    dt = dt or default_dt(kappa, xi_max, 2 * span, 2 * g * math.sqrt(max(em.total, re.total)))
    n_read = max(1, math.ceil(T / dt - 1e-9))
    h_read = T / n_read

    ke, kr = em.size, re.size
    if gem_mode == "discretized":
        grid = default_xi_grid(xi_max, 2 * T, m_xi)
        m, h, xi = grid.m, grid.spacing, grid.points
    else:
        grid, m, h, xi = None, 0, 0.0, None

    # layout: x_em y_em z_em | nu_em | a | nu_re | x_re y_re z_re | leak emitted
    i_nu_em = 3 * ke
    i_a = i_nu_em + 1
    i_nu_re = i_a + m
    i_re = i_nu_re + 1
    i_leak = i_re + 3 * kr
    size = i_leak + 2

    rk, rz = math.sqrt(kappa), math.sqrt(zeta)
    buf = np.empty(m, complex)
    dxe, dye, dze = np.empty(ke), np.empty(ke), np.empty(ke)
    dxr, dyr, dzr = np.empty(kr), np.empty(kr), np.empty(kr)
    b0 = BlochVector.from_angles(params.theta0, params.phi0)
    excited0 = em.total * b0.excited
    n_em, n_re = em.total, re.total

    # the memory is carried in the frame rotating with the gradient since t0
    def make_rhs(s, drive_re, plate, t0=0.0):
        def rhs(t, y):
            d = np.empty_like(y)
            nu_e, nu_r = y[i_nu_em], y[i_nu_re]
            pol_e = kernels.bloch_rhs(y[0:ke].real, y[ke : 2 * ke].real, y[2 * ke : 3 * ke].real,
                                      em.deltas, em.weights, g, gamma, nu_e, dxe, dye, dze)
            d[0:ke], d[ke : 2 * ke], d[2 * ke : 3 * ke] = dxe, dye, dze
            d[i_nu_em] = -g * pol_e - 0.5 * kappa * nu_e
            u = rk * nu_e
            if m:
                total = kernels.gem_rhs(y[i_a:i_nu_re], xi, s, t - t0, zeta, h, u, buf)
                d[i_a:i_nu_re] = buf
                b = (rz * h * total + u) * plate(t)
            else:
                b = drive_re(t)
            xr = y[i_re : i_re + kr].real
            yr = y[i_re + kr : i_re + 2 * kr].real
            zr = y[i_re + 2 * kr : i_leak].real
            pol_r = kernels.bloch_rhs(xr, yr, zr, re.deltas, re.weights, -g, gamma, nu_r, dxr, dyr, dzr)
            d[i_re : i_re + kr], d[i_re + kr : i_re + 2 * kr], d[i_re + 2 * kr : i_leak] = dxr, dyr, dzr
            d[i_nu_re] = g * pol_r - 0.5 * kappa * nu_r - rk * b
            d[i_leak] = abs(rk * nu_r + b) ** 2
            d[i_leak + 1] = kappa * abs(nu_e) ** 2
            return d

        return rhs

    def observe(t, y):
        ze = y[2 * ke : 3 * ke].real
        zr = y[i_re + 2 * kr : i_leak].real
        e_se = float(em.weights @ (1 + ze)) / 2
        e_sr = float(re.weights @ (1 + zr)) / 2
        e_ce, e_cr = abs(y[i_nu_em]) ** 2, abs(y[i_nu_re]) ** 2
        a = y[i_a:i_nu_re]
        e_g = h * float(np.sum(np.abs(a) ** 2)) if m else 0.0
        tot = e_se + e_ce + e_g + e_cr + e_sr
        row = [e_se, e_ce, e_g, e_cr, e_sr, tot / excited0 if excited0 > 0 else 1.0]
        if dense:
            row.extend(em.weights * (1 + ze) / 2)
            row.extend(re.weights * (1 + zr) / 2)
            if m:
                row.extend(np.abs(a) ** 2)
        return row

    y0 = np.zeros(size, complex)
    y0[0:ke], y0[ke : 2 * ke], y0[2 * ke : 3 * ke] = b0.x, b0.y, b0.z
    y0[i_re + 2 * kr : i_leak] = -1.0
    no_drive = lambda t: 0.0  # noqa: E731
    transparent = lambda t: 1.0  # noqa: E731

    if gem_mode == "broadband":
        emitted = []

        def observe_w(t, y):
            emitted.append(rk * y[i_nu_em])
            return observe(t, y)

        tr_w = integrate_fixed_rk4(y0, make_rhs(1.0, no_drive, transparent), (0.0, T), h_read / 2, observe_w, 1)
        echo = -broadband_factor(zeta) * np.asarray(emitted)[::-1]

        def drive_re(t):
            return echo[int(round((t - T) / (0.5 * h_read)))]

        keep = np.arange(0, len(tr_w.times), 2 * every)
        if keep[-1] != len(tr_w.times) - 1:
            keep = np.append(keep, len(tr_w.times) - 1)
        obs_w = np.asarray(tr_w.observed)[keep]
        times_w = tr_w.times[keep]
        tr_r = integrate_fixed_rk4(tr_w.final, make_rhs(-1.0, drive_re, transparent), (T, 2 * T), h_read, observe, every)
    else:
        chi_arg = chi(zeta).arg
        clamp = 0.5 * h_read

        def plate(t):
            return complex(phase_plate(t - T, T, zeta, xi_max, chi_arg, clamp))

        tr_w = integrate_fixed_rk4(y0, make_rhs(1.0, None, transparent), (0.0, T), h_read, observe, every)
        obs_w, times_w = np.asarray(tr_w.observed), tr_w.times
        y_mid = tr_w.final.copy()
        y_mid[i_a:i_nu_re] *= np.exp(-1j * xi * T)
        tr_r = integrate_fixed_rk4(y_mid, make_rhs(-1.0, None, plate, T), (T, 2 * T), h_read, observe, every)

    obs = np.concatenate([obs_w, np.asarray(tr_r.observed)[1:]])
    times = np.concatenate([times_w, tr_r.times[1:]])
    extra = {}
    if dense:
        extra = dict(
            delta=em.deltas,
            e_sigma_em_dense=obs[:, 6 : 6 + ke],
            e_sigma_re_dense=obs[:, 6 + ke : 6 + ke + kr],
            xi=xi if m else None,
            e_gem_dense=obs[:, 6 + ke + kr :] if m else None,
        )
    rec = TrajectoryRecord(times, *(obs[:, k] for k in range(6)), n_em=n_em, n_re=n_re, **extra)

    yf = tr_r.final.copy()
    if m:
        yf[i_a:i_nu_re] *= np.exp(1j * xi * T)
    xr = yf[i_re : i_re + kr].real
    yr = yf[i_re + kr : i_re + 2 * kr].real
    zr = yf[i_re + 2 * kr : i_leak].real
    re_final = _average_bloch(xr, yr, zr, re.weights)
    eta = tr_w.final[i_leak + 1].real / excited0 if excited0 > 0 else float("nan")
    result = TransferResult(
        fidelity_bloch=fidelity_bloch(b0, re_final),
        eta=float(eta),
        wall_params=params,
        gem_mode=gem_mode,
    )
    rec.extras.update(
        leaked=float(yf[i_leak].real),
        final=MeanFieldState(
            _average_bloch(yf[0:ke].real, yf[ke : 2 * ke].real, yf[2 * ke : 3 * ke].real, em.weights),
            re_final,
            complex(yf[i_nu_em]),
            complex(yf[i_nu_re]),
            GemField(grid, yf[i_a:i_nu_re], -1) if m else None,
        ),
        initial_excitation=excited0,
    )
    return rec, result


def solve_meanfield_transfer(params: PhysParams, gem_mode: str = "broadband", **kw):
    """Homogeneous transfer between ensembles of ``n_em`` and ``n_re`` ions."""
    return transfer_ensembles(
        params, EnsembleClasses.homogeneous(params.n_em), EnsembleClasses.homogeneous(params.n_re), gem_mode, **kw
    )


def solve_meanfield_imbalanced(params: PhysParams, gem_mode: str = "broadband", **kw) -> TransferResult:
    """Transfer with ``n_re != n_em``; ``kappa`` stays matched to the emitter."""
    if not params.n_re > 0:
        raise ParameterError("receiver ion number must be positive")
    return solve_meanfield_transfer(params, gem_mode, **kw)[1]


def imbalance_curve(params: PhysParams, ratios: Sequence[float], gem_mode: str = "broadband", **kw):
    """``[(ratio, fidelity)]`` for ``n_re = ratio * n_em``."""
    out = []
    for r in ratios:
        if not r > 0:
            raise ParameterError(f"ratio must be positive, got {r!r}")
        res = solve_meanfield_imbalanced(params.replace(n_re=r * params.n_em), gem_mode, **kw)
        out.append((float(r), res.fidelity_bloch))
    return out
