"""Exact solvers: single-excitation cascaded transfer and small-N master equation.

Single-excitation amplitudes (emitter ``em``, memory ``a(xi)``, receiver
``re``; ``psi0`` is the vacuum amplitude and stays constant)::

    d psi_sigma_em = g psi_c_em - gamma psi_sigma_em / 2
    d psi_c_em     = -g psi_sigma_em - kappa psi_c_em / 2
    d a(xi)        = -i s xi a - zeta int^xi a - sqrt(zeta) sqrt(kappa) psi_c_em
    d psi_c_re     = g psi_sigma_re - kappa psi_c_re / 2 - sqrt(kappa) b_re
    d psi_sigma_re = -g psi_c_re - gamma psi_sigma_re / 2

with ``b_re = S_PP(t) * (sqrt(zeta) int a + sqrt(kappa) psi_c_em)``. The
receiver coupling has the opposite sign to the emitter's (its Hamiltonian is
the time reverse of the emitter's).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import kernels
from .analysis import (
    BlochVector,
    DensityMatrix,
    TRAJECTORY_COLUMNS,
    TrajectoryRecord,
    TransferResult,
    fidelity_bloch,
    fidelity_uhlmann,
)
from .core import (
    IntegrationError,
    ParameterError,
    PhysParams,
    default_dt,
    integrate_fixed_rk4,
    trapezoid,
)
from .gem import broadband_factor, chi, default_xi_grid, phase_plate

__all__ = [
    "DensityMatrix",
    "SingleExcitationState",
    "TruncationError",
    "EmitterLiouvillian",
    "EmitterRun",
    "solve_single_excitation_transfer",
    "build_emitter_liouvillian",
    "solve_emitter_master",
    "emitter_efficiency",
    "product_state",
]

NORM_SLACK = 1e-6


class TruncationError(IntegrationError):
    """Cavity Fock truncation is too small; rerun with a larger ``n_fock``."""


@dataclass(frozen=True)
class SingleExcitationState:
    psi0: complex
    psi_sigma_em: complex
    psi_c_em: complex
    psi_c_re: complex
    psi_sigma_re: complex
    psi_a: Optional[np.ndarray] = field(default=None, repr=False)
    xi_spacing: float = 0.0

    def norm2(self) -> float:
        n = sum(abs(v) ** 2 for v in (self.psi0, self.psi_sigma_em, self.psi_c_em, self.psi_c_re, self.psi_sigma_re))
        if self.psi_a is not None:
            n += self.xi_spacing * float(np.sum(np.abs(self.psi_a) ** 2))
        return n

    def receiver_state(self) -> DensityMatrix:
        """Receiver reduced state; lost (jumped) population is ground-state weight."""
        ee = abs(self.psi_sigma_re) ** 2
        coh = self.psi_sigma_re * np.conj(self.psi0)
        return DensityMatrix(np.array([[1 - ee, np.conj(coh)], [coh, ee]]))


# state layout: [sigma_em, c_em, (a...), c_re, sigma_re, leak, emitted]
# the last two entries accumulate int |b_leak|^2 and int kappa |c_em|^2.


def _observe_factory(m_gem: int, h: float, psi0: complex, dense: bool, amps: list):
    p0 = abs(psi0) ** 2

    def observe(t, y):
        amps.append((t, y[0], y[1], y[m_gem + 2], y[m_gem + 3]))
        s_em, c_em, c_re, s_re = abs(y[0]) ** 2, abs(y[1]) ** 2, abs(y[m_gem + 2]) ** 2, abs(y[m_gem + 3]) ** 2
        e_gem = h * float(np.sum(np.abs(y[2 : 2 + m_gem]) ** 2)) if m_gem else 0.0
        row = [s_em, c_em, e_gem, c_re, s_re, p0 + s_em + c_em + e_gem + c_re + s_re]
        if dense:
            row.extend(np.abs(y[2 : 2 + m_gem]) ** 2)
        return row

    return observe


def _record(traj, dense: bool, xi=None) -> TrajectoryRecord:
    obs = np.asarray(traj.observed, float)
    return TrajectoryRecord(
        traj.times, *(obs[:, k] for k in range(6)),
        xi=xi if dense else None,
        e_gem_dense=obs[:, 6:] if dense else None,
    )


def solve_single_excitation_transfer(
    params: PhysParams,
    gem_mode: str = "broadband",
    dt: Optional[float] = None,
    m_xi: Optional[int] = None,
    every: int = 1,
    dense: bool = False,
):
    """One deterministic run of the truncated cascaded wavefunction.

    Write stage ``[0, T]`` with gradient ``s = +1``; read stage ``[T, 2T]``
    with ``s = -1`` and the phase plate on the memory output. In
    ``broadband`` mode the memory is replaced by the ideal echo of the
    recorded emitter output. Returns ``(TrajectoryRecord, TransferResult)``;
    the result carries both fidelity conventions and ``p_jump``.
    """
    if params.n_em != 1 or params.n_re != 1:
        raise ParameterError("single-excitation solver needs n_em = n_re = 1")
    if gem_mode not in ("broadband", "discretized"):
        raise ParameterError(f"unknown gem_mode {gem_mode!r}")
    g, gamma, kappa, zeta = params.g, params.gamma, params.kappa, params.zeta
    T, xi_max = params.t_write, params.xi_max
    if gem_mode == "discretized":
        params.check_broadband()
    dt = dt or default_dt(kappa, xi_max, g)
    n_read = max(1, math.ceil(T / dt - 1e-9))
    h_read = T / n_read

    psi0 = math.sin(params.theta0 / 2)
    y0_em = math.cos(params.theta0 / 2) * np.exp(1j * params.phi0)
    rk = math.sqrt(kappa)

    if gem_mode == "discretized":
        grid = default_xi_grid(xi_max, 2 * T, m_xi)
        m, h, xi = grid.m, grid.spacing, grid.points
    else:
        grid, m, h, xi = None, 0, 0.0, None
    rz = math.sqrt(zeta)
    buf = np.empty(m, complex)
    amps = []
    observe = _observe_factory(m, h, psi0, dense and m > 0, amps)

    # the memory is carried in the frame rotating with the gradient since t0
    def make_rhs(s, drive_re, plate, t0=0.0):
        def rhs(t, y):
            d = np.empty_like(y)
            s_em, c_em, c_re, s_re = y[0], y[1], y[m + 2], y[m + 3]
            u = rk * c_em
            d[0] = g * c_em - 0.5 * gamma * s_em
            d[1] = -g * s_em - 0.5 * kappa * c_em
            if m:
                total = kernels.gem_rhs(y[2 : 2 + m], xi, s, t - t0, zeta, h, u, buf)
                d[2 : 2 + m] = buf
                b = (rz * h * total + u) * plate(t)
            else:
                b = drive_re(t)
            d[m + 2] = g * s_re - 0.5 * kappa * c_re - rk * b
            d[m + 3] = -g * c_re - 0.5 * gamma * s_re
            d[m + 4] = abs(rk * c_re + b) ** 2
            d[m + 5] = kappa * abs(c_em) ** 2
            return d

        return rhs

    y0 = np.zeros(m + 6, complex)
    y0[0] = y0_em
    no_drive = lambda t: 0.0  # noqa: E731
    transparent = lambda t: 1.0  # noqa: E731

    if gem_mode == "broadband":
        # write stage at half the read step so reversed samples hit RK4 stages
        emitted = []

        def observe_w(t, y):
            emitted.append(rk * y[1])
            return observe(t, y)

        tr_w = integrate_fixed_rk4(y0, make_rhs(1.0, no_drive, transparent), (0.0, T), h_read / 2, observe_w, 1)
        echo = -broadband_factor(zeta) * np.asarray(emitted)[::-1]

        def drive_re(t):
            return echo[int(round((t - T) / (0.5 * h_read)))]

        rec_w = _record(tr_w, False)
        idx = np.arange(0, len(tr_w.times), 2 * every)
        if idx[-1] != len(tr_w.times) - 1:
            idx = np.append(idx, len(tr_w.times) - 1)
        rec_w = TrajectoryRecord(rec_w.times[idx], *(getattr(rec_w, c)[idx] for c in TRAJECTORY_COLUMNS))
        tr_r = integrate_fixed_rk4(tr_w.final, make_rhs(-1.0, drive_re, transparent), (T, 2 * T), h_read, observe, every)
        rec = TrajectoryRecord.concat(rec_w, _record(tr_r, False))
    else:
        chi_arg = chi(zeta).arg
        clamp = 0.5 * h_read

        def plate(t):
            return complex(phase_plate(t - T, T, zeta, xi_max, chi_arg, clamp))

        tr_w = integrate_fixed_rk4(y0, make_rhs(1.0, None, transparent), (0.0, T), h_read, observe, every)
        y_mid = tr_w.final.copy()
        y_mid[2 : 2 + m] *= np.exp(-1j * xi * T)
        tr_r = integrate_fixed_rk4(y_mid, make_rhs(-1.0, None, plate, T), (T, 2 * T), h_read, observe, every)
        rec = TrajectoryRecord.concat(_record(tr_w, dense, xi), _record(tr_r, dense, xi))

    yf = tr_r.final.copy()
    if m:
        yf[2 : 2 + m] *= np.exp(1j * xi * T)
    final = SingleExcitationState(psi0, yf[0], yf[1], yf[m + 2], yf[m + 3],
                                  yf[2 : 2 + m] if m else None, h)
    norm2 = final.norm2()
    if norm2 > 1 + NORM_SLACK or np.max(rec.norm) > 1 + NORM_SLACK:
        raise IntegrationError(f"wavefunction norm grew to {max(norm2, rec.norm.max()):.9g}")

    rho_re = final.receiver_state()
    em0 = BlochVector.from_angles(params.theta0, params.phi0)
    psi_init = np.array([psi0, y0_em])
    excited = abs(y0_em) ** 2
    emitted_total = tr_w.final[m + 5].real
    eta = emitted_total / excited if excited > 0 else float("nan")
    result = TransferResult(
        fidelity_bloch=fidelity_bloch(em0, BlochVector.from_density(rho_re)),
        fidelity_uhlmann=fidelity_uhlmann(DensityMatrix.pure(psi_init), rho_re),
        eta=eta,
        p_jump=max(0.0, 1.0 - norm2),
        wall_params=params,
        gem_mode=gem_mode,
    )
    amps = np.array(sorted(dict((a[0], a) for a in amps).values(), key=lambda a: a[0].real))
    rec.extras.update(
        leaked=float(yf[m + 4].real),
        final=final,
        amplitude_times=amps[:, 0].real,
        psi_sigma_em=amps[:, 1],
        psi_c_em=amps[:, 2],
        psi_c_re=amps[:, 3],
        psi_sigma_re=amps[:, 4],
    )
    return rec, result


# --- master equation -------------------------------------------------------


def _ion_op(op, j, n):
    mats = [sp.identity(2, format="csr")] * n
    mats[j] = sp.csr_matrix(op)
    out = mats[0]
    for mat in mats[1:]:
        out = sp.kron(out, mat, format="csr")
    return out


@dataclass
class EmitterLiouvillian:
    """Lindblad generator of ``n`` ions in one cavity.

    ``H = -i s g (J c^dag - J^dag c)``, jumps ``sqrt(kappa) c`` and
    ``sqrt(gamma) sigma_j``. Layout ``ion_1 x ... x ion_n x cavity`` with
    ion basis ``(|g>, |e>)``.
    """

    n: int
    n_fock: int
    hamiltonian: sp.csr_matrix
    jumps: list
    excitation: np.ndarray
    cavity_level: np.ndarray

    def __post_init__(self):
        heff = self.hamiltonian.astype(complex)
        for L in self.jumps:
            heff = heff - 0.5j * (L.conj().T @ L)
        self.heff = sp.csr_matrix(heff)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def apply(self, rho) -> np.ndarray:
        """``d rho / dt`` for a dense matrix ``rho``."""
        rho = np.asarray(rho, complex)
        rho_h = rho.conj().T
        out = -1j * (self.heff @ rho) + 1j * (self.heff @ rho_h).conj().T
        for L in self.jumps:
            out += L @ (L @ rho_h).conj().T
        return out

    def sectors(self, top: int):
        """Basis indices grouped by total excitation number ``0..top``."""
        return [np.flatnonzero(self.excitation == k) for k in range(top + 1)]


def build_emitter_liouvillian(n: int, n_fock: Optional[int], params: PhysParams, s: int = 1) -> EmitterLiouvillian:
    if not 1 <= n <= 7 or int(n) != n:
        raise ParameterError("master equation supports 1 <= n <= 7 ions")
    n = int(n)
    n_fock = n + 2 if n_fock is None else int(n_fock)
    if n_fock < 2:
        raise ParameterError("n_fock must be at least 2")
    sigma = np.array([[0.0, 1.0], [0.0, 0.0]])
    a = sp.diags(np.sqrt(np.arange(1, n_fock)), 1, format="csr")
    i_c = sp.identity(n_fock, format="csr")
    c = sp.kron(sp.identity(2**n, format="csr"), a, format="csr")
    sig = [sp.kron(_ion_op(sigma, j, n), i_c, format="csr") for j in range(n)]
    J = sum(sig[1:], sig[0])
    H = -1j * s * params.g * (J @ c.conj().T - J.conj().T @ c)
    jumps = []
    if params.kappa > 0:
        jumps.append(math.sqrt(params.kappa) * c)
    if params.gamma > 0:
        jumps.extend(math.sqrt(params.gamma) * sj for sj in sig)
    ions = np.array([bin(k).count("1") for k in range(2**n)])
    level = np.tile(np.arange(n_fock), 2**n)
    excitation = np.repeat(ions, n_fock) + level
    return EmitterLiouvillian(n, n_fock, sp.csr_matrix(H), [sp.csr_matrix(L) for L in jumps], excitation, level)


def product_state(n: int, n_fock: int, theta0: float, phi0: float) -> np.ndarray:
    ion = np.array([math.sin(theta0 / 2), math.cos(theta0 / 2) * np.exp(1j * phi0)])
    psi = np.ones(1, complex)
    for _ in range(n):
        psi = np.kron(psi, ion)
    vac = np.zeros(n_fock)
    vac[0] = 1
    return np.kron(psi, vac)


@dataclass(frozen=True)
class EmitterRun:
    times: np.ndarray
    cavity: np.ndarray
    ions: np.ndarray
    trace: np.ndarray
    hermiticity: float
    eta: float
    rho_final: Optional[np.ndarray] = None


def solve_emitter_master(
    n: int,
    params: PhysParams,
    t_final: Optional[float] = None,
    n_fock: Optional[int] = None,
    method: str = "blocks",
    dt: Optional[float] = None,
    every: int = 1,
) -> EmitterRun:
    """Emitter-only master equation from the product state, cavity in vacuum.

    ``method="full"`` evolves the whole density matrix (reference);
    ``"blocks"`` evolves only the blocks diagonal in total excitation
    number, which is all ``<c^dag c>`` and the ion populations need: the
    Hamiltonian conserves that number and every jump lowers it by one, so
    the diagonal blocks never feed on the coherences between sectors.
    """
    gen = build_emitter_liouvillian(n, n_fock, params)
    t_final = params.t_write if t_final is None else t_final
    dt = dt or default_dt(params.kappa, 2 * params.g * math.sqrt(n), params.gamma)
    psi = product_state(n, gen.n_fock, params.theta0, params.phi0)
    top = gen.n_fock - 1
    nc = gen.cavity_level.astype(float)
    n_ion = (gen.excitation - gen.cavity_level).astype(float)
    tracked = {}

    if method == "full":
        D = gen.dim
        heff = gen.heff.toarray()
        Ls = [L.toarray() for L in gen.jumps]

        def rhs(t, y):
            rho = y.reshape(D, D)
            a = heff @ rho
            out = -1j * a + 1j * (rho @ heff.conj().T)
            for L in Ls:
                out += L @ rho @ L.conj().T
            return out.ravel()

        def observe(t, y):
            rho = y.reshape(D, D)
            d = np.diag(rho).real
            herm = float(np.max(np.abs(rho - rho.conj().T)))
            tracked["herm"] = max(tracked.get("herm", 0.0), herm)
            return [d @ nc, d @ n_ion, d.sum(), d[gen.cavity_level == top].sum()]

        y0 = np.outer(psi, psi.conj()).ravel()
    elif method == "blocks":
        sectors = gen.sectors(n)
        heff = gen.heff
        blocks_h = [heff[idx][:, idx].toarray() for idx in sectors]
        blocks_l = [[L[sectors[k]][:, sectors[k + 1]].toarray() for L in gen.jumps] for k in range(n)]
        sizes = [len(idx) for idx in sectors]
        offsets = np.concatenate([[0], np.cumsum([q * q for q in sizes])])
        nc_b = [nc[idx] for idx in sectors]
        ni_b = [n_ion[idx] for idx in sectors]
        top_b = [gen.cavity_level[idx] == top for idx in sectors]

        def unpack(y):
            return [y[offsets[k] : offsets[k + 1]].reshape(sizes[k], sizes[k]) for k in range(len(sizes))]

        def rhs(t, y):
            rs = unpack(y)
            out = np.empty_like(y)
            for k, r in enumerate(rs):
                hk = blocks_h[k]
                d = -1j * (hk @ r) + 1j * (r @ hk.conj().T)
                if k < n:
                    r_up = rs[k + 1]
                    for L in blocks_l[k]:
                        d += L @ r_up @ L.conj().T
                out[offsets[k] : offsets[k + 1]] = d.ravel()
            return out

        def observe(t, y):
            cav = ion = tr = lk = 0.0
            herm = 0.0
            for k, r in enumerate(unpack(y)):
                d = np.diag(r).real
                cav += d @ nc_b[k]
                ion += d @ ni_b[k]
                tr += d.sum()
                lk += d[top_b[k]].sum()
                herm = max(herm, float(np.max(np.abs(r - r.conj().T))))
            tracked["herm"] = max(tracked.get("herm", 0.0), herm)
            return [cav, ion, tr, lk]

        y0 = np.concatenate([np.outer(psi[idx], psi[idx].conj()).ravel() for idx in sectors])
    else:
        raise ParameterError(f"unknown method {method!r}")

    traj = integrate_fixed_rk4(y0, rhs, (0.0, t_final), dt, observe, every)
    obs = np.asarray(traj.observed)
    if np.max(obs[:, 3]) > 1e-6:
        raise TruncationError(
            f"cavity level {top} reached population {np.max(obs[:, 3]):.3g}; increase n_fock above {gen.n_fock}"
        )
    excited = n * math.cos(params.theta0 / 2) ** 2
    out_energy = params.kappa * trapezoid(obs[:, 0], x=traj.times)
    eta = out_energy / excited if excited > 0 else float("nan")
    rho_final = traj.final.reshape(gen.dim, gen.dim) if method == "full" else None
    return EmitterRun(traj.times, obs[:, 0], obs[:, 1], obs[:, 2], tracked.get("herm", 0.0), float(eta), rho_final)


def emitter_efficiency(n: int, params: PhysParams, t_final: Optional[float] = None, **kw) -> float:
    """``eta = int_0^T kappa <c^dag c> dt / (n cos^2(theta0/2))``."""
    return solve_emitter_master(n, params, t_final, **kw).eta
