"""Invariant suite behind ``gemtransfer selftest``.

Each check returns a measured deviation and the tolerance it must stay
under. The Lanczos table is looked up at call time, so replacing
``gem.LANCZOS_COEFFICIENTS`` (fault injection in the tests) is seen here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels_py, gem, kernels
from .core import Grid1D, PhysParams, integrate_fixed_rk4


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)


def _gamma_identity():
    worst = 0.0
    for y in (0.1, 0.5, 1.0, 2.0, 5.0, 10.0):
        lg = gem.complex_log_gamma(1 + 1j * y, gem.LANCZOS_COEFFICIENTS)
        worst = max(worst, abs(math.exp(2 * lg.real) * math.sinh(math.pi * y) / (math.pi * y) - 1))
    return worst


def _gamma_integers():
    return max(abs(gem.complex_log_gamma(k, gem.LANCZOS_COEFFICIENTS) - math.lgamma(k)) for k in (1, 2, 5, 10))


def _chi_identity():
    worst = 0.0
    for z in (0.5, 1.0, 2.0, 4.0):
        c = gem.chi(z, gem.LANCZOS_COEFFICIENTS)
        worst = max(worst, abs(c.modulus_squared * 2 * math.pi + math.exp(-2 * math.pi * z) - 1))
    return worst


def _kernel_agreement():
    rng = np.random.default_rng(7)
    m = 257
    a = rng.normal(size=m) + 1j * rng.normal(size=m)
    xi = Grid1D.symmetric(3.0, m).points
    o1, o2 = np.empty(m, complex), np.empty(m, complex)
    s1 = kernels.gem_rhs(a, xi, -1.0, 0.4, 2.0, xi[1] - xi[0], 0.3 - 0.2j, o1)
    s2 = _kernels_py.gem_rhs(a, xi, -1.0, 0.4, 2.0, xi[1] - xi[0], 0.3 - 0.2j, o2)
    worst = max(float(np.max(np.abs(o1 - o2))), abs(s1 - s2) / m)
    x, y, z = rng.normal(size=(3, m))
    w = rng.random(m)
    outs = [[np.empty(m) for _ in range(3)] for _ in range(2)]
    p1 = kernels.bloch_rhs(x, y, z, xi, w, 0.7, 0.1, 0.4 + 0.9j, *outs[0])
    p2 = _kernels_py.bloch_rhs(x, y, z, xi, w, 0.7, 0.1, 0.4 + 0.9j, *outs[1])
    worst = max(worst, abs(p1 - p2), *(float(np.max(np.abs(u - v))) for u, v in zip(*outs)))
    return worst


def _rk4_exponential():
    tr = integrate_fixed_rk4([1.0], lambda t, y: -y, (0.0, 1.0), 1e-3)
    return abs(tr.final[0].real - math.exp(-1))


def _rk4_order():
    errs = [abs(integrate_fixed_rk4([1.0], lambda t, y: -y, (0.0, 1.0), h).final[0] - math.exp(-1)) for h in (0.1, 0.05)]
    # passes when the halving ratio is at least 14
    return 14.0 / (errs[0] / errs[1])


def _gem_free_rotation():
    grid = Grid1D.symmetric(20.0, 513)
    rng = np.random.default_rng(3)
    field = gem.GemField(grid, rng.normal(size=513) + 1j * rng.normal(size=513))
    e0 = field.excitation()
    for _ in range(100):
        field, _ = gem.gem_step(field, 0.0, 0.0, 0.0025)
    return abs(field.excitation() - e0) / e0 / 0.25


def _master_run():
    from .direct import solve_emitter_master

    p = PhysParams.for_figure(2, theta0=1.1, phi0=0.4)
    full = solve_emitter_master(2, p, method="full")
    blocks = solve_emitter_master(2, p)
    return (
        float(np.max(np.abs(full.trace - 1))),
        full.hermiticity,
        float(np.max(np.abs(full.cavity - blocks.cavity))),
    )


def _single_excitation():
    from .direct import solve_single_excitation_transfer

    p = PhysParams.for_figure(1, gamma=0.0, zeta=2.0)
    rec, _ = solve_single_excitation_transfer(p, "discretized", m_xi=1024)
    rise = float(max(0.0, np.max(np.diff(rec.norm))))
    balance = abs(rec.norm[-1] + rec.extras["leaked"] - 1)
    return rise, balance


def _meanfield_balance():
    from .meanfield import solve_meanfield_transfer

    p = PhysParams.for_figure(100, gamma=0.0, theta0=1.0)
    rec, _ = solve_meanfield_transfer(p, "discretized", m_xi=1024)
    e0 = rec.extras["initial_excitation"]
    return abs(rec.total_excitation()[-1] + rec.extras["leaked"] - e0) / e0


def _small_amplitude():
    from .direct import solve_single_excitation_transfer
    from .meanfield import solve_meanfield_emitter

    p = PhysParams.for_figure(1, theta0=math.pi - 0.05, phi0=0.7)
    rec, _ = solve_meanfield_emitter(p)
    rs, _ = solve_single_excitation_transfer(p, "broadband")
    t = rs.extras["amplitude_times"]
    keep = t <= p.t_write + 1e-12
    worst = 0.0
    scale = rec.extras["sigma"][0] / rs.extras["psi_sigma_em"][0]
    for mf, se in ((rec.extras["sigma"], rs.extras["psi_sigma_em"]), (rec.extras["nu"], rs.extras["psi_c_em"])):
        ref = np.interp(rec.times, t[keep], se[keep].real) + 1j * np.interp(rec.times, t[keep], se[keep].imag)
        worst = max(worst, float(np.linalg.norm(mf / scale - ref) / np.linalg.norm(ref)))
    return worst


def _mirror():
    from .analysis import mirror_symmetry_defect
    from .meanfield import solve_meanfield_transfer

    p = PhysParams.for_figure(1e6, gamma=0.0, zeta=4.0)
    rec, _ = solve_meanfield_transfer(p, "broadband")
    return mirror_symmetry_defect(rec, p.t_write)


def run_selftest() -> list:
    checks = [
        Check("gamma |G(1+iy)|^2 identity", _gamma_identity(), 1e-10),
        Check("gamma at integers", _gamma_integers(), 1e-12),
        Check("chi modulus identity", _chi_identity(), 1e-10),
        Check(f"kernel backend agreement ({kernels.BACKEND})", _kernel_agreement(), 1e-12),
        Check("rk4 exponential decay", _rk4_exponential(), 1e-10),
        Check("rk4 order (14 / halving ratio)", _rk4_order(), 1.0),
        Check("gem free rotation (per unit time)", _gem_free_rotation(), 1e-9),
    ]
    trace, herm, blocks = _master_run()
    checks += [
        Check("master trace drift", trace, 1e-8),
        Check("master hermiticity", herm, 1e-10),
        Check("master blocks vs full tensor", blocks, 1e-8),
    ]
    rise, balance = _single_excitation()
    checks += [
        Check("single-excitation norm increase per step", rise, 1e-10),
        Check("single-excitation lossless balance", balance, 1e-3),
        Check("mean-field lossless balance", _meanfield_balance(), 1e-3),
        Check("mean-field vs single-excitation amplitudes", _small_amplitude(), 1e-2),
        Check("mirror symmetry defect", _mirror(), 1e-2),
    ]
    return checks


def format_report(checks) -> str:
    width = max(len(c.name) for c in checks)
    lines = [f"{'check'.ljust(width)}  {'value':>10}  {'tolerance':>9}  result"]
    for c in checks:
        lines.append(f"{c.name.ljust(width)}  {c.value:10.3e}  {c.tolerance:9.1e}  {'PASS' if c.passed else 'FAIL'}")
    failed = sum(not c.passed for c in checks)
    lines.append(f"{len(checks) - failed}/{len(checks)} checks passed")
    return "\n".join(lines) + "\n"
