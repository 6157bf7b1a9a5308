import math

import numpy as np
import pytest

from conftest import rel_l2
from gemtransfer.core import ParameterError, PhysParams
from gemtransfer.direct import emitter_efficiency, solve_single_excitation_transfer
from gemtransfer.meanfield import (
    EnsembleClasses,
    imbalance_curve,
    solve_meanfield_emitter,
    solve_meanfield_imbalanced,
    solve_meanfield_transfer,
    transfer_ensembles,
)


def test_fully_inverted_fixed_point():
    p = PhysParams.for_figure(1e4, gamma=0.0, theta0=0.0)
    rec, eta = solve_meanfield_emitter(p)
    assert np.all(rec.e_sigma_em == 1e4)
    assert np.all(rec.e_c_em == 0.0)
    assert eta == 0.0


def test_ground_state_emitter():
    rec, eta = solve_meanfield_emitter(PhysParams.for_figure(100, theta0=math.pi))
    assert math.isnan(eta)
    assert rec.e_sigma_em.max() < 1e-12 and rec.e_c_em.max() < 1e-12


def test_emitter_single_ion_matches_linear_theory():
    # for N = 1 and a weak excitation the Bloch equations are the linear amplitude equations
    from scipy.linalg import expm

    eps = 1e-3
    p = PhysParams.for_figure(1, theta0=math.pi - eps)
    rec, _ = solve_meanfield_emitter(p)
    A = np.array([[-p.gamma / 2, p.g], [-p.g, -p.kappa / 2]])
    sigma0 = rec.extras["sigma"][0]
    ref = np.array([(expm(A * t) @ np.array([sigma0, 0.0]))[1] for t in rec.times])
    assert rel_l2(rec.extras["nu"], ref) < 1e-5


def test_large_n_efficiency_golden_and_below_direct():
    eta_mf = solve_meanfield_emitter(PhysParams.for_figure(1e6))[1]
    assert eta_mf == pytest.approx(0.99952, abs=5e-4)
    for n in (2, 3):
        p = PhysParams.for_figure(n, theta0=math.pi / 2)
        assert solve_meanfield_emitter(p)[1] <= emitter_efficiency(n, p)


@pytest.mark.parametrize("mode", ["broadband", "discretized"])
def test_ground_state_transfer_is_perfect(mode):
    p = PhysParams.for_figure(1e4, theta0=math.pi)
    _, res = solve_meanfield_transfer(p, mode, m_xi=512)
    assert abs(res.fidelity_bloch - 1) < 1e-9


def test_phi_invariance():
    p = PhysParams.for_figure(1e3, t_kappa=50.0, theta0=1.2)
    ref = solve_meanfield_transfer(p)[1].fidelity_bloch
    for phi in (0.3, 2.0, 5.9):
        assert abs(solve_meanfield_transfer(p.replace(phi0=phi))[1].fidelity_bloch - ref) < 1e-10


def test_monotone_in_gamma_and_zeta():
    base = PhysParams.for_figure(1e6, t_kappa=50.0)
    f_g = [solve_meanfield_transfer(base.replace(gamma=g))[1].fidelity_bloch for g in (0.0, 0.05, 0.1, 0.2)]
    f_z = [solve_meanfield_transfer(base.replace(zeta=z))[1].fidelity_bloch for z in (0.25, 0.5, 1.0, 2.0)]
    assert all(a >= b for a, b in zip(f_g, f_g[1:]))
    assert all(a <= b for a, b in zip(f_z, f_z[1:]))


def test_energy_balance_lossless():
    p = PhysParams.for_figure(100, gamma=0.0, theta0=1.0)
    rec, _ = solve_meanfield_transfer(p, "discretized", m_xi=1024)
    e0 = rec.extras["initial_excitation"]
    assert abs(rec.total_excitation()[-1] + rec.extras["leaked"] - e0) / e0 < 1e-3


def test_mirror_symmetry_lossless():
    from gemtransfer.analysis import mirror_symmetry_defect

    p = PhysParams.for_figure(1e6, gamma=0.0, zeta=4.0, theta0=2.0)
    rec, _ = solve_meanfield_transfer(p)
    assert mirror_symmetry_defect(rec, p.t_write) < 1e-2


def test_small_amplitude_matches_single_excitation():
    p = PhysParams.for_figure(1, theta0=math.pi - 0.05, phi0=0.7)
    rec, _ = solve_meanfield_emitter(p)
    rs, _ = solve_single_excitation_transfer(p, "broadband")
    t = rs.extras["amplitude_times"]
    keep = t <= p.t_write + 1e-12
    scale = rec.extras["sigma"][0] / rs.extras["psi_sigma_em"][0]
    for mf, se in ((rec.extras["sigma"], rs.extras["psi_sigma_em"]), (rec.extras["nu"], rs.extras["psi_c_em"])):
        ref = np.interp(rec.times, t[keep], se[keep].real) + 1j * np.interp(rec.times, t[keep], se[keep].imag)
        assert rel_l2(mf / scale, ref) < 1e-2


def test_small_amplitude_memory_matches_single_excitation():
    # the stored spin wave after the read stage, both solvers in the discretized mode
    p = PhysParams.for_figure(1, theta0=math.pi - 1e-3, phi0=0.4, zeta=0.5)
    mf_rec, _ = solve_meanfield_transfer(p, "discretized", m_xi=512)
    se_rec, _ = solve_single_excitation_transfer(p, "discretized", m_xi=512)
    mf_final, se_final = mf_rec.extras["final"], se_rec.extras["final"]
    scale = (mf_final.bloch_em.x - 1j * mf_final.bloch_em.y) / 2 / se_final.psi_sigma_em
    assert rel_l2(mf_final.gem.amps / scale, se_final.psi_a) < 1e-2


def test_imbalance_peak_at_balance():
    p = PhysParams.for_figure(1e6, t_kappa=50.0, gamma=0.0)
    curve = dict(imbalance_curve(p, [0.5, 0.8, 1.0, 1.25, 1.5]))
    assert max(curve, key=curve.get) == 1.0
    assert curve[1.0] > 0.999
    assert curve[0.8] < curve[1.0] and curve[1.25] < curve[1.0]
    with pytest.raises(ParameterError):
        imbalance_curve(p, [0.0])
    res = solve_meanfield_imbalanced(p.replace(n_re=2e6))
    assert res.wall_params.n_re == 2e6 and res.wall_params.kappa == 2000.0


def test_unknown_mode_and_classes():
    with pytest.raises(ParameterError):
        solve_meanfield_transfer(PhysParams.for_figure(10), "exact")
    with pytest.raises(ParameterError):
        EnsembleClasses(np.zeros(2), np.ones(3))
    with pytest.raises(ParameterError):
        EnsembleClasses(np.zeros(1), -np.ones(1))


def test_split_classes_equal_single_class():
    p = PhysParams.for_figure(1e4, t_kappa=20.0, theta0=1.0)
    one = EnsembleClasses.homogeneous(1e4)
    two = EnsembleClasses(np.zeros(2), np.array([3e3, 7e3]))
    f1 = transfer_ensembles(p, one, one)[1].fidelity_bloch
    f2 = transfer_ensembles(p, two, two)[1].fidelity_bloch
    assert abs(f1 - f2) < 1e-12
