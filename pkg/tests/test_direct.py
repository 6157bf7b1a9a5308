import math

import numpy as np
import pytest

from gemtransfer.analysis import BlochVector, average_ion_state, fidelity_bloch
from gemtransfer.core import ParameterError, PhysParams
from gemtransfer.direct import (
    TruncationError,
    build_emitter_liouvillian,
    emitter_efficiency,
    product_state,
    solve_emitter_master,
    solve_single_excitation_transfer,
)


def random_density(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


# --- master equation -------------------------------------------------------


def test_rabi_oscillation():
    p = PhysParams(gamma=0.0, kappa=0.0, t_write=1.0, theta0=0.0)
    run = solve_emitter_master(1, p, t_final=2 * math.pi, method="full", dt=1e-3)
    np.testing.assert_allclose(run.ions, np.cos(run.times) ** 2, atol=1e-6)
    np.testing.assert_allclose(run.cavity, np.sin(run.times) ** 2, atol=1e-6)
    # full amplitude period 2 pi / g: back to the initial state
    psi = product_state(1, 3, 0.0, 0.0)
    assert np.abs(run.rho_final - np.outer(psi, psi.conj())).max() < 1e-6


def test_dark_state_is_stationary():
    for n in (1, 3):
        gen = build_emitter_liouvillian(n, None, PhysParams.for_figure(n))
        psi = product_state(n, gen.n_fock, math.pi, 0.0)
        assert np.abs(gen.apply(np.outer(psi, psi.conj()))).max() < 1e-14


def test_generator_preserves_trace_and_hermiticity(rng):
    gen = build_emitter_liouvillian(3, None, PhysParams.for_figure(3))
    for _ in range(3):
        d = gen.apply(random_density(gen.dim, rng))
        assert abs(np.trace(d)) < 1e-12
        assert np.abs(d - d.conj().T).max() < 1e-12


def test_generator_against_dense_lindblad(rng):
    p = PhysParams.for_figure(2, gamma=0.3)
    gen = build_emitter_liouvillian(2, 3, p)
    H = gen.hamiltonian.toarray()
    Ls = [L.toarray() for L in gen.jumps]
    rho = random_density(gen.dim, rng)
    ref = -1j * (H @ rho - rho @ H)
    for L in Ls:
        LdL = L.conj().T @ L
        ref += L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL)
    np.testing.assert_allclose(gen.apply(rho), ref, atol=1e-13)


def test_builder_limits():
    p = PhysParams.for_figure(1)
    for n in (0, 8, 2.5):
        with pytest.raises(ParameterError):
            build_emitter_liouvillian(n, None, p)
    with pytest.raises(ParameterError):
        build_emitter_liouvillian(2, 1, p)
    assert build_emitter_liouvillian(3, None, p).n_fock == 5


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_blocks_match_full_tensor(n):
    p = PhysParams.for_figure(n, theta0=1.1, phi0=0.4)
    full = solve_emitter_master(n, p, method="full")
    blocks = solve_emitter_master(n, p)
    assert np.abs(full.cavity - blocks.cavity).max() < 1e-8
    assert np.abs(full.ions - blocks.ions).max() < 1e-8
    assert full.eta == pytest.approx(blocks.eta, abs=1e-8)
    assert np.abs(full.trace - 1).max() < 1e-8
    assert full.hermiticity < 1e-10


def test_permutation_symmetry():
    p = PhysParams.for_figure(3, theta0=0.9, phi0=1.3)
    for t_final in (0.2, 0.6, p.t_write):
        rho = solve_emitter_master(3, p, t_final=t_final, method="full").rho_final
        diag = np.diag(rho).real.reshape(2, 2, 2, 5)
        pops = [diag.take(1, axis=j).sum() for j in range(3)]
        assert min(pops) > 0.01
        assert max(pops) - min(pops) < 1e-10


def test_truncation_error():
    p = PhysParams.for_figure(3, theta0=0.0)
    with pytest.raises(TruncationError):
        solve_emitter_master(3, p, n_fock=2)


def test_unknown_method():
    with pytest.raises(ParameterError):
        solve_emitter_master(1, PhysParams.for_figure(1), method="dicke")


@pytest.mark.parametrize("n, theta", [(1, math.pi / 2), (2, math.pi / 4), (2, 2.5)])
def test_lossless_efficiency_tends_to_one(n, theta):
    p = PhysParams.for_figure(n, gamma=0.0, theta0=theta)
    eta = emitter_efficiency(n, p, t_final=300.0 / p.kappa)
    assert eta == pytest.approx(1.0, abs=1e-4)


def test_efficiency_golden_value():
    # archived from this solver at the fig2 parameters
    assert emitter_efficiency(1, PhysParams.for_figure(1)) == pytest.approx(0.90701, abs=1e-5)


def test_efficiency_dip():
    etas = [emitter_efficiency(n, PhysParams.for_figure(n, theta0=math.pi / 4)) for n in (1, 2)]
    assert etas[1] < etas[0]


def test_efficiency_matches_single_emitter_closed_form():
    # n = 1 emitter only: linear amplitudes, so eta = int kappa |c|^2 / |e|^2 from the 2x2 ODE
    from scipy.linalg import expm

    g, gamma, kappa = 1.0, 0.1, 2.0
    A = np.array([[-gamma / 2, g], [-g, -kappa / 2]])
    T = 10.0
    ts = np.linspace(0, T, 20001)
    c = np.array([expm(A * t)[1, 0] for t in ts])
    oracle = np.trapezoid(kappa * np.abs(c) ** 2, ts)
    p = PhysParams.for_figure(1, theta0=0.0)
    assert emitter_efficiency(1, p) == pytest.approx(oracle, abs=1e-6)


# --- single-excitation transfer ----------------------------------------------


@pytest.mark.parametrize("mode", ["broadband", "discretized"])
def test_ground_state_transfers_perfectly(mode):
    p = PhysParams.for_figure(1, theta0=math.pi, gamma=0.3, zeta=0.5)
    _, res = solve_single_excitation_transfer(p, mode, m_xi=512)
    assert res.fidelity_bloch == pytest.approx(1.0, abs=1e-12)
    assert res.fidelity_uhlmann == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("mode", ["broadband", "discretized"])
def test_lossless_deep_memory_transfer(mode):
    # at the default 10 kappa band the discretized run reaches 0.99899; 20 kappa gives 0.99977
    p = PhysParams.for_figure(1, t_kappa=50.0, gamma=0.0, zeta=4.0)
    if mode == "discretized":
        p = PhysParams.for_figure(1, t_kappa=50.0, gamma=0.0, zeta=4.0, xi_max=20 * p.kappa)
    _, res = solve_single_excitation_transfer(p, mode)
    assert res.fidelity_bloch > 0.999


def test_norm_non_increasing_and_balance():
    p = PhysParams.for_figure(1, gamma=0.0, zeta=2.0)
    rec, res = solve_single_excitation_transfer(p, "discretized", m_xi=1024)
    assert np.diff(rec.norm).max() <= 1e-10
    assert abs(rec.norm[-1] + rec.extras["leaked"] - 1) < 1e-3
    assert res.p_jump == pytest.approx(1 - rec.norm[-1], abs=1e-9)


def test_fidelity_conventions_and_receiver_state():
    p = PhysParams.for_figure(1)
    rec, res = solve_single_excitation_transfer(p, "broadband")
    final = rec.extras["final"]
    rho = final.receiver_state()
    rho.check()
    b = BlochVector.from_density(rho)
    assert res.fidelity_bloch == pytest.approx(fidelity_bloch(BlochVector.from_angles(p.theta0, p.phi0), b), abs=1e-14)
    assert 0.9 < res.fidelity_bloch < 1 and 0.9 < res.fidelity_uhlmann < 1
    assert res.eta == pytest.approx(emitter_efficiency(1, p), abs=2e-3)


def test_amplitudes_follow_closed_form_write_stage():
    # before T the emitter sector is the free 2x2 linear system
    from scipy.linalg import expm

    p = PhysParams.for_figure(1, theta0=0.7, phi0=0.3)
    rec, _ = solve_single_excitation_transfer(p, "broadband")
    A = np.array([[-p.gamma / 2, p.g], [-p.g, -p.kappa / 2]])
    v0 = np.array([math.cos(0.35) * np.exp(0.3j), 0.0])
    t = rec.extras["amplitude_times"]
    for k in np.linspace(0, np.searchsorted(t, p.t_write) - 1, 7).astype(int):
        v = expm(A * t[k]) @ v0
        assert abs(rec.extras["psi_sigma_em"][k] - v[0]) < 1e-9
        assert abs(rec.extras["psi_c_em"][k] - v[1]) < 1e-9


def test_single_excitation_rejects():
    with pytest.raises(ParameterError):
        solve_single_excitation_transfer(PhysParams.for_figure(2), "broadband")
    with pytest.raises(ParameterError):
        solve_single_excitation_transfer(PhysParams.for_figure(1), "spatial")
    with pytest.raises(ParameterError):
        solve_single_excitation_transfer(PhysParams.for_figure(1, xi_max=5.0), "discretized")


def test_trajectory_csv_and_dense_dump():
    p = PhysParams.for_figure(1, t_kappa=5.0)
    rec, _ = solve_single_excitation_transfer(p, "discretized", m_xi=64, every=10, dense=True)
    text = rec.to_csv()
    assert text.splitlines()[0] == "t,E_sigma_em,E_c_em,E_gem_total,E_c_re,E_sigma_re,norm"
    dense = rec.dense_csv("gem").splitlines()
    assert dense[0] == "t,xi,value" and len(dense) == 1 + 64 * len(rec.times)
    assert rec.e_gem_dense.sum(axis=1) * (rec.xi[1] - rec.xi[0]) == pytest.approx(rec.e_gem_total)


def test_average_ion_state_of_master_run_is_valid():
    p = PhysParams.for_figure(2, theta0=1.0)
    run = solve_emitter_master(2, p, method="full")
    avg = average_ion_state(run.rho_final, 2)
    avg.check()
    assert avg.entries[1, 1].real == pytest.approx(run.ions[-1] / 2, abs=1e-12)
