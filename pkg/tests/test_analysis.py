import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from gemtransfer.analysis import (
    BlochVector,
    DensityMatrix,
    TrajectoryRecord,
    TransferResult,
    average_ion_state,
    collective_emission_product,
    excitation_integral,
    fidelity_bloch,
    fidelity_uhlmann,
    format_float,
    mirror_symmetry_defect,
    superradiance_metrics,
)
from gemtransfer.core import ParameterError, PhysParams
from gemtransfer.direct import product_state

angles = st.tuples(st.floats(0, math.pi), st.floats(0, 2 * math.pi, exclude_max=True))


def test_fidelity_bloch_examples():
    x = BlochVector(1.0, 0.0, 0.0)
    assert fidelity_bloch(x, x) == 1.0
    assert fidelity_bloch(x, BlochVector(-1.0, 0.0, 0.0)) == 0.0
    assert fidelity_bloch(x, BlochVector(0.6, 0.0, 0.0)) == pytest.approx(0.8)
    with pytest.raises(ParameterError):
        fidelity_bloch(BlochVector(0.5, 0.0, 0.0), x)


def test_fidelity_uhlmann_examples():
    e = DensityMatrix(np.diag([0.0, 1.0]))
    g = DensityMatrix(np.diag([1.0, 0.0]))
    mixed = DensityMatrix(np.eye(2) / 2)
    assert fidelity_uhlmann(e, e) == pytest.approx(1.0)
    assert fidelity_uhlmann(e, g) == pytest.approx(0.0, abs=1e-12)
    assert fidelity_uhlmann(e, mixed) == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    with pytest.raises(ParameterError):
        fidelity_uhlmann(DensityMatrix(np.diag([1.5, -0.5])), e)


def _uhlmann_oracle(a, b):
    # independent route: eigen-decomposition square roots and the nuclear norm
    def sqrtm(m):
        w, v = np.linalg.eigh(m)
        return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T

    return np.linalg.norm(sqrtm(a) @ sqrtm(b), "nuc")


@settings(max_examples=60, deadline=None)
@given(angles, angles, st.floats(0, 1))
def test_uhlmann_symmetric_and_oracle(a1, a2, r):
    ra = BlochVector.from_angles(*a1).to_density()
    v = BlochVector.from_angles(*a2)
    rb = BlochVector(r * v.x, r * v.y, r * v.z).to_density()
    f = fidelity_uhlmann(ra, rb)
    assert f == pytest.approx(fidelity_uhlmann(rb, ra), abs=1e-9)
    assert f == pytest.approx(_uhlmann_oracle(ra.entries, rb.entries), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(angles, angles)
def test_pure_state_conventions_differ_by_square(a1, a2):
    b1, b2 = BlochVector.from_angles(*a1), BlochVector.from_angles(*a2)
    fu = fidelity_uhlmann(b1.to_density(), b2.to_density())
    assert fu**2 == pytest.approx(fidelity_bloch(b1, b2), abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(angles, st.floats(0, 1), angles, st.integers(0, 2**31))
def test_fidelity_bloch_rotation_invariant(a1, r, a2, seed):
    b1 = BlochVector.from_angles(*a1)
    v = BlochVector.from_angles(*a2)
    R = Rotation.random(random_state=seed).as_matrix()
    f0 = fidelity_bloch(b1, BlochVector(r * v.x, r * v.y, r * v.z))
    u, w = R @ b1.as_array(), R @ (r * v.as_array())
    f1 = fidelity_bloch(BlochVector(*u), BlochVector(*w))
    assert abs(f0 - f1) < 1e-12


def test_bloch_conventions():
    b = BlochVector.from_angles(math.pi / 2, math.pi / 2)
    np.testing.assert_allclose(b.as_array(), [0.0, -1.0, 0.0], atol=1e-15)
    assert BlochVector.from_angles(0.0, 0.0).excited == 1.0
    # state sin(t/2)|g> + cos(t/2) e^{i p}|e>, density in (|g>, |e>) order
    t, p = 1.1, 0.7
    psi = np.array([math.sin(t / 2), math.cos(t / 2) * np.exp(1j * p)])
    rho = BlochVector.from_angles(t, p).to_density().entries
    np.testing.assert_allclose(rho, np.outer(psi, psi.conj()), atol=1e-15)
    back = BlochVector.from_density(DensityMatrix(np.outer(psi, psi.conj())))
    np.testing.assert_allclose(back.as_array(), BlochVector.from_angles(t, p).as_array(), atol=1e-15)


def test_density_matrix_checks():
    with pytest.raises(ParameterError):
        DensityMatrix(np.array([[0.5, 0.1], [0.2, 0.5]])).check()
    with pytest.raises(ParameterError):
        DensityMatrix(np.diag([0.6, 0.6])).check()
    DensityMatrix.pure(np.array([1, 1j]) / math.sqrt(2)).check()


def _brute_partial_trace(rho, n, n_fock, j):
    dims = [2] * n + [n_fock]
    D = int(np.prod(dims))
    out = np.zeros((2, 2), complex)
    for a in range(D):
        ia = np.unravel_index(a, dims)
        for b in range(D):
            ib = np.unravel_index(b, dims)
            if all(ia[k] == ib[k] for k in range(n + 1) if k != j):
                out[ia[j], ib[j]] += rho[a, b]
    return out


def test_average_ion_state_against_brute_force(rng):
    n, nf = 3, 2
    psi = rng.normal(size=16) + 1j * rng.normal(size=16)
    psi /= np.linalg.norm(psi)
    rho = np.outer(psi, psi.conj())
    oracle = sum(_brute_partial_trace(rho, n, nf, j) for j in range(n)) / n
    np.testing.assert_allclose(average_ion_state(rho, n).entries, oracle, atol=1e-12)


def test_average_ion_state_examples():
    psi = product_state(3, 4, 1.0, 0.5)
    avg = average_ion_state(np.outer(psi, psi.conj()), 3, 4)
    np.testing.assert_allclose(avg.entries, BlochVector.from_angles(1.0, 0.5).to_density().entries, atol=1e-14)
    # ion 1 excited, ion 2 ground, cavity vacuum (n_fock 2): basis |ion1 ion2 cav>
    v = np.zeros(8)
    v[0b100] = 1.0
    avg = average_ion_state(np.outer(v, v), 2)
    np.testing.assert_allclose(avg.entries, np.eye(2) / 2)
    with pytest.raises(ParameterError):
        average_ion_state(np.eye(6) / 6, 2)
    with pytest.raises(ParameterError):
        average_ion_state(np.eye(8) / 8, 2, n_fock=3)


def test_superradiance_metrics():
    p_col, p_loss, r = superradiance_metrics(PhysParams(n_em=100, g=1.0, gamma=0.1, theta0=0.0))
    assert r == pytest.approx(200.0)
    assert p_col == pytest.approx(2 * 100**1.5) and p_loss == pytest.approx(10.0)
    assert superradiance_metrics(PhysParams(g=1.0, gamma=1.0))[2] == pytest.approx(2.0)
    assert superradiance_metrics(PhysParams(gamma=0.0))[2] == math.inf


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("theta", [0.0, 0.6, math.pi / 2, 2.5])
def test_collective_emission_brute_force(n, theta):
    psi = product_state(n, 2, theta, 0.3)
    sigma = np.array([[0.0, 1.0], [0.0, 0.0]])
    J = np.zeros((2**n, 2**n))
    for j in range(n):
        ops = [np.eye(2)] * n
        ops[j] = sigma
        term = ops[0]
        for o in ops[1:]:
            term = np.kron(term, o)
        J += term
    ions = psi.reshape(2**n, 2)[:, 0]
    value = np.vdot(J @ ions, J @ ions).real
    assert value == pytest.approx(collective_emission_product(n, theta), abs=1e-12)


def test_printed_angular_factor_differs_from_exact():
    # the printed cos^2(theta0) factor vanishes at pi/2 where <J^dag J> is largest
    p = PhysParams(n_em=100, theta0=math.pi / 2)
    assert superradiance_metrics(p)[0] == pytest.approx(0.0, abs=1e-9)
    assert collective_emission_product(100, math.pi / 2) > 2000


def _record(t, em, re, n=1.0):
    z = np.zeros_like(t)
    return TrajectoryRecord(t, em, z, z, z, re, z + 1, n_em=n, n_re=n)


def test_mirror_defect_examples():
    t = np.linspace(0, 2, 201)
    em = np.where(t <= 1, np.cos(t) ** 2, 0.0)
    re = np.where(t >= 1, np.cos(2 - t) ** 2, 0.0)
    assert mirror_symmetry_defect(_record(t, em, re), 1.0) < 1e-12
    assert mirror_symmetry_defect(_record(t, em, 0 * t), 1.0) == pytest.approx(1.0)
    assert mirror_symmetry_defect(_record(t, 4 * em, 0 * t, n=4.0), 1.0) == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        mirror_symmetry_defect(_record(t, em, re), 1.5)


def test_mirror_defect_fig3_single_ion_is_small_but_nonzero():
    from gemtransfer.direct import solve_single_excitation_transfer

    p = PhysParams.for_figure(1)
    rec, _ = solve_single_excitation_transfer(p, "broadband")
    d = mirror_symmetry_defect(rec, p.t_write)
    assert 1e-3 < d < 0.2


def test_trajectory_record_validation_and_concat():
    t = np.linspace(0, 1, 5)
    with pytest.raises(ParameterError):
        _record(t[::-1], t, t)
    a = _record(t, t, t)
    b = _record(t + 1, t, t)
    c = TrajectoryRecord.concat(a, b)
    assert len(c.times) == 9 and np.all(np.diff(c.times) > 0)
    assert excitation_integral(c.times, np.ones(9)) == pytest.approx(2.0)


def test_transfer_result_exports(tmp_path):
    p = PhysParams.for_figure(1)
    r = TransferResult(0.95, 0.9, p, fidelity_uhlmann=0.97, p_jump=0.05, gem_mode="discretized")
    header, row = r.to_csv(tmp_path / "r.csv").splitlines()
    assert header.split(",")[:6] == ["fidelity_bloch", "eta", "fidelity_uhlmann", "p_jump", "gem_mode", "param_g"]
    data = json.loads(r.to_json(tmp_path / "r.json"))
    assert list(data) == header.split(",")
    assert data["param_kappa"] == 2.0 and float(row.split(",")[0]) == 0.95
    partial = TransferResult(0.5, float("nan"), p)
    assert partial.to_csv().splitlines()[1].split(",")[2] == ""
    with pytest.raises(ParameterError):
        TransferResult(1.2, 0.5, p)


def test_format_float_round_trips():
    for v in (0.1, 1 / 3, 1e-300, 123456789.123, np.float64(2.5)):
        assert float(format_float(v)) == float(v)
    assert format_float(np.float64(0.1)) == "0.1"
