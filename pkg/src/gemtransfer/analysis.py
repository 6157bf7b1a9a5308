"""Figures of merit and trajectory records shared by all solvers.

Two-level convention used throughout: basis ``(|g>, |e>)``, lowering
operator ``sigma = |g><e|`` and ``<sigma> = (x - i y) / 2``, so ``z = +1``
is the excited pole. The state ``sin(theta/2)|g> + cos(theta/2) e^{i phi}|e>``
has Bloch vector ``(sin theta cos phi, -sin theta sin phi, cos theta)``.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import ParameterError, PhysParams, trapezoid

__all__ = [
    "BlochVector",
    "DensityMatrix",
    "TransferResult",
    "TrajectoryRecord",
    "fidelity_bloch",
    "fidelity_uhlmann",
    "average_ion_state",
    "superradiance_metrics",
    "collective_emission_product",
    "mirror_symmetry_defect",
    "format_float",
]


def format_float(v) -> str:
    """Shortest round-trip representation (at most 17 significant digits)."""
    return repr(float(v))


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "BlochVector":
        s = math.sin(theta)
        return cls(s * math.cos(phi), -s * math.sin(phi), math.cos(theta))

    @classmethod
    def from_density(cls, rho) -> "BlochVector":
        m = np.asarray(getattr(rho, "entries", rho))
        coh = m[1, 0]  # <sigma> = rho_eg
        return cls(2 * coh.real, -2 * coh.imag, float((m[1, 1] - m[0, 0]).real))

    def to_density(self) -> "DensityMatrix":
        coh = 0.5 * (self.x - 1j * self.y)
        ee = 0.5 * (1 + self.z)
        return DensityMatrix(np.array([[1 - ee, np.conj(coh)], [coh, ee]]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    @property
    def excited(self) -> float:
        return 0.5 * (1 + self.z)


@dataclass(frozen=True)
class DensityMatrix:
    """Dense density matrix; validity is checked on demand by :meth:`check`."""

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ParameterError("density matrix must be square")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @classmethod
    def pure(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        return cls(np.outer(psi, psi.conj()))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def check(self, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-8) -> None:
        if self.hermiticity_defect() > herm_tol:
            raise ParameterError("density matrix is not Hermitian")
        if abs(self.trace() - 1) > trace_tol:
            raise ParameterError(f"density matrix trace is {self.trace():.3g}")
        if np.linalg.eigvalsh(self._herm()).min() < -eig_tol:
            raise ParameterError("density matrix is not positive semidefinite")

    def _herm(self) -> np.ndarray:
        return 0.5 * (self.entries + self.entries.conj().T)

    def sqrt(self) -> np.ndarray:
        w, v = np.linalg.eigh(self._herm())
        return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def fidelity_bloch(em0: BlochVector, re_final: BlochVector) -> float:
    """Overlap fidelity ``(r_em(0) . r_re + 1) / 2`` for a pure initial state."""
    if abs(em0.norm - 1) > 1e-6:
        raise ParameterError(f"initial Bloch vector must be pure, |r| = {em0.norm:.9g}")
    return 0.5 * (float(np.dot(em0.as_array(), re_final.as_array())) + 1.0)


def fidelity_uhlmann(rho_a: DensityMatrix, rho_b: DensityMatrix) -> float:
    """Root fidelity ``|| sqrt(rho_a) sqrt(rho_b) ||_1`` (trace norm)."""
    for r in (rho_a, rho_b):
        r.check(herm_tol=1e-8, trace_tol=1e-6, eig_tol=1e-8)
    if rho_a.dim != rho_b.dim:
        raise ParameterError("density matrices differ in dimension")
    s = np.linalg.svd(rho_a.sqrt() @ rho_b.sqrt(), compute_uv=False)
    return float(min(s.sum(), 1.0))


def average_ion_state(rho, n: int, n_fock: Optional[int] = None) -> DensityMatrix:
    """Average single-ion state ``(1/n) sum_j Tr_{not j} rho``.

    Layout is ``ion_1 x ... x ion_n x cavity``; ``n_fock`` defaults to
    whatever the dimension implies.
    """
    m = np.asarray(getattr(rho, "entries", rho))
    dim = m.shape[0]
    if n_fock is None:
        if dim % (2**n):
            raise ParameterError(f"dimension {dim} is not a multiple of 2^{n}")
        n_fock = dim // 2**n
    if m.shape != (2**n * n_fock, 2**n * n_fock):
        raise ParameterError(f"expected dimension {2**n * n_fock}, got {m.shape}")
    t = m.reshape((2,) * n + (n_fock,) + (2,) * n + (n_fock,))
    acc = np.zeros((2, 2), complex)
    for j in range(n):
        t_j = np.moveaxis(t, (j, n + 1 + j), (0, n + 1))
        flat = t_j.reshape(2, 2**(n - 1) * n_fock, 2, 2**(n - 1) * n_fock)
        acc += np.einsum("akbk->ab", flat)
    return DensityMatrix(acc / n)


def superradiance_metrics(params: PhysParams):
    """Printed emission-rate estimates ``(P_col, P_loss, R)``.

    ``P_col = 2 N^{3/2} g cos^2 theta0``, ``P_loss = N gamma cos^2 theta0``
    and ``R = 2 sqrt(N) g / gamma`` (``inf`` when ``gamma = 0``). The
    angular factor is reproduced as printed; the exact product-state value
    of ``<J^dag J>`` is :func:`collective_emission_product`.
    """
    n, g, gamma = params.n_em, params.g, params.gamma
    c2 = math.cos(params.theta0) ** 2
    p_col = 2.0 * n**1.5 * g * c2
    p_loss = n * gamma * c2
    r_ratio = math.inf if gamma == 0 else 2.0 * math.sqrt(n) * g / gamma
    return p_col, p_loss, r_ratio


def collective_emission_product(n: float, theta0: float) -> float:
    """``<J^dag J>`` for ``n`` identical ions in the product state.

    ``n cos^2(theta0/2) + n (n - 1) sin^2(theta0) / 4``: the incoherent
    part plus the coherent (superradiant) part.
    """
    return n * math.cos(theta0 / 2) ** 2 + n * (n - 1) * math.sin(theta0) ** 2 / 4


TRAJECTORY_COLUMNS = ("e_sigma_em", "e_c_em", "e_gem_total", "e_c_re", "e_sigma_re", "norm")
_CSV_HEADER = "t,E_sigma_em,E_c_em,E_gem_total,E_c_re,E_sigma_re,norm"


@dataclass(frozen=True)
class TrajectoryRecord:
    """Excitation bookkeeping sampled on ``times``.

    ``norm`` is the squared wavefunction norm for single-excitation runs
    and, for mean-field runs, the excitation left in the system relative to
    the initial emitter excitation.
    """

    times: np.ndarray
    e_sigma_em: np.ndarray
    e_c_em: np.ndarray
    e_gem_total: np.ndarray
    e_c_re: np.ndarray
    e_sigma_re: np.ndarray
    norm: np.ndarray
    n_em: float = 1.0
    n_re: float = 1.0
    xi: Optional[np.ndarray] = None
    e_gem_dense: Optional[np.ndarray] = None
    delta: Optional[np.ndarray] = None
    e_sigma_em_dense: Optional[np.ndarray] = None
    e_sigma_re_dense: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, float)
        if t.ndim != 1 or (len(t) > 1 and np.any(np.diff(t) <= 0)):
            raise ParameterError("trajectory times must be strictly increasing")
        for name in TRAJECTORY_COLUMNS:
            col = np.asarray(getattr(self, name), float)
            if col.shape != t.shape:
                raise ParameterError(f"column {name} has shape {col.shape}, expected {t.shape}")
            object.__setattr__(self, name, col)
        object.__setattr__(self, "times", t)

    @classmethod
    def concat(cls, first: "TrajectoryRecord", second: "TrajectoryRecord") -> "TrajectoryRecord":
        """Join two stages; a duplicated boundary sample is dropped from ``second``."""
        skip = 1 if len(first.times) and len(second.times) and second.times[0] <= first.times[-1] else 0
        kw = {"times": np.concatenate([first.times, second.times[skip:]])}
        for name in TRAJECTORY_COLUMNS:
            kw[name] = np.concatenate([getattr(first, name), getattr(second, name)[skip:]])
        for name in ("e_gem_dense", "e_sigma_em_dense", "e_sigma_re_dense"):
            a, b = getattr(first, name), getattr(second, name)
            kw[name] = None if a is None or b is None else np.concatenate([a, b[skip:]])
        return cls(n_em=first.n_em, n_re=first.n_re, xi=first.xi, delta=first.delta, **kw)

    def total_excitation(self) -> np.ndarray:
        return self.e_sigma_em + self.e_c_em + self.e_gem_total + self.e_c_re + self.e_sigma_re

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(_CSV_HEADER + "\n")
        cols = [self.times] + [getattr(self, n) for n in TRAJECTORY_COLUMNS]
        for row in zip(*cols):
            buf.write(",".join(format_float(v) for v in row) + "\n")
        return _emit(buf.getvalue(), path)

    def dense_csv(self, which: str, path=None) -> str:
        """``t,xi,value`` (GEM) or ``t,delta,value`` (ion spectra) triples."""
        if which == "gem":
            axis, data, label = self.xi, self.e_gem_dense, "xi"
        elif which in ("sigma_em", "sigma_re"):
            axis, data, label = self.delta, getattr(self, f"e_{which}_dense"), "delta"
        else:
            raise ParameterError(f"unknown dense field {which!r}")
        if axis is None or data is None:
            raise ParameterError(f"trajectory has no dense {which} record")
        buf = io.StringIO()
        buf.write(f"t,{label},value\n")
        for t, row in zip(self.times, data):
            for a, v in zip(axis, row):
                buf.write(f"{format_float(t)},{format_float(a)},{format_float(v)}\n")
        return _emit(buf.getvalue(), path)


def _emit(text: str, path) -> str:
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    return text


@dataclass(frozen=True)
class TransferResult:
    fidelity_bloch: float
    eta: float
    wall_params: PhysParams
    fidelity_uhlmann: Optional[float] = None
    p_jump: Optional[float] = None
    gem_mode: str = "broadband"

    def __post_init__(self):
        slack = 1e-6
        for name in ("fidelity_bloch", "eta", "fidelity_uhlmann", "p_jump"):
            v = getattr(self, name)
            if v is not None and not math.isnan(v) and not (-slack <= v <= 1 + slack):
                raise ParameterError(f"{name}={v!r} outside [0, 1]")

    def as_dict(self) -> dict:
        d = asdict(self)
        params = d.pop("wall_params")
        d.update({f"param_{k}": v for k, v in params.items()})
        return d

    def to_csv(self, path=None) -> str:
        d = self.as_dict()
        values = ["" if v is None else (v if isinstance(v, str) else format_float(v)) for v in d.values()]
        return _emit(",".join(d) + "\n" + ",".join(values) + "\n", path)

    def to_json(self, path=None) -> str:
        return _emit(json.dumps(self.as_dict(), indent=2) + "\n", path)


def mirror_symmetry_defect(traj: TrajectoryRecord, t_write: float, n: Optional[float] = None) -> float:
    """``max_tau |E_sigma_re(T + tau) - E_sigma_em(T - tau)| / N`` on ``[0, T]``."""
    n = traj.n_em if n is None else n
    t = traj.times
    if t[0] > 1e-12 * t_write or t[-1] < 2 * t_write * (1 - 1e-12):
        raise ParameterError("trajectory must span [0, 2T]")
    tau = t[(t >= t_write) & (t <= 2 * t_write)] - t_write
    re = np.interp(t_write + tau, t, traj.e_sigma_re)
    em = np.interp(t_write - tau, t, traj.e_sigma_em)
    return float(np.max(np.abs(re - em)) / n)


def excitation_integral(times, values) -> float:
    """``int values dt`` by the trapezoid rule on a possibly non-uniform grid."""
    return float(trapezoid(values, x=times))
