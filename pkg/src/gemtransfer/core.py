"""Parameter model and the fixed-step integrator, with grid and signal containers.

All quantities are expressed in units of the ion-cavity coupling ``g``:
rates are ratios to ``g`` and times are in units of ``1/g``.
"""

from __future__ import annotations

import dataclasses
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

__all__ = [
    "ParameterError",
    "IntegrationError",
    "PhysParams",
    "Grid1D",
    "Signal",
    "Trajectory",
    "derived_kappa",
    "default_dt",
    "integrate_fixed_rk4",
    "trapezoid",
    "load_config",
]

# Broadband requirement: xi_max must exceed kappa by this factor.
BROADBAND_FACTOR = 10.0
# Fastest rate in the problem is resolved by this many steps.
STEPS_PER_RATE = 20


class ParameterError(ValueError):
    """Raised for invalid physical parameters or configuration files."""


class IntegrationError(ArithmeticError):
    """Raised when the integrator produces a non-finite state."""


def trapezoid(y, x=None, dx: float = 1.0, axis: int = -1):
    """Trapezoid rule; thin wrapper so every grid integral uses one rule."""
    return np.trapezoid(y, x=x, dx=dx, axis=axis)


def derived_kappa(g: float, n: float) -> float:
    """Critical cavity damping rate ``2 g sqrt(n)`` for ``n`` ions."""
    if not g > 0:
        raise ParameterError(f"g must be positive, got {g!r}")
    if not n >= 1:
        raise ParameterError(f"ion count must be >= 1, got {n!r}")
    return 2.0 * g * math.sqrt(n)


@dataclass(frozen=True)
class PhysParams:
    """Physical rates and protocol parameters of one transfer run.

    ``kappa``, ``t_write`` and ``xi_max`` may be left as ``None``; they are
    then resolved to ``2 g sqrt(n_em)``, ``20 / kappa`` and ``10 kappa``.
    """

    g: float = 1.0
    gamma: float = 0.1
    kappa: Optional[float] = None
    zeta: float = 2.0
    n_em: float = 1.0
    n_re: Optional[float] = None
    theta0: float = math.pi / 2
    phi0: float = 0.0
    t_write: Optional[float] = None
    xi_max: Optional[float] = None
    sigma_delta: float = 0.0

    def __post_init__(self):
        def put(name, value):
            object.__setattr__(self, name, value)

        for name in ("g", "gamma", "zeta", "n_em", "theta0", "phi0", "sigma_delta"):
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.floating, np.integer)) or not math.isfinite(value):
                raise ParameterError(f"{name} must be a finite number, got {value!r}")
            put(name, float(value))
        if self.g <= 0:
            raise ParameterError("g must be positive")
        if self.gamma < 0 or self.sigma_delta < 0:
            raise ParameterError("rates must be non-negative")
        if self.zeta <= 0:
            raise ParameterError("zeta must be positive")
        if self.n_em < 1:
            raise ParameterError("n_em must be >= 1")
        put("n_re", self.n_em if self.n_re is None else float(self.n_re))
        if self.n_re <= 0:
            raise ParameterError("n_re must be positive")
        if not 0.0 <= self.theta0 <= math.pi:
            raise ParameterError("theta0 must lie in [0, pi]")
        if not 0.0 <= self.phi0 < 2 * math.pi:
            raise ParameterError("phi0 must lie in [0, 2 pi)")
        if self.kappa is None:
            put("kappa", derived_kappa(self.g, self.n_em))
        if not (math.isfinite(self.kappa) and self.kappa >= 0):
            raise ParameterError("kappa must be a finite non-negative rate")
        put("kappa", float(self.kappa))
        if self.t_write is None:
            if self.kappa == 0:
                raise ParameterError("t_write cannot be derived when kappa = 0")
            put("t_write", 20.0 / self.kappa)
        if not (math.isfinite(self.t_write) and self.t_write > 0):
            raise ParameterError("t_write must be positive")
        put("t_write", float(self.t_write))
        if self.xi_max is None:
            put("xi_max", BROADBAND_FACTOR * self.kappa if self.kappa > 0 else 10.0 * self.g)
        if not (math.isfinite(self.xi_max) and self.xi_max > 0):
            raise ParameterError("xi_max must be positive")
        put("xi_max", float(self.xi_max))

    def replace(self, **changes) -> "PhysParams":
        return dataclasses.replace(self, **changes)

    @classmethod
    def for_figure(cls, n: float, *, t_kappa: float = 20.0, **kw) -> "PhysParams":
        """Critically damped parameters with ``T = t_kappa / kappa``."""
        g = kw.get("g", 1.0)
        kappa = kw.pop("kappa", None) or derived_kappa(g, n)
        return cls(n_em=n, kappa=kappa, t_write=t_kappa / kappa, **kw)

    def check_broadband(self, factor: float = BROADBAND_FACTOR) -> None:
        if self.xi_max < factor * self.kappa * (1 - 1e-12):
            raise ParameterError(
                f"xi_max={self.xi_max:g} must be at least {factor:g} x kappa={self.kappa:g}"
            )

    @property
    def excited_fraction(self) -> float:
        """Initial excited-state population per ion, ``cos^2(theta0/2)``."""
        return math.cos(self.theta0 / 2) ** 2

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_config(cls, path, **overrides) -> "PhysParams":
        values = load_config(path)
        values.update(overrides)
        return cls(**values)


_FIELDS = {f.name for f in dataclasses.fields(PhysParams)}


def load_config(path) -> dict:
    """Parse a flat ``key = value`` file whose keys are PhysParams fields."""
    text = Path(path).read_text(encoding="utf-8")
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = (s.strip() for s in line.partition("="))
        if key not in _FIELDS:
            raise ParameterError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ParameterError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = float(value)
        except ValueError:
            raise ParameterError(f"{path}:{lineno}: {value!r} is not a number") from None
    return values


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid of ``m`` points on ``[lo, hi]``."""

    lo: float
    hi: float
    m: int

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or not self.lo < self.hi:
            raise ParameterError(f"grid needs lo < hi, got [{self.lo}, {self.hi}]")
        if int(self.m) != self.m or self.m < 2:
            raise ParameterError(f"grid needs at least 2 points, got {self.m}")
        object.__setattr__(self, "m", int(self.m))

    @classmethod
    def symmetric(cls, half_width: float, m: int) -> "Grid1D":
        return cls(-float(half_width), float(half_width), m)

    @property
    def points(self) -> np.ndarray:
        pts = np.linspace(self.lo, self.hi, self.m)
        if self.lo == -self.hi:
            # exact mirror symmetry about zero
            pts = 0.5 * (pts - pts[::-1])
        return pts

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.m - 1)

    @property
    def is_symmetric(self) -> bool:
        return self.lo == -self.hi


@dataclass(frozen=True)
class Signal:
    """Uniformly sampled complex field envelope ``b(t)``."""

    t0: float
    dt: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError("signal spacing must be positive")
        samples = np.array(self.samples, dtype=complex)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.samples))

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (len(self.samples) - 1)

    def energy(self) -> float:
        """``int |b|^2 dt`` by the trapezoid rule."""
        return float(trapezoid(np.abs(self.samples) ** 2, dx=self.dt))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("t,re,im\n")
        for t, z in zip(self.times, self.samples):
            buf.write(f"{float(t)!r},{float(z.real)!r},{float(z.imag)!r}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="\n")
        return text

    @classmethod
    def from_csv(cls, path) -> "Signal":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 0]
        if len(t) < 2:
            raise ParameterError("signal needs at least two samples")
        dt = (t[-1] - t[0]) / (len(t) - 1)
        if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12 * abs(dt)):
            raise ParameterError("signal samples must be uniformly spaced")
        return cls(float(t[0]), float(dt), data[:, 1] + 1j * data[:, 2])


def default_dt(*rates: float, steps_per_rate: int = STEPS_PER_RATE) -> float:
    """Step that resolves the fastest of ``rates`` with ``steps_per_rate`` samples."""
    fastest = max((abs(r) for r in rates if r), default=0.0)
    if fastest == 0:
        raise ParameterError("at least one non-zero rate is needed to pick a step")
    return 1.0 / (fastest * steps_per_rate)


@dataclass(frozen=True)
class Trajectory:
    """Output of :func:`integrate_fixed_rk4`."""

    times: np.ndarray
    final: np.ndarray
    observed: Optional[np.ndarray] = None


def integrate_fixed_rk4(
    y0,
    rhs: Callable[[float, np.ndarray], np.ndarray],
    t_span: tuple[float, float],
    dt: float,
    observe: Optional[Callable[[float, np.ndarray], object]] = None,
    every: int = 1,
) -> Trajectory:
    """Classical fourth-order Runge-Kutta with a fixed step.

    The step count is ``ceil((t1 - t0) / dt)`` (to within round-off) and the
    step is shrunk so that the last step lands exactly on ``t1``. ``observe``
    is called on the initial state and after every ``every``-th step; its
    return values are stacked into ``Trajectory.observed``.
    """
    t0, t1 = map(float, t_span)
    if not dt > 0:
        raise ParameterError("dt must be positive")
    if t1 < t0:
        raise ParameterError("t_span must be increasing")
    n = max(1, int(math.ceil((t1 - t0) / dt - 1e-9))) if t1 > t0 else 0
    h = (t1 - t0) / n if n else 0.0
    y = np.array(y0, dtype=complex)
    times = [t0]
    obs = [observe(t0, y)] if observe is not None else None
    half = 0.5 * h
    sixth = h / 6.0
    for k in range(n):
        t = t0 + k * h
        k1 = rhs(t, y)
        k2 = rhs(t + half, y + half * k1)
        k3 = rhs(t + half, y + half * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + sixth * (k1 + 2.0 * (k2 + k3) + k4)
        if not np.isfinite(y).all():
            bad = int(np.flatnonzero(~np.isfinite(y))[0])
            raise IntegrationError(f"non-finite state at step {k + 1} (t={t + h:.6g}), index {bad}")
        if (k + 1) % every == 0 or k + 1 == n:
            tk = t0 + (k + 1) * h
            times.append(tk)
            if obs is not None:
                obs.append(observe(tk, y))
    observed = np.asarray(obs) if obs is not None else None
    return Trajectory(np.asarray(times), y, observed)
