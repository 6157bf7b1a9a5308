"""Inhomogeneously broadened transfer.

The ensemble is split into detuning classes on a uniform grid; each class
carries ``rho(Delta) * dDelta`` ions (trapezoid weights), so the collective
polarization is the trapezoid integral of ``rho(Delta) (x - i y) / 2``.
Emitter and receiver rotate with the same sense ``+2 Delta``.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analysis import format_float
from .core import Grid1D, ParameterError, PhysParams, trapezoid
from .gem import GridResolutionWarning
from .meanfield import EnsembleClasses, transfer_ensembles

__all__ = [
    "SpectralDensity",
    "gaussian_density",
    "default_delta_grid",
    "solve_inhomo_transfer",
    "solve_inhomo_sampled",
    "gaussian_quantiles",
]

DELTA_POINTS = 257
DELTA_SPAN = 5.0
MASS_TOLERANCE = 1e-6


@dataclass(frozen=True)
class SpectralDensity:
    """Ion density ``rho(Delta)`` on a uniform grid, or a single line at 0.

    ``grid=None`` means a delta function holding ``rho[0]`` ions at
    ``Delta = 0``.
    """

    grid: Optional[Grid1D]
    rho: np.ndarray = field(repr=False)

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float)
        expect = 1 if self.grid is None else self.grid.m
        if rho.shape != (expect,):
            raise ParameterError("density values do not match the grid")
        if np.any(rho < 0) or not np.all(np.isfinite(rho)):
            raise ParameterError("density must be finite and non-negative")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @property
    def deltas(self) -> np.ndarray:
        return np.zeros(1) if self.grid is None else self.grid.points

    @property
    def n(self) -> float:
        """``int rho dDelta`` (trapezoid)."""
        if self.grid is None:
            return float(self.rho[0])
        return float(trapezoid(self.rho, dx=self.grid.spacing))

    def class_weights(self) -> np.ndarray:
        if self.grid is None:
            return self.rho.copy()
        w = self.rho * self.grid.spacing
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def classes(self) -> EnsembleClasses:
        return EnsembleClasses(self.deltas, self.class_weights())

    def scaled(self, n: float) -> "SpectralDensity":
        return SpectralDensity(self.grid, self.rho * (n / self.n))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("delta,rho\n")
        for d, r in zip(self.deltas, self.rho):
            buf.write(f"{format_float(d)},{format_float(r)}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="\n")
        return text

    @classmethod
    def from_csv(cls, path) -> "SpectralDensity":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        d, r = data[:, 0], data[:, 1]
        if len(d) == 1:
            if d[0] != 0:
                raise ParameterError("a single-line density must sit at delta = 0")
            return cls(None, r)
        grid = Grid1D(float(d[0]), float(d[-1]), len(d))
        if not np.allclose(d, grid.points, rtol=0, atol=1e-9 * max(1.0, abs(d).max())):
            raise ParameterError("density samples must be uniformly spaced")
        return cls(grid, r)


def default_delta_grid(sigma_delta: float, m: int = DELTA_POINTS, span: float = DELTA_SPAN) -> Grid1D:
    return Grid1D.symmetric(span * sigma_delta, m)


def gaussian_density(n: float, sigma_delta: float, grid: Optional[Grid1D] = None) -> SpectralDensity:
    """``rho(Delta) = n exp(-Delta^2 / 2 sigma^2) / (sigma sqrt(2 pi))``.

    Renormalized so the trapezoid integral is exactly ``n``. ``sigma_delta
    = 0`` gives the single-line density.
    """
    if not n > 0:
        raise ParameterError("ion number must be positive")
    if sigma_delta < 0:
        raise ParameterError("sigma_delta must be non-negative")
    if sigma_delta == 0:
        return SpectralDensity(None, np.array([float(n)]))
    grid = grid or default_delta_grid(sigma_delta)
    lost = 0.5 * (math.erfc(-grid.lo / (sigma_delta * math.sqrt(2))) + math.erfc(grid.hi / (sigma_delta * math.sqrt(2))))
    if lost > MASS_TOLERANCE:
        raise ParameterError(f"grid truncates a fraction {lost:.2g} of the ions; widen it")
    if grid.spacing > sigma_delta / 8:
        warnings.warn(
            f"delta grid spacing {grid.spacing:g} gives fewer than 8 points per sigma_delta", GridResolutionWarning, stacklevel=2
        )
    d = grid.points
    rho = np.exp(-0.5 * (d / sigma_delta) ** 2) / (sigma_delta * math.sqrt(2 * math.pi))
    rho *= n / trapezoid(rho, dx=grid.spacing)
    return SpectralDensity(grid, rho)


def solve_inhomo_transfer(
    params: PhysParams,
    density: Optional[SpectralDensity] = None,
    gem_mode: str = "broadband",
    density_re: Optional[SpectralDensity] = None,
    **kw,
):
    """Continuum transfer; the emitter density defaults to a Gaussian of width
    ``params.sigma_delta`` and the receiver density to the same shape scaled
    to ``params.n_re``."""
    if density is None:
        density = gaussian_density(params.n_em, params.sigma_delta)
    if density_re is None:
        density_re = density.scaled(params.n_re)
    return transfer_ensembles(params, density.classes(), density_re.classes(), gem_mode, **kw)


def solve_inhomo_sampled(
    params: PhysParams,
    deltas: Sequence[float],
    gem_mode: str = "broadband",
    deltas_re: Optional[Sequence[float]] = None,
    **kw,
):
    """Per-ion form with explicit detunings; each listed ion carries
    ``n / len(deltas)`` ions (1 when the list is the whole ensemble).
    Returns the :class:`TransferResult`."""
    deltas = np.asarray(deltas, dtype=float)
    deltas_re = deltas if deltas_re is None else np.asarray(deltas_re, dtype=float)
    if not 1 <= len(deltas) <= 64 or not 1 <= len(deltas_re) <= 64:
        raise ParameterError("sampled solver takes 1 to 64 detunings per ensemble")
    em = EnsembleClasses(deltas, np.full(len(deltas), params.n_em / len(deltas)))
    re = EnsembleClasses(deltas_re, np.full(len(deltas_re), params.n_re / len(deltas_re)))
    return transfer_ensembles(params, em, re, gem_mode, **kw)[1]


def gaussian_quantiles(k: int, sigma_delta: float) -> np.ndarray:
    """Deterministic ``k``-point sample: Gaussian quantiles at ``(j + 1/2) / k``."""
    from scipy.special import ndtri

    return sigma_delta * ndtri((np.arange(k) + 0.5) / k)
