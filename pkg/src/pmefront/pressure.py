"""Pressure transform, discrete derivatives, and the structural monitors.

The pressure u = (m/(m-1)) rho^(m-1) obeys
    u_t = (m-1) u u_xx + |u_x|^2 - u_x b - (m-1) u b_x
away from the support boundary.  This module evaluates that operator's
residual cellwise, plus the two one-sided bounds tracked along a run: the
semiconvexity bound u_xx >= -1/t - C and the Lipschitz bound
|u_x|^2 + |u_t| <= C (1 + 1/t).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import DensityField, Grid, _frozen_values
from .drift import DriftField
from .errors import AlignmentError, DomainError

__all__ = [
    "PressureField",
    "to_pressure",
    "from_pressure",
    "discrete_derivatives",
    "pme_residual",
    "aronson_benilan_gap",
    "fit_ab_constant",
    "lipschitz_monitor",
    "fit_lipschitz_constant",
    "DiagnosticsReport",
]


@dataclass(frozen=True)
class PressureField:
    """Pressure samples at cell centers at one instant."""

    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        arr = _frozen_values(self.values, self.grid.n_cells, "pressure values")
        object.__setattr__(self, "values", arr)


def pressure_values(rho_values: np.ndarray, m: float) -> np.ndarray:
    """u = (m/(m-1)) rho^(m-1) on raw arrays (solver fast path)."""
    c = m / (m - 1.0)
    e = m - 1.0
    if e == 1.0:
        return c * rho_values
    if e == 2.0:
        return c * rho_values * rho_values
    return c * np.power(rho_values, e)


def to_pressure(rho: DensityField, m: float) -> PressureField:
    """Pointwise pressure transform; support is preserved cellwise."""
    if not m > 1.0:
        raise DomainError(f"m must exceed 1, got {m}")
    return PressureField(rho.grid, pressure_values(rho.values, m), time=rho.time)


def from_pressure(u: PressureField, m: float) -> DensityField:
    """Inverse transform rho = ((m-1)/m u)^(1/(m-1))."""
    if not m > 1.0:
        raise DomainError(f"m must exceed 1, got {m}")
    base = np.maximum(u.values, 0.0) * ((m - 1.0) / m)
    return DensityField(u.grid, np.power(base, 1.0 / (m - 1.0)), time=u.time)


def discrete_derivatives(u: PressureField):
    """Central second-order u_x and u_xx; one-sided stencils at Line edges.

    Returns a pair of arrays on u's grid.
    """
    v = u.values
    dx = u.grid.dx
    if u.grid.periodic:
        vp = np.roll(v, -1)
        vm = np.roll(v, 1)
        ux = (vp - vm) / (2.0 * dx)
        uxx = (vp - 2.0 * v + vm) / dx**2
        return ux, uxx
    ux = np.empty_like(v)
    uxx = np.empty_like(v)
    ux[1:-1] = (v[2:] - v[:-2]) / (2.0 * dx)
    uxx[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dx**2
    ux[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx)
    ux[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * dx)
    uxx[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / dx**2
    uxx[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / dx**2
    return ux, uxx


def _interior_slice(grid: Grid) -> slice:
    """Cells whose u_xx stencil is fully interior (all of them on a torus)."""
    return slice(None) if grid.periodic else slice(1, -1)


def pme_residual(u: PressureField, u_t: np.ndarray, drift: DriftField,
                 m: float) -> np.ndarray:
    """Cellwise residual of the pressure equation.

    L(u) = u_t - (m-1) u u_xx - |u_x|^2 + u_x b + (m-1) u b_x.
    The caller supplies u_t, typically a centered two-snapshot difference.
    """
    if drift.grid is not u.grid and drift.grid != u.grid:
        raise AlignmentError("pressure and drift live on different grids")
    if not np.isclose(drift.time, u.time, rtol=0.0, atol=1e-12):
        raise AlignmentError(
            f"pressure at t={u.time} but drift at t={drift.time}"
        )
    u_t = np.asarray(u_t, dtype=np.float64)
    if u_t.shape != u.values.shape:
        raise AlignmentError("u_t has the wrong shape")
    ux, uxx = discrete_derivatives(u)
    v = u.values
    return (
        u_t
        - (m - 1.0) * v * uxx
        - ux * ux
        + ux * drift.b_values
        + (m - 1.0) * v * drift.bx_values
    )


def aronson_benilan_gap(u: PressureField, t: float, C: float = 0.0) -> float:
    """min over interior cells of u_xx + 1/t + C; positive means the
    semiconvexity bound holds with this C at this time."""
    if not t > 0.0:
        raise DomainError(f"the semiconvexity bound needs t > 0, got t={t}")
    _, uxx = discrete_derivatives(u)
    return float(np.min(uxx[_interior_slice(u.grid)]) + 1.0 / t + C)


def fit_ab_constant(pressures) -> float:
    """Smallest C >= 0 making u_xx + 1/t + C >= 0 across a trajectory.

    ``pressures`` iterates over PressureField snapshots with time > 0.
    """
    worst = 0.0
    seen = False
    for u in pressures:
        if not u.time > 0.0:
            raise DomainError("semiconvexity fit needs snapshots at t > 0")
        gap = aronson_benilan_gap(u, u.time, 0.0)
        worst = max(worst, -gap)
        seen = True
    if not seen:
        raise DomainError("no snapshots supplied")
    return worst


def lipschitz_monitor(u: PressureField, u_t: np.ndarray, t: float) -> float:
    """sup over cells of (|u_x|^2 + |u_t|) / (1 + 1/t)."""
    if not t > 0.0:
        raise DomainError(f"the Lipschitz monitor needs t > 0, got t={t}")
    ux, _ = discrete_derivatives(u)
    u_t = np.asarray(u_t, dtype=np.float64)
    return float(np.max(ux * ux + np.abs(u_t)) / (1.0 + 1.0 / t))


def fit_lipschitz_constant(samples) -> float:
    """Running max of the Lipschitz monitor over (u, u_t, t) triples."""
    worst = 0.0
    seen = False
    for u, u_t, t in samples:
        worst = max(worst, lipschitz_monitor(u, u_t, t))
        seen = True
    if not seen:
        raise DomainError("no samples supplied")
    return worst


@dataclass(frozen=True)
class DiagnosticsReport:
    """Fitted structural constants for a completed run."""

    min_uxx: float
    ab_constant_fit: float
    lipschitz_fit: float
    max_residual_interior: float

    def as_dict(self) -> dict:
        return {
            "min_uxx": self.min_uxx,
            "ab_constant_fit": self.ab_constant_fit,
            "lipschitz_fit": self.lipschitz_fit,
            "max_residual_interior": self.max_residual_interior,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def finite(self) -> bool:
        return all(np.isfinite(v) for v in self.as_dict().values())
