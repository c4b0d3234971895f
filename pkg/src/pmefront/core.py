"""Uniform 1D grids, field containers, model parameters, and interpolation.

The domain is either a flat torus (``Periodic``) or a truncated segment of
the real line (``Line``).  All containers are immutable after construction:
value arrays are copied in and marked read-only, so instances are safe to
share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Union

import numpy as np

from .errors import DomainError

__all__ = [
    "Periodic",
    "Line",
    "Topology",
    "Grid",
    "make_grid",
    "ModelParams",
    "DensityField",
    "InitialDataSpec",
    "interpolate",
]


@dataclass(frozen=True)
class Periodic:
    """Flat torus of the given period; coordinates live in [0, period)."""

    period: float

    @property
    def xmin(self) -> float:
        return 0.0

    @property
    def extent(self) -> float:
        return self.period


@dataclass(frozen=True)
class Line:
    """Truncated box [xmin, xmax] standing in for the real line.

    The box has to stay clear of the solution's support; the solver aborts
    a run whose support reaches within two cells of either edge.
    """

    xmin: float
    xmax: float

    @property
    def extent(self) -> float:
        return self.xmax - self.xmin


Topology = Union[Periodic, Line]


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered mesh over a Periodic or Line topology."""

    topology: Topology
    n_cells: int

    @property
    def dx(self) -> float:
        return self.topology.extent / self.n_cells

    @property
    def periodic(self) -> bool:
        return isinstance(self.topology, Periodic)

    @cached_property
    def centers(self) -> np.ndarray:
        x = self.topology.xmin + (np.arange(self.n_cells) + 0.5) * self.dx
        x.flags.writeable = False
        return x

    def wrap(self, x):
        """Map positions into the fundamental domain (periodic only)."""
        if not self.periodic:
            return x
        p = self.topology.period
        return np.mod(x, p)


def make_grid(topology: Topology, n_cells: int) -> Grid:
    """Build a uniform grid; rejects degenerate extents and tiny meshes."""
    if n_cells < 8:
        raise DomainError(f"n_cells must be at least 8, got {n_cells}")
    if not np.isfinite(topology.extent) or topology.extent <= 0.0:
        raise DomainError(f"domain extent must be positive, got {topology.extent}")
    return Grid(topology, int(n_cells))


@dataclass(frozen=True)
class ModelParams:
    """Model exponent and the numerical knobs tied to it.

    m            diffusion exponent, strictly above 1
    fb_threshold relative support-detection cutoff (fraction of the peak)
    cfl_safety   fraction of the stability bound actually used
    dt_max       cap on the time step when the CFL bound degenerates
    """

    m: float
    fb_threshold: float = 1.0e-6
    cfl_safety: float = 0.4
    dt_max: float = 1.0e-2

    def __post_init__(self):
        if not self.m > 1.0:
            raise DomainError(f"m must exceed 1, got {self.m}")
        if not 0.0 < self.fb_threshold < 1.0:
            raise DomainError(
                f"fb_threshold must lie in (0, 1) as a fraction of the peak, "
                f"got {self.fb_threshold}"
            )
        if not 0.0 < self.cfl_safety < 1.0:
            raise DomainError(f"cfl_safety must lie in (0, 1), got {self.cfl_safety}")
        if not self.dt_max > 0.0:
            raise DomainError(f"dt_max must be positive, got {self.dt_max}")


def _frozen_values(values, n_cells: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.shape != (n_cells,):
        raise DomainError(
            f"{name} must have one value per cell ({n_cells}), got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class DensityField:
    """Non-negative density samples at cell centers at one instant."""

    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        arr = _frozen_values(self.values, self.grid.n_cells, "density values")
        if arr.min(initial=0.0) < 0.0:
            raise DomainError(
                f"density must be non-negative, min value {arr.min()}"
            )
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class InitialDataSpec:
    """Named initial profile plus its boundary growth label.

    ``gamma`` is the pressure growth exponent at the initial free boundary:
    profiles with gamma < 2 satisfy the super-quadratic growth condition and
    must produce an expanding boundary; gamma = 2 is allowed only for the
    waiting-time constructions (quadratic or flatter contact).
    """

    profile: str
    gamma: float
    growth_constant: float = 1.0
    params: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.gamma <= 2.0:
            raise DomainError(
                f"growth exponent gamma must lie in (0, 2], got {self.gamma}"
            )
        if not self.growth_constant > 0.0:
            raise DomainError("growth_constant must be positive")


def interpolate(field, x):
    """Piecewise-linear interpolation of a cell-centered field.

    Exact at cell centers.  On Line topology the value is extended as a
    constant over the half cell next to each box edge; querying outside the
    box raises.  On Periodic topology the query wraps.
    Accepts scalars or arrays; returns the same shape.
    """
    grid = field.grid
    xq = np.asarray(x, dtype=np.float64)
    scalar = xq.ndim == 0
    xq = np.atleast_1d(xq)
    if grid.periodic:
        out = np.interp(xq, grid.centers, field.values, period=grid.topology.period)
    else:
        topo = grid.topology
        if np.any(xq < topo.xmin) or np.any(xq > topo.xmax):
            raise DomainError(
                f"position outside Line domain [{topo.xmin}, {topo.xmax}]"
            )
        # np.interp clamps to the end values, which is exactly the
        # constant extrapolation wanted within half a cell of the edge.
        out = np.interp(xq, grid.centers, field.values)
    return float(out[0]) if scalar else out
