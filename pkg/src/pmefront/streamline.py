"""Characteristic ODE integration against a recorded drift history.

Streamlines solve X'(t) = b(X(t), t) with the drift linearly interpolated
in space within each snapshot and linearly in time between snapshots.
Integration is classical four-stage one-step (RK4) on the snapshot grid,
sub-stepped when the drift stiffness makes the snapshot spacing too
coarse, with a step-doubling error estimate accumulated into the path's
tolerance.  Backward integration (t1 < t0) reuses the same history.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Grid
from .errors import AlignmentError, BoundaryError, DomainError

__all__ = [
    "DriftHistory",
    "StreamlinePath",
    "integrate_streamline",
    "ExpansionReport",
    "relative_expansion",
]

STIFFNESS_LIMIT = 0.1
SUBSTEPS_WHEN_STIFF = 4


class DriftHistory:
    """Drift samples b(x_i, t_s) over a run, evaluable anywhere in between."""

    def __init__(self, grid: Grid, times, b_rows, bx_rows=None):
        self.grid = grid
        self.times = np.asarray(times, dtype=np.float64)
        self.b = np.asarray(b_rows, dtype=np.float64)
        if self.times.ndim != 1 or self.b.shape != (self.times.size,
                                                    grid.n_cells):
            raise AlignmentError("history needs one row of b per snapshot")
        if np.any(np.diff(self.times) <= 0.0):
            raise AlignmentError("history times must be strictly increasing")
        if bx_rows is not None:
            bx = np.asarray(bx_rows, dtype=np.float64)
            self.max_bx = float(np.max(np.abs(bx))) if bx.size else 0.0
        else:
            self.max_bx = float(
                np.max(np.abs(np.gradient(self.b, grid.dx, axis=1)))
            ) if self.b.size else 0.0
        self.max_b = float(np.max(np.abs(self.b))) if self.b.size else 0.0

    @classmethod
    def from_trajectory(cls, trajectory) -> "DriftHistory":
        snaps = trajectory.snapshots
        return cls(
            trajectory.grid,
            [s.t for s in snaps],
            np.stack([s.drift.b_values for s in snaps]),
            np.stack([s.drift.bx_values for s in snaps]),
        )

    @property
    def t_lo(self) -> float:
        return float(self.times[0])

    @property
    def t_hi(self) -> float:
        return float(self.times[-1])

    def _row_at(self, x: float, row: np.ndarray) -> float:
        g = self.grid
        if g.periodic:
            return float(np.interp(g.wrap(x), g.centers, row,
                                   period=g.topology.period))
        xq = min(max(x, g.topology.xmin), g.topology.xmax)
        return float(np.interp(xq, g.centers, row))

    def b_at(self, x: float, t: float) -> float:
        ts = self.times
        if t <= ts[0]:
            return self._row_at(x, self.b[0])
        if t >= ts[-1]:
            return self._row_at(x, self.b[-1])
        i = int(np.searchsorted(ts, t) - 1)
        theta = (t - ts[i]) / (ts[i + 1] - ts[i])
        lo = self._row_at(x, self.b[i])
        hi = self._row_at(x, self.b[i + 1])
        return (1.0 - theta) * lo + theta * hi


@dataclass(frozen=True)
class StreamlinePath:
    """Integral curve samples aligned to snapshot times, ascending."""

    origin: tuple
    times: np.ndarray
    x: np.ndarray
    tolerance: float

    def __post_init__(self):
        if self.times.shape != self.x.shape:
            raise AlignmentError("times and positions must align")

    def at_origin(self) -> float:
        i = int(np.argmin(np.abs(self.times - self.origin[1])))
        return float(self.x[i])


def _rk4(f, x: float, t: float, h: float) -> float:
    k1 = f(x, t)
    k2 = f(x + 0.5 * h * k1, t + 0.5 * h)
    k3 = f(x + 0.5 * h * k2, t + 0.5 * h)
    k4 = f(x + h * k3, t + h)
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_streamline(x0: float, t0: float, t1: float,
                         history: DriftHistory) -> StreamlinePath:
    """Integrate the streamline through (x0, t0) up (or back) to t1.

    Nodes are the history's snapshot times between t0 and t1 plus the two
    endpoints; each node-to-node step is RK4, split into four sub-steps
    when max|b_x| times the spacing exceeds 0.1.  Every step is taken both
    whole and as two half-steps; the halved result is kept and the
    difference accumulates into the recorded tolerance.
    """
    g = history.grid
    if not g.periodic:
        topo = g.topology
        if not topo.xmin <= x0 <= topo.xmax:
            raise DomainError(f"streamline origin {x0} outside the box")
    pad = 1e-9 * max(1.0, abs(history.t_hi))
    lo, hi = min(t0, t1), max(t0, t1)
    if lo < history.t_lo - pad or hi > history.t_hi + pad:
        raise DomainError(
            f"requested window [{lo:g}, {hi:g}] outside the recorded "
            f"horizon [{history.t_lo:g}, {history.t_hi:g}]"
        )
    inner = history.times[(history.times > lo + pad)
                          & (history.times < hi - pad)]
    nodes = np.concatenate(([lo], inner, [hi]))
    if t1 < t0:
        nodes = nodes[::-1]

    f = history.b_at
    xs = np.empty(nodes.size)
    xs[0] = x0
    err_sum = 0.0
    for i in range(nodes.size - 1):
        t_a, t_b = nodes[i], nodes[i + 1]
        h_full = t_b - t_a
        n_sub = SUBSTEPS_WHEN_STIFF if (
            history.max_bx * abs(h_full) > STIFFNESS_LIMIT) else 1
        x = xs[i]
        t = t_a
        h = h_full / n_sub
        for _ in range(n_sub):
            x_one = _rk4(f, x, t, h)
            x_half = _rk4(f, x, t, 0.5 * h)
            x_two = _rk4(f, x_half, t + 0.5 * h, 0.5 * h)
            err_sum += abs(x_one - x_two)
            x = x_two
            t += h
        xs[i + 1] = x

    tolerance = 4.0 * err_sum + 1e-13 * (1.0 + abs(x0)) * nodes.size
    if t1 < t0:
        nodes = nodes[::-1]
        xs = xs[::-1]
    return StreamlinePath(origin=(float(x0), float(t0)), times=nodes,
                          x=xs, tolerance=float(tolerance))


@dataclass(frozen=True)
class ExpansionReport:
    """r(t) - X(t) with a summary of its sign pattern."""

    times: np.ndarray
    series: np.ndarray
    pattern: str
    tolerance: float


def relative_expansion(trace, path: StreamlinePath) -> ExpansionReport:
    """Elementwise r(t) - X(t) on aligned times.

    Pattern 'stationary' means the series never leaves the extraction
    tolerance; 'expanding' means it is monotone, positive beyond tolerance
    after the anchor and negative before it; anything else is 'other'.
    """
    t = trace.times
    pt = path.times
    i0 = np.searchsorted(t, pt[0] - 1e-12)
    seg = slice(i0, i0 + len(pt))
    if i0 + len(pt) > len(t) or not np.allclose(t[seg], pt, rtol=0.0,
                                                atol=1e-9):
        raise AlignmentError("path times do not align with trace times")
    r = trace.r[seg]
    if not np.all(np.isfinite(r)):
        raise BoundaryError("trace has no boundary on the path window")
    t0 = path.origin[1]
    r0 = r[np.argmin(np.abs(pt - t0))]
    if abs(path.origin[0] - r0) > 1e-9 * max(1.0, abs(r0)) + 1e-12:
        raise BoundaryError("path origin must anchor at (r(t0), t0)")
    s = r - path.x
    tol = 2.0 * trace.dx + path.tolerance
    if float(np.max(np.abs(s))) <= tol:
        pattern = "stationary"
    else:
        after = pt > t0 + 1e-12
        before = pt < t0 - 1e-12
        monotone = bool(np.all(np.diff(s) >= -0.25 * tol))
        pos_after = bool(np.all(s[after] >= -tol)) if after.any() else True
        neg_before = bool(np.all(s[before] <= tol)) if before.any() else True
        pattern = ("expanding" if monotone and pos_after and neg_before
                   else "other")
    return ExpansionReport(times=pt, series=s, pattern=pattern, tolerance=tol)
