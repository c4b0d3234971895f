"""Free-boundary extraction and the boundary-law certifications.

The support edges l(t), r(t) are located by a relative density threshold
and refined to sub-cell precision by extrapolating the pressure to zero,
which is first-order accurate at non-degenerate points where the pressure
is asymptotically linear.  The one-sided slope k(t) comes from a
least-squares fit over a window of near-boundary cells that skips the
partially filled edge cell.

On Periodic topology the support is an arc: the longest below-threshold
run is taken as the complement, and the left endpoint is unwrapped
(shifted by one period when needed) so that l <= r always holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from types import SimpleNamespace

import numpy as np

from .core import DensityField, Grid, ModelParams, interpolate
from .errors import AlignmentError, BoundaryError
from .pressure import PressureField, discrete_derivatives, to_pressure

__all__ = [
    "SupportInfo",
    "support_endpoints",
    "boundary_slope",
    "FreeBoundaryTrace",
    "extract_trace",
    "darcy_residual",
    "NondegeneracyResult",
    "nondegeneracy_trace",
    "BoundaryIdentityResult",
    "boundary_identity_check",
    "Classification",
    "classify_boundary",
]

SLOPE_EPS = 1.0e-300


@dataclass(frozen=True)
class SupportInfo:
    """Extracted support of one snapshot."""

    l: float
    r: float
    # anchor cells: index of the partially filled cell at each edge
    i_left: int
    i_right: int
    gaps: tuple
    threshold: float


def _runs_of_true(mask: np.ndarray):
    """Maximal runs of True as (start, stop) index pairs, stop exclusive."""
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        return []
    breaks = np.nonzero(np.diff(idx) > 1)[0]
    starts = np.concatenate(([idx[0]], idx[breaks + 1]))
    stops = np.concatenate((idx[breaks] + 1, [idx[-1] + 1]))
    return list(zip(starts.tolist(), stops.tolist()))


def _refine_edge(u_vals: np.ndarray, grid: Grid, i_edge: int, side: str) -> float:
    """Extrapolate the pressure to zero through the last two covered cells.

    Falls back to the cell edge when the local profile is not decreasing
    toward the boundary (degenerate or single-cell support).
    """
    n = grid.n_cells
    dx = grid.dx
    x_edge = grid.centers[i_edge % n] if grid.periodic else grid.centers[i_edge]
    if side == "right":
        i_in = i_edge - 1
        u2 = u_vals[i_edge % n]
        u1 = u_vals[i_in % n] if grid.periodic else (
            u_vals[i_in] if i_in >= 0 else np.nan)
        if np.isfinite(u1) and u1 > u2 > 0.0:
            root = x_edge + u2 * dx / (u1 - u2)
            return float(min(max(root, x_edge), x_edge + dx))
        return float(x_edge + 0.5 * dx)
    i_in = i_edge + 1
    u2 = u_vals[i_edge % n]
    u1 = u_vals[i_in % n] if grid.periodic else (
        u_vals[i_in] if i_in < n else np.nan)
    if np.isfinite(u1) and u1 > u2 > 0.0:
        root = x_edge - u2 * dx / (u1 - u2)
        return float(max(min(root, x_edge), x_edge - dx))
    return float(x_edge - 0.5 * dx)


def support_endpoints(rho: DensityField, params: ModelParams):
    """Locate (l, r) of the support, or None when no cell clears the cutoff.

    The cutoff is fb_threshold times the current peak.  Interior
    below-threshold runs are reported as gaps; only the outermost
    endpoints are returned.  On a torus with no below-threshold cell the
    support has no boundary and None is returned as well.
    """
    vals = rho.values
    peak = float(vals.max())
    if peak <= 0.0:
        return None
    th = params.fb_threshold * peak
    above = vals > th
    u_vals = np.power(vals, params.m - 1.0) * (params.m / (params.m - 1.0))
    grid = rho.grid
    x = grid.centers
    dx = grid.dx

    if not grid.periodic:
        idx = np.nonzero(above)[0]
        if idx.size == 0:
            return None
        i_l, i_r = int(idx[0]), int(idx[-1])
        gap_runs = _runs_of_true(~above[i_l:i_r + 1])
        gaps = tuple(
            (float(x[i_l + a] - 0.5 * dx), float(x[i_l + b - 1] + 0.5 * dx))
            for a, b in gap_runs
        )
        r = _refine_edge(u_vals, grid, i_r, "right")
        l = _refine_edge(u_vals, grid, i_l, "left")
        return SupportInfo(l=l, r=r, i_left=i_l, i_right=i_r, gaps=gaps,
                           threshold=th)

    below = ~above
    if not below.any():
        return None
    n = grid.n_cells
    runs = _runs_of_true(below)
    # merge a run touching both ends of the index range (circular wrap)
    if len(runs) > 1 and runs[0][0] == 0 and runs[-1][1] == n:
        first = runs.pop(0)
        a, _ = runs.pop(-1)
        runs.append((a, first[1] + n))
    runs.sort(key=lambda ab: ab[1] - ab[0])
    principal = runs[-1]
    interior = runs[:-1]
    gaps = tuple(
        (float(x[a % n] - 0.5 * dx), float(x[(b - 1) % n] + 0.5 * dx))
        for a, b in interior
    )
    i_r = (principal[0] - 1) % n          # last covered cell before the gap
    i_l = principal[1] % n                # first covered cell after the gap
    r = _refine_edge(u_vals, grid, i_r, "right")
    l = _refine_edge(u_vals, grid, i_l, "left")
    if l > r:
        l -= grid.topology.period
    return SupportInfo(l=l, r=r, i_left=i_l, i_right=i_r, gaps=gaps,
                       threshold=th)


def _fit_cells(grid: Grid, anchor_x: float, i_anchor: int, window: int,
               offset: int, side: str):
    """Centers and indices of the fit window, walking inward from the edge."""
    n = grid.n_cells
    dx = grid.dx
    direction = -1 if side == "right" else 1
    ds = offset + np.arange(window)
    idx = (i_anchor + direction * ds) % n if grid.periodic else (
        i_anchor + direction * ds)
    if not grid.periodic and (np.any(idx < 0) or np.any(idx >= n)):
        raise BoundaryError("fit window extends past the box edge")
    xs = anchor_x + direction * ds * dx
    return xs, idx


def boundary_slope(u: PressureField, r: float, window: int = 5,
                   offset: int = 2, side: str = "right") -> float:
    """Signed boundary slope from a least-squares fit left of r.

    Fits a line to u over ``window`` cells starting ``offset`` cells inside
    the support (the partially filled edge cell is skipped) and returns
    k = -slope for the right boundary (+slope on the left), so k is
    positive at a non-degenerate wedge.  Callers interpret the sign.
    """
    if window < 3:
        raise BoundaryError(f"fit window must span at least 3 cells, got {window}")
    grid = u.grid
    n, dx = grid.n_cells, grid.dx
    xmin = grid.topology.xmin
    j = int(math.floor((r - xmin) / dx))
    if grid.periodic:
        j %= n
    anchor_x = xmin + (j + 0.5) * dx
    if grid.periodic:
        p = grid.topology.period
        anchor_x += p * round((r - anchor_x) / p)
    xs, idx = _fit_cells(grid, anchor_x, j, window, offset, side)
    uw = u.values[idx]
    if np.any(uw <= 0.0):
        raise BoundaryError(
            f"support narrower than the fit window at the {side} boundary"
        )
    slope = np.polyfit(xs, uw, 1)[0]
    return float(-slope) if side == "right" else float(slope)


@dataclass
class FreeBoundaryTrace:
    """Support endpoints, one-sided slopes, and boundary drift over time.

    Degenerate snapshots (no extractable boundary, or support narrower
    than the fit window) carry NaN entries and are skipped by consumers.
    """

    times: np.ndarray
    l: np.ndarray
    r: np.ndarray
    k_left: np.ndarray
    k_right: np.ndarray
    b_at_r: np.ndarray
    gaps: list
    dx: float
    window: int
    offset: int
    m: float
    max_uxx_interior: np.ndarray = dc_field(default=None)
    max_abs_ux: np.ndarray = dc_field(default=None)
    max_abs_b: np.ndarray = dc_field(default=None)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.r)

    def slope_floor(self) -> float:
        """Smallest slope the fit window can resolve.

        At a quadratic contact the window reads a spurious slope of about
        (offset + window) dx |u_xx|, so that is the resolution floor; the
        interior curvature maximum over the trace feeds it.
        """
        if self.max_uxx_interior is None or not np.any(np.isfinite(
                self.max_uxx_interior)):
            return 0.0
        cap = float(np.nanmax(self.max_uxx_interior))
        return (self.offset + self.window) * self.dx * cap


def extract_trace(trajectory, window: int = 5, offset: int = 2,
                  interior_factor: float = 10.0) -> FreeBoundaryTrace:
    """Build the free-boundary trace of a trajectory."""
    params = trajectory.params
    m = params.m
    snaps = trajectory.snapshots
    s_count = len(snaps)
    times = np.empty(s_count)
    arrays = {k: np.full(s_count, np.nan) for k in
              ("l", "r", "k_left", "k_right", "b_at_r",
               "max_uxx", "max_ux", "max_b")}
    gaps = []
    for n, snap in enumerate(snaps):
        times[n] = snap.t
        u = to_pressure(snap.rho, m)
        ux, uxx = discrete_derivatives(u)
        peak_u = float(u.values.max())
        mask = u.values >= interior_factor * params.fb_threshold * peak_u
        if not trajectory.grid.periodic:
            mask[[0, -1]] = False
        if mask.any():
            arrays["max_uxx"][n] = float(np.max(np.abs(uxx[mask])))
        arrays["max_ux"][n] = float(np.max(np.abs(ux)))
        arrays["max_b"][n] = float(np.max(np.abs(snap.drift.b_values)))
        info = support_endpoints(snap.rho, params)
        if info is None:
            gaps.append(())
            continue
        arrays["l"][n] = info.l
        arrays["r"][n] = info.r
        gaps.append(info.gaps)
        bfield = SimpleNamespace(grid=trajectory.grid,
                                 values=snap.drift.b_values)
        arrays["b_at_r"][n] = interpolate(
            bfield, trajectory.grid.wrap(info.r))
        try:
            arrays["k_right"][n] = boundary_slope(u, info.r, window, offset,
                                                  side="right")
        except BoundaryError:
            pass
        try:
            arrays["k_left"][n] = boundary_slope(u, info.l, window, offset,
                                                 side="left")
        except BoundaryError:
            pass
    return FreeBoundaryTrace(
        times=times, l=arrays["l"], r=arrays["r"],
        k_left=arrays["k_left"], k_right=arrays["k_right"],
        b_at_r=arrays["b_at_r"], gaps=gaps, dx=trajectory.grid.dx,
        window=window, offset=offset, m=m,
        max_uxx_interior=arrays["max_uxx"],
        max_abs_ux=arrays["max_ux"], max_abs_b=arrays["max_b"],
    )


def darcy_residual(trace: FreeBoundaryTrace) -> np.ndarray:
    """Residual of D_t r = k + b(r) at interior trace times.

    residual[n] = (r[n+1] - r[n-1]) / (t[n+1] - t[n-1]) - k_right[n]
    - b_at_r[n]; NaN marks the two ends and any skipped entries.
    """
    if len(trace) < 3:
        raise BoundaryError("Darcy residual needs at least 3 trace times")
    t, r = trace.times, trace.r
    res = np.full(len(trace), np.nan)
    num = (r[2:] - r[:-2]) / (t[2:] - t[:-2])
    res[1:-1] = num - trace.k_right[1:-1] - trace.b_at_r[1:-1]
    return res


@dataclass(frozen=True)
class NondegeneracyResult:
    times: np.ndarray
    k: np.ndarray
    sigma_hat: float
    tol: float
    verdict: str

    @property
    def persistent(self) -> bool:
        return self.verdict == "non-degenerate persistent"


def nondegeneracy_trace(trace: FreeBoundaryTrace,
                        t0_index: int = 0) -> NondegeneracyResult:
    """Fit the smallest decay rate sigma with
    k(t) >= exp(-sigma (t - t0)) k(t0) - tol across the trace.

    tol is the slope-resolution floor of the fit stencil; a boundary whose
    k(t0) sits at or below the floor is reported degenerate at start
    (the waiting-time regime), not as a failure.
    """
    if len(trace) == 0:
        raise BoundaryError("empty trace")
    valid = trace.valid & np.isfinite(trace.k_right)
    if not valid[t0_index]:
        raise BoundaryError(f"no extractable slope at t0 index {t0_index}")
    tol = trace.slope_floor()
    t = trace.times
    k = trace.k_right
    k0 = float(k[t0_index])
    t0 = float(t[t0_index])
    if k0 <= tol:
        return NondegeneracyResult(t, k, 0.0, tol, "degenerate at start")
    later = valid & (t > t0)
    sigma = 0.0
    collapse = False
    for tn, kn in zip(t[later], k[later]):
        shifted = kn + tol
        if shifted <= 0.0:
            collapse = True
            break
        sigma = max(sigma, -math.log(shifted / k0) / (tn - t0))
    if collapse or not np.isfinite(sigma):
        return NondegeneracyResult(t, k, float("inf"), tol,
                                   "degenerate collapse")
    min_k = float(np.min(k[valid & (t >= t0)]))
    verdict = ("non-degenerate persistent" if min_k > tol
               else "degenerate collapse")
    return NondegeneracyResult(t, k, sigma, tol, verdict)


@dataclass(frozen=True)
class BoundaryIdentityResult:
    times: np.ndarray
    deviation: np.ndarray
    u_uxx_at_r: np.ndarray

    def max_deviation(self) -> float:
        return float(np.nanmax(self.deviation))

    def max_u_uxx(self) -> float:
        return float(np.nanmax(np.abs(self.u_uxx_at_r)))


def _fit_at(xs: np.ndarray, vals: np.ndarray, x_target: float) -> float:
    coef = np.polyfit(xs, vals, 1)
    return float(coef[0] * x_target + coef[1])


def boundary_identity_check(trajectory, trace: FreeBoundaryTrace,
                            window: int | None = None,
                            offset: int | None = None) -> BoundaryIdentityResult:
    """Deviation of u_t = u_x^2 - u_x b at the right boundary.

    u_t, u_x, and u u_xx are fitted linearly over the near-boundary window
    and extrapolated to r(t); the (m-1) u b_x term vanishes there since
    u(r) = 0.  Applicable only to non-degenerate traces.
    """
    verdict = nondegeneracy_trace(trace)
    if not verdict.persistent:
        raise BoundaryError(
            f"boundary identity not applicable: trace is '{verdict.verdict}'"
        )
    window = trace.window if window is None else window
    offset = trace.offset if offset is None else offset
    snaps = trajectory.snapshots
    m = trajectory.params.m
    grid = trajectory.grid
    n_t = len(snaps)
    times, dev, uuxx = [], [], []
    for n in range(1, n_t - 1):
        if not (trace.valid[n] and np.isfinite(trace.k_right[n])):
            continue
        r = trace.r[n]
        u = to_pressure(snaps[n].rho, m)
        u_prev = to_pressure(snaps[n - 1].rho, m).values
        u_next = to_pressure(snaps[n + 1].rho, m).values
        u_t = (u_next - u_prev) / (snaps[n + 1].t - snaps[n - 1].t)
        ux, uxx = discrete_derivatives(u)
        dx = grid.dx
        j = int(math.floor((r - grid.topology.xmin) / dx))
        if grid.periodic:
            j %= grid.n_cells
        anchor_x = grid.topology.xmin + (j + 0.5) * dx
        if grid.periodic:
            p = grid.topology.period
            anchor_x += p * round((r - anchor_x) / p)
        try:
            xs, idx = _fit_cells(grid, anchor_x, j, window, offset, "right")
        except BoundaryError:
            continue
        ux_r = _fit_at(xs, ux[idx], r)
        ut_r = _fit_at(xs, u_t[idx], r)
        uuxx_r = _fit_at(xs, u.values[idx] * uxx[idx], r)
        b_r = trace.b_at_r[n]
        times.append(snaps[n].t)
        dev.append(abs(ut_r - (ux_r * ux_r - ux_r * b_r)))
        uuxx.append(uuxx_r)
    if not times:
        raise BoundaryError("no usable interior snapshots for the identity")
    return BoundaryIdentityResult(np.array(times), np.array(dev),
                                  np.array(uuxx))


@dataclass(frozen=True)
class Classification:
    verdict: str
    max_deviation: float
    tolerance: float
    series: np.ndarray
    times: np.ndarray

    @property
    def waiting_time(self) -> bool:
        return self.verdict == "WaitingTime"

    @property
    def expanding(self) -> bool:
        return self.verdict == "ExpandingRelative"


def classify_boundary(trace: FreeBoundaryTrace, path) -> Classification:
    """Waiting-time versus relative-expansion dichotomy for r(t).

    The streamline path must be anchored at (r(t0), t0) for some trace
    time t0; each boundary point either rides its streamline (within
    2 dx plus the integrator tolerance) or separates from it strictly
    and monotonically, expanding after t0 and trailing before it.
    Anything else is reported inconclusive with the peak deviation.
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
        raise BoundaryError("trace has no extractable boundary on the window")
    t0 = path.origin[1]
    r_at_t0 = r[np.argmin(np.abs(pt - t0))]
    if abs(path.origin[0] - r_at_t0) > 1e-9 * max(1.0, abs(r_at_t0)) + 1e-12:
        raise BoundaryError(
            f"path origin {path.origin[0]:g} is not the boundary point "
            f"r(t0)={r_at_t0:g}"
        )
    s = r - path.x
    tol = 2.0 * trace.dx + path.tolerance
    max_dev = float(np.max(np.abs(s)))
    if max_dev <= tol:
        return Classification("WaitingTime", max_dev, tol, s, pt)

    slack = 0.25 * tol
    monotone = bool(np.all(np.diff(s) >= -slack))
    after = pt > t0 + 1e-12
    before = pt < t0 - 1e-12
    ok = monotone
    beyond = False
    if after.any():
        ok = ok and bool(np.all(s[after] >= -tol))
        beyond = beyond or bool(s[after][-1] > tol)
    if before.any():
        ok = ok and bool(np.all(s[before] <= tol))
        beyond = beyond or bool(np.min(s[before]) < -tol)
    if ok and beyond:
        return Classification("ExpandingRelative", max_dev, tol, s, pt)
    return Classification("inconclusive", max_dev, tol, s, pt)
