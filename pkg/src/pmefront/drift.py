"""Drift assembly: vector field specifications and the nonlocal term.

The total drift is b = -(V + W*rho) where V is a local field and W an
interaction kernel convolved with the density.  The convolution is midpoint
quadrature by direct summation; ``convolve_reference`` is the plain double
loop defining the semantics, ``convolve`` the vectorized path that must
match it to 1e-12 relative.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import DensityField, Grid, _frozen_values
from .errors import AlignmentError, DomainError

logger = logging.getLogger(__name__)

__all__ = [
    "VectorField",
    "ZeroField",
    "ConstantField",
    "LinearField",
    "CosineField",
    "CosineGradientField",
    "BumpGradientField",
    "GaussianField",
    "TabulatedField",
    "make_field",
    "DriftField",
    "ConvolutionPlan",
    "convolve",
    "convolve_reference",
    "assemble_drift",
]


class VectorField:
    """Evaluable scalar field of (x, t) with an evaluable spatial derivative."""

    kind = "abstract"
    time_dependent = False
    analytic = True

    def value(self, x, t=0.0):
        raise NotImplementedError

    def derivative(self, x, t=0.0):
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        return False


@dataclass(frozen=True)
class ZeroField(VectorField):
    kind = "zero"

    def value(self, x, t=0.0):
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def derivative(self, x, t=0.0):
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    @property
    def is_zero(self) -> bool:
        return True


@dataclass(frozen=True)
class ConstantField(VectorField):
    kind = "constant"
    a: float = 1.0

    def value(self, x, t=0.0):
        return np.full_like(np.asarray(x, dtype=np.float64), self.a)

    def derivative(self, x, t=0.0):
        return np.zeros_like(np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class LinearField(VectorField):
    """a*x."""

    kind = "linear"
    a: float = 1.0

    def value(self, x, t=0.0):
        return self.a * np.asarray(x, dtype=np.float64)

    def derivative(self, x, t=0.0):
        return np.full_like(np.asarray(x, dtype=np.float64), self.a)


@dataclass(frozen=True)
class CosineField(VectorField):
    """a*cos(2*pi*x/period); the torus interaction potential shape."""

    kind = "cosine"
    a: float = 1.0
    period: float = 1.0

    def value(self, x, t=0.0):
        w = 2.0 * np.pi / self.period
        return self.a * np.cos(w * np.asarray(x, dtype=np.float64))

    def derivative(self, x, t=0.0):
        w = 2.0 * np.pi / self.period
        return -self.a * w * np.sin(w * np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class CosineGradientField(VectorField):
    """2*pi*a*sin(2*pi*x/period), the derivative of -a*cos(2*pi*x/period)."""

    kind = "cosine_gradient"
    a: float = 1.0
    period: float = 1.0

    def value(self, x, t=0.0):
        w = 2.0 * np.pi / self.period
        return self.a * w * np.sin(w * np.asarray(x, dtype=np.float64))

    def derivative(self, x, t=0.0):
        w = 2.0 * np.pi / self.period
        return self.a * w * w * np.cos(w * np.asarray(x, dtype=np.float64))


def _bump_exponent(y):
    """exp(-1/(1-y^2)) on |y| < 1, zero outside, computed without warnings."""
    y = np.asarray(y, dtype=np.float64)
    inside = np.abs(y) < 1.0
    out = np.zeros_like(y)
    yi = y[inside]
    out[inside] = np.exp(-1.0 / (1.0 - yi * yi))
    return out


@dataclass(frozen=True)
class BumpGradientField(VectorField):
    """Spatial derivative of the smooth bump potential.

    The potential is psi(x) = -amplitude * exp(-1/(1-y^2)) with
    y = (x - center)/halfwidth, zero outside |y| >= 1.
    """

    kind = "bump_gradient"
    center: float = 0.0
    halfwidth: float = 1.0
    amplitude: float = 1.0

    def potential(self, x, t=0.0):
        y = (np.asarray(x, dtype=np.float64) - self.center) / self.halfwidth
        return -self.amplitude * _bump_exponent(y)

    def value(self, x, t=0.0):
        y = (np.asarray(x, dtype=np.float64) - self.center) / self.halfwidth
        inside = np.abs(y) < 1.0
        out = np.zeros_like(y)
        yi = y[inside]
        one = 1.0 - yi * yi
        # psi' = -A e^g g' / h with g = -1/(1-y^2), g' = -2y/(1-y^2)^2
        out[inside] = (
            self.amplitude * np.exp(-1.0 / one) * (2.0 * yi / one**2) / self.halfwidth
        )
        return out

    def derivative(self, x, t=0.0):
        y = (np.asarray(x, dtype=np.float64) - self.center) / self.halfwidth
        inside = np.abs(y) < 1.0
        out = np.zeros_like(y)
        yi = y[inside]
        one = 1.0 - yi * yi
        gp = -2.0 * yi / one**2
        gpp = -2.0 * (1.0 + 3.0 * yi * yi) / one**3
        out[inside] = (
            -self.amplitude * np.exp(-1.0 / one) * (gpp + gp * gp) / self.halfwidth**2
        )
        return out


@dataclass(frozen=True)
class GaussianField(VectorField):
    """a*exp(-(x-mu)^2/(2*sigma^2))."""

    kind = "gaussian"
    a: float = 1.0
    mu: float = 0.0
    sigma: float = 1.0

    def value(self, x, t=0.0):
        z = (np.asarray(x, dtype=np.float64) - self.mu) / self.sigma
        return self.a * np.exp(-0.5 * z * z)

    def derivative(self, x, t=0.0):
        x = np.asarray(x, dtype=np.float64)
        z = (x - self.mu) / self.sigma
        return -self.a * np.exp(-0.5 * z * z) * z / self.sigma


class TabulatedField(VectorField):
    """Field sampled on a uniform displacement grid, linearly interpolated.

    The spatial derivative comes from second-order central differences of
    the table.  Smoothness cannot be verified for tabulated data; large
    discrete second differences only trigger a warning.
    """

    kind = "tabulated"
    analytic = False

    def __init__(self, displacements, values):
        disp = np.asarray(displacements, dtype=np.float64)
        vals = np.asarray(values, dtype=np.float64)
        if disp.ndim != 1 or disp.shape != vals.shape or disp.size < 3:
            raise DomainError("tabulated field needs two 1D columns of length >= 3")
        steps = np.diff(disp)
        h = steps[0]
        if h <= 0 or not np.allclose(steps, h, rtol=1e-9, atol=0.0):
            raise DomainError("tabulated displacements must be uniform and increasing")
        self.disp = disp
        self.vals = vals
        self.h = float(h)
        d2 = np.abs(np.diff(vals, 2)) / h**2
        scale = max(np.max(np.abs(vals)), 1e-300)
        if d2.size and np.max(d2) * h**2 > 0.5 * scale:
            logger.warning(
                "tabulated kernel has large discrete second differences; "
                "the smoothness assumption on the kernel may not hold"
            )
        grad = np.gradient(vals, h, edge_order=2)
        self._grad = grad

    @classmethod
    def from_csv(cls, path) -> "TabulatedField":
        data = np.loadtxt(path, delimiter=",", dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != 2:
            raise DomainError(f"tabulated field CSV must have two columns: {path}")
        return cls(data[:, 0], data[:, 1])

    def value(self, x, t=0.0):
        return np.interp(np.asarray(x, dtype=np.float64), self.disp, self.vals)

    def derivative(self, x, t=0.0):
        return np.interp(np.asarray(x, dtype=np.float64), self.disp, self._grad)


_FIELD_KINDS = {
    "zero": ZeroField,
    "constant": ConstantField,
    "linear": LinearField,
    "cosine": CosineField,
    "cosine_gradient": CosineGradientField,
    "bump_gradient": BumpGradientField,
    "gaussian": GaussianField,
}


def make_field(kind: str, **params) -> VectorField:
    """Construct a vector field by kind name.

    ``tabulated`` expects ``path=<csv>`` with two columns
    (displacement, value) at uniform spacing.
    """
    if kind == "tabulated":
        path = params.pop("path", None)
        if params:
            raise DomainError(f"unknown tabulated field parameters: {sorted(params)}")
        if path is None:
            raise DomainError("tabulated field requires a 'path' parameter")
        return TabulatedField.from_csv(path)
    try:
        cls = _FIELD_KINDS[kind]
    except KeyError:
        raise DomainError(
            f"unknown field kind '{kind}'; choose from "
            f"{sorted(_FIELD_KINDS) + ['tabulated']}"
        ) from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise DomainError(f"bad parameters for field kind '{kind}': {exc}") from None


@dataclass(frozen=True)
class DriftField:
    """Total drift b = -(V + W*rho) and its spatial derivative at one time."""

    grid: Grid
    b_values: np.ndarray
    bx_values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        b = _frozen_values(self.b_values, self.grid.n_cells, "drift values")
        bx = _frozen_values(self.bx_values, self.grid.n_cells, "drift derivative")
        object.__setattr__(self, "b_values", b)
        object.__setattr__(self, "bx_values", bx)


def _kernel_displacements(grid: Grid) -> np.ndarray:
    """Displacement samples x_i - x_j needed by the direct summation."""
    n, dx = grid.n_cells, grid.dx
    if grid.periodic:
        d = np.arange(n) * dx
        p = grid.topology.period
        # principal value in [-p/2, p/2)
        return (d + 0.5 * p) % p - 0.5 * p
    return np.arange(-(n - 1), n) * dx


def _kernel_samples(kernel: VectorField, grid: Grid, t: float,
                    derivative: bool = False) -> np.ndarray:
    d = _kernel_displacements(grid)
    k = kernel.derivative(d, t) if derivative else kernel.value(d, t)
    k = np.asarray(k, dtype=np.float64)
    if isinstance(kernel, TabulatedField):
        lo, hi = kernel.disp[0], kernel.disp[-1]
        if d.min() < lo - 1e-12 or d.max() > hi + 1e-12:
            raise AlignmentError(
                "tabulated kernel does not cover the grid's displacement range "
                f"[{d.min():g}, {d.max():g}] (table spans [{lo:g}, {hi:g}])"
            )
        if not np.isclose(kernel.h, grid.dx, rtol=1e-9):
            raise AlignmentError(
                f"tabulated kernel spacing {kernel.h:g} does not match grid "
                f"dx {grid.dx:g}"
            )
    return k


def _convolve_samples(k: np.ndarray, rho_values: np.ndarray, grid: Grid) -> np.ndarray:
    """Direct-summation convolution given kernel displacement samples.

    Periodic: out[i] = sum_d k[d] * rho[(i-d) mod n] * dx with k indexed by
    d in [0, n).  Line: full displacement table, d in [-(n-1), n-1].
    Both reduce to np.convolve, which multiplies out the sums directly in a
    fixed order, so results are deterministic.
    """
    n, dx = grid.n_cells, grid.dx
    if grid.periodic:
        tiled = np.concatenate([rho_values, rho_values])
        return np.convolve(k, tiled)[n:2 * n] * dx
    return np.convolve(rho_values, k)[n - 1:2 * n - 1] * dx


class ConvolutionPlan:
    """FFT-factorized convolution with a fixed kernel on a fixed grid.

    An optional acceleration of the direct summation, never the
    semantics: ``apply`` must (and is tested to) match ``convolve`` to
    1e-12 relative.  Circular convolution on Periodic topology, padded
    linear convolution on Line.
    """

    def __init__(self, kernel_samples: np.ndarray, grid: Grid):
        n = grid.n_cells
        self.grid = grid
        self.dx = grid.dx
        if grid.periodic:
            if kernel_samples.shape != (n,):
                raise AlignmentError("periodic kernel table must have n_cells entries")
            self._pad = None
            self._khat = np.fft.rfft(kernel_samples)
        else:
            if kernel_samples.shape != (2 * n - 1,):
                raise AlignmentError("line kernel table must have 2*n_cells-1 entries")
            pad = 1 << (2 * n - 1).bit_length()
            self._pad = pad
            self._khat = np.fft.rfft(kernel_samples, pad)

    def apply(self, rho_values: np.ndarray) -> np.ndarray:
        n = self.grid.n_cells
        if self._pad is None:
            out = np.fft.irfft(np.fft.rfft(rho_values) * self._khat, n)
        else:
            full = np.fft.irfft(np.fft.rfft(rho_values, self._pad) * self._khat,
                                self._pad)
            out = full[n - 1:2 * n - 1]
        return out * self.dx

    @classmethod
    def for_kernel(cls, kernel: VectorField, grid: Grid, t: float = 0.0,
                   derivative: bool = False) -> "ConvolutionPlan":
        return cls(_kernel_samples(kernel, grid, t, derivative=derivative), grid)


def convolve(kernel: VectorField, rho: DensityField, t: float = 0.0,
             derivative: bool = False) -> np.ndarray:
    """Midpoint-quadrature convolution (W*rho)(x_i) on rho's grid.

    On Periodic topology displacements wrap to their principal value; on
    Line topology the integral is truncated to the box, which is exact
    while the density's support stays inside it.
    """
    if kernel.is_zero:
        return np.zeros(rho.grid.n_cells)
    k = _kernel_samples(kernel, rho.grid, t, derivative=derivative)
    return _convolve_samples(k, rho.values, rho.grid)


def _convolve_field(kernel: VectorField, rho_values: np.ndarray, grid: Grid,
                    t: float, derivative: bool = False) -> np.ndarray:
    """Array-level direct convolution (per-step fallback for kernels whose
    samples cannot be cached)."""
    k = _kernel_samples(kernel, grid, t, derivative=derivative)
    return _convolve_samples(k, rho_values, grid)


def convolve_reference(kernel: VectorField, rho: DensityField,
                       t: float = 0.0) -> np.ndarray:
    """Plain O(N^2) double loop; the semantics-defining implementation."""
    grid = rho.grid
    n, dx = grid.n_cells, grid.dx
    x = grid.centers
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            d = x[i] - x[j]
            if grid.periodic:
                p = grid.topology.period
                d = (d + 0.5 * p) % p - 0.5 * p
            acc += float(kernel.value(d, t)) * rho.values[j]
        out[i] = acc * dx
    return out


def assemble_drift(v_field: VectorField, w_field: VectorField,
                   rho: DensityField, t: float) -> DriftField:
    """Assemble b = -(V + W*rho) and b_x on rho's grid at time t.

    b_x uses the analytic derivative of V plus a convolution with W' when W
    is analytic; for tabulated W it falls back to central differences of b.
    """
    b, bx = _assemble_arrays(v_field, w_field, rho.values, rho.grid, t)
    return DriftField(rho.grid, b, bx, time=t)


def _assemble_arrays(v_field, w_field, rho_values, grid, t,
                     w_samples=None, wprime_samples=None):
    """Array-level drift assembly; the solver's per-step fast path.

    Kernel displacement samples may be passed in to avoid re-evaluating
    time-independent kernels every step.
    """
    x = grid.centers
    b = np.zeros(grid.n_cells)
    if not v_field.is_zero:
        b -= np.asarray(v_field.value(x, t), dtype=np.float64)
    if not w_field.is_zero:
        if w_samples is None:
            w_samples = _kernel_samples(w_field, grid, t)
        b -= _convolve_samples(w_samples, rho_values, grid)

    if w_field.is_zero or w_field.analytic:
        bx = np.zeros(grid.n_cells)
        if not v_field.is_zero:
            bx -= np.asarray(v_field.derivative(x, t), dtype=np.float64)
        if not w_field.is_zero:
            if wprime_samples is None:
                wprime_samples = _kernel_samples(w_field, grid, t, derivative=True)
            bx -= _convolve_samples(wprime_samples, rho_values, grid)
    else:
        bx = _central_difference(b, grid)
    return b, bx


def _central_difference(v: np.ndarray, grid: Grid) -> np.ndarray:
    """Second-order first derivative; one-sided stencils at Line edges."""
    dx = grid.dx
    if grid.periodic:
        return (np.roll(v, -1) - np.roll(v, 1)) / (2.0 * dx)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * dx)
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx)
    out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * dx)
    return out
