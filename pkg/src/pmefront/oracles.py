"""Closed-form solutions and barrier constructions used as ground truth.

Contents:

* the self-similar source solution (ZKB) of the pure PME, whose pressure
  has constant curvature -1/((m+1) t) on its support;
* the traveling-wave pressure c*(c*t - x)_+;
* the two explicit stationary constructions: the torus pair
  rho = sin(2 pi x) + 1 with kernel W = Phi', Phi = -4 cos(2 pi x), m = 2,
  and the local-drift bump pair rho = (((m-1)/m)(-psi))^(1/(m-1)),
  V = psi' for a smooth negative bump psi;
* the linear and quadratic comparison barriers with their sampled
  certificates, and the finite-propagation supersolution envelope.

The ZKB formula is validated by the pressure-equation residual test before
anything else trusts it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DensityField, Grid, InitialDataSpec, ModelParams
from .drift import (
    BumpGradientField,
    CosineField,
    CosineGradientField,
    VectorField,
    ZeroField,
    _bump_exponent,
)
from .errors import BoundaryError, DomainError

__all__ = [
    "barenblatt_constants",
    "barenblatt_density",
    "barenblatt_pressure",
    "barenblatt_radius",
    "traveling_wave_pressure",
    "traveling_wave_density",
    "TorusStationary",
    "torus_stationary",
    "BumpStationary",
    "bump_stationary",
    "SyntheticDrift",
    "LinearBarrier",
    "barrier_linear",
    "linear_barrier_certificate",
    "BarrierParams",
    "QuadraticBarrier",
    "barrier_quadratic",
    "quadratic_barrier_certificate",
    "CertificateReport",
    "SupersolutionEnvelope",
    "build_initial_density",
]


# ---------------------------------------------------------------------------
# Barenblatt (ZKB) source solution


def barenblatt_constants(m: float, mass: float = 1.0):
    """Return (C, kappa) for the 1D source solution of given total mass.

    rho(x, t) = t^(-a) (C - kappa x^2 / t^(2a))_+^(1/(m-1)), a = 1/(m+1),
    kappa = (m-1)/(2 m (m+1)).  C is fixed by the mass through the Euler
    integral of (1 - s^2)^(1/(m-1)).
    """
    if not m > 1.0:
        raise DomainError(f"m must exceed 1, got {m}")
    if not mass > 0.0:
        raise DomainError(f"mass must be positive, got {mass}")
    kappa = (m - 1.0) / (2.0 * m * (m + 1.0))
    p = 1.0 / (m - 1.0)
    shape = math.sqrt(math.pi) * math.gamma(p + 1.0) / math.gamma(p + 1.5)
    c = (mass * math.sqrt(kappa) / shape) ** (1.0 / (p + 0.5))
    return c, kappa


def barenblatt_density(x, t: float, m: float, mass: float = 1.0):
    """ZKB density at time t > 0."""
    if not t > 0.0:
        raise DomainError(f"the source solution needs t > 0, got t={t}")
    c, kappa = barenblatt_constants(m, mass)
    a = 1.0 / (m + 1.0)
    xi = np.asarray(x, dtype=np.float64) / t**a
    core = np.maximum(c - kappa * xi * xi, 0.0)
    return t**(-a) * core ** (1.0 / (m - 1.0))


def barenblatt_pressure(x, t: float, m: float, mass: float = 1.0):
    """ZKB pressure; quadratic on the support with u_xx = -1/((m+1) t)."""
    if not t > 0.0:
        raise DomainError(f"the source solution needs t > 0, got t={t}")
    c, kappa = barenblatt_constants(m, mass)
    a = 1.0 / (m + 1.0)
    x = np.asarray(x, dtype=np.float64)
    core = np.maximum(c - kappa * (x / t**a) ** 2, 0.0)
    return (m / (m - 1.0)) * t**(-a * (m - 1.0)) * core


def barenblatt_radius(t: float, m: float, mass: float = 1.0) -> float:
    """Right support endpoint sqrt(C/kappa) t^(1/(m+1))."""
    if not t > 0.0:
        raise DomainError(f"the source solution needs t > 0, got t={t}")
    c, kappa = barenblatt_constants(m, mass)
    return math.sqrt(c / kappa) * t ** (1.0 / (m + 1.0))


# ---------------------------------------------------------------------------
# Traveling wave


def traveling_wave_pressure(x, t: float, c: float, sign: int = 1):
    """u = c (c t - sign * x)_+; sign=+1 is the right-moving front."""
    if not c > 0.0:
        raise DomainError(f"wave speed must be positive, got {c}")
    x = np.asarray(x, dtype=np.float64)
    return c * np.maximum(c * t - sign * x, 0.0)


def traveling_wave_density(x, t: float, c: float, m: float, sign: int = 1):
    u = traveling_wave_pressure(x, t, c, sign)
    return ((m - 1.0) / m * u) ** (1.0 / (m - 1.0))


# ---------------------------------------------------------------------------
# Explicit stationary solutions


@dataclass(frozen=True)
class TorusStationary:
    """The nonlocal stationary pair on the unit torus (m = 2, V = 0)."""

    m: float
    period: float
    kernel: VectorField
    v_field: VectorField

    def density(self, x):
        return np.sin(2.0 * np.pi * np.asarray(x, dtype=np.float64)) + 1.0

    def potential(self, x):
        """The interaction potential Phi = -4 cos(2 pi x) (kernel = Phi')."""
        return -4.0 * np.cos(2.0 * np.pi * np.asarray(x, dtype=np.float64))

    def certificate(self, rho: DensityField) -> np.ndarray:
        """2 rho + Phi * rho, constant (= 2) exactly at the stationary state."""
        from .drift import convolve

        phi = CosineField(a=-4.0, period=self.period)
        return 2.0 * rho.values + convolve(phi, rho)


def torus_stationary() -> TorusStationary:
    """rho = sin(2 pi x) + 1 with W = Phi', Phi = -4 cos(2 pi x), m = 2.

    The zero set is the single point x = 3/4, where the drift also
    vanishes, so the free boundary never moves.
    """
    return TorusStationary(
        m=2.0,
        period=1.0,
        kernel=CosineGradientField(a=4.0, period=1.0),
        v_field=ZeroField(),
    )


@dataclass(frozen=True)
class BumpStationary:
    """Local-drift stationary bump on an interval I."""

    m: float
    xmin: float
    xmax: float
    v_field: BumpGradientField

    @property
    def center(self) -> float:
        return 0.5 * (self.xmin + self.xmax)

    @property
    def halfwidth(self) -> float:
        return 0.5 * (self.xmax - self.xmin)

    def psi(self, x):
        return self.v_field.potential(x)

    def density(self, x):
        base = (self.m - 1.0) / self.m * (-self.psi(x))
        return np.power(np.maximum(base, 0.0), 1.0 / (self.m - 1.0))

    def pressure(self, x):
        """Equals -psi on I, making the flux rho * (u + psi)' vanish."""
        return -self.psi(x)


def bump_stationary(m: float, xmin: float, xmax: float) -> BumpStationary:
    """Stationary pair rho = (((m-1)/m)(-psi))^(1/(m-1)), V = psi'.

    psi(x) = -exp(-1/(1-y^2)) on the normalized coordinate y of (xmin, xmax)
    and zero outside.  The pressure is exactly -psi, so
    (m/(m-1)) rho^(m-1) + psi vanishes identically on the interval.
    """
    if not m > 1.0:
        raise DomainError(f"m must exceed 1, got {m}")
    if not xmax > xmin:
        raise DomainError(f"empty interval ({xmin}, {xmax})")
    center = 0.5 * (xmin + xmax)
    halfwidth = 0.5 * (xmax - xmin)
    v = BumpGradientField(center=center, halfwidth=halfwidth, amplitude=1.0)
    return BumpStationary(m=m, xmin=xmin, xmax=xmax, v_field=v)


# ---------------------------------------------------------------------------
# Synthetic drift with all the derivatives the barriers need


@dataclass(frozen=True)
class SyntheticDrift:
    """b(x, t) = a sin(wx x + phase) cos(wt t) + offset, with all partials.

    Every norm appearing in the barrier constructions is bounded by
    |a| (1 + wx)^3 (1 + wt)^2 + |offset|; the shipped certificate configs
    use small a so all norms stay at or below 1.
    """

    a: float = 0.2
    wx: float = 1.0
    wt: float = 1.0
    phase: float = 0.0
    offset: float = 0.0

    def _s(self, x):
        return np.sin(self.wx * np.asarray(x, dtype=np.float64) + self.phase)

    def _c(self, x):
        return np.cos(self.wx * np.asarray(x, dtype=np.float64) + self.phase)

    def b(self, x, t):
        return self.a * self._s(x) * np.cos(self.wt * t) + self.offset

    def b_x(self, x, t):
        return self.a * self.wx * self._c(x) * np.cos(self.wt * t)

    def b_xx(self, x, t):
        return -self.a * self.wx**2 * self._s(x) * np.cos(self.wt * t)

    def b_xxx(self, x, t):
        return -self.a * self.wx**3 * self._c(x) * np.cos(self.wt * t)

    def b_t(self, x, t):
        return -self.a * self.wt * self._s(x) * np.sin(self.wt * t)

    def b_xt(self, x, t):
        return -self.a * self.wx * self.wt * self._c(x) * np.sin(self.wt * t)

    def b_xxt(self, x, t):
        return self.a * self.wx**2 * self.wt * self._s(x) * np.sin(self.wt * t)

    def b_tt(self, x, t):
        return -self.a * self.wt**2 * self._s(x) * np.cos(self.wt * t)

    def lipschitz_bound(self) -> float:
        return abs(self.a) * max(self.wx, self.wt, 1.0)


# ---------------------------------------------------------------------------
# Linear barrier (Darcy's law proof)


@dataclass(frozen=True)
class LinearBarrier:
    """L_eps = (a +/- eps)((a +/- 2 eps) t - x + b00 t)_+ anchored at (0,0)."""

    a: float
    eps: float
    b00: float
    sign: int = 1

    def __post_init__(self):
        if self.a < 0.0 or self.eps <= 0.0:
            raise DomainError("linear barrier needs a >= 0 and eps > 0")
        if self.sign not in (1, -1):
            raise DomainError("sign selects the +/- barrier, 1 or -1")

    @property
    def slope(self) -> float:
        return self.a + self.sign * self.eps

    @property
    def front_speed(self) -> float:
        return self.a + 2.0 * self.sign * self.eps + self.b00

    def u(self, x, t):
        x = np.asarray(x, dtype=np.float64)
        return self.slope * np.maximum(
            (self.a + 2.0 * self.sign * self.eps) * t - x + self.b00 * t, 0.0
        )


def barrier_linear(a: float, eps: float, b00: float, sign: int = 1) -> LinearBarrier:
    """The comparison barrier from the Darcy's law proof."""
    return LinearBarrier(a=a, eps=eps, b00=b00, sign=sign)


@dataclass(frozen=True)
class CertificateReport:
    """Sampled certificate outcome over a stated region."""

    name: str
    region: dict
    n_samples: int
    minima: dict
    passed: bool
    detail: dict

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "region": self.region,
            "n_samples": self.n_samples,
            "minima": self.minima,
            "passed": self.passed,
            "detail": self.detail,
        }


def linear_barrier_certificate(barrier: LinearBarrier, drift: SyntheticDrift,
                               m: float, delta: float, tau: float,
                               n_x: int = 64, n_t: int = 64) -> CertificateReport:
    """Sample L(L_eps^+) over {|x| < delta, 0 < t < tau}; all values must be
    non-negative for the barrier to be a supersolution there.

    On the positive set of the barrier,
    L = slope*(front speed) - slope^2 - slope*(b - b00 shift terms) + ...
    reduces to slope*eps - slope*(b(x,t) - b00) + (m-1) L_eps b_x, so the
    certificate holds when delta, tau are small against eps.
    """
    if barrier.sign != 1:
        raise DomainError("the supersolution certificate applies to the + barrier")
    xs = np.linspace(-delta, delta, n_x)
    ts = np.linspace(tau / n_t, tau, n_t)
    xg, tg = np.meshgrid(xs, ts, indexing="ij")
    uvals = barrier.u(xg, tg)
    mask = uvals > 0.0
    slope = barrier.slope
    speed = barrier.a + 2.0 * barrier.eps
    bvals = drift.b(xg, tg)
    bxvals = drift.b_x(xg, tg)
    # u_t = slope*(speed + b00); u_x = -slope; u_xx = 0 on the positive set
    lcal = (
        slope * (speed + barrier.b00)
        - slope * slope
        - slope * bvals
        + (m - 1.0) * uvals * bxvals
    )
    vals = lcal[mask]
    min_l = float(vals.min()) if vals.size else float("nan")
    passed = bool(vals.size) and bool(np.all(vals >= 0.0))
    return CertificateReport(
        name="linear_barrier_supersolution",
        region={"delta": delta, "tau": tau},
        n_samples=int(mask.sum()),
        minima={"calL": min_l},
        passed=passed,
        detail={
            "a": barrier.a,
            "eps": barrier.eps,
            "b00": barrier.b00,
            "m": m,
            "drift_lipschitz": drift.lipschitz_bound(),
        },
    )


# ---------------------------------------------------------------------------
# Quadratic barrier (non-degeneracy persistence proof)


@dataclass(frozen=True)
class BarrierParams:
    """Constants of the non-degeneracy barrier, anchored at the origin.

    sigma0 bounds the boundary slope, sigma1 the semiconvexity constant,
    sigma2 the cubed drift norms, sigma3 = max(sigma1, sigma2) >= 1.
    L = max((m-1)(5 sigma3 + 2 sigma0), 4 sigma3) when built canonically,
    lambda(t) = (sigma3/2) e^(-2 L t), alpha(0) = k0/sigma3.
    """

    m: float
    k0: float
    sigma0: float
    sigma1: float
    sigma2: float
    sigma3: float
    L: float
    anchor: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.k0 > 0.0:
            raise DomainError(
                "the barrier exists only at non-degenerate points (k0 > 0)"
            )
        if not self.sigma3 >= 1.0:
            raise DomainError(f"sigma3 must be at least 1, got {self.sigma3}")
        if abs(self.sigma3 - max(self.sigma1, self.sigma2)) > 1e-12 * self.sigma3:
            raise DomainError("sigma3 must equal max(sigma1, sigma2)")
        l_min = max((self.m - 1.0) * (5.0 * self.sigma3 + 2.0 * self.sigma0),
                    4.0 * self.sigma3)
        if self.L < l_min * (1.0 - 1e-12):
            raise DomainError(f"L={self.L} below the admissible minimum {l_min}")

    @classmethod
    def canonical(cls, m: float, k0: float, sigma0: float, sigma1: float,
                  sigma2: float) -> "BarrierParams":
        sigma3 = max(sigma1, sigma2)
        if sigma3 < 1.0:
            sigma3 = 1.0
        L = max((m - 1.0) * (5.0 * sigma3 + 2.0 * sigma0), 4.0 * sigma3)
        return cls(m=m, k0=k0, sigma0=sigma0, sigma1=sigma1, sigma2=sigma2,
                   sigma3=sigma3, L=L)

    @property
    def lambda0(self) -> float:
        return 0.5 * self.sigma3

    @property
    def alpha0(self) -> float:
        return self.k0 / self.sigma3


class QuadraticBarrier:
    """The subsolution lambda(t) (alpha(t)^2 - y^2)_+ built on a second-order
    streamline approximation y = x + alpha0 - b t + (b b_x + b_t) t^2 / 2.

    alpha solves alpha' = (2 k0/sigma3) lambda (1 - L t) in closed form:
    alpha(t) = alpha0 + k0 [ (1 - e^(-2Lt))/(4L) + (t/2) e^(-2Lt) ].
    """

    def __init__(self, params: BarrierParams, drift: SyntheticDrift):
        self.params = params
        self.drift = drift

    def lam(self, t):
        p = self.params
        return 0.5 * p.sigma3 * np.exp(-2.0 * p.L * np.asarray(t, dtype=np.float64))

    def lam_prime(self, t):
        return -2.0 * self.params.L * self.lam(t)

    def alpha(self, t):
        p = self.params
        t = np.asarray(t, dtype=np.float64)
        e = np.exp(-2.0 * p.L * t)
        return p.alpha0 + p.k0 * ((1.0 - e) / (4.0 * p.L) + 0.5 * t * e)

    def alpha_prime(self, t):
        p = self.params
        t = np.asarray(t, dtype=np.float64)
        return p.k0 * np.exp(-2.0 * p.L * t) * (1.0 - p.L * t)

    def y(self, x, t):
        d = self.drift
        b = d.b(x, t)
        return (
            np.asarray(x, dtype=np.float64)
            + self.params.alpha0
            - b * t
            + (b * d.b_x(x, t) + d.b_t(x, t)) * 0.5 * t * t
        )

    def y_x(self, x, t):
        d = self.drift
        return (
            1.0
            - d.b_x(x, t) * t
            + (d.b_xx(x, t) * d.b(x, t) + d.b_x(x, t) ** 2 + d.b_xt(x, t))
            * 0.5 * t * t
        )

    def y_xx(self, x, t):
        d = self.drift
        return (
            -d.b_xx(x, t) * t
            + (d.b_xxx(x, t) * d.b(x, t) + 3.0 * d.b_xx(x, t) * d.b_x(x, t)
               + d.b_xxt(x, t)) * 0.5 * t * t
        )

    def y_t(self, x, t):
        d = self.drift
        b = d.b(x, t)
        return (
            -b
            + b * d.b_x(x, t) * t
            + (d.b_t(x, t) * d.b_x(x, t) + b * d.b_xt(x, t) + d.b_tt(x, t))
            * 0.5 * t * t
        )

    def u(self, x, t):
        yy = self.y(x, t)
        return self.lam(t) * np.maximum(self.alpha(t) ** 2 - yy * yy, 0.0)

    def j1(self, x, t):
        """Coefficient inequality (must be <= 0 in the positive set)."""
        p = self.params
        lam = self.lam(t)
        yy = self.y(x, t)
        return (
            -p.L
            + 2.0 * (p.m - 1.0) * lam * (self.y_x(x, t) ** 2 + yy * self.y_xx(x, t))
            + (p.m - 1.0) * self.drift.b_x(x, t)
        )

    def j2(self, x, t):
        """Remainder inequality (must be <= 0 in the positive set)."""
        lam = self.lam(t)
        yy = self.y(x, t)
        a = self.alpha(t)
        return (
            0.5 * self.lam_prime(t) * (a * a - yy * yy)
            + 2.0 * lam * a * self.alpha_prime(t)
            - 2.0 * lam * yy * self.y_t(x, t)
            - 4.0 * lam * lam * yy * yy * self.y_x(x, t) ** 2
            - 2.0 * lam * yy * self.y_x(x, t) * self.drift.b(x, t)
        )

    def pde_operator(self, x, t):
        """L(u) of the barrier; equals lam*J1*(alpha^2-y^2) + J2 in the
        positive set, exposed for consistency tests."""
        lam = self.lam(t)
        yy = self.y(x, t)
        a = self.alpha(t)
        return lam * self.j1(x, t) * (a * a - yy * yy) + self.j2(x, t)


def barrier_quadratic(params: BarrierParams, drift: SyntheticDrift) -> QuadraticBarrier:
    """Build the non-degeneracy barrier around a drift snapshot."""
    return QuadraticBarrier(params, drift)


def quadratic_barrier_certificate(barrier: QuadraticBarrier,
                                  tau_star: float | None = None,
                                  n_x: int = 128, n_t: int = 64,
                                  scan: bool = True) -> CertificateReport:
    """Sample J1 and J2 over {|y| < alpha(t), 0 < t < min(k0, tau_star)}.

    Both must be non-positive everywhere for the barrier to be a
    subsolution.  The report also records the largest sampled horizon for
    which the certificates hold, since the proof's tau* has no explicit
    value.
    """
    p = barrier.params
    if tau_star is None:
        tau_star = 0.1 * min(p.k0, 1.0)
    t_hi = min(p.k0, tau_star)
    ts = np.linspace(t_hi / n_t, t_hi, n_t)
    a_max = float(barrier.alpha(t_hi))
    xs = np.linspace(-p.alpha0 - 2.0 * a_max, a_max, n_x)
    xg, tg = np.meshgrid(xs, ts, indexing="ij")
    yy = barrier.y(xg, tg)
    mask = np.abs(yy) < barrier.alpha(tg)
    j1 = barrier.j1(xg, tg)
    j2 = barrier.j2(xg, tg)
    ok = (j1 <= 0.0) & (j2 <= 0.0)
    valid = ok | ~mask
    passed = bool(mask.sum()) and bool(np.all(valid))
    max_t_ok = t_hi
    if scan:
        col_ok = np.all(valid, axis=0)
        bad = np.nonzero(~col_ok)[0]
        max_t_ok = float(ts[bad[0] - 1]) if bad.size and bad[0] > 0 else (
            0.0 if bad.size else t_hi)
    return CertificateReport(
        name="quadratic_barrier_subsolution",
        region={"tau_star": t_hi, "alpha_max": a_max, "n_x": n_x, "n_t": n_t},
        n_samples=int(mask.sum()),
        minima={
            "max_j1": float(j1[mask].max()) if mask.any() else float("nan"),
            "max_j2": float(j2[mask].max()) if mask.any() else float("nan"),
        },
        passed=passed,
        detail={
            "m": p.m, "k0": p.k0, "sigma3": p.sigma3, "L": p.L,
            "largest_certified_horizon": max_t_ok,
        },
    )


# ---------------------------------------------------------------------------
# Finite-propagation supersolution envelope


class SupersolutionEnvelope:
    """Windowed supersolution bounding the support of any run with drift.

    With M = max|b| + max|b_x| + max(u), alpha = (m-1) M, tau = 1/alpha,
    C1 = (e+1) M tau + 1, the support stays inside
    (-infinity, R + C1 * ceil(t / tau)] for all t.
    """

    def __init__(self, R: float, M: float, m: float):
        if not M > 0.0:
            raise DomainError(f"envelope norm M must be positive, got {M}")
        if not m > 1.0:
            raise DomainError(f"m must exceed 1, got {m}")
        self.R = R
        self.M = M
        self.m = m
        self.alpha = (m - 1.0) * M
        self.tau = 1.0 / self.alpha
        self.c1 = (math.e + 1.0) * M * self.tau + 1.0

    def phi(self, x, t: float):
        """The supersolution on the window containing t (local window time)."""
        if t < 0.0:
            raise DomainError("the envelope is defined for t >= 0")
        k = int(math.floor(t / self.tau))
        s = t - k * self.tau
        x = np.asarray(x, dtype=np.float64)
        return (
            math.exp(self.alpha * s) * self.M
            * np.maximum(self.R + self.c1 * k + (math.e + 1.0) * self.M * s
                         + 1.0 - x, 0.0)
        )

    def support_bound(self, t: float) -> float:
        """Right end of the envelope at elapsed time t >= 0."""
        if t < 0.0:
            raise DomainError("the envelope is defined for t >= 0")
        return self.R + self.c1 * math.ceil(t / self.tau - 1e-12)


# ---------------------------------------------------------------------------
# Initial data materialization


def build_initial_density(init: InitialDataSpec, grid: Grid,
                          params: ModelParams) -> DensityField:
    """Sample a named initial profile onto the grid."""
    x = grid.centers
    p = init.params
    profile = init.profile
    if profile == "barenblatt":
        t0 = p.get("t0", 1.0)
        mass = p.get("mass", 1.0)
        vals = barenblatt_density(x, t0, params.m, mass)
        return DensityField(grid, vals, time=t0)
    if profile == "traveling_wave":
        c = p.get("c", 1.0)
        t0 = p.get("t0", 0.0)
        vals = traveling_wave_density(x, t0, c, params.m)
        return DensityField(grid, vals, time=t0)
    if profile == "torus_stationary":
        if not grid.periodic:
            raise DomainError("torus_stationary needs Periodic topology")
        pair = torus_stationary()
        return DensityField(grid, pair.density(x), time=0.0)
    if profile == "bump_stationary":
        pair = bump_stationary(params.m, p["xmin"], p["xmax"])
        return DensityField(grid, pair.density(x), time=0.0)
    if profile == "custom":
        data = np.loadtxt(p["path"], delimiter=",", dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != 2:
            raise DomainError("custom profile CSV must have columns x, rho")
        vals = np.interp(x, data[:, 0], data[:, 1], left=0.0, right=0.0)
        return DensityField(grid, np.maximum(vals, 0.0), time=0.0)
    raise DomainError(f"unknown initial profile '{profile}'")
