"""1D porous-medium flow with local and nonlocal drifts.

A conservative finite-volume solver for
rho_t = (rho^m)_xx + (rho V + rho W*rho)_x, plus the machinery to track
the solution's free boundary and certify the structural laws that govern
it: Darcy's law at the moving front, the semiconvexity (fundamental)
estimate of the pressure, finite propagation envelopes, non-degeneracy
persistence of the boundary slope, and the waiting-time dichotomy.
"""

from .core import (
    DensityField,
    Grid,
    InitialDataSpec,
    Line,
    ModelParams,
    Periodic,
    interpolate,
    make_grid,
)
from .drift import DriftField, assemble_drift, convolve, make_field
from .pressure import (
    DiagnosticsReport,
    PressureField,
    aronson_benilan_gap,
    discrete_derivatives,
    from_pressure,
    lipschitz_monitor,
    pme_residual,
    to_pressure,
)
from .solver import SimState, Trajectory, cfl_dt, run, step, total_mass

__version__ = "0.1.0"
