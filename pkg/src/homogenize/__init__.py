"""Homogenization of fast-slow systems driven by chaotic dynamics.

Drivers generate deterministic noise, ``pathgen`` builds rescaled paths and
their iterated integrals, ``estimators`` computes the diffusion and drift
matrices, ``solvers`` simulates fast-slow systems and their limit SDEs, and
``analysis`` compares the two.
"""

from ._core import BACKEND
from .analysis import (
    ComparisonReport,
    CohomologyTriple,
    Tolerances,
    cohomology_shift,
    cohomology_triple,
    convergence_report,
    energy_distance,
    ks_distance,
    moment_norms,
    moment_slope,
)
from .drivers import (
    DriverState,
    DriverSystem,
    Observable,
    center_observable,
    flow_step,
    make_observable,
    make_system,
    sample_initial,
    step,
)
from .estimators import (
    DiffusionStats,
    InducedData,
    drift_matrices,
    ensemble_E,
    green_kubo_discrete,
    green_kubo_flow,
    induced_stats,
)
from .pathgen import PathPair, chen_defect, discrete_path, flow_path, increment
from .solvers import (
    SdeSystem,
    TrajectoryEnsemble,
    correction_drift,
    make_sde,
    solve_fast_discrete,
    solve_fast_flow,
    solve_limit_sde,
)

__all__ = [
    "BACKEND", "ComparisonReport", "CohomologyTriple", "DiffusionStats", "DriverState",
    "DriverSystem", "InducedData", "Observable", "PathPair", "SdeSystem", "Tolerances",
    "TrajectoryEnsemble", "center_observable", "chen_defect", "cohomology_shift",
    "cohomology_triple", "convergence_report", "correction_drift", "discrete_path",
    "drift_matrices", "energy_distance", "ensemble_E", "flow_path", "flow_step",
    "green_kubo_discrete", "green_kubo_flow", "increment", "induced_stats", "ks_distance",
    "make_observable", "make_sde", "make_system", "moment_norms", "moment_slope",
    "sample_initial", "solve_fast_discrete", "solve_fast_flow", "solve_limit_sde", "step",
]
