"""fvlab: Monte Carlo laboratory for branching Brownian particle systems.

N particles diffuse in a Euclidean domain; a particle hitting the boundary is
killed and a uniformly chosen survivor branches, keeping the population
constant.  The package simulates the exact dynamics, estimates the
quasi-stationary distribution against analytic references, and runs the
numerical experiments on cone angles, hitting/exit-time comparability,
excursion-lifetime tails, the finite-extinction counterexample and
two-particle survival in polygons.
"""

from .conemath import (ConeSpec, ConvergenceError, RootNotFoundError,
                       hawkes_nonintersect, hyp_h, invert_theta,
                       lipschitz_threshold, theta_pd)
from .fleming_viot import (DirichletGroundState, FVRun, FVState, Histogram,
                           JumpRecord, SimultaneousExtinction,
                           eigenfunction_reference, empirical_measure, fv_step,
                           histogram_to_csv, jump_log_to_csv, qsd_estimate,
                           regular_grid, run_fv)
from .geometry import (Ball, Box, Cone, Domain, ExitQuery, GeometryError,
                       Interval, Polygon2D, Wedge2D, bridge_absorption_prob,
                       domain_from_dict)
from .stochastic import (ExitSample, PathConfig, RngStream, SdeStep,
                         exit_times_batch, gaussian_increment,
                         sample_exit_time, sde_step_repulsive)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # cone math
    "ConeSpec", "ConvergenceError", "RootNotFoundError", "hyp_h", "theta_pd",
    "lipschitz_threshold", "hawkes_nonintersect", "invert_theta",
    # geometry
    "Domain", "Interval", "Box", "Ball", "Polygon2D", "Wedge2D", "Cone",
    "ExitQuery", "GeometryError", "bridge_absorption_prob", "domain_from_dict",
    # stochastic
    "RngStream", "PathConfig", "SdeStep", "ExitSample", "gaussian_increment",
    "sde_step_repulsive", "sample_exit_time", "exit_times_batch",
    # particle system
    "FVState", "FVRun", "JumpRecord", "Histogram", "SimultaneousExtinction",
    "fv_step", "run_fv", "empirical_measure", "regular_grid", "qsd_estimate",
    "eigenfunction_reference", "DirichletGroundState", "jump_log_to_csv",
    "histogram_to_csv",
]
