"""cornerlab: 2D subsonic potential-flow workbench.

Conformal-map flows, embedded-boundary stream-function solvers, body
streamline topology, and corner-singularity diagnostics for flows around
piecewise-analytic bodies.
"""

from .gas import (
    FlowSample,
    GasModel,
    LimitSpeedExceeded,
    NotSubsonic,
    SupersonicState,
    density_from_speed,
    energy_density,
    pi_from_density,
    prandtl_glauert,
    sonic_mu,
    tau,
)
from .geometry import (
    BodyGeometry,
    CornerRecord,
    KarmanTrefftzProfile,
    body_from_json,
    circle_body,
    classify_corners,
    karman_trefftz_map,
    pacman_test,
    polygon_body,
    profile_to_body,
    slit_body,
)
from .conformal import (
    CirclePlaneFlow,
    ConformalFlowField,
    KuttaNotApplicable,
    complex_potential,
    kutta_circulation,
    stream_function,
    velocity_physical,
)
from .solver import (
    DiscreteField,
    FarField,
    Grid,
    SolverDiverged,
    SupersonicEncounter,
    channel_quadrant_flow,
    far_field_psi,
    solve_compressible,
    solve_incompressible,
    velocity_field,
)
from .topology import (
    StreamlineGraph,
    check_structure,
    classify_vertex,
    extract_zero_set,
    trace_body_streamline,
)
from .diagnostics import (
    CornerReport,
    SubsolutionParams,
    blowup_exponent,
    subsolution_params,
    sweep_incompressible,
    theorem_check,
    verify_subsolution,
)

__version__ = "0.1.0"
