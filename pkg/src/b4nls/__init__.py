"""b4nls: spectral laboratory for the fourth-order nonlinear Schrodinger
equation on flat tori — damped stabilization runs, exact control synthesis
through the observability Gramian, geodesic control-condition checks,
dispersive space-time norms, and the sphere eigenvalue resonance arithmetic.
"""

__version__ = "0.1.0"

from .spectral import (
    DampingProfile,
    ManifoldSpec,
    SpectralField,
    apply_bilaplacian,
    apply_dispersion,
    apply_laplacian,
    apply_smoothing,
    band_project,
    basis_field,
    constant_profile,
    field_from_coeffs,
    field_from_grid,
    gradient_energy,
    l2_inner,
    l2_norm,
    load_field,
    make_damping_profile,
    make_sphere_arith,
    make_torus,
    multiply_profile,
    normalize_sobolev,
    propagate_free,
    random_field,
    save_field,
    sobolev_norm,
    to_grid,
    zero_field,
)
from .regions import Ball, FullRegion, RegionUnion, Strip
from .dynamics import (
    BlowUpError,
    DecayFit,
    DissipationAudit,
    EvolutionTrace,
    SolverConfig,
    audit_dissipation,
    evolve_damped,
    evolve_nonlinear,
    fit_decay_rate,
    save_trace,
)
from .hum import (
    ControlCertificate,
    ControlProblem,
    ControlStagnationError,
    ContractionFailure,
    apply_lambda,
    solve_linear_control,
    solve_nonlinear_control,
    verify_certificate,
)
from .observability import (
    BandGramian,
    GramianReport,
    band_gramian_min_eig,
    gramian_sweep,
    strichartz_ratio,
)
from .gcc import (
    GccScan,
    GeodesicQuery,
    SphereCap,
    first_hit_time,
    sphere_gcc_time,
    torus_gcc_time,
)
from .bourgain import (
    SpaceTimeField,
    cubic_product,
    duhamel_gain_probe,
    hb_hs_norm,
    interaction_frame,
    l2hs_norm,
    make_taper,
    random_spacetime_field,
    tapered_free_solution,
    trilinear_constant_probe,
    xsb_norm,
)
