"""Quasi-local masses of nearly round surfaces in asymptotically flat 3-manifolds.

A numerical laboratory: analytic metric catalog with exact derivative jets,
a spectral sphere substrate, surface geometry in flat and curved ambients,
a Weyl isometric-embedding pipeline, Brown-York and Hawking masses, and a
study harness that measures their convergence to the ADM mass.
"""

from .embedding import (
    EmbeddabilityError,
    EmbeddingError,
    IsometricEmbedding,
    MinkowskiResiduals,
    RegimeViolation,
    SelfIntersectionError,
    UniformizationDiagnostics,
    UniformizationError,
    VolumeCheck,
    embed,
    embed_axisymmetric,
    minkowski_residuals,
    rigid_align,
    solve_embedding,
    uniformize,
    volume_cross_check,
    write_embedding_obj,
)
from .harness import (
    ConfigError,
    MassReport,
    RateFit,
    RowFailure,
    StudyConfig,
    VerifyCheck,
    VerifyReport,
    fit_rate,
    load_config,
    run_masses,
    run_verify,
)
from .mass import (
    MassValues,
    assemble_mass_row,
    brown_york_mass,
    hawking_mass,
)
from .metrics import (
    AFMetric,
    AdmEstimate,
    adm_mass,
    adm_surface_integral,
    conformal_perturbed,
    euclidean,
    kerr_slice,
    parse_metric,
    schwarzschild_isotropic,
    schwarzschild_standard,
)
from .sphere import (
    SphereGrid,
    analyze,
    apply_mobius,
    build_grid,
    center_gauge,
    coeff_index,
    laplace_beltrami,
    mobius_map,
    synth_at,
    synth_gradient,
    synthesize,
)
from .surfaces import (
    FundamentalData,
    Immersion,
    best_fit_sphere,
    coordinate_sphere,
    fundamental_forms,
    immerse_radial,
    nearly_round_diagnostics,
    write_immersion_csv,
)

__version__ = "0.1.0"

__all__ = [
    "AFMetric",
    "AdmEstimate",
    "ConfigError",
    "EmbeddabilityError",
    "EmbeddingError",
    "FundamentalData",
    "Immersion",
    "IsometricEmbedding",
    "MassReport",
    "MassValues",
    "MinkowskiResiduals",
    "RateFit",
    "RegimeViolation",
    "RowFailure",
    "SelfIntersectionError",
    "SphereGrid",
    "StudyConfig",
    "UniformizationDiagnostics",
    "UniformizationError",
    "VerifyCheck",
    "VerifyReport",
    "VolumeCheck",
    "adm_mass",
    "adm_surface_integral",
    "analyze",
    "apply_mobius",
    "assemble_mass_row",
    "best_fit_sphere",
    "brown_york_mass",
    "build_grid",
    "center_gauge",
    "coeff_index",
    "conformal_perturbed",
    "coordinate_sphere",
    "embed",
    "embed_axisymmetric",
    "euclidean",
    "fit_rate",
    "fundamental_forms",
    "hawking_mass",
    "immerse_radial",
    "kerr_slice",
    "laplace_beltrami",
    "load_config",
    "minkowski_residuals",
    "mobius_map",
    "nearly_round_diagnostics",
    "parse_metric",
    "rigid_align",
    "run_masses",
    "run_verify",
    "schwarzschild_isotropic",
    "schwarzschild_standard",
    "solve_embedding",
    "synth_at",
    "synth_gradient",
    "synthesize",
    "uniformize",
    "volume_cross_check",
    "write_embedding_obj",
]
