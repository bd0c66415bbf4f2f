"""Quasi-local mass functionals evaluated on nearly round surfaces.

Two functionals are provided.  The Hawking mass needs only the mean
curvature of the surface in its ambient.  The Brown-York mass compares
that mean curvature against the mean curvature of an isometric embedding
of the same induced metric into Euclidean space, so it requires a
converged embedding and positive Gauss curvature.

Both integrals use the quadrature rule of the source surface; the
embedded reference curvature is read off at the shared parameter nodes,
never reinterpolated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .surfaces import (
    DegenerateInducedMetric,
    FundamentalData,
    Immersion,
    NonConvexSurface,
    best_fit_sphere,
    fundamental_forms,
)
from .embedding import (
    EmbeddabilityError,
    EmbeddingError,
    IsometricEmbedding,
    RegimeViolation,
    SelfIntersectionError,
    UniformizationError,
    embed,
)

__all__ = [
    "MassValues",
    "assemble_mass_row",
    "brown_york_mass",
    "hawking_mass",
]

_SIXTEEN_PI = 16.0 * math.pi

# Embedding failures that degrade a mass row instead of aborting a sweep.
# Convexity and degeneracy failures inside the pipeline belong here too:
# the Hawking side of the row is still well defined.
_EMBED_FAILURES = (
    RegimeViolation,
    UniformizationError,
    EmbeddingError,
    SelfIntersectionError,
    EmbeddabilityError,
    NonConvexSurface,
    DegenerateInducedMetric,
)


def hawking_mass(fd: FundamentalData) -> float:
    """Hawking mass of a closed surface from its area and mean curvature.

    Computed as sqrt(Area / 16 pi) * (16 pi - integral of H^2) / (16 pi).
    Zero on Euclidean round spheres; equal to the central mass on any
    centered sphere of a spherically symmetric slice.
    """
    flux = fd.integrate(fd.mean_curvature**2)
    return float(math.sqrt(fd.area / _SIXTEEN_PI) * (_SIXTEEN_PI - flux) / _SIXTEEN_PI)


def brown_york_mass(fd: FundamentalData, e: IsometricEmbedding) -> float:
    """Brown-York mass: reference minus physical mean curvature, integrated.

    `e` must be a converged isometric embedding of the induced metric of
    the same surface on the same grid; its mean curvature plays the role
    of the Euclidean reference H0.  The functional is (1/8 pi) times the
    integral of (H0 - H) against the physical area measure.

    Raises RegimeViolation when the Gauss curvature of the surface is not
    strictly positive (the functional is defined for convex data only)
    and ValueError when the embedding is missing or on a different grid.
    """
    if e is None:
        raise ValueError(
            "an isometric embedding of the surface is required; "
            "run embed() on the same fundamental data first"
        )
    k_min = float(fd.gauss_curvature.min())
    if k_min <= 0.0:
        raise RegimeViolation(
            f"Gauss curvature must be strictly positive for the Brown-York "
            f"functional; minimum over nodes is {k_min:.3e}"
        )
    reference = e.mean_curvature
    if reference.shape != fd.mean_curvature.shape:
        raise ValueError(
            f"embedding grid {reference.shape} does not match the surface "
            f"grid {fd.mean_curvature.shape}; both integrands must share "
            f"one parametrization"
        )
    return float(fd.integrate(reference - fd.mean_curvature) / (8.0 * math.pi))


@dataclass(frozen=True)
class MassValues:
    """One row of a mass study: a surface, its masses, and the reference.

    brown_york and embed_residual are None when the embedding step failed;
    the failure kind is then recorded in flags.  area must be positive and
    every present value finite.
    """

    r_label: float
    area: float
    hawking: float
    brown_york: float | None
    adm_reference: float
    embed_residual: float | None = None
    flags: tuple = ()

    def __post_init__(self):
        if not (self.area > 0.0):
            raise ValueError(f"area must be positive, got {self.area}")
        present = [self.r_label, self.area, self.hawking, self.adm_reference]
        if self.brown_york is not None:
            present.append(self.brown_york)
        if self.embed_residual is not None:
            present.append(self.embed_residual)
        if not all(np.isfinite(v) for v in present):
            raise ValueError(f"mass row contains non-finite entries: {self}")


def assemble_mass_row(
    s: Immersion,
    ambient,
    *,
    adm_reference: float | None = None,
    r_label: float | None = None,
    tol: float = 1e-8,
    pde_tol: float = 1e-10,
    regime_bound: float = 0.5,
    force_general: bool = False,
    max_iter: int = 30,
) -> MassValues:
    """Evaluate both masses of one surface and package them as a row.

    Computes the fundamental forms in the ambient, the Hawking mass, and
    the isometric embedding with its Brown-York mass.  An embedding
    failure leaves brown_york/embed_residual as None and adds a marker to
    flags rather than raising, so sweeps can continue past bad radii.

    adm_reference defaults to the ambient's known mass; r_label defaults
    to the best-fit sphere radius of the Euclidean shape.
    """
    fd = fundamental_forms(s, ambient)
    if r_label is None:
        fd_flat = fd if fd.ambient == "euclidean" else fundamental_forms(s)
        r_label = best_fit_sphere(fd_flat, s).radius
    if adm_reference is None:
        if ambient.known_mass is None:
            raise ValueError(
                "ambient metric has no known mass; pass adm_reference explicitly"
            )
        adm_reference = float(ambient.known_mass)

    hawking = hawking_mass(fd)

    brown_york = None
    residual = None
    flags: list[str] = []
    try:
        e = embed(
            s,
            fd,
            tol=tol,
            pde_tol=pde_tol,
            regime_bound=regime_bound,
            force_general=force_general,
            max_iter=max_iter,
        )
    except _EMBED_FAILURES as exc:
        flags.append(f"embedding-failed:{type(exc).__name__}")
    else:
        residual = e.metric_residual
        try:
            brown_york = brown_york_mass(fd, e)
        except RegimeViolation:
            # Embedding converged but the surface left the convexity
            # window the functional needs; report the mass as absent.
            flags.append("nonconvex-curvature")

    return MassValues(
        r_label=float(r_label),
        area=fd.area,
        hawking=hawking,
        brown_york=brown_york,
        adm_reference=adm_reference,
        embed_residual=residual,
        flags=tuple(flags),
    )
