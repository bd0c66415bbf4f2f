"""Batch driver for mass studies: configs, sweeps, rate fits, check tables.

A study is a metric, a one-parameter family of surfaces, and a radius
schedule.  run_masses evaluates both quasi-local masses along the family
and packages them as a deterministic report; run_verify measures the
geometric identity residuals and diagnostic constants behind those
numbers and renders a pass/fail table; fit_rate extracts convergence
slopes from any (r, mass) series.

Reports carry no timestamps and format floats by shortest round trip, so
identical configurations produce byte-identical output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace

import numpy as np
import scipy

from importlib.metadata import PackageNotFoundError, version as _dist_version

try:
    _package_version = _dist_version("nearlyround")
except PackageNotFoundError:  # running from a source tree without install
    _package_version = "unknown"

from .embedding import (
    EmbeddabilityError,
    EmbeddingError,
    RegimeViolation,
    SelfIntersectionError,
    UniformizationError,
    embed,
    minkowski_residuals,
)
from .mass import MassValues, assemble_mass_row
from .metrics import UnknownMetricFamily, adm_mass, parse_metric
from .sphere import analyze, build_grid, coeff_degrees, coeff_index, synthesize
from .surfaces import (
    best_fit_sphere,
    coordinate_sphere,
    distance_hessian_residual,
    divergence_identity_gap,
    fundamental_forms,
    immerse_radial,
    mean_curvature_expansion_residual,
    mean_curvature_integral_residual,
    nearly_round_diagnostics,
    second_form_transform_residual,
)

__all__ = [
    "ConfigError",
    "MassReport",
    "RateFit",
    "RowFailure",
    "StudyConfig",
    "VerifyCheck",
    "VerifyReport",
    "fit_rate",
    "load_config",
    "run_masses",
    "run_verify",
]

_FAMILIES = ("coordinate-spheres", "radial-perturbed", "axisym-kerr")

_EMBED_FAILURES = (
    RegimeViolation,
    UniformizationError,
    EmbeddingError,
    SelfIntersectionError,
    EmbeddabilityError,
)

CSV_COLUMNS = ("r", "area", "hawking", "brown_york", "adm_reference", "embed_residual", "flags")


class ConfigError(ValueError):
    """The study configuration is malformed or inconsistent."""


class _FlaggedRoundness(Exception):
    """Internal: carries diagnostic flags out of the roundness check."""

    def __init__(self, flagged):
        super().__init__("; ".join(flagged))
        self.flagged = tuple(flagged)


@dataclass(frozen=True)
class StudyConfig:
    """Everything a study run needs, validated at construction.

    The schedule must be strictly increasing with at least three radii;
    the band limit at least 8.  amplitude/l/m_order/decay shape the
    radial-perturbed family and are ignored by the other two.
    """

    metric: str = "schwarzschild_isotropic m=1"
    family: str = "coordinate-spheres"
    schedule: tuple = (10.0, 20.0, 40.0)
    band_limit: int = 16
    amplitude: float = 0.1
    l: int = 2
    m_order: int = 0
    decay: float = 1.0
    tol: float = 1e-8
    pde_tol: float = 1e-10
    out: str | None = None
    format: str = "csv"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "schedule", tuple(float(r) for r in self.schedule))
        if len(self.schedule) < 3:
            raise ConfigError("schedule needs at least three radii")
        if any(b <= a for a, b in zip(self.schedule, self.schedule[1:])):
            raise ConfigError(f"schedule must be strictly increasing: {self.schedule}")
        if self.band_limit < 8:
            raise ConfigError(f"band limit must be at least 8, got {self.band_limit}")
        if self.family not in _FAMILIES:
            raise ConfigError(
                f"unknown family {self.family!r}; choose one of {', '.join(_FAMILIES)}"
            )
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if abs(self.m_order) > self.l:
            raise ConfigError(f"harmonic order |{self.m_order}| exceeds degree {self.l}")
        if not (self.tol > 0.0 and self.pde_tol > 0.0):
            raise ConfigError("tolerances must be positive")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "StudyConfig":
        """Build a config from string values (file keys, CLI overrides)."""
        converters = {
            "metric": str,
            "family": str,
            "schedule": _parse_schedule,
            "band_limit": int,
            "amplitude": float,
            "l": int,
            "m_order": int,
            "decay": float,
            "tol": float,
            "pde_tol": float,
            "out": str,
            "format": str,
            "seed": int,
        }
        kwargs = {}
        for key, raw in mapping.items():
            if key not in converters:
                raise ConfigError(f"unknown configuration key {key!r}")
            try:
                kwargs[key] = raw if not isinstance(raw, str) else converters[key](raw)
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from exc
        config = cls(**kwargs)
        _metric_for(config)  # fail fast on a bad metric spec
        return config


def _parse_schedule(text: str) -> tuple:
    parts = text.replace(",", " ").split()
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad schedule {text!r}: {exc}") from exc


def load_config(path: str) -> dict:
    """Read a plain key-value config file: `key = value`, # comments."""
    mapping: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"{path}:{lineno}: expected `key = value`, got {line.strip()!r}")
            key, value = body.split("=", 1)
            mapping[key.strip()] = value.strip()
    return mapping


def _metric_for(config: StudyConfig):
    try:
        metric = parse_metric(config.metric)
    except (UnknownMetricFamily, ValueError) as exc:
        raise ConfigError(f"bad metric spec {config.metric!r}: {exc}") from exc
    if config.family == "axisym-kerr" and metric.family != "kerr_slice":
        raise ConfigError(
            f"family axisym-kerr needs a kerr_slice metric, got {metric.family}"
        )
    return metric


def family_surfaces(config: StudyConfig, grid, metric) -> list:
    """The scheduled family as (radius, Immersion) pairs, schedule order."""
    if min(config.schedule) <= metric.exclusion_radius:
        raise ConfigError(
            f"schedule reaches into the exclusion radius "
            f"{metric.exclusion_radius:.3f} of {config.metric!r}"
        )
    members = []
    if config.family == "radial-perturbed":
        if config.l > grid.L:
            raise ConfigError(
                f"perturbation degree {config.l} exceeds the band limit {grid.L}"
            )
        coeffs = np.zeros(grid.n_coeffs)
        coeffs[coeff_index(config.l, config.m_order)] = 1.0
        ylm = synthesize(grid, coeffs)
        for r in config.schedule:
            profile = r * (1.0 + config.amplitude * r ** (-config.decay) * ylm)
            members.append((r, immerse_radial(None, profile, grid)))
    else:
        # coordinate-spheres, and axisym-kerr which differs only in its
        # metric constraint (checked above)
        for r in config.schedule:
            members.append((r, coordinate_sphere(r, grid)))
    return members


@dataclass(frozen=True)
class RowFailure:
    """A schedule entry whose geometry could not be evaluated at all."""

    r_label: float
    error: str


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


@dataclass(frozen=True)
class MassReport:
    """Mass table plus enough metadata to reproduce it."""

    config: StudyConfig
    rows: tuple
    adm_reference: float

    def metadata(self) -> dict:
        cfg = {f.name: getattr(self.config, f.name) for f in fields(self.config)}
        cfg["schedule"] = list(self.config.schedule)
        del cfg["out"]  # the destination is not part of the study
        return {
            "config": cfg,
            "adm_reference": self.adm_reference,
            "columns": list(CSV_COLUMNS),
            "tolerances": {"tol": self.config.tol, "pde_tol": self.config.pde_tol},
            "versions": {
                "nearlyround": _package_version,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        }

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for row in self.rows:
            if isinstance(row, RowFailure):
                cells = [
                    _fmt(row.r_label), "", "", "", _fmt(self.adm_reference), "",
                    f"row-failed:{row.error}",
                ]
            else:
                cells = [
                    _fmt(row.r_label),
                    _fmt(row.area),
                    _fmt(row.hawking),
                    _fmt(row.brown_york),
                    _fmt(row.adm_reference),
                    _fmt(row.embed_residual),
                    ";".join(row.flags),
                ]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        rows = []
        for row in self.rows:
            if isinstance(row, RowFailure):
                rows.append(
                    {
                        "r": row.r_label, "area": None, "hawking": None,
                        "brown_york": None, "adm_reference": self.adm_reference,
                        "embed_residual": None, "flags": [f"row-failed:{row.error}"],
                    }
                )
            else:
                rows.append(
                    {
                        "r": row.r_label,
                        "area": row.area,
                        "hawking": row.hawking,
                        "brown_york": row.brown_york,
                        "adm_reference": row.adm_reference,
                        "embed_residual": row.embed_residual,
                        "flags": list(row.flags),
                    }
                )
        return json.dumps({"metadata": self.metadata(), "rows": rows}, indent=2) + "\n"

    def render(self) -> str:
        return self.to_json() if self.config.format == "json" else self.to_csv()

    @property
    def hard_failures(self) -> tuple:
        return tuple(r for r in self.rows if isinstance(r, RowFailure))


def run_masses(config: StudyConfig) -> MassReport:
    """Evaluate the mass table of the configured family.

    Per-row failures are recorded inline and the sweep continues; rows
    keep schedule order regardless of how they are computed.
    """
    metric = _metric_for(config)
    grid = build_grid(config.band_limit)
    adm_reference = metric.known_mass if metric.known_mass is not None else math.nan
    rows = []
    for r, s in family_surfaces(config, grid, metric):
        try:
            rows.append(
                assemble_mass_row(
                    s,
                    metric,
                    r_label=r,
                    adm_reference=metric.known_mass,
                    tol=config.tol,
                    pde_tol=config.pde_tol,
                )
            )
        except (ValueError, RuntimeError) as exc:
            rows.append(RowFailure(r_label=r, error=f"{type(exc).__name__}: {exc}"))
    return MassReport(config=config, rows=tuple(rows), adm_reference=float(adm_reference))


@dataclass(frozen=True)
class RateFit:
    """Least-squares power law |m(r) - m_inf| ~ C r^slope on log-log axes."""

    slope: float
    intercept: float
    residual: float
    m_infinity: float
    n_points: int
    fittable: bool
    note: str = ""

    def as_dict(self) -> dict:
        def clean(x):
            return x if math.isfinite(x) else None

        return {
            "slope": clean(self.slope),
            "intercept": clean(self.intercept),
            "residual": clean(self.residual),
            "m_infinity": self.m_infinity,
            "n_points": self.n_points,
            "fittable": self.fittable,
            "note": self.note,
        }


def fit_rate(series, m_infinity: float) -> RateFit:
    """Fit the approach rate of a mass series toward its limit.

    series is an iterable of (r, mass) pairs.  Differences below ten
    machine epsilons of the limit cannot carry a rate; that case returns
    an explicit not-fittable result instead of a garbage slope.
    """
    pts = [(float(r), float(v)) for r, v in series]
    if len(pts) < 3:
        raise ValueError("rate fit needs at least three points")
    m_infinity = float(m_infinity)
    gaps = np.array([abs(v - m_infinity) for _, v in pts])
    floor = 10.0 * np.finfo(float).eps * max(1.0, abs(m_infinity))
    if np.any(gaps <= floor):
        return RateFit(
            slope=math.nan, intercept=math.nan, residual=math.nan,
            m_infinity=m_infinity, n_points=len(pts), fittable=False,
            note=f"mass differences at the machine noise floor ({floor:.1e}); "
            "rate not fittable",
        )
    logr = np.log([r for r, _ in pts])
    logg = np.log(gaps)
    X = np.stack([logr, np.ones_like(logr)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(X, logg, rcond=None)
    residual = float(np.sqrt(np.mean((X @ [slope, intercept] - logg) ** 2)))
    note = ""
    if residual > 0.1:
        note = f"log-log fit residual {residual:.3f} above 0.1; power-law model questionable"
    return RateFit(
        slope=float(slope), intercept=float(intercept), residual=residual,
        m_infinity=m_infinity, n_points=len(pts), fittable=True, note=note,
    )


@dataclass(frozen=True)
class VerifyCheck:
    """One named verification: a measured number against its tolerance."""

    name: str
    value: float
    tolerance: float
    passed: bool
    note: str = ""


@dataclass(frozen=True)
class VerifyReport:
    config: StudyConfig
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def to_table(self) -> str:
        lines = [f"{'check':<28} {'measured':>13} {'tolerance':>10}  verdict"]
        for c in self.checks:
            verdict = "pass" if c.passed else "FAIL"
            note = f"  ({c.note})" if c.note else ""
            lines.append(
                f"{c.name:<28} {c.value:>13.6e} {c.tolerance:>10.1e}  {verdict}{note}"
            )
        summary = "all checks passed" if self.passed else "CHECK FAILURES PRESENT"
        lines.append(summary)
        return "\n".join(lines) + "\n"


def _curvature_tail(grid, fd, r0: float) -> float:
    """Energy fraction of the scaled curvature in the top two degree bands."""
    coeffs = analyze(grid, fd.gauss_curvature * r0**2)
    degs, _ = coeff_degrees(grid.L)
    total = float(np.linalg.norm(coeffs))
    if total == 0.0:
        return 0.0
    return float(np.linalg.norm(coeffs[degs >= grid.L - 1]) / total)


def run_verify(config: StudyConfig, *, inject_failure: bool = False) -> VerifyReport:
    """Measure the identity residuals and diagnostics behind a mass study.

    Every check is named, carries its measured value and tolerance, and
    the report's exit code is nonzero iff any check fails.  With
    inject_failure, one seeded check is forced to fail so downstream
    plumbing of the failure path can be exercised end to end.
    """
    metric = _metric_for(config)
    grid = build_grid(config.band_limit)
    members = family_surfaces(config, grid, metric)
    data = []
    for r, s in members:
        fd_hat = fundamental_forms(s)
        fd = fundamental_forms(s, metric)
        data.append((r, s, fd_hat, fd))

    def over_family(fn):
        return max(fn(r, s, fd_hat, fd) for r, s, fd_hat, fd in data)

    checks = []

    def add(name, value, tolerance, note=""):
        checks.append(
            VerifyCheck(
                name=name, value=float(value), tolerance=float(tolerance),
                passed=bool(value <= tolerance), note=note,
            )
        )

    def add_measured(name, fn, tolerance):
        # a check whose computation breaks is a failed check, not an
        # aborted table; violating families must still produce a report
        try:
            add(name, fn(), tolerance)
        except (ValueError, RuntimeError) as exc:
            add(
                name, math.inf, tolerance,
                note=f"computation failed: {type(exc).__name__}: {exc}",
            )

    add_measured(
        "gauss-bonnet",
        lambda: over_family(
            lambda r, s, fh, fd: abs(fd.integrate(fd.gauss_curvature) - 4.0 * math.pi)
        ),
        1e-8,
    )
    add_measured(
        "divergence-identity",
        lambda: over_family(lambda r, s, fh, fd: divergence_identity_gap(s, metric, fh, fd)),
        1e-10,
    )
    add_measured(
        "curvature-transform",
        lambda: over_family(
            lambda r, s, fh, fd: second_form_transform_residual(s, metric, fh, fd)
        ),
        1e-10,
    )
    add_measured(
        "distance-hessian",
        lambda: over_family(lambda r, s, fh, fd: distance_hessian_residual(s, fh).algebraic),
        1e-10,
    )
    add_measured(
        "mean-curvature-expansion",
        lambda: over_family(
            lambda r, s, fh, fd: mean_curvature_expansion_residual(s, metric, fh, fd)
        ),
        50.0,
    )
    add_measured(
        "mean-curvature-integral",
        lambda: over_family(
            lambda r, s, fh, fd: mean_curvature_integral_residual(s, metric, fh, fd)
        ),
        100.0,
    )

    def count_roundness_flags():
        diag = nearly_round_diagnostics([(s, fd) for _, s, _, fd in data], metric.tau)
        if diag.flagged:
            raise _FlaggedRoundness(diag.flagged)
        return 0.0

    try:
        add("roundness-flags", count_roundness_flags(), 0.0)
    except _FlaggedRoundness as exc:
        add("roundness-flags", float(len(exc.flagged)), 0.0, note="; ".join(exc.flagged))
    except (ValueError, RuntimeError) as exc:
        add(
            "roundness-flags", math.inf, 0.0,
            note=f"computation failed: {type(exc).__name__}: {exc}",
        )

    add_measured(
        "spectral-resolution",
        lambda: over_family(
            lambda r, s, fh, fd: _curvature_tail(grid, fd, best_fit_sphere(fh, s).radius)
        ),
        1e-10,
    )

    embed_worst = 0.0
    mink1 = 0.0
    mink2 = 0.0
    embed_note = ""
    for r, s, fd_hat, fd in data:
        try:
            e = embed(s, fd, tol=config.tol, pde_tol=config.pde_tol)
        except (ValueError, RuntimeError) as exc:
            embed_worst = math.inf
            mink1 = mink2 = math.inf
            embed_note = f"embedding failed at r={r:g}: {type(exc).__name__}"
            break
        mk = minkowski_residuals(e, tau=metric.tau)
        embed_worst = max(embed_worst, e.metric_residual)
        mink1 = max(mink1, mk.first_identity)
        mink2 = max(mink2, mk.second_identity)
    add("embedding-residual", embed_worst, config.tol, note=embed_note)
    add("minkowski-first", mink1, 1e-6, note=embed_note)
    add("minkowski-second", mink2, 1e-6, note=embed_note)

    if metric.known_mass is None:
        add("adm-agreement", 0.0, 1.0, note="metric has no mass reference; skipped")
    else:
        est = adm_mass(metric, config.schedule, config.band_limit)
        add(
            "adm-agreement",
            abs(est.value - metric.known_mass),
            0.05 * max(1.0, abs(metric.known_mass)),
            note=f"extrapolated {est.value:.6f} at rate {est.rate:.2f}",
        )

    if inject_failure:
        rng = np.random.default_rng(config.seed)
        idx = int(rng.integers(0, len(checks)))
        victim = checks[idx]
        checks[idx] = replace(
            victim, passed=False,
            note=(victim.note + "; " if victim.note else "") + "injected failure",
        )

    return VerifyReport(config=config, checks=tuple(checks))
