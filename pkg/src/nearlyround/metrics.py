"""Catalog of asymptotically flat 3-metrics with exact derivative jets.

Each metric is presented in a global Cartesian chart as g_ij = delta_ij +
sigma_ij with |sigma| + r|d sigma| + r^2|dd sigma| = O(r^-tau).  Families:

* ``euclidean`` - flat space.
* ``schwarzschild_isotropic m=..`` - conformally flat phi^4 delta with
  phi = 1 + m/(2r).
* ``schwarzschild_standard m=..`` - areal-radius form, g = delta +
  2m/(r-2m) n (x) n.
* ``kerr_slice m=.. a=..`` - constant-time slice of the rotating black hole
  in its standard stationary coordinates, mapped to Cartesian by the plain
  spherical-coordinates map so coordinate spheres are the surfaces of
  interest.
* ``conformal_perturbed m=.. eps=.. l=.. m_order=.. tau_extra=..`` -
  phi = 1 + m/(2r) + eps * Y_{l,m_order} * r^-tau_extra; the angular
  perturbation leaves the total mass unchanged for l >= 1.

Derivative jets (g, dg, ddg) are closed-form analytic per family; finite
differences appear only in the test suite as an independent oracle.  The
rotating family is generated symbolically once per process and cached.

Index conventions: ``dg[i, j, k] = d_k g_ij``; ``ddg[i, j, k, l] =
d_k d_l g_ij``; batched arrays carry a leading node axis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .solid_harmonics import real_solid_harmonic
from .sphere import SphereGrid


class PointInsideExclusionRadius(ValueError):
    """A jet was requested inside the metric's excluded ball."""


class UnknownMetricFamily(ValueError):
    pass


class QuadratureUnderresolved(UserWarning):
    """Doubling the band limit moved a surface integral more than tolerance."""


class NonMonotoneFluxTail(UserWarning):
    """Mass-flux values do not settle monotonically along the radius schedule."""


@dataclass(frozen=True)
class MetricJet:
    """Metric value and first two derivative arrays at one point."""

    g: np.ndarray
    dg: np.ndarray
    ddg: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return self.g - np.eye(3)


@dataclass(frozen=True)
class JetBatch:
    """Stacked jets at N points: g (N,3,3), dg (N,3,3,3), ddg (N,3,3,3,3)."""

    g: np.ndarray
    dg: np.ndarray
    ddg: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return self.g - np.eye(3)[None, :, :]

    def __getitem__(self, n: int) -> MetricJet:
        return MetricJet(self.g[n], self.dg[n], self.ddg[n])


class AFMetric:
    """Asymptotically flat metric: family tag, parameters, decay order tau.

    ``exclusion_radius`` is twice the natural singular radius of the family;
    jet evaluation raises PointInsideExclusionRadius inside it.
    """

    def __init__(self, family, params, tau, exclusion_radius, jet_fn, known_mass):
        self.family = family
        self.params = dict(params)
        self.tau = float(tau)
        self.exclusion_radius = float(exclusion_radius)
        self._jet_fn = jet_fn
        self.known_mass = known_mass

    def jets(self, points: np.ndarray) -> JetBatch:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        radii = np.linalg.norm(points, axis=1)
        if np.any(radii <= self.exclusion_radius):
            raise PointInsideExclusionRadius(
                f"{self.family}: point at radius {radii.min():.6g} inside "
                f"exclusion radius {self.exclusion_radius:.6g}"
            )
        g, dg, ddg = self._jet_fn(points)
        return JetBatch(g, dg, ddg)

    def jet(self, x: np.ndarray) -> MetricJet:
        return self.jets(np.asarray(x, dtype=float)[None, :])[0]

    def __repr__(self):
        return f"AFMetric({self.spec()!r})"

    def spec(self) -> str:
        """Canonical parseable text form, stable for report metadata."""
        if not self.params:
            return self.family
        parts = [f"{k}={self.params[k]:g}" for k in sorted(self.params)]
        return " ".join([self.family] + parts)


# ---------------------------------------------------------------------------
# Family constructors
# ---------------------------------------------------------------------------


def _euclidean_jets(points):
    n = len(points)
    g = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    return g, np.zeros((n, 3, 3, 3)), np.zeros((n, 3, 3, 3, 3))


def euclidean() -> AFMetric:
    return AFMetric("euclidean", {}, 1.0, 0.0, _euclidean_jets, 0.0)


def _conformal_jets(points, phi_fn):
    """g = phi^4 delta from (phi, grad phi, hess phi) at the points."""
    phi, dphi, ddphi = phi_fn(points)
    n = len(points)
    eye = np.eye(3)
    g = (phi**4)[:, None, None] * eye[None]
    # d_k g_ij = 4 phi^3 phi_k delta_ij
    dcoef = 4.0 * phi**3
    dg = np.einsum("n,nk,ij->nijk", dcoef, dphi, eye)
    # d_k d_l g_ij = (12 phi^2 phi_k phi_l + 4 phi^3 phi_kl) delta_ij
    hcoef = np.einsum("n,nk,nl->nkl", 12.0 * phi**2, dphi, dphi) + np.einsum(
        "n,nkl->nkl", dcoef, ddphi
    )
    ddg = np.einsum("nkl,ij->nijkl", hcoef, eye)
    return g, dg, ddg


def _monopole_phi(points, m):
    """phi = 1 + m/(2r) with gradient and Hessian."""
    r = np.linalg.norm(points, axis=1)
    phi = 1.0 + m / (2.0 * r)
    dphi = -(m / 2.0) * points / r[:, None] ** 3
    eye = np.eye(3)
    ddphi = -(m / 2.0) * (
        eye[None] / r[:, None, None] ** 3
        - 3.0 * np.einsum("nk,nl->nkl", points, points) / r[:, None, None] ** 5
    )
    return phi, dphi, ddphi


def schwarzschild_isotropic(m: float) -> AFMetric:
    if m <= 0:
        raise ValueError("mass must be positive")

    def phi_fn(points):
        return _monopole_phi(points, m)

    def jets(points):
        return _conformal_jets(points, phi_fn)

    return AFMetric("schwarzschild_isotropic", {"m": m}, 1.0, m, jets, m)


def conformal_perturbed(
    m: float,
    eps: float,
    l: int = 2,
    m_order: int = 0,
    tau_extra: float = 1.0,
) -> AFMetric:
    """phi = 1 + m/(2r) + eps Y_{l,m_order} r^-tau_extra, l >= 1.

    The angular term integrates away from the mass aspect, so the total
    mass stays m.  Decay order is min(1, tau_extra).
    """
    if m <= 0:
        raise ValueError("mass must be positive")
    if l < 1:
        raise ValueError("perturbation degree l must be >= 1")
    if abs(m_order) > l:
        raise ValueError("|m_order| must be <= l")
    if tau_extra <= 0.5:
        raise ValueError("tau_extra must exceed 1/2 for a finite mass")
    S = real_solid_harmonic(l, m_order)
    Sg = S.gradient()
    Sh = [[S.derivative(i).derivative(j) for j in range(3)] for i in range(3)]
    beta = l + tau_extra  # Y r^-tau_extra = S(x) r^-beta

    def phi_fn(points):
        phi, dphi, ddphi = _monopole_phi(points, m)
        r = np.linalg.norm(points, axis=1)
        rb = r ** (-beta)
        s = S(points)
        sg = np.stack([Sg[k](points) for k in range(3)], axis=-1)
        sh = np.stack(
            [np.stack([Sh[i][j](points) for j in range(3)], axis=-1) for i in range(3)],
            axis=-2,
        )
        phi = phi + eps * s * rb
        dphi = dphi + eps * (
            sg * rb[:, None] - beta * s[:, None] * points * (r ** (-beta - 2))[:, None]
        )
        eye = np.eye(3)
        rb2 = (r ** (-beta - 2))[:, None, None]
        rb4 = (r ** (-beta - 4))[:, None, None]
        xx = np.einsum("nk,nl->nkl", points, points)
        sx = np.einsum("nk,nl->nkl", sg, points)
        ddphi = ddphi + eps * (
            sh * rb[:, None, None]
            - beta * (sx + sx.transpose(0, 2, 1)) * rb2
            - beta * s[:, None, None] * eye[None] * rb2
            + beta * (beta + 2.0) * s[:, None, None] * xx * rb4
        )
        return phi, dphi, ddphi

    def jets(points):
        return _conformal_jets(points, phi_fn)

    params = {"m": m, "eps": eps, "l": l, "m_order": m_order, "tau_extra": tau_extra}
    return AFMetric(
        "conformal_perturbed", params, min(1.0, tau_extra), m, jets, m
    )


def schwarzschild_standard(m: float) -> AFMetric:
    """Areal-radius form g = delta + u(r) n (x) n with u = 2m/(r-2m)."""
    if m <= 0:
        raise ValueError("mass must be positive")

    def jets(points):
        npts = len(points)
        r = np.linalg.norm(points, axis=1)
        n = points / r[:, None]
        u = 2.0 * m / (r - 2.0 * m)
        up = -2.0 * m / (r - 2.0 * m) ** 2
        upp = 4.0 * m / (r - 2.0 * m) ** 3
        eye = np.eye(3)
        nn = np.einsum("ni,nj->nij", n, n)
        # N[i,k] = d_k n_i = (delta_ik - n_i n_k)/r
        N = (eye[None] - nn) / r[:, None, None]
        g = eye[None] + u[:, None, None] * nn
        # d_k (n_i n_j) = N_ik n_j + n_i N_jk
        dnn = np.einsum("nik,nj->nijk", N, n) + np.einsum("ni,njk->nijk", n, N)
        dg = np.einsum("n,nk,nij->nijk", up, n, nn) + u[:, None, None, None] * dnn
        # d_l N_ik = -(N_il n_k + n_i N_kl + N_ik n_l)/r
        dN = (
            -(
                np.einsum("nil,nk->nikl", N, n)
                + np.einsum("ni,nkl->nikl", n, N)
                + np.einsum("nik,nl->nikl", N, n)
            )
            / r[:, None, None, None]
        )
        # d_l dnn_ijk
        ddnn = (
            np.einsum("nikl,nj->nijkl", dN, n)
            + np.einsum("nik,njl->nijkl", N, N)
            + np.einsum("nil,njk->nijkl", N, N)
            + np.einsum("ni,njkl->nijkl", n, dN)
        )
        ddg = (
            np.einsum("n,nk,nl,nij->nijkl", upp, n, n, nn)
            + np.einsum("n,nkl,nij->nijkl", up, N, nn)
            + np.einsum("n,nk,nijl->nijkl", up, n, dnn)
            + np.einsum("n,nl,nijk->nijkl", up, n, dnn)
            + u[:, None, None, None, None] * ddnn
        )
        return g, dg, ddg

    return AFMetric("schwarzschild_standard", {"m": m}, 1.0, 4.0 * m, jets, m)


_KERR_CACHE: dict = {}


def _kerr_lambdified():
    """Jet evaluators for the rotating slice, generated symbolically once.

    The metric is written in the axis-regular closed form
    g = B I + (A - B) n (x) n + E M, with
    Sigma = r^2 + a^2 z^2 / r^2, Delta = r^2 - 2 m r + a^2,
    A = Sigma/Delta, B = Sigma/r^2, E = a^2 (Sigma + 2 m r)/(Sigma r^4),
    M = (-y, x, 0) (x) (-y, x, 0); every scalar is rational in (x, y, z),
    so the expressions are smooth away from the excluded ball, poles
    included.
    """
    if "fn" in _KERR_CACHE:
        return _KERR_CACHE["fn"]
    import sympy as sp

    x, y, z, m, a = sp.symbols("x y z m a", real=True)
    xv = (x, y, z)
    r2 = x * x + y * y + z * z
    r = sp.sqrt(r2)
    Sigma = r2 + a * a * z * z / r2
    Delta = r2 - 2 * m * r + a * a
    A = Sigma / Delta
    B = Sigma / r2
    E = a * a * (Sigma + 2 * m * r) / (Sigma * r2 * r2)
    w = sp.Matrix([-y, x, 0])
    n = sp.Matrix([x, y, z]) / r
    gmat = B * sp.eye(3) + (A - B) * (n * n.T) + E * (w * w.T)

    exprs = []
    index = []
    for i in range(3):
        for j in range(i, 3):
            gij = gmat[i, j]
            exprs.append(gij)
            index.append(("g", i, j))
            for k in range(3):
                dk = sp.diff(gij, xv[k])
                exprs.append(dk)
                index.append(("dg", i, j, k))
                for l in range(k, 3):
                    exprs.append(sp.diff(dk, xv[l]))
                    index.append(("ddg", i, j, k, l))
    f = sp.lambdify((x, y, z, m, a), exprs, modules="numpy", cse=True)
    _KERR_CACHE["fn"] = (f, index)
    return _KERR_CACHE["fn"]


def kerr_slice(m: float, a: float) -> AFMetric:
    if m <= 0:
        raise ValueError("mass must be positive")
    if abs(a) >= m:
        raise ValueError("need |a| < m for a regular horizon")
    f, index = _kerr_lambdified()
    r_plus = m + np.sqrt(m * m - a * a)

    def jets(points):
        npts = len(points)
        vals = f(points[:, 0], points[:, 1], points[:, 2], m, a)
        g = np.zeros((npts, 3, 3))
        dg = np.zeros((npts, 3, 3, 3))
        ddg = np.zeros((npts, 3, 3, 3, 3))
        for val, idx in zip(vals, index):
            val = np.broadcast_to(val, (npts,))
            if idx[0] == "g":
                _, i, j = idx
                g[:, i, j] = val
                g[:, j, i] = val
            elif idx[0] == "dg":
                _, i, j, k = idx
                dg[:, i, j, k] = val
                dg[:, j, i, k] = val
            else:
                _, i, j, k, l = idx
                ddg[:, i, j, k, l] = val
                ddg[:, j, i, k, l] = val
                ddg[:, i, j, l, k] = val
                ddg[:, j, i, l, k] = val
        return g, dg, ddg

    return AFMetric("kerr_slice", {"m": m, "a": a}, 1.0, 2.0 * r_plus, jets, m)


_FACTORIES = {
    "euclidean": (euclidean, ()),
    "schwarzschild_isotropic": (schwarzschild_isotropic, ("m",)),
    "schwarzschild_standard": (schwarzschild_standard, ("m",)),
    "kerr_slice": (kerr_slice, ("m", "a")),
    "conformal_perturbed": (
        conformal_perturbed,
        ("m", "eps", "l", "m_order", "tau_extra"),
    ),
}


def parse_metric(text: str) -> AFMetric:
    """Build a catalog metric from its text form, e.g. ``kerr_slice m=1 a=0.5``."""
    tokens = text.replace(",", " ").split()
    if not tokens:
        raise UnknownMetricFamily("empty metric specification")
    family, kv = tokens[0], tokens[1:]
    if family not in _FACTORIES:
        raise UnknownMetricFamily(f"unknown metric family {family!r}")
    factory, names = _FACTORIES[family]
    params = {}
    for tok in kv:
        if "=" not in tok:
            raise ValueError(f"malformed parameter {tok!r} (expected key=value)")
        key, val = tok.split("=", 1)
        if key not in names:
            raise ValueError(f"unknown parameter {key!r} for family {family!r}")
        params[key] = int(val) if key in ("l", "m_order") else float(val)
    return factory(**params)


def evaluate_jet(metric: AFMetric, x: np.ndarray) -> MetricJet:
    """Metric jet at one point (raises inside the exclusion radius)."""
    return metric.jet(x)


def evaluate_jets(metric: AFMetric, points: np.ndarray) -> JetBatch:
    """Batched metric jets at an (N, 3) array of points."""
    return metric.jets(points)


# ---------------------------------------------------------------------------
# Connection and curvature
# ---------------------------------------------------------------------------


def christoffel(jets: JetBatch) -> np.ndarray:
    """Christoffel symbols of the second kind, Gamma[n, k, i, j] = Gamma^k_ij."""
    ginv = np.linalg.inv(jets.g)
    dg = jets.dg  # dg[n, i, j, k] = d_k g_ij
    # T[n, l, i, j] = d_j g_il + d_i g_jl - d_l g_ij
    T = (
        np.einsum("nilj->nlij", dg)
        + np.einsum("njli->nlij", dg)
        - np.einsum("nijl->nlij", dg)
    )
    return 0.5 * np.einsum("nkl,nlij->nkij", ginv, T)


def christoffel_derivative(jets: JetBatch) -> np.ndarray:
    """dGamma[n, k, i, j, m] = d_m Gamma^k_ij from the second-derivative jet."""
    ginv = np.linalg.inv(jets.g)
    dg, ddg = jets.dg, jets.ddg
    T = (
        np.einsum("nilj->nlij", dg)
        + np.einsum("njli->nlij", dg)
        - np.einsum("nijl->nlij", dg)
    )
    # dT[l, i, j, m]
    dT = (
        np.einsum("niljm->nlijm", ddg)
        + np.einsum("njlim->nlijm", ddg)
        - np.einsum("nijlm->nlijm", ddg)
    )
    # d_m g^{kl} = -g^{ka} (d_m g_ab) g^{bl}
    dginv = -np.einsum("nka,nabm,nbl->nklm", ginv, dg, ginv)
    return 0.5 * (
        np.einsum("nklm,nlij->nkijm", dginv, T)
        + np.einsum("nkl,nlijm->nkijm", ginv, dT)
    )


def riemann_lowered(jets: JetBatch) -> np.ndarray:
    """Covariant curvature tensor R[n, i, j, k, l] with R(X,Y,Z,W) =
    g(R(X,Y)Z, W) and the sign convention fixed so that round spheres in the
    catalog reproduce K = 1/r^2 through the Gauss equation."""
    Gam = christoffel(jets)
    dGam = christoffel_derivative(jets)  # dGam[n, k, i, j, m] = d_m Gamma^k_ij
    # R^r_{s m q} = d_m Gamma^r_{q s} - d_q Gamma^r_{m s}
    #             + Gamma^r_{m l} Gamma^l_{q s} - Gamma^r_{q l} Gamma^l_{m s}
    # term_a[r, s, m, q] = d_m Gamma^r_{q s} = dGam[r, q, s, m]
    term_a = np.einsum("nrqsm->nrsmq", dGam)
    # term_b[r, s, m, q] = d_q Gamma^r_{m s} = dGam[r, m, s, q]
    term_b = np.einsum("nrmsq->nrsmq", dGam)
    # term_c[r, s, m, q] = Gamma^r_{m l} Gamma^l_{q s}
    term_c = np.einsum("nrml,nlqs->nrsmq", Gam, Gam)
    # term_d[r, s, m, q] = Gamma^r_{q l} Gamma^l_{m s}
    term_d = np.einsum("nrql,nlms->nrsmq", Gam, Gam)
    Rup = term_a - term_b + term_c - term_d
    return np.einsum("nra,nasmq->nrsmq", jets.g, Rup)


def ricci(jets: JetBatch) -> np.ndarray:
    """Ricci tensor Ric[n, s, q]."""
    ginv = np.linalg.inv(jets.g)
    R = riemann_lowered(jets)
    # Ric_{sq} = g^{rm} R_{r s m q}
    return np.einsum("nrm,nrsmq->nsq", ginv, R)


def scalar_curvature(metric: AFMetric, points: np.ndarray) -> np.ndarray:
    """Scalar curvature at an (N, 3) array of points."""
    jets = metric.jets(np.atleast_2d(points))
    ginv = np.linalg.inv(jets.g)
    return np.einsum("nsq,nsq->n", ginv, ricci(jets))


def sectional_curvature(jets: JetBatch, e1: np.ndarray, e2: np.ndarray) -> np.ndarray:
    """Sectional curvature of span(e1, e2), e1 and e2 g-orthonormal."""
    R = riemann_lowered(jets)
    return np.einsum("nrsmq,nr,ns,nm,nq->n", R, e1, e2, e1, e2)


# ---------------------------------------------------------------------------
# Total-mass surface integrals
# ---------------------------------------------------------------------------


def adm_surface_integral(
    metric: AFMetric,
    radius: float,
    band_limit: int = 16,
    center: np.ndarray | None = None,
    check_resolution: bool = True,
    resolution_tol: float = 1e-9,
) -> float:
    """Mass flux (1/16 pi) oint (d_i g_ij - d_j g_ii) nu_j over the coordinate
    sphere of the given radius, Euclidean normal and measure."""

    def flux(L):
        grid = SphereGrid(L)
        nhat = grid.unit_vectors.reshape(-1, 3)
        pts = radius * nhat
        if center is not None:
            pts = pts + np.asarray(center, dtype=float)
        dg = metric.jets(pts).dg
        div = np.einsum("niji->nj", dg)  # d_i g_ij
        grad_tr = np.einsum("niij->nj", dg)  # d_j g_ii
        integrand = np.einsum("nj,nj->n", div - grad_tr, nhat)
        return (
            radius**2
            * np.sum(grid.weights.ravel() * integrand)
            / (16.0 * np.pi)
        )

    value = flux(band_limit)
    if check_resolution:
        refined = flux(2 * band_limit)
        if abs(refined - value) > resolution_tol * max(1.0, abs(value)):
            warnings.warn(
                f"surface integral moved {abs(refined - value):.3e} when the "
                f"band limit doubled from {band_limit}",
                QuadratureUnderresolved,
                stacklevel=2,
            )
    return value


@dataclass(frozen=True)
class AdmEstimate:
    """Extrapolated total mass with the power-law fit that produced it."""

    value: float
    rate: float
    coefficient: float
    residual: float
    radii: tuple
    fluxes: tuple

    def __iter__(self):
        yield self.value
        yield self.residual


def adm_mass(
    metric: AFMetric,
    radii,
    band_limit: int = 16,
) -> AdmEstimate:
    """Extrapolate the mass flux against c0 + c1 r^-p with p fitted.

    Needs at least three strictly increasing radii outside the exclusion
    radius.  Warns when the flux tail is not settling monotonically.
    """
    radii = tuple(float(r) for r in radii)
    if len(radii) < 3:
        raise ValueError("need at least three radii to fit the flux model")
    if any(r2 <= r1 for r1, r2 in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    fluxes = tuple(
        adm_surface_integral(metric, r, band_limit, check_resolution=False)
        for r in radii
    )
    diffs = np.diff(fluxes)
    if len(diffs) >= 2:
        settling = np.all(np.abs(diffs[1:]) <= np.abs(diffs[:-1]) * (1.0 + 1e-12))
        same_sign = np.all(diffs >= 0) or np.all(diffs <= 0)
        if not (settling and same_sign):
            warnings.warn(
                "flux values do not approach a limit monotonically",
                NonMonotoneFluxTail,
                stacklevel=2,
            )
    r = np.asarray(radii)
    F = np.asarray(fluxes)

    def solve_for(p):
        X = np.stack([np.ones_like(r), r**-p], axis=1)
        coef, *_ = np.linalg.lstsq(X, F, rcond=None)
        rss = float(np.sum((X @ coef - F) ** 2))
        return coef, rss

    from scipy.optimize import minimize_scalar

    res = minimize_scalar(
        lambda p: solve_for(p)[1],
        bounds=(0.25, 4.0),
        method="bounded",
        options={"xatol": 1e-13},
    )
    p = float(res.x)
    (c0, c1), rss = solve_for(p)
    return AdmEstimate(
        value=float(c0),
        rate=p,
        coefficient=float(c1),
        residual=float(np.sqrt(rss / len(radii))),
        radii=radii,
        fluxes=fluxes,
    )
