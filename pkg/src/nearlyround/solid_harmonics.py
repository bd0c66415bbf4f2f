"""Real solid harmonics as exact trivariate polynomials.

A solid harmonic of degree l is r^l Y_{l,m}(theta, phi) written as a
homogeneous polynomial in Cartesian coordinates.  Keeping the monomial
expansion exact lets the metric catalog differentiate angular perturbations
analytically (gradients and Hessians of polynomials times powers of r).

The normalization matches nearlyround.sphere: unit L2 norm over the unit
sphere, sqrt(2) cos / sin convention for m > 0 / m < 0, no Condon-Shortley
phase.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


class Polynomial3:
    """Sparse trivariate polynomial: {(i, j, k): coeff} for x^i y^j z^k."""

    def __init__(self, terms: dict | None = None):
        self.terms = {k: v for k, v in (terms or {}).items() if v != 0.0}

    def __add__(self, other: "Polynomial3") -> "Polynomial3":
        out = dict(self.terms)
        for mono, c in other.terms.items():
            out[mono] = out.get(mono, 0.0) + c
        return Polynomial3(out)

    def __mul__(self, other):
        if isinstance(other, Polynomial3):
            out: dict = {}
            for (i1, j1, k1), c1 in self.terms.items():
                for (i2, j2, k2), c2 in other.terms.items():
                    mono = (i1 + i2, j1 + j2, k1 + k2)
                    out[mono] = out.get(mono, 0.0) + c1 * c2
            return Polynomial3(out)
        return Polynomial3({m: other * c for m, c in self.terms.items()})

    __rmul__ = __mul__

    def derivative(self, axis: int) -> "Polynomial3":
        out: dict = {}
        for mono, c in self.terms.items():
            p = mono[axis]
            if p == 0:
                continue
            new = list(mono)
            new[axis] = p - 1
            key = tuple(new)
            out[key] = out.get(key, 0.0) + c * p
        return Polynomial3(out)

    def gradient(self) -> list["Polynomial3"]:
        return [self.derivative(a) for a in range(3)]

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate at points of shape (..., 3)."""
        pts = np.asarray(pts, dtype=float)
        x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
        out = np.zeros(pts.shape[:-1])
        for (i, j, k), c in self.terms.items():
            out += c * x**i * y**j * z**k
        return out


_X = Polynomial3({(1, 0, 0): 1.0})
_Y = Polynomial3({(0, 1, 0): 1.0})
_Z = Polynomial3({(0, 0, 1): 1.0})
_R2 = Polynomial3({(2, 0, 0): 1.0, (0, 2, 0): 1.0, (0, 0, 2): 1.0})


@lru_cache(maxsize=None)
def _sectoral(m: int) -> tuple[Polynomial3, Polynomial3]:
    """(Re, Im) of (x + i y)^m as polynomials."""
    if m == 0:
        return Polynomial3({(0, 0, 0): 1.0}), Polynomial3({})
    re, im = _sectoral(m - 1)
    return re * _X + (-1.0) * (im * _Y), re * _Y + im * _X


@lru_cache(maxsize=None)
def _radial(l: int, m: int) -> Polynomial3:
    """Homogeneous factor r^{l-m} * Pbar_l^m(z/r) / sin^m(theta)."""
    if l == m:
        c = np.sqrt(1.0 / (4.0 * np.pi))
        for k in range(1, m + 1):
            c *= np.sqrt((2.0 * k + 1.0) / (2.0 * k))
        return Polynomial3({(0, 0, 0): c})
    if l == m + 1:
        return np.sqrt(2.0 * m + 3.0) * (_Z * _radial(m, m))
    a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
    b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
    return a * (_Z * _radial(l - 1, m) + (-b) * (_R2 * _radial(l - 2, m)))


@lru_cache(maxsize=None)
def real_solid_harmonic(l: int, m: int) -> Polynomial3:
    """r^l Y_{l,m} as an exact homogeneous polynomial of degree l."""
    if l < 0 or abs(m) > l:
        raise ValueError("need 0 <= |m| <= l")
    am = abs(m)
    radial = _radial(l, am)
    if m == 0:
        return radial
    re, im = _sectoral(am)
    angular = re if m > 0 else im
    return np.sqrt(2.0) * (angular * radial)
