"""Spherical Bessel functions and the Helmholtz / Maxwell outgoing kernels.

All kernel functions broadcast over leading axes: points are arrays of shape
``(..., 3)`` and dyads come back with shape ``(..., 3, 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

COINCIDENCE_TOL = 1e-14
SERIES_THRESHOLD = 1e-2
# orders 1 and 2 still cancel badly up to x ~ 1; a longer series covers that band
EXTENDED_SERIES_LIMIT = 2.0
EXTENDED_TERMS = 20


class CoincidentPointsError(ValueError):
    """Raised when a singular kernel is evaluated at x == y."""


@dataclass(frozen=True)
class WaveParameters:
    """Background medium: permittivity, permeability, frequency and wavenumber."""

    epsilon0: float
    mu0: float
    omega: float
    kappa: float

    def __post_init__(self):
        if self.epsilon0 <= 0 or self.mu0 <= 0 or self.omega <= 0:
            raise ValueError("epsilon0, mu0 and omega must be positive")
        expected = self.omega * np.sqrt(self.epsilon0 * self.mu0)
        if abs(self.kappa - expected) > 1e-12 * expected:
            raise ValueError(
                f"kappa={self.kappa!r} inconsistent with omega*sqrt(eps0*mu0)={expected!r}"
            )

    @classmethod
    def from_kappa(cls, kappa: float, epsilon0: float = 1.0, mu0: float = 1.0) -> "WaveParameters":
        return cls(epsilon0, mu0, kappa / np.sqrt(epsilon0 * mu0), kappa)

    @property
    def wavelength(self) -> float:
        return 2.0 * np.pi / self.kappa

    @property
    def c0(self) -> float:
        return 1.0 / np.sqrt(self.epsilon0 * self.mu0)


# Taylor coefficients: j_n(x) = x^n * sum_k c_k x^(2k)
def _series_coefficients(n: int, terms: int = 6) -> np.ndarray:
    coeffs = np.empty(terms)
    # j_n(x) = x^n sum_k (-1)^k / (k! 2^k (2n+2k+1)!!) x^(2k)
    c = 1.0
    for m in range(1, 2 * n + 2, 2):
        c /= m
    for k in range(terms):
        coeffs[k] = c
        c *= -1.0 / (2.0 * (k + 1) * (2 * n + 2 * k + 3))
    return coeffs


_SERIES = {n: _series_coefficients(n) for n in (0, 1, 2)}
_LONG_SERIES = {n: _series_coefficients(n, EXTENDED_TERMS) for n in (1, 2)}


def spherical_bessel_j(n: int, x):
    """Spherical Bessel function of the first kind, orders 0 to 2.

    Below ``SERIES_THRESHOLD`` a six-term Taylor series replaces the
    trigonometric closed forms, which cancel catastrophically near zero.
    Orders 1 and 2 use a 20-term series up to ``EXTENDED_SERIES_LIMIT``.
    """
    if n not in (0, 1, 2):
        raise ValueError("only orders 0, 1, 2 are supported")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("argument must be nonnegative")
    small = x < SERIES_THRESHOLD
    xs = np.where(small, x, 0.0)
    x2 = xs * xs
    series = np.polynomial.polynomial.polyval(x2, _SERIES[n]) * xs**n

    xl = np.where(small, 1.0, x)
    s, c = np.sin(xl), np.cos(xl)
    if n == 0:
        closed = s / xl
    elif n == 1:
        closed = s / xl**2 - c / xl
    else:
        closed = (3.0 / xl**3 - 1.0 / xl) * s - 3.0 * c / xl**2
    out = np.where(small, series, closed)
    if n > 0:
        mid = ~small & (x < EXTENDED_SERIES_LIMIT)
        xm = np.where(mid, x, 0.0)
        long_series = np.polynomial.polynomial.polyval(xm * xm, _LONG_SERIES[n]) * xm**n
        out = np.where(mid, long_series, out)
    return out[()] if out.ndim == 0 else out


def _separation(x, y):
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.linalg.norm(d, axis=-1)
    return d, r


def scalar_green(x, y, wp: WaveParameters):
    """Outgoing Helmholtz fundamental solution exp(i k r) / (4 pi r)."""
    _, r = _separation(x, y)
    if np.any(r < COINCIDENCE_TOL):
        raise CoincidentPointsError("scalar_green is singular at x == y")
    out = np.exp(1j * wp.kappa * r) / (4.0 * np.pi * r)
    return out[()] if np.ndim(out) == 0 else out


def dyadic_green(x, y, wp: WaveParameters):
    """Closed-form Gamma(x, y) = -eps0 (I + grad grad / k^2) g(x, y)."""
    d, r = _separation(x, y)
    if np.any(r < COINCIDENCE_TOL):
        raise CoincidentPointsError("dyadic_green is singular at x == y")
    k = wp.kappa
    g = np.exp(1j * k * r) / (4.0 * np.pi * r)
    a = 1j * k - 1.0 / r
    dg = g * a  # g'(r)
    d2g = g * (a * a + 1.0 / r**2)  # g''(r)
    rhat = d / r[..., None]
    rr = rhat[..., :, None] * rhat[..., None, :]
    eye = np.eye(3)
    hess = d2g[..., None, None] * rr + (dg / r)[..., None, None] * (eye - rr)
    return -wp.epsilon0 * (g[..., None, None] * eye + hess / k**2)


def _unit_or_zero(d, r):
    safe = np.where(r < COINCIDENCE_TOL, 1.0, r)
    rhat = d / safe[..., None]
    return np.where((r < COINCIDENCE_TOL)[..., None], 0.0, rhat)


def im_dyadic_green(x, y, wp: WaveParameters):
    """Im Gamma(x, y) via the Bessel form; total, equal to -(eps0 k / 6 pi) I at x == y."""
    d, r = _separation(x, y)
    k = wp.kappa
    kr = k * r
    j0 = spherical_bessel_j(0, kr)
    j2 = spherical_bessel_j(2, kr)
    rhat = _unit_or_zero(d, r)
    rr = rhat[..., :, None] * rhat[..., None, :]
    eye = np.eye(3)
    j0 = np.asarray(j0)[..., None, None]
    j2 = np.asarray(j2)[..., None, None]
    return -(wp.epsilon0 * k / (4.0 * np.pi)) * (
        (2.0 / 3.0) * j0 * eye + j2 * (rr - eye / 3.0)
    )


def cross_matrix(v):
    """Matrix [v]_x with [v]_x p = v x p."""
    v = np.asarray(v)
    out = np.zeros(v.shape[:-1] + (3, 3), dtype=v.dtype)
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def curl_im_dyadic_green(x, y, wp: WaveParameters, wrt: str = "first"):
    """Column-wise curl of Im Gamma(x, y) with respect to one argument.

    Im Gamma = -(eps0 k / 4 pi)(I + grad grad / k^2) j0(k|x-y|); the gradient
    part is curl-free, leaving (eps0 k^2 / 4 pi) j1(k r) [rhat]_x with
    rhat = (x - y)/r, sign-flipped for the second argument.
    """
    if wrt not in ("first", "second"):
        raise ValueError("wrt must be 'first' or 'second'")
    d, r = _separation(x, y)
    k = wp.kappa
    j1 = np.asarray(spherical_bessel_j(1, k * r))
    rhat = _unit_or_zero(d, r)
    sign = 1.0 if wrt == "first" else -1.0
    return sign * (wp.epsilon0 * k * k / (4.0 * np.pi)) * j1[..., None, None] * cross_matrix(rhat)


def contract(a, b):
    """Double contraction A : B = sum_ij a_ij b_ij over the last two axes."""
    return np.einsum("...ij,...ij->...", a, b)


def frobenius(a):
    return np.sqrt(np.abs(contract(np.conj(a), a)))
