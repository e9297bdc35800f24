"""Numerical self-checks: quadrature, kernel identities, Bessel recurrence, FD oracles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_AZIMUTHAL_COUNT, DEFAULT_POLAR_ORDER
from .forward import IncidentPlaneWave, incident_curl, incident_field
from .geometry import build_direction_set, build_product_quadrature
from .imaging import herglotz, herglotz_curl
from .kernels import (
    WaveParameters,
    curl_im_dyadic_green,
    dyadic_green,
    frobenius,
    im_dyadic_green,
    spherical_bessel_j,
)


@dataclass(frozen=True)
class Check:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error < self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name} error={self.error:.3e} tol={self.tolerance:.1e}"

    def as_dict(self) -> dict:
        return {"name": self.name, "error": self.error, "tolerance": self.tolerance, "passed": self.passed}


def fd_curl(f, x, h):
    """Central-difference curl of a vector field f: (..., 3) -> (..., 3)."""
    x = np.asarray(x, dtype=float)
    jac = []
    for a in range(3):
        e = np.zeros(3)
        e[a] = h
        jac.append((f(x + e) - f(x - e)) / (2 * h))
    d = np.stack(jac, axis=-2)  # d[..., a, c] = d f_c / d x_a
    return np.stack(
        [d[..., 1, 2] - d[..., 2, 1], d[..., 2, 0] - d[..., 0, 2], d[..., 0, 1] - d[..., 1, 0]], axis=-1
    )


def plane_wave_identity_error(quad, kappa, max_separation, samples=400, seed=0):
    """max |sum_k w_k exp(i k x.d) - 4 pi j0(k|d|)| over random d up to the given length."""
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((samples, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = np.concatenate([np.linspace(0.0, max_separation, samples // 2), rng.uniform(0, max_separation, samples - samples // 2)])
    d = u * r[:, None]
    approx = np.exp(1j * kappa * d @ quad.nodes.T) @ quad.weights
    exact = 4.0 * np.pi * spherical_bessel_j(0, kappa * r)
    return float(np.max(np.abs(approx - exact)))


def theta_identity_errors(M, N, kappa, max_kr=8.0, layout="uniform", samples=200, seed=0):
    """Worst relative Frobenius errors of the two direction-sum identities.

    Both averages (1/n) sum_j sum_l v v^T exp(i k theta_j.d), with v the
    perpendiculars or theta x perpendicular, should approach -(4 pi / k eps0) Im Gamma.
    """
    wp = WaveParameters.from_kappa(kappa)
    dirs = build_direction_set(M, N, layout)
    t = dirs.triplets
    perp = np.einsum("ja,jb->jab", t[:, 1], t[:, 1]) + np.einsum("ja,jb->jab", t[:, 2], t[:, 2])
    q = np.cross(t[:, 0:1, :], t[:, 1:3, :])
    cross = np.einsum("jla,jlb->jab", q, q)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((samples, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    d = u * (np.linspace(0, max_kr, samples) / kappa)[:, None]
    phase = np.exp(1j * kappa * d @ dirs.thetas.T) / dirs.n  # (S, n)
    ref = -(4.0 * np.pi / kappa) * im_dyadic_green(d, np.zeros(3), wp)
    norm = frobenius(ref)
    e1 = frobenius(np.einsum("sj,jab->sab", phase, perp) - ref) / norm
    e2 = frobenius(np.einsum("sj,jab->sab", phase, cross) - ref) / norm
    return float(e1.max()), float(e2.max())


def run_suite(kappa=8 * np.pi, polar_order=DEFAULT_POLAR_ORDER, azimuthal_count=DEFAULT_AZIMUTHAL_COUNT, seed=0):
    """All self-checks; returns a list of Check."""
    rng = np.random.default_rng(seed)
    checks = []
    wp = WaveParameters.from_kappa(kappa)
    lam = wp.wavelength

    quad = build_product_quadrature(polar_order, azimuthal_count)
    checks.append(
        Check(
            "plane_wave_identity",
            plane_wave_identity_error(quad, kappa, np.sqrt(2.0)),
            1e-8,
        )
    )

    x = rng.uniform(-1, 1, (100, 3))
    y = rng.uniform(-1, 1, (100, 3))
    g = dyadic_green(x, y, wp)
    gs = dyadic_green(y, x, wp)
    scale = np.abs(g).max(axis=(-2, -1), keepdims=True)
    recip = max(
        np.max(np.abs(g - np.swapaxes(g, -1, -2)) / scale), np.max(np.abs(g - gs) / scale)
    )
    checks.append(Check("green_reciprocity", float(recip), 1e-12))

    im_err = np.max(np.abs(g.imag - im_dyadic_green(x, y, wp)) / scale)
    checks.append(Check("im_green_consistency", float(im_err), 1e-10))

    s = np.linspace(0.1, 50.0, 20001)
    j0, j1, j2 = (spherical_bessel_j(n, s) for n in (0, 1, 2))
    rec = np.max(np.abs(j0 + j2 - 3 * j1 / s) / (np.abs(j0) + np.abs(j2)))
    checks.append(Check("bessel_recurrence", float(rec), 1e-12))

    # theta identities on the uniform grid at M = N = 10, k|x - y| <= 8
    e1, e2 = theta_identity_errors(10, 10, kappa)
    checks.append(Check("theta1_identity_M10", e1, 0.05))
    checks.append(Check("theta2_identity_M10", e2, 0.05))

    # finite-difference oracles
    h = 1e-5 * lam
    xs = rng.uniform(-1, 1, (50, 3))
    ys = rng.uniform(-1, 1, (50, 3))
    worst = 0.0
    for col in range(3):
        for wrt, base in (("first", 0), ("second", 1)):
            def column(p, col=col, wrt=wrt):
                args = (p, ys) if wrt == "first" else (xs, p)
                return im_dyadic_green(*args, wp)[..., :, col]

            pt = xs if wrt == "first" else ys
            fd = fd_curl(column, pt, h)
            an = curl_im_dyadic_green(xs, ys, wp, wrt=wrt)[..., :, col]
            worst = max(worst, float(np.max(np.abs(fd - an))))
    checks.append(Check("fd_curl_im_green", worst, 1e-6))

    wave = IncidentPlaneWave([0.0, 0.6, 0.8], [1.0, 0.0, 0.0], wp)
    pts = rng.uniform(-1, 1, (20, 3))
    pot = lambda p: wave.theta_perp * wave.phase(p)[..., None]  # noqa: E731
    fd = fd_curl(pot, pts, h)
    checks.append(
        Check("fd_incident_field", float(np.max(np.abs(fd - incident_field(wave, pts)))), 1e-6)
    )
    fd = fd_curl(lambda p: incident_field(wave, p), pts, h)
    checks.append(
        Check("fd_incident_curl", float(np.max(np.abs(fd - incident_curl(wave, pts)))), 1e-6)
    )
    h2 = 1e-3 * lam
    cc = fd_curl(lambda p: fd_curl(lambda q: incident_field(wave, q), p, h2), pts, h2)
    checks.append(
        Check(
            "fd_curl_curl_incident",
            float(np.max(np.abs(cc - kappa**2 * incident_field(wave, pts)))) / kappa**3,
            1e-4,
        )
    )

    small = build_product_quadrature(16, 32)
    phi = rng.standard_normal((len(small), 3)) + 1j * rng.standard_normal((len(small), 3))
    phi -= small.nodes * np.einsum("kc,kc->k", small.nodes, phi)[:, None]
    zs = rng.uniform(-0.3, 0.3, (10, 3))
    fd = fd_curl(lambda p: herglotz(small, phi, p, wp), zs, h)
    an = herglotz_curl(small, phi, zs, wp)
    hscale = np.abs(herglotz(small, phi, zs, wp)).max() * kappa
    checks.append(Check("fd_herglotz_curl", float(np.max(np.abs(fd - an)) / hscale), 1e-6))
    cc = fd_curl(lambda p: herglotz_curl(small, phi, p, wp), zs, h2)
    checks.append(
        Check(
            "fd_curl_curl_herglotz",
            float(np.max(np.abs(cc - kappa**2 * herglotz(small, phi, zs, wp))) / (hscale * kappa)),
            1e-4,
        )
    )
    return checks
