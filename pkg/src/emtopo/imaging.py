"""Herglotz back-propagation, topological-derivative indicators and their predictors.

The Herglotz operator integrates against the normalized surface measure of
the unit sphere (weights / 4 pi). With that convention the sampled indicator
agrees with its closed-form predictors without extra constants.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .forward import (
    FarFieldData,
    Inclusion,
    IncidentPlaneWave,
    TrialInclusion,
    incident_curl,
    incident_field,
)
from .geometry import DirectionSet, SearchGrid, SphereQuadrature, enumerate_grid
from .kernels import WaveParameters, contract, im_dyadic_green

CHUNK = 1024

__all__ = [
    "FarFieldData",
    "IndicatorMap",
    "PeakSummary",
    "compute_map",
    "herglotz",
    "herglotz_curl",
    "herglotz_batch",
    "indicator_single",
    "indicator_multi",
    "indicator_multi_points",
    "indicator_single_points",
    "peak_analysis",
    "predictor_multi",
    "predictor_single_eps",
    "predictor_single_mu",
]


def _points(z):
    z = np.asarray(z, dtype=float)
    return z.reshape(-1, 3), z.shape[:-1]


def herglotz_batch(quad: SphereQuadrature, blocks, z, wp: WaveParameters, curl: bool = True):
    """Herglotz fields (and curls) of many blocks at many points.

    ``blocks`` is (B, K, 3), ``z`` is (P, 3). Returns (H, curl H), each
    (B, P, 3); the curl is None when not requested.
    """
    blocks = np.asarray(blocks, dtype=complex)
    z = np.asarray(z, dtype=float).reshape(-1, 3)
    k = wp.kappa
    phase = np.exp(1j * k * (quad.nodes @ z.T)) * quad.mean_weights[:, None]  # (K, P)
    H = np.einsum("bkc,kp->bpc", blocks, phase, optimize=True)
    C = None
    if curl:
        xcross = 1j * k * np.cross(quad.nodes[None, :, :], blocks)
        C = np.einsum("bkc,kp->bpc", xcross, phase, optimize=True)
    return H, C


def herglotz(quad: SphereQuadrature, block, z, wp: WaveParameters) -> np.ndarray:
    """H[Phi](z), the mean over the sphere of Phi(x) exp(i k x.z)."""
    pts, shape = _points(z)
    H, _ = herglotz_batch(quad, np.asarray(block)[None], pts, wp, curl=False)
    return H[0].reshape(shape + (3,))


def herglotz_curl(quad: SphereQuadrature, block, z, wp: WaveParameters) -> np.ndarray:
    """curl H[Phi](z), the mean of i k x cross Phi(x) exp(i k x.z)."""
    pts, shape = _points(z)
    blocks = np.asarray(block, dtype=complex)[None]
    xcross = 1j * wp.kappa * np.cross(quad.nodes[None], blocks)
    H, _ = herglotz_batch(quad, xcross, pts, wp, curl=False)
    return H[0].reshape(shape + (3,))


def _td_from_fields(H, C, wave, trial, z, wp):
    """Indicator density from Herglotz fields H, C (P, 3) at points z (P, 3)."""
    a_eps, a_mu = trial.contrasts(wp)
    total = np.zeros(z.shape[0])
    if a_mu != 0.0 and C is not None:
        curl_e0 = incident_curl(wave, z) @ trial.M_mu.T
        total += np.real(a_mu * np.einsum("pc,pc->p", curl_e0, np.conj(C)))
    if a_eps != 0.0:
        e0 = incident_field(wave, z) @ trial.M_eps.T
        total += np.real(wp.kappa**2 * a_eps * np.einsum("pc,pc->p", np.conj(H), e0))
    return -total / (4.0 * np.pi)


def indicator_single_points(data: FarFieldData, block: int, trial: TrialInclusion, z):
    """Single-measurement indicator of block ``block`` at points z (..., 3)."""
    pts, shape = _points(z)
    wave = data.wave(block)
    _, a_mu = trial.contrasts(data.wp)
    out = np.empty(pts.shape[0])
    for s in range(0, pts.shape[0], CHUNK):
        p = pts[s : s + CHUNK]
        H, C = herglotz_batch(data.quad, data.blocks[block : block + 1], p, data.wp, curl=a_mu != 0)
        out[s : s + CHUNK] = _td_from_fields(
            H[0], None if C is None else C[0], wave, trial, p, data.wp
        )
    return out.reshape(shape)


def indicator_single(data: FarFieldData, wave: IncidentPlaneWave, trial: TrialInclusion, z_S):
    """I_TD[E0](z_S) from the block of ``data`` tagged with ``wave``."""
    try:
        b = data.find_block(wave)
    except KeyError as exc:
        raise ValueError("far-field data holds no block for this incident wave") from exc
    return indicator_single_points(data, b, trial, z_S)


def _check_coverage(data: FarFieldData, dirs: DirectionSet):
    needed = {(j, ell) for j in range(dirs.n) for ell in (1, 2)}
    have = {tuple(map(int, t)) for t in data.index}
    missing = needed - have
    if missing:
        raise ValueError(f"far-field data misses {len(missing)} of {len(needed)} incident fields")


def indicator_multi_points(
    data: FarFieldData, dirs: DirectionSet, trial: TrialInclusion, z, normalize: bool = True
):
    """(1/n) sum over all incident fields of the single indicator, at points z.

    With ``normalize=False`` the plain sum is returned, which is what grows with n.
    """
    _check_coverage(data, dirs)
    pts, shape = _points(z)
    wp = data.wp
    _, a_mu = trial.contrasts(wp)
    out = np.zeros(pts.shape[0])
    waves = [data.wave(b) for b in range(len(data))]
    chunk = max(16, CHUNK * 8 // max(len(data), 1))
    for s in range(0, pts.shape[0], chunk):
        p = pts[s : s + chunk]
        H, C = herglotz_batch(data.quad, data.blocks, p, wp, curl=a_mu != 0)
        acc = np.zeros(p.shape[0])
        for b, wave in enumerate(waves):
            acc += _td_from_fields(H[b], None if C is None else C[b], wave, trial, p, wp)
        out[s : s + chunk] = acc
    if normalize:
        out /= dirs.n
    return out.reshape(shape)


def indicator_multi(data: FarFieldData, dirs: DirectionSet, trial: TrialInclusion, z_S, normalize=True):
    return indicator_multi_points(data, dirs, trial, z_S, normalize)


def _require_mode(inc: Inclusion, trial: TrialInclusion, wp: WaveParameters, mode: str):
    if mode == "eps":
        if inc.mu1 != wp.mu0 or trial.mu2 != wp.mu0:
            raise ValueError("permittivity predictor needs mu1 = mu2 = mu0")
    elif mode == "mu":
        if inc.epsilon1 != wp.epsilon0 or trial.epsilon2 != wp.epsilon0:
            raise ValueError("permeability predictor needs eps1 = eps2 = eps0")
    else:
        raise ValueError("mode must be 'eps' or 'mu'")


def predictor_single_eps(inc: Inclusion, trial: TrialInclusion, wave: IncidentPlaneWave, z_S):
    """Closed-form single indicator for a permittivity-only contrast."""
    wp = wave.wp
    _require_mode(inc, trial, wp, "eps")
    pts, shape = _points(z_S)
    a1, _ = inc.contrasts(wp)
    a2, _ = trial.contrasts(wp)
    k = wp.kappa
    im_g = im_dyadic_green(pts, inc.center, wp)
    left = im_g @ (inc.M_eps @ np.conj(incident_field(wave, inc.center)))
    right = incident_field(wave, pts) @ trial.M_eps.T
    val = np.real(np.einsum("pc,pc->p", left, right))
    return (-(inc.rho**3) * k**3 * a1 * a2 / (4.0 * np.pi * wp.epsilon0) * val).reshape(shape)


def predictor_single_mu(inc: Inclusion, trial: TrialInclusion, wave: IncidentPlaneWave, z_S):
    """Closed-form single indicator for a permeability-only contrast."""
    wp = wave.wp
    _require_mode(inc, trial, wp, "mu")
    pts, shape = _points(z_S)
    _, a1 = inc.contrasts(wp)
    _, a2 = trial.contrasts(wp)
    k = wp.kappa
    im_g = im_dyadic_green(pts, inc.center, wp)
    left = im_g @ (inc.M_mu @ np.conj(incident_curl(wave, inc.center)))
    right = incident_curl(wave, pts) @ trial.M_mu.T
    val = np.real(np.einsum("pc,pc->p", left, right))
    return (-(inc.rho**3) * k * a1 * a2 / (4.0 * np.pi * wp.epsilon0) * val).reshape(shape)


def predictor_multi(inc: Inclusion, trial: TrialInclusion, z_S, mode: str, wp: WaveParameters):
    """Large-n limit of the multi-measurement indicator."""
    _require_mode(inc, trial, wp, mode)
    pts, shape = _points(z_S)
    if mode == "eps":
        a1, a2, MD, MS = inc.contrasts(wp)[0], trial.contrasts(wp)[0], inc.M_eps, trial.M_eps
    else:
        a1, a2, MD, MS = inc.contrasts(wp)[1], trial.contrasts(wp)[1], inc.M_mu, trial.M_mu
    im_g = im_dyadic_green(pts, inc.center, wp)
    val = contract(im_g @ MD, MS @ im_g)
    k = wp.kappa
    return (inc.rho**3 * k**4 * a1 * a2 / wp.epsilon0**2 * val).reshape(shape)


def sphere_multi_constant(gamma0, gamma1, gamma2, vol_d, vol_s, epsilon0):
    """C_gamma of the spherical multi-measurement predictor."""
    return (
        9.0
        * (gamma0 - gamma1)
        * (gamma0 - gamma2)
        * vol_d
        * vol_s
        / (epsilon0**2 * (2 * gamma0 + gamma1) * (2 * gamma0 + gamma2))
    )


@dataclass(frozen=True)
class IndicatorMap:
    grid: SearchGrid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size != self.grid.size:
            raise ValueError("one value per grid point is required")
        if not np.all(np.isfinite(values)):
            raise ValueError("indicator values must be finite")
        object.__setattr__(self, "values", values)

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def points(self) -> np.ndarray:
        return enumerate_grid(self.grid)


def compute_map(evaluator, grid: SearchGrid, meta=None, threads: int = 1, chunk: int = 4096):
    """Evaluate ``evaluator(points) -> values`` over the grid in enumeration order."""
    pts = enumerate_grid(grid)
    out = np.empty(pts.shape[0])
    spans = [(s, min(s + chunk, len(pts))) for s in range(0, len(pts), chunk)]

    def run(span):
        s, e = span
        out[s:e] = np.real_if_close(np.asarray(evaluator(pts[s:e]))).astype(float)

    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(run, spans))
    else:
        for span in spans:
            run(span)
    return IndicatorMap(grid, out, dict(meta or {}))


@dataclass(frozen=True)
class PeakSummary:
    argmax: np.ndarray
    index: tuple
    peak: float
    fwhm: tuple | None  # per grid axis; None when undefined

    @property
    def defined(self) -> bool:
        return self.fwhm is not None


def _half_width(line, i, half, h):
    """Distance from index i to the half-max crossing on each side."""
    widths = []
    for step in (-1, 1):
        j = i
        while 0 <= j + step < len(line) and line[j + step] >= half:
            j += step
        nxt = j + step
        if not 0 <= nxt < len(line):
            return None
        # linear interpolation between j (above) and nxt (below)
        frac = (line[j] - half) / (line[j] - line[nxt])
        widths.append((abs(j - i) + frac) * h)
    return widths[0] + widths[1]


def peak_analysis(imap: IndicatorMap) -> PeakSummary:
    """Argmax, peak value and axis-aligned full width at half maximum."""
    arr = imap.as_array()
    if arr.size == 0:
        raise ValueError("empty map")
    idx = np.unravel_index(int(np.argmax(arr)), arr.shape)
    peak = float(arr[idx])
    point = imap.grid.origin + imap.grid.spacing * np.asarray(idx) @ imap.grid.axes
    if np.ptp(arr) == 0 or peak <= 0:
        return PeakSummary(point, idx, peak, None)
    widths = []
    for ax in range(arr.ndim):
        sl = list(idx)
        sl[ax] = slice(None)
        w = _half_width(arr[tuple(sl)], idx[ax], 0.5 * peak, imap.grid.spacing)
        widths.append(np.nan if w is None else w)
    return PeakSummary(point, idx, peak, tuple(widths))
