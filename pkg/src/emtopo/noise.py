"""Measurement and medium noise: samplers, analytic covariances, clutter and Monte Carlo."""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .forward import (
    FarFieldData,
    Inclusion,
    IncidentPlaneWave,
    TrialInclusion,
    incident_curl,
    incident_field,
)
from .geometry import SphereQuadrature
from .imaging import _td_from_fields
from .kernels import WaveParameters, contract, curl_im_dyadic_green, im_dyadic_green

Z95 = 1.959963984540054


# --- measurement noise -------------------------------------------------------


@dataclass(frozen=True)
class MeasurementNoiseSpec:
    """Circular Gaussian far-field noise.

    ``mode="random"`` draws white noise of amplitude ``sigma_xi``.
    ``mode="relative"`` draws one fixed-seed realization per block and rescales it
    so its L2 norm is ``percent`` % of the data block's norm.
    """

    sigma_xi: float = 0.0
    seed: int = 0
    mode: str = "random"
    percent: float | None = None

    def __post_init__(self):
        if self.sigma_xi < 0:
            raise ValueError("sigma_xi must be nonnegative")
        if self.mode not in ("random", "relative"):
            raise ValueError("mode must be 'random' or 'relative'")
        if self.mode == "relative" and not (
            self.percent is not None and 0 < self.percent <= 100
        ):
            raise ValueError("relative mode needs percent in (0, 100]")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream ``key`` under a master seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def tangential_project(nodes, vectors):
    return vectors - nodes * np.einsum("kc,...kc->...k", nodes, vectors)[..., None]


def white_noise(quad: SphereQuadrature, sigma: float, rng: np.random.Generator, blocks: int = 1):
    """Tangential white noise, E[xi xi^H] = sigma^2 / w_k (I - x x^T) at node k.

    ``w_k`` are the weights of the normalized sphere measure, so discrete
    Herglotz sums of the noise reproduce the continuum delta correlation.
    """
    scale = sigma / np.sqrt(2.0 * quad.mean_weights)[:, None]
    shape = (blocks, len(quad), 3)
    xi = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * scale
    return tangential_project(quad.nodes, xi)


def sample_measurement_noise(
    quad: SphereQuadrature, spec: MeasurementNoiseSpec, stream=(0,), reference_norm=None
) -> np.ndarray:
    """One (K, 3) noise block from the stream ``stream`` of the spec's seed."""
    rng = stream_rng(spec.seed, *stream)
    if spec.mode == "random":
        return white_noise(quad, spec.sigma_xi, rng)[0]
    if reference_norm is None:
        raise ValueError("relative noise needs the data norm")
    xi = white_noise(quad, 1.0, rng)[0]
    norm = np.sqrt(quad.weights @ np.sum(np.abs(xi) ** 2, axis=1))
    return xi * (spec.percent / 100.0 * reference_norm / norm)


def add_measurement_noise(data: FarFieldData, spec: MeasurementNoiseSpec, trial: int = 0):
    """Corrupt every block with noise from its own stream (trial, block)."""
    norms = data.l2_norms()
    noisy = data.blocks.copy()
    for b in range(len(data)):
        noisy[b] += sample_measurement_noise(data.quad, spec, (trial, b), norms[b])
    return data.with_blocks(noisy)


def cov_herglotz_noise(z, z2, wp: WaveParameters, sigma_xi: float) -> np.ndarray:
    """E[H(z) H(z')^H] for Herglotz-propagated white noise."""
    return -(4.0 * np.pi * sigma_xi**2 / (wp.kappa * wp.epsilon0)) * im_dyadic_green(z, z2, wp)


def _trial_mode(trial: TrialInclusion, wp: WaveParameters, mode: str):
    a_eps, a_mu = trial.contrasts(wp)
    if mode == "eps":
        if trial.mu2 != wp.mu0:
            raise ValueError("eps mode needs mu2 = mu0")
        return a_eps, trial.M_eps
    if mode == "mu":
        if trial.epsilon2 != wp.epsilon0:
            raise ValueError("mu mode needs eps2 = eps0")
        return a_mu, trial.M_mu
    raise ValueError("mode must be 'eps' or 'mu'")


def cov_indicator_measurement(z, z2, trial: TrialInclusion, wp: WaveParameters, sigma_xi, n, mode):
    """Covariance of the multi-measurement indicator induced by measurement noise."""
    if n < 1:
        raise ValueError("n must be positive")
    a2, MS = _trial_mode(trial, wp, mode)
    g = im_dyadic_green(z, z2, wp)
    val = contract(MS @ g, g @ MS)
    k = wp.kappa
    return sigma_xi**2 * k**4 * a2**2 / (2.0 * n * wp.epsilon0**2) * val


def snr(inc: Inclusion, wp: WaveParameters, sigma_xi: float, n: int, mode: str) -> float:
    """Closed-form signal-to-noise ratio of the multi-measurement indicator at z_D."""
    if sigma_xi <= 0:
        raise ValueError("sigma_xi must be positive")
    if mode == "eps":
        if inc.mu1 != wp.mu0:
            raise ValueError("eps mode needs mu1 = mu0")
        g0, g1 = wp.epsilon0, inc.epsilon1
    elif mode == "mu":
        if inc.epsilon1 != wp.epsilon0:
            raise ValueError("mu mode needs eps1 = eps0")
        g0, g1 = wp.mu0, inc.mu1
    else:
        raise ValueError("mode must be 'eps' or 'mu'")
    return (
        np.sqrt(6.0)
        / (2.0 * np.pi * (2.0 * g0 + g1))
        * inc.rho**3
        * inc.volume_factor
        * abs(g0 - g1)
        * wp.kappa**3
        * np.sqrt(n)
        / sigma_xi
    )


# --- medium noise ------------------------------------------------------------


@dataclass(frozen=True)
class VoxelGrid:
    """Box [origin, origin + extent] split into counts voxels; samples at voxel centers."""

    origin: np.ndarray
    extent: np.ndarray
    counts: tuple

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float).reshape(3)
        extent = np.asarray(self.extent, dtype=float).reshape(3)
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != 3 or min(counts) < 1 or np.any(extent <= 0):
            raise ValueError("a voxel grid needs three positive counts and a positive extent")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "counts", counts)

    @property
    def spacing(self) -> np.ndarray:
        return self.extent / np.asarray(self.counts)

    @property
    def voxel_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.counts[axis]) + 0.5) * self.spacing[axis]

    def centers(self) -> np.ndarray:
        axes = [self.axis_centers(a) for a in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.origin) & (x <= self.origin + self.extent), axis=-1)


def squared_exponential(sigma: float, corr_length: float):
    """C(x, y) = sigma^2 exp(-|x - y|^2 / l^2)."""

    def cov(x, y):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return sigma**2 * np.exp(-np.sum(d * d, axis=-1) / corr_length**2)

    return cov


@dataclass(frozen=True)
class MediumFluctuation:
    kind: str  # "eta" (permeability) or "phi" (permittivity)
    grid: VoxelGrid
    values: np.ndarray  # counts-shaped
    sigma: float
    corr_length: float

    def __post_init__(self):
        if self.kind not in ("eta", "phi"):
            raise ValueError("kind must be 'eta' or 'phi'")
        values = np.asarray(self.values, dtype=float).reshape(self.grid.counts)
        object.__setattr__(self, "values", values)

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def value_at(self, x) -> np.ndarray:
        """Piecewise-constant field; identically zero outside the box."""
        x = np.asarray(x, dtype=float)
        idx = np.floor((x - self.grid.origin) / self.grid.spacing).astype(int)
        idx = np.clip(idx, 0, np.asarray(self.grid.counts) - 1)
        vals = self.values[idx[..., 0], idx[..., 1], idx[..., 2]]
        return np.where(self.grid.contains(x), vals, 0.0)

    def covariance(self):
        return squared_exponential(self.sigma, self.corr_length)

    def scaled(self, alpha: float) -> "MediumFluctuation":
        return MediumFluctuation(self.kind, self.grid, alpha * self.values, self.sigma, self.corr_length)


def _axis_root(centers, corr_length):
    d = centers[:, None] - centers[None, :]
    w, v = np.linalg.eigh(np.exp(-(d * d) / corr_length**2))
    return v * np.sqrt(np.clip(w, 0.0, None))


def fluctuation_sampler(grid: VoxelGrid, corr_length: float):
    """Exact sampler of the separable squared-exponential field on the voxel centers."""
    if corr_length <= 0:
        raise ValueError("correlation length must be positive")
    roots = [_axis_root(grid.axis_centers(a), corr_length) for a in range(3)]

    def draw(rng, sigma, size=None):
        shape = grid.counts if size is None else (size,) + grid.counts
        g = rng.standard_normal(shape)
        out = np.einsum("ia,jb,kc,...abc->...ijk", *roots, g, optimize=True)
        return sigma * out

    return draw


def generate_medium_fluctuation(
    kind: str, grid: VoxelGrid, sigma: float, corr_length: float, seed: int
) -> MediumFluctuation:
    """Voxelized stationary Gaussian field, reproducible from ``seed``."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    draw = fluctuation_sampler(grid, corr_length)
    values = draw(stream_rng(seed), sigma)
    fluct = MediumFluctuation(kind, grid, values, sigma, corr_length)
    if sigma > 0 and values.size > 1:
        std = values.std()
        if abs(std - sigma) > 0.2 * sigma:
            warnings.warn(
                f"sample std {std:.3g} differs from sigma {sigma:.3g} by more than 20%",
                stacklevel=2,
            )
    return fluct


def _clutter_parts(kind, y, waves, pts, wp: WaveParameters, curl: bool):
    """Per-voxel clutter contributions, (B, P, V, 3), for unit fluctuation values."""
    k, eps0 = wp.kappa, wp.epsilon0
    pairs = (pts[:, None, :], y[None, :, :])
    if kind == "eta":
        # H = -(k/eps0) sum ImG E0 eta vol;  curl H uses the first-argument curl
        kern = curl_im_dyadic_green(*pairs, wp) if curl else im_dyadic_green(*pairs, wp)
        src = [incident_field(w, y) for w in waves]
        pref = -k / eps0
    else:
        # integration by parts moves the curl onto the kernel; curl curl Im G = k^2 Im G
        if curl:
            kern = im_dyadic_green(*pairs, wp)
            pref = -k / eps0
        else:
            kern = curl_im_dyadic_green(*pairs, wp)
            pref = -1.0 / (k * eps0)
        src = [incident_curl(w, y) for w in waves]
    return np.stack([pref * np.einsum("pvij,vj->pvi", kern, s_) for s_ in src])


def _clutter(fluct: MediumFluctuation, waves, z, wp: WaveParameters, curl: bool, kind: str):
    if fluct.kind != kind:
        raise ValueError(f"expected a {kind!r} fluctuation, got {fluct.kind!r}")
    single = isinstance(waves, IncidentPlaneWave)
    waves = [waves] if single else list(waves)
    z = np.asarray(z, dtype=float)
    pts = z.reshape(-1, 3)
    y = fluct.grid.centers()
    vals = fluct.flat()
    keep = vals != 0
    out = np.zeros((len(waves), pts.shape[0], 3), dtype=complex)
    if np.any(keep):
        parts = _clutter_parts(kind, y[keep], waves, pts, wp, curl)
        out = fluct.grid.voxel_volume * np.einsum("bpvi,v->bpi", parts, vals[keep])
    return out[0].reshape(z.shape) if single else out.reshape((len(waves),) + z.shape)


def clutter_herglotz_mu(fluct, wave, z, wp: WaveParameters, curl: bool = False):
    """Clutter operator of a permeability fluctuation eta (or its curl)."""
    return _clutter(fluct, wave, z, wp, curl, "eta")


def clutter_herglotz_eps(fluct, wave, z, wp: WaveParameters, curl: bool = False):
    """Clutter operator of a permittivity fluctuation phi (or its curl)."""
    return _clutter(fluct, wave, z, wp, curl, "phi")


def clutter_weights(kind: str, grid: VoxelGrid, waves, trial: TrialInclusion, z, wp, n=None):
    """Linear weights g (P, V) with clutter indicator = g @ fluctuation values.

    The indicator perturbation is real-linear in the real fluctuation, so one
    evaluation per voxel serves every realization.
    """
    if kind not in ("eta", "phi"):
        raise ValueError("kind must be 'eta' or 'phi'")
    waves = list(waves)
    pts = np.asarray(z, dtype=float).reshape(-1, 3)
    y = grid.centers()
    vol = grid.voxel_volume
    _, a_mu = trial.contrasts(wp)
    H = vol * _clutter_parts(kind, y, waves, pts, wp, curl=False)
    C = vol * _clutter_parts(kind, y, waves, pts, wp, curl=True) if a_mu != 0 else None
    P, V = pts.shape[0], y.shape[0]
    zz = np.repeat(pts, V, axis=0)
    total = np.zeros(P * V)
    for b, w in enumerate(waves):
        hb = H[b].reshape(-1, 3)
        cb = None if C is None else C[b].reshape(-1, 3)
        total += _td_from_fields(hb, cb, w, trial, zz, wp)
    n = len(waves) / 2 if n is None else n
    return total.reshape(P, V) / n


def clutter_indicator(fluct: MediumFluctuation, waves, trial: TrialInclusion, z, wp, n=None):
    """Perturbation of the multi-measurement indicator caused by the clutter term."""
    g = clutter_weights(fluct.kind, fluct.grid, waves, trial, z, wp, n)
    return g @ fluct.flat()


SPECKLE_KINDS = ("Q_eta", "Qtilde_eta", "Q_phi", "Qtilde_phi")


def speckle_kernel(kind: str, A, x, y, wp: WaveParameters):
    """Real kernels smoothing the medium noise in the speckle covariance."""
    A = np.asarray(A, dtype=float)
    if kind == "Q_eta" or kind == "Qtilde_phi":
        g = im_dyadic_green(x, y, wp)
        return contract(g, A @ g) if kind == "Q_eta" else contract(g @ A, g)
    if kind == "Qtilde_eta":
        c = curl_im_dyadic_green(x, y, wp, wrt="second")
        return contract(c, A @ c)
    if kind == "Q_phi":
        c = curl_im_dyadic_green(x, y, wp, wrt="first")
        return contract(c @ A, c)
    raise ValueError(f"unknown kernel {kind!r}")


def speckle_setup(fluct_kind: str, trial: TrialInclusion, wp: WaveParameters, mode: str):
    """(kernel kind, prefactor) for a fluctuation kind and trial contrast mode."""
    a2, MS = _trial_mode(trial, wp, mode)
    k = wp.kappa
    table = {
        ("eta", "eps"): ("Q_eta", k**8),
        ("eta", "mu"): ("Qtilde_eta", k**4),
        ("phi", "eps"): ("Q_phi", k**4),
        ("phi", "mu"): ("Qtilde_phi", k**8),
    }
    if (fluct_kind, mode) not in table:
        raise ValueError("fluct_kind must be 'eta' or 'phi'")
    kernel, power = table[(fluct_kind, mode)]
    return kernel, MS, power * a2**2 / wp.epsilon0**4


def speckle_covariance_analytic(
    fluct_kind: str, trial, wp, correlation, grid: VoxelGrid, z, z2, mode: str
) -> float:
    """Double voxel quadrature of the speckle covariance between z and z2."""
    kernel, MS, pref = speckle_setup(fluct_kind, trial, wp, mode)
    y = grid.centers()
    if callable(correlation):
        cmat = correlation(y[:, None, :], y[None, :, :])
    else:
        cmat = np.asarray(correlation, dtype=float)
    k1 = speckle_kernel(kernel, MS, y, np.asarray(z, dtype=float), wp)
    k2 = speckle_kernel(kernel, MS, y, np.asarray(z2, dtype=float), wp)
    vol = grid.voxel_volume
    return float(pref * vol * vol * (k1 @ cmat @ k2))


# --- Monte Carlo -------------------------------------------------------------


@dataclass(frozen=True)
class StatsReport:
    name: str
    estimate: float
    analytic: float
    trials: int
    rel_error: float
    ci95_halfwidth: float

    @classmethod
    def build(cls, name, estimate, analytic, trials, halfwidth, floor=1e-300):
        rel = abs(estimate - analytic) / max(abs(analytic), floor)
        return cls(name, float(estimate), float(analytic), int(trials), float(rel), float(halfwidth))

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "estimate": self.estimate,
            "analytic": self.analytic,
            "trials": self.trials,
            "rel_error": self.rel_error,
            "ci95_halfwidth": self.ci95_halfwidth,
        }


def trial_seeds(seed: int, trials: int):
    return np.random.SeedSequence(int(seed)).spawn(trials)


def monte_carlo(statistic, trials: int, seed: int, threads: int = 1) -> np.ndarray:
    """Evaluate ``statistic(rng, t)`` for t = 0..trials-1 and stack the results.

    Each trial owns a generator spawned from the master seed, so the output
    does not depend on the thread count.
    """
    if trials < 2:
        raise ValueError("trials must be >= 2")
    seqs = trial_seeds(seed, trials)

    def run(t):
        return np.asarray(statistic(np.random.default_rng(seqs[t]), t))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            out = list(pool.map(run, range(trials)))
    else:
        out = [run(t) for t in range(trials)]
    return np.stack(out)


def summarize_mean(name, samples, analytic) -> StatsReport:
    s = np.asarray(samples, dtype=float)
    hw = Z95 * s.std(ddof=1) / np.sqrt(len(s))
    return StatsReport.build(name, s.mean(), analytic, len(s), hw)


def summarize_variance(name, samples, analytic) -> StatsReport:
    s = np.asarray(samples, dtype=float)
    d = s - s.mean()
    var = d @ d / (len(s) - 1)
    m4 = np.mean(d**4)
    hw = Z95 * np.sqrt(max(m4 - var * var, 0.0) / len(s))
    return StatsReport.build(name, var, analytic, len(s), hw)


def summarize_covariance(name, a, b, analytic) -> StatsReport:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    da, db = a - a.mean(), b - b.mean()
    cov = da @ db / (len(a) - 1)
    prod = da * db
    hw = Z95 * prod.std(ddof=1) / np.sqrt(len(a))
    return StatsReport.build(name, cov, analytic, len(a), hw)


def summarize_snr(name, samples, analytic) -> StatsReport:
    s = np.asarray(samples, dtype=float)
    value = s.mean() / s.std(ddof=1)
    hw = Z95 * np.sqrt((1.0 + 0.5 * value * value) / len(s))
    return StatsReport.build(name, value, analytic, len(s), hw)
