"""Inclusions, polarization tensors, plane waves and the leading-order far field."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import SphereQuadrature
from .kernels import WaveParameters

UNIT_BALL_VOLUME = 4.0 * np.pi / 3.0
VALIDITY_LIMIT = 0.1


class AsymptoticRegimeWarning(UserWarning):
    """rho * kappa is not small; the leading-order far field is unreliable."""


def contrast(gamma0: float, gamma_l: float) -> float:
    """Material contrast gamma0 / gamma_l - 1."""
    if gamma0 <= 0 or gamma_l <= 0:
        raise ValueError("material parameters must be positive")
    return gamma0 / gamma_l - 1.0


def polarization_tensor_sphere(gamma0: float, gamma_l: float, volume: float) -> np.ndarray:
    """Polarization tensor of a sphere, 3 g_l / (2 g_0 + g_l) |B| I."""
    if gamma0 <= 0 or gamma_l <= 0 or volume <= 0:
        raise ValueError("material parameters and volume must be positive")
    return 3.0 * gamma_l / (2.0 * gamma0 + gamma_l) * volume * np.eye(3)


def _check_spd(name, tensor):
    tensor = np.asarray(tensor, dtype=float)
    if tensor.shape != (3, 3):
        raise ValueError(f"{name} must be 3x3")
    if not np.allclose(tensor, tensor.T, rtol=0, atol=1e-12 * max(1.0, np.abs(tensor).max())):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(tensor).min() <= 0:
        raise ValueError(f"{name} must be positive definite")
    return tensor


@dataclass(frozen=True)
class Inclusion:
    """The true scatterer D = rho B_D + z_D."""

    center: np.ndarray
    rho: float
    volume_factor: float
    epsilon1: float
    mu1: float
    M_eps: np.ndarray
    M_mu: np.ndarray

    def __post_init__(self):
        if self.rho <= 0 or self.epsilon1 <= 0 or self.mu1 <= 0 or self.volume_factor <= 0:
            raise ValueError("rho, volume_factor, epsilon1 and mu1 must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "M_eps", _check_spd("M_eps", self.M_eps))
        object.__setattr__(self, "M_mu", _check_spd("M_mu", self.M_mu))

    @classmethod
    def sphere(cls, center, rho, epsilon1, mu1, wp: WaveParameters, volume=UNIT_BALL_VOLUME):
        return cls(
            center,
            rho,
            volume,
            epsilon1,
            mu1,
            polarization_tensor_sphere(wp.epsilon0, epsilon1, volume),
            polarization_tensor_sphere(wp.mu0, mu1, volume),
        )

    def contrasts(self, wp: WaveParameters):
        """(a^eps, a^mu) relative to the background."""
        return contrast(wp.epsilon0, self.epsilon1), contrast(wp.mu0, self.mu1)

    def is_asymptotic(self, wp: WaveParameters) -> bool:
        return self.rho * wp.kappa < VALIDITY_LIMIT


@dataclass(frozen=True)
class TrialInclusion:
    """Search probe; its scale is taken to zero analytically."""

    volume_factor: float
    epsilon2: float
    mu2: float
    M_eps: np.ndarray
    M_mu: np.ndarray

    def __post_init__(self):
        if self.epsilon2 <= 0 or self.mu2 <= 0 or self.volume_factor <= 0:
            raise ValueError("volume_factor, epsilon2 and mu2 must be positive")
        object.__setattr__(self, "M_eps", _check_spd("M_eps", self.M_eps))
        object.__setattr__(self, "M_mu", _check_spd("M_mu", self.M_mu))

    @classmethod
    def sphere(cls, epsilon2, mu2, wp: WaveParameters, volume=UNIT_BALL_VOLUME):
        return cls(
            volume,
            epsilon2,
            mu2,
            polarization_tensor_sphere(wp.epsilon0, epsilon2, volume),
            polarization_tensor_sphere(wp.mu0, mu2, volume),
        )

    def contrasts(self, wp: WaveParameters):
        return contrast(wp.epsilon0, self.epsilon2), contrast(wp.mu0, self.mu2)


@dataclass(frozen=True)
class IncidentPlaneWave:
    theta: np.ndarray
    theta_perp: np.ndarray
    wp: WaveParameters

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        perp = np.asarray(self.theta_perp, dtype=float)
        if abs(np.linalg.norm(theta) - 1) > 1e-12 or abs(np.linalg.norm(perp) - 1) > 1e-12:
            raise ValueError("theta and theta_perp must be unit vectors")
        if abs(theta @ perp) > 1e-12:
            raise ValueError("theta_perp must be orthogonal to theta")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "theta_perp", perp)

    @property
    def polarization(self) -> np.ndarray:
        """theta x theta_perp."""
        return np.cross(self.theta, self.theta_perp)

    def phase(self, x):
        return np.exp(1j * self.wp.kappa * (np.asarray(x, dtype=float) @ self.theta))


def incident_field(wave: IncidentPlaneWave, x) -> np.ndarray:
    """E0(x) = i k (theta x theta_perp) exp(i k theta.x); x may be (..., 3)."""
    k = wave.wp.kappa
    return 1j * k * wave.phase(x)[..., None] * wave.polarization


def incident_curl(wave: IncidentPlaneWave, x) -> np.ndarray:
    """curl E0(x) = -k^2 theta x (theta x theta_perp) exp(i k theta.x)."""
    k = wave.wp.kappa
    vec = -np.cross(wave.theta, wave.polarization)
    return k * k * wave.phase(x)[..., None] * vec


def far_field_asymptotic(inc: Inclusion, wave: IncidentPlaneWave, xhat) -> np.ndarray:
    """Leading O(rho^3) term of the scattered far field at directions xhat (..., 3)."""
    xhat = np.asarray(xhat, dtype=float)
    if np.any(np.abs(np.linalg.norm(xhat, axis=-1) - 1.0) > 1e-10):
        raise ValueError("observation directions must be unit vectors")
    wp = wave.wp
    if not inc.is_asymptotic(wp):
        warnings.warn(
            f"rho*kappa = {inc.rho * wp.kappa:.3g} >= {VALIDITY_LIMIT}",
            AsymptoticRegimeWarning,
            stacklevel=2,
        )
    k = wp.kappa
    a_eps, a_mu = inc.contrasts(wp)
    pol = wave.polarization
    mag_moment = inc.M_mu @ np.cross(wave.theta, pol)
    elec_moment = inc.M_eps @ pol

    term_mu = np.cross(np.broadcast_to(mag_moment, xhat.shape), xhat)
    # (I - xx^T) p
    term_eps = elec_moment - xhat * (xhat @ elec_moment)[..., None]
    phase = np.exp(1j * k * (wave.theta @ inc.center - xhat @ inc.center))
    pref = -1j * k**3 * inc.rho**3 / (4.0 * np.pi)
    return pref * (a_mu * term_mu + a_eps * term_eps) * phase[..., None]


@dataclass(frozen=True)
class FarFieldData:
    """Tangential far-field samples on quadrature nodes, one block per incident field.

    ``blocks`` is (B, K, 3) complex; ``tags`` is (B, 2, 3) holding
    (theta, theta_perp) of each block; ``index`` is (B, 2) holding (j, ell).
    """

    quad: SphereQuadrature
    wp: WaveParameters
    blocks: np.ndarray
    tags: np.ndarray
    index: np.ndarray

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=complex)
        if blocks.ndim != 3 or blocks.shape[1] != len(self.quad) or blocks.shape[2] != 3:
            raise ValueError("blocks must be (B, K, 3) with K the quadrature size")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "tags", np.asarray(self.tags, dtype=float).reshape(-1, 2, 3))
        object.__setattr__(self, "index", np.asarray(self.index, dtype=int).reshape(-1, 2))
        if not (len(self.tags) == len(self.index) == len(blocks)):
            raise ValueError("one tag and one index per block")

    def __len__(self):
        return self.blocks.shape[0]

    def wave(self, b: int) -> IncidentPlaneWave:
        return IncidentPlaneWave(self.tags[b, 0], self.tags[b, 1], self.wp)

    def find_block(self, wave: IncidentPlaneWave, atol: float = 1e-12) -> int:
        for b in range(len(self)):
            if np.allclose(self.tags[b, 0], wave.theta, atol=atol) and np.allclose(
                self.tags[b, 1], wave.theta_perp, atol=atol
            ):
                return b
        raise KeyError("no block tagged with this incident wave")

    def tangential_residual(self) -> float:
        """max_k |xhat.E| / (|E| + 1e-12/1e-9): <= 1 means tangential within tolerance."""
        normal = np.abs(np.einsum("bkc,kc->bk", self.blocks, self.quad.nodes))
        bound = 1e-9 * np.linalg.norm(self.blocks, axis=-1) + 1e-12
        return float(np.max(normal / bound)) if normal.size else 0.0

    def is_tangential(self) -> bool:
        return self.tangential_residual() <= 1.0

    def with_blocks(self, blocks) -> "FarFieldData":
        return FarFieldData(self.quad, self.wp, blocks, self.tags, self.index)

    def l2_norms(self) -> np.ndarray:
        """Per-block L2(S^2) norms under the steradian measure."""
        return np.sqrt(np.einsum("k,bkc->b", self.quad.weights, np.abs(self.blocks) ** 2))


def synthesize_far_field(inc: Inclusion, waves, quad: SphereQuadrature, index=None) -> FarFieldData:
    """Sample the leading-order far field on every node for every wave."""
    waves = list(waves)
    if not waves:
        raise ValueError("at least one incident wave is required")
    wp = waves[0].wp
    with warnings.catch_warnings():
        # warn once, not once per wave
        if not inc.is_asymptotic(wp):
            warnings.warn(
                f"rho*kappa = {inc.rho * wp.kappa:.3g} >= {VALIDITY_LIMIT}",
                AsymptoticRegimeWarning,
                stacklevel=2,
            )
        warnings.simplefilter("ignore", AsymptoticRegimeWarning)
        blocks = np.stack([far_field_asymptotic(inc, w, quad.nodes) for w in waves])
    tags = np.stack([np.stack([w.theta, w.theta_perp]) for w in waves])
    if index is None:
        index = np.stack([np.arange(len(waves)), np.ones(len(waves), dtype=int)], axis=1)
    return FarFieldData(quad, wp, blocks, tags, index)


def direction_waves(dirs, wp: WaveParameters):
    """All 2n incident plane waves of a direction set and their (j, ell) labels."""
    waves, index = [], []
    for j, ell, theta, perp in dirs.fields():
        waves.append(IncidentPlaneWave(theta, perp, wp))
        index.append((j, ell))
    return waves, np.array(index, dtype=int)
