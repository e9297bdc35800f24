"""Sphere quadrature, incident direction sets and Cartesian search grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Rotation used to build the first perpendicular of every incident direction.
ROTATION = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])
FALLBACK_AXIS = np.array([0.0, 1.0, 0.0])
DEGENERACY_TOL = 1e-8


@dataclass(frozen=True)
class SphereQuadrature:
    nodes: np.ndarray  # (K, 3) unit vectors
    weights: np.ndarray  # (K,) steradians, sum 4 pi
    polar_order: int = 0
    azimuthal_count: int = 0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 3 or weights.shape != (nodes.shape[0],):
            raise ValueError("nodes must be (K, 3) and weights (K,)")
        if np.any(np.abs(np.linalg.norm(nodes, axis=1) - 1.0) > 1e-12):
            raise ValueError("quadrature nodes must be unit vectors")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.nodes.shape[0]

    @property
    def mean_weights(self) -> np.ndarray:
        """Weights of the normalized surface measure (they sum to one)."""
        return self.weights / (4.0 * np.pi)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integral over S^2 of samples with node index on axis 0."""
        return np.tensordot(self.weights, values, axes=(0, 0))


def build_product_quadrature(polar_order: int, azimuthal_count: int) -> SphereQuadrature:
    """Gauss-Legendre in cos(polar angle) times a uniform azimuthal rule."""
    if polar_order < 2:
        raise ValueError("polar_order must be >= 2")
    if azimuthal_count < 4:
        raise ValueError("azimuthal_count must be >= 4")
    t, wt = np.polynomial.legendre.leggauss(polar_order)
    phi = 2.0 * np.pi * np.arange(azimuthal_count) / azimuthal_count
    st = np.sqrt(1.0 - t * t)
    nodes = np.stack(
        [
            np.outer(st, np.cos(phi)).ravel(),
            np.outer(st, np.sin(phi)).ravel(),
            np.repeat(t, azimuthal_count),
        ],
        axis=1,
    )
    nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
    weights = np.repeat(wt * (2.0 * np.pi / azimuthal_count), azimuthal_count)
    return SphereQuadrature(nodes, weights, polar_order, azimuthal_count)


@dataclass(frozen=True)
class DirectionSet:
    """Incident directions theta_j with perpendiculars theta_j^{perp,1}, theta_j^{perp,2}.

    ``triplets`` has shape (n, 3, 3): ``triplets[j] = (theta, perp1, perp2)``.
    """

    triplets: np.ndarray
    M: int
    N: int
    layout: str = "uniform"

    @property
    def n(self) -> int:
        return self.triplets.shape[0]

    @property
    def nominal_count(self) -> int:
        """M * N, the direction count before the pole duplicates are merged."""
        return self.M * self.N

    @property
    def nominal_field_count(self) -> int:
        return 2 * self.nominal_count

    @property
    def thetas(self) -> np.ndarray:
        return self.triplets[:, 0]

    def fields(self):
        """Yield (j, ell, theta, theta_perp) for every incident field, ell in {1, 2}."""
        for j, (theta, p1, p2) in enumerate(self.triplets):
            yield j, 1, theta, p1
            yield j, 2, theta, p2


def orthonormal_triplet(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    theta = theta / np.linalg.norm(theta)
    c = np.cross(theta, ROTATION @ theta)
    if np.linalg.norm(c) < DEGENERACY_TOL:
        c = np.cross(theta, FALLBACK_AXIS)
    p1 = c / np.linalg.norm(c)
    p2 = np.cross(p1, theta)
    return np.stack([theta, p1, p2])


def build_direction_set(M: int, N: int, layout: str = "uniform") -> DirectionSet:
    """Incident directions on a latitude-longitude grid.

    ``layout="uniform"`` uses polar angles (m-1) pi / M and azimuths
    2 (n-1) pi / N; the M=1 row collapses onto the north pole and is kept
    once. ``layout="equal_area"`` places the polar rows at the midpoints of
    M equal-area bands instead, so plain averages over the set approximate
    sphere averages.
    """
    if M < 1 or N < 1:
        raise ValueError("M and N must be >= 1")
    psi = 2.0 * np.pi * np.arange(N) / N
    if layout == "uniform":
        phi = np.pi * np.arange(M) / M
    elif layout == "equal_area":
        phi = np.arccos(1.0 - (2.0 * np.arange(M) + 1.0) / M)
    else:
        raise ValueError(f"unknown layout {layout!r}")
    dirs = []
    for ph in phi:
        row = np.stack(
            [np.sin(ph) * np.cos(psi), np.sin(ph) * np.sin(psi), np.full(N, np.cos(ph))], axis=1
        )
        if np.sin(ph) < 1e-15:
            row = row[:1]
            row[0] = (0.0, 0.0, np.sign(np.cos(ph)))
        dirs.append(row)
    thetas = np.concatenate(dirs)
    triplets = np.stack([orthonormal_triplet(t) for t in thetas])
    return DirectionSet(triplets, M, N, layout)


@dataclass(frozen=True)
class SearchGrid:
    origin: np.ndarray
    axes: np.ndarray  # (d, 3) orthonormal directions, d in {2, 3}
    counts: tuple
    spacing: float

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float)
        axes = np.atleast_2d(np.asarray(self.axes, dtype=float))
        counts = tuple(int(c) for c in self.counts)
        if axes.shape[0] not in (2, 3) or axes.shape[1] != 3 or len(counts) != axes.shape[0]:
            raise ValueError("a grid needs 2 or 3 axes with one count each")
        if any(c < 2 for c in counts):
            raise ValueError("each axis needs at least 2 points")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        axes = axes / np.linalg.norm(axes, axis=1, keepdims=True)
        if np.max(np.abs(axes @ axes.T - np.eye(len(axes)))) > 1e-12:
            raise ValueError("grid axes must be orthogonal")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def square(cls, half_width: float, count: int, z: float = 0.0) -> "SearchGrid":
        """count x count grid over [-w, w]^2 x {z}."""
        spacing = 2.0 * half_width / (count - 1)
        return cls((-half_width, -half_width, z), np.eye(3)[:2], (count, count), spacing)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def shape(self) -> tuple:
        return self.counts

    def axis_coordinates(self, axis: int) -> np.ndarray:
        return self.spacing * np.arange(self.counts[axis])


def enumerate_grid(grid: SearchGrid) -> np.ndarray:
    """Grid points in row-major order: the last axis varies fastest."""
    idx = np.indices(grid.counts).reshape(len(grid.counts), -1).T
    return grid.origin + grid.spacing * idx @ grid.axes
