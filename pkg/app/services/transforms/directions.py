"""
Direction Grid Service.

This module provides functionality to build the sampled parameter space of
hyperplane transforms: unit normals omega on the sphere, tangent unit vectors
u perpendicular to each omega, and a symmetric grid of signed offsets p.

Every builder produces an antipodally closed grid: the second half of the
normals is the exact negation of the first half, and the tangent set of each
normal is closed under negation, so parity relations can be checked
pointwise.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.config.settings import DIRECTIONS_2D, DIRECTIONS_3D, TANGENTS_3D
from app.services.algebra.symtensor import tangent_frames
from app.services.fields.field import Grid
from app.utils.errors import DimensionMismatchError

# Configure logging
logger = logging.getLogger(__name__)

ANTIPODE_TOLERANCE = 1e-9


@dataclass
class DirectionGrid:
    """
    Sampled hyperplane parameters.

    omegas has shape (K, n); tangents, when present, shape (K, U, n); the
    offsets are p_j = (j - P) * p_spacing for j = 0 .. 2P.
    """
    omegas: np.ndarray
    p_count: int
    p_spacing: float
    tangents: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    tangent_weights: Optional[np.ndarray] = None
    antipode: Optional[np.ndarray] = field(default=None, init=False)
    tangent_antipode: Optional[np.ndarray] = field(default=None, init=False)

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=float)
        if self.omegas.ndim != 2 or self.omegas.shape[1] < 2:
            raise DimensionMismatchError(f"Directions must have shape (K, n) with n >= 2, got {self.omegas.shape}")
        if np.max(np.abs(np.linalg.norm(self.omegas, axis=1) - 1.0)) > 1e-10:
            raise ValueError("Direction grid contains non-unit normals")
        if self.p_count < 1 or not self.p_spacing > 0:
            raise ValueError(f"Offset grid needs P >= 1 and a positive spacing, got P={self.p_count}, h={self.p_spacing}")
        if self.tangents is not None:
            self.tangents = np.asarray(self.tangents, dtype=float)
            if self.tangents.ndim != 3 or self.tangents.shape[0] != self.K or self.tangents.shape[2] != self.n:
                raise DimensionMismatchError(f"Tangents shape {self.tangents.shape} does not fit {self.omegas.shape}")
            if np.max(np.abs(np.einsum("kun,kn->ku", self.tangents, self.omegas))) > 1e-10:
                raise ValueError("Tangent vectors are not perpendicular to their normals")
        if self.weights is None:
            self.weights = np.full(self.K, sphere_area(self.n) / self.K)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.tangents is not None and self.tangent_weights is None:
            self.tangent_weights = np.full(self.U, sphere_area(self.n - 1) / self.U)
        self.antipode = self._find_antipodes()
        if self.antipode is not None and self.tangents is not None:
            self.tangent_antipode = self._find_tangent_antipodes()

    @property
    def n(self) -> int:
        return self.omegas.shape[1]

    @property
    def K(self) -> int:
        return self.omegas.shape[0]

    @property
    def U(self) -> int:
        return 0 if self.tangents is None else self.tangents.shape[1]

    @property
    def p_size(self) -> int:
        return 2 * self.p_count + 1

    @property
    def p_offset(self) -> float:
        return -self.p_count * self.p_spacing

    def offsets(self) -> np.ndarray:
        return self.p_spacing * np.arange(-self.p_count, self.p_count + 1)

    def frames(self) -> np.ndarray:
        """Deterministic tangent frames of all normals, shape (K, n-1, n)."""
        return tangent_frames(self.omegas)

    @property
    def antipodally_closed(self) -> bool:
        return self.antipode is not None and (self.tangents is None or self.tangent_antipode is not None)

    def _find_antipodes(self) -> Optional[np.ndarray]:
        gaps = np.linalg.norm(self.omegas[:, np.newaxis, :] + self.omegas[np.newaxis, :, :], axis=-1)
        antipode = np.argmin(gaps, axis=1)
        if np.max(gaps[np.arange(self.K), antipode]) > ANTIPODE_TOLERANCE:
            logger.debug("Direction grid is not closed under omega -> -omega")
            return None
        return antipode

    def _find_tangent_antipodes(self) -> Optional[np.ndarray]:
        partner = self.tangents[self.antipode]
        gaps = np.linalg.norm(self.tangents[:, :, np.newaxis, :] + partner[:, np.newaxis, :, :], axis=-1)
        index = np.argmin(gaps, axis=2)
        if np.max(np.take_along_axis(gaps, index[..., np.newaxis], axis=2)) > ANTIPODE_TOLERANCE:
            logger.debug("Tangent sets are not closed under u -> -u")
            return None
        return index


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n (2 points for n = 1)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def circle_tangents(frames: np.ndarray, count: int) -> np.ndarray:
    """count tangents u_j = cos(t_j) w_1 + sin(t_j) w_2 per normal; -u_j sits at j + count/2."""
    angles = 2.0 * math.pi * np.arange(count) / count
    cos, sin = np.cos(angles), np.sin(angles)
    half = count // 2
    cos[half:], sin[half:] = -cos[:half], -sin[:half]
    return cos[np.newaxis, :, np.newaxis] * frames[:, np.newaxis, 0, :] + sin[np.newaxis, :, np.newaxis] * frames[:, np.newaxis, 1, :]


def equiangular_directions(count: int, p_count: int, p_spacing: float, with_tangents: bool = True) -> DirectionGrid:
    """
    Equiangular normals on the circle, theta_k = 2 pi k / K.

    Args:
        count: Number of normals K (even)
        p_count: Offsets per side P
        p_spacing: Offset spacing
        with_tangents: Attach u in {omega_1, -omega_1}

    Returns:
        DirectionGrid with weights 2 pi / K
    """
    if count < 2 or count % 2:
        raise ValueError(f"Number of directions must be even, got {count}")
    theta = 2.0 * math.pi * np.arange(count // 2) / count
    half = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    omegas = np.vstack([half, -half])
    tangents = None
    if with_tangents:
        t1 = tangent_frames(omegas)[:, 0, :]
        tangents = np.stack([t1, -t1], axis=1)
    return DirectionGrid(omegas=omegas, p_count=p_count, p_spacing=p_spacing, tangents=tangents)


def fibonacci_directions(count: int, p_count: int, p_spacing: float, tangent_count: int = TANGENTS_3D,
                         with_tangents: bool = True) -> DirectionGrid:
    """Fibonacci lattice on the upper half sphere plus its negation; tangents on the circle."""
    if count < 2 or count % 2:
        raise ValueError(f"Number of directions must be even, got {count}")
    if tangent_count < 2 or tangent_count % 2:
        raise ValueError(f"Number of tangents must be even, got {tangent_count}")
    half_count = count // 2
    golden = math.pi * (3.0 - math.sqrt(5.0))
    index = np.arange(half_count)
    z = 1.0 - (index + 0.5) / half_count
    radius = np.sqrt(1.0 - z * z)
    phi = golden * index
    half = np.stack([radius * np.cos(phi), radius * np.sin(phi), z], axis=1)
    omegas = np.vstack([half, -half])
    tangents = circle_tangents(tangent_frames(omegas), tangent_count) if with_tangents else None
    return DirectionGrid(omegas=omegas, p_count=p_count, p_spacing=p_spacing, tangents=tangents)


def default_direction_grid(grid: Grid, count: Optional[int] = None, p_count: Optional[int] = None,
                           p_spacing: Optional[float] = None, with_tangents: bool = True,
                           tangent_count: int = TANGENTS_3D) -> DirectionGrid:
    """
    Direction grid matched to a field grid.

    Offsets default to spacing h and P = N/2; normals default to
    DIRECTIONS_2D (n = 2) or DIRECTIONS_3D (n = 3).
    """
    p_spacing = p_spacing or grid.spacing
    p_count = p_count or grid.size // 2
    if p_count * p_spacing > grid.half_width * math.sqrt(grid.n) + 1e-12:
        logger.warning(
            f"Offset grid reaches {p_count * p_spacing:.4g}, beyond the cube diameter "
            f"{grid.half_width * math.sqrt(grid.n):.4g}; outer rows are zero"
        )
    if grid.n == 2:
        return equiangular_directions(count or DIRECTIONS_2D, p_count, p_spacing, with_tangents)
    if grid.n == 3:
        return fibonacci_directions(count or DIRECTIONS_3D, p_count, p_spacing, tangent_count, with_tangents)
    raise DimensionMismatchError(f"No default direction grid for n={grid.n}")
