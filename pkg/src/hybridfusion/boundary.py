"""Ground removal, X-Y projection and 2D boundary point extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cloud import as_cloud
from .errors import BoundaryError, EmptyResultError, ParameterError


@dataclass(frozen=True)
class BoundaryParams:
    ground_clearance: float = 1.5
    neighbors: int = 20
    gap_threshold: float = math.pi / 2
    ground_percentile: float = 0.05

    def __post_init__(self):
        if self.ground_clearance < 0:
            raise ParameterError("ground_clearance must be >= 0")
        if self.neighbors < 3:
            raise ParameterError("neighbors must be >= 3")
        if not 0.0 < self.gap_threshold <= 2.0 * math.pi:
            raise ParameterError("gap_threshold must lie in (0, 2*pi]")
        if not 0.0 <= self.ground_percentile <= 1.0:
            raise ParameterError("ground_percentile must lie in [0, 1]")


def ground_height(cloud, percentile: float = 0.05) -> float:
    return float(np.quantile(as_cloud(cloud)[:, 2], percentile))


def remove_ground(cloud, params: BoundaryParams = BoundaryParams()) -> np.ndarray:
    """Points higher than ``ground_clearance`` above the ground-height quantile plane."""
    pts = as_cloud(cloud)
    if len(pts) == 0:
        raise EmptyResultError("cannot remove ground from an empty cloud")
    z0 = ground_height(pts, params.ground_percentile)
    kept = pts[pts[:, 2] - z0 > params.ground_clearance]
    if len(kept) == 0:
        raise EmptyResultError(f"no point lies more than {params.ground_clearance} m above ground")
    return kept


def project_xy(cloud) -> np.ndarray:
    return as_cloud(cloud)[:, :2].copy()


def max_angular_gaps(points, k: int) -> np.ndarray:
    """Largest circular gap between neighbour directions, for every point."""
    pts = np.asarray(points, dtype=float)
    _, idx = cKDTree(pts).query(pts, k=k + 1)
    idx = idx[:, 1:]
    vec = pts[idx] - pts[:, None, :]
    ang = np.arctan2(vec[..., 1], vec[..., 0])
    zero = (vec[..., 0] == 0.0) & (vec[..., 1] == 0.0)
    if zero.any():
        # coincident neighbours carry no direction; copy a valid one so they add no gap
        first_valid = np.argmax(~zero, axis=1)
        fill = ang[np.arange(len(pts)), first_valid]
        ang = np.where(zero, fill[:, None], ang)
    ang.sort(axis=1)
    gaps = np.diff(ang, axis=1)
    wrap = 2.0 * math.pi - (ang[:, -1] - ang[:, 0])
    gap = np.maximum(gaps.max(axis=1), wrap)
    gap[zero.all(axis=1)] = 2.0 * math.pi
    return gap


def boundary_mask(points, params: BoundaryParams = BoundaryParams()) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise BoundaryError(f"expected (N, 2) points, got shape {pts.shape}")
    if len(pts) < params.neighbors + 1:
        raise BoundaryError(f"boundary estimation needs at least {params.neighbors + 1} points, got {len(pts)}")
    return max_angular_gaps(pts, params.neighbors) > params.gap_threshold


def boundary_points_2d(points, params: BoundaryParams = BoundaryParams()) -> np.ndarray:
    """Points whose k nearest neighbours leave an angular gap wider than
    ``gap_threshold`` around them."""
    pts = np.asarray(points, dtype=float)
    return pts[boundary_mask(pts, params)]


def extract_boundary(cloud, params: BoundaryParams = BoundaryParams()) -> np.ndarray:
    """Ground removal, projection and boundary extraction in one call."""
    return boundary_points_2d(project_xy(remove_ground(cloud, params)), params)
