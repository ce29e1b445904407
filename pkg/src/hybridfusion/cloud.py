"""Point cloud helpers: validation, voxel downsampling, nearest-neighbour queries.

A point cloud is an ``(N, 3)`` float array in metres.  Functions never modify
their inputs.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .errors import MetricError, ParameterError
from .transforms import RigidTransform3


def as_cloud(points, dim: int = 3) -> np.ndarray:
    """Return ``points`` as a finite ``(N, dim)`` float array."""
    p = np.asarray(points, dtype=float)
    if p.size == 0:
        return np.empty((0, dim))
    if p.ndim == 1 and p.shape[0] == dim:
        p = p[None, :]
    if p.ndim != 2 or p.shape[1] != dim:
        raise ParameterError(f"expected an (N, {dim}) array, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ParameterError("point coordinates must be finite")
    return p


def voxel_keys(points: np.ndarray, leaf: float) -> np.ndarray:
    return np.floor(points / leaf).astype(np.int64)


def voxel_downsample(cloud, leaf: float) -> np.ndarray:
    """Replace the points of each occupied voxel by their centroid.

    Output rows are ordered by voxel key, so the result does not depend on
    the input point order beyond floating-point summation.
    """
    if not leaf > 0:
        raise ParameterError(f"voxel leaf must be positive, got {leaf}")
    pts = np.asarray(cloud, dtype=float)
    if pts.size == 0:
        return np.empty((0, pts.shape[-1] if pts.ndim == 2 else 3))
    pts = as_cloud(pts, dim=pts.shape[-1])
    keys = voxel_keys(pts, leaf)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(counts), pts.shape[1]))
    np.add.at(sums, inverse, pts)
    return sums / counts[:, None]


def apply_transform(cloud, T: RigidTransform3) -> np.ndarray:
    return T.apply(as_cloud(cloud))


class SpatialIndex:
    """k-d tree over a fixed point set (2D or 3D)."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or len(pts) == 0:
            raise MetricError("spatial index needs a non-empty (N, d) point set")
        self.points = pts
        self._tree = cKDTree(pts)

    def __len__(self):
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def nearest(self, queries):
        """Distances and indices of the nearest indexed point for each query."""
        q = np.asarray(queries, dtype=float)
        d, i = self._tree.query(q, k=1)
        return d, i

    def knn(self, queries, k: int):
        return self._tree.query(np.asarray(queries, dtype=float), k=k)


def avg_nearest_distance(source, target_index: SpatialIndex) -> float:
    """Mean distance from each source point to its nearest indexed target point."""
    src = np.asarray(source, dtype=float)
    if src.ndim != 2 or len(src) == 0:
        raise MetricError("source point set is empty")
    if len(target_index) == 0:
        raise MetricError("target point set is empty")
    d, _ = target_index.nearest(src)
    return float(np.mean(d))
