"""Registration quality metrics: octree volume growth and boundary accuracy."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .boundary import BoundaryParams, extract_boundary
from .cloud import SpatialIndex, as_cloud, avg_nearest_distance, voxel_downsample
from .errors import MetricError, ParameterError


@dataclass(frozen=True)
class OctreeWrap:
    resolution: float
    occupied_leaf_count: int
    root_min: np.ndarray
    root_size: float
    depth: int

    @property
    def volume(self) -> float:
        return self.occupied_leaf_count * self.resolution**3


@dataclass
class EvaluationReport:
    volume_G: float
    volume_O: float
    supplement_degree: float
    accuracy: float | None = None
    baseline_accuracy: float | None = None
    resolution: float = 0.5

    def to_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "volume_G": self.volume_G,
            "volume_O": self.volume_O,
            "supplement_degree": self.supplement_degree,
            "accuracy": self.accuracy,
            "baseline_accuracy": self.baseline_accuracy,
        }


def octree_wrap(cloud, resolution: float) -> OctreeWrap:
    """Occupied leaves of an octree with leaf edge ``resolution``.

    The root is the smallest power-of-two multiple of ``resolution`` that
    covers the cloud, anchored on the leaf lattice so leaves coincide with
    ``floor(p / resolution)`` voxels.
    """
    pts = as_cloud(cloud)
    if len(pts) == 0:
        raise MetricError("cannot wrap an empty cloud")
    if not resolution > 0:
        raise ParameterError("octree resolution must be positive")
    keys = np.floor(pts / resolution).astype(np.int64)
    kmin = keys.min(axis=0)
    span = int((keys.max(axis=0) - kmin).max()) + 1
    depth = max(0, math.ceil(math.log2(span)))
    n = np.unique(keys, axis=0).shape[0]
    return OctreeWrap(resolution, int(n), kmin * resolution, resolution * 2**depth, depth)


def octree_volume(cloud, resolution: float) -> float:
    return octree_wrap(cloud, resolution).volume


def supplement_ratio(volume_O: float, volume_G: float) -> float:
    if not volume_G > 0:
        raise MetricError("reference volume must be positive")
    return (volume_O - volume_G) / volume_G


def supplement_degree(O, G, resolution: float = 0.5) -> float:
    """Relative growth of octree-wrapped volume from ``G`` to the fused ``O``."""
    return supplement_ratio(octree_volume(O, resolution), octree_volume(G, resolution))


def boundary_accuracy(registered_L, G, params: BoundaryParams = BoundaryParams(), leaf: float | None = 0.3) -> float:
    """Mean distance from the 2D boundary points of ``registered_L`` to the
    nearest 2D boundary point of ``G``."""
    L = as_cloud(registered_L)
    G = as_cloud(G)
    if len(L) == 0 or len(G) == 0:
        raise MetricError("boundary accuracy needs two non-empty clouds")
    if leaf:
        L = voxel_downsample(L, leaf)
        G = voxel_downsample(G, leaf)
    bl = extract_boundary(L, params)
    bg = extract_boundary(G, params)
    return avg_nearest_distance(bl, SpatialIndex(bg))


def evaluate(O, G, registered_L=None, resolution: float = 0.5, params: BoundaryParams = BoundaryParams()) -> EvaluationReport:
    vg = octree_volume(G, resolution)
    vo = octree_volume(O, resolution)
    acc = None if registered_L is None else boundary_accuracy(registered_L, G, params)
    return EvaluationReport(vg, vo, supplement_ratio(vo, vg), acc, None, resolution)
