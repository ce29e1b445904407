"""Coarse matching: salient LiDAR patches and their visual candidate patches."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .descriptor import Descriptor, pearson
from .errors import GeometryError, ParameterError, SimilarityError
from .patches import PatchGrid, PatchId, neighbor_ids


@dataclass(frozen=True)
class SelectionParams:
    salient_min_points: int = 200
    ring_tolerance: float = 0.3
    max_bearing_offset: float = math.pi / 3
    min_correlation: float = 0.6
    min_neighbor_correlation: float = 0.5
    neighbor_min_points: int = 200

    def __post_init__(self):
        if not 0.0 < self.ring_tolerance < 1.0:
            raise ParameterError(f"ring_tolerance must lie in (0, 1), got {self.ring_tolerance}")
        if not 0.0 < self.max_bearing_offset <= math.pi:
            raise ParameterError(f"max_bearing_offset must lie in (0, pi], got {self.max_bearing_offset}")
        if not -1.0 <= self.min_correlation <= 1.0:
            raise ParameterError(f"min_correlation must lie in [-1, 1], got {self.min_correlation}")


@dataclass(frozen=True)
class Candidate:
    id: PatchId
    descriptor: Descriptor | None = field(default=None, compare=False, repr=False)
    rho: float = float("nan")


@dataclass
class CandidateSet:
    lidar_patch_id: PatchId
    candidates: list[Candidate] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        unique = []
        for c in self.candidates:
            if c.id not in seen:
                seen.add(c.id)
                unique.append(c)
        # rho descending, ties (and unscored nan) by id
        unique.sort(key=lambda c: (-(c.rho if not math.isnan(c.rho) else -math.inf), c.id))
        self.candidates = unique

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def ids(self) -> list[PatchId]:
        return [c.id for c in self.candidates]


def select_salient(lidar_grid: PatchGrid, min_points: int) -> list[PatchId]:
    """Ids of patches holding strictly more than ``min_points`` points."""
    return [pid for pid in lidar_grid.ids() if len(lidar_grid.patches[pid]) > min_points]


def _bearing(v: np.ndarray) -> float:
    return math.atan2(v[1], v[0])


def relative_angle(origin, lidar_centroid, patch_centroid) -> float:
    """Signed X-Y angle from the origin->lidar ray to the origin->patch ray."""
    o = np.asarray(origin, dtype=float)[:2]
    a = _bearing(np.asarray(lidar_centroid, dtype=float)[:2] - o)
    b = _bearing(np.asarray(patch_centroid, dtype=float)[:2] - o)
    return math.remainder(b - a, 2.0 * math.pi)


def annulus_candidates(
    visual_grid: PatchGrid,
    gnss_origin,
    lidar_centroid,
    ring_tolerance: float,
    max_bearing_offset: float,
) -> list[PatchId]:
    """Visual patches with a point in the ring ``[(1-tol)d, (1+tol)d]`` around
    the GNSS origin whose centroid bearing is within ``max_bearing_offset`` of
    the LiDAR patch centroid's bearing.  ``d`` is the X-Y distance from the
    origin to that centroid and ``tol`` is ``ring_tolerance``."""
    o = np.asarray(gnss_origin, dtype=float)[:2]
    dist = float(np.linalg.norm(np.asarray(lidar_centroid, dtype=float)[:2] - o))
    if dist == 0.0:
        raise GeometryError("LiDAR patch centroid coincides with the GNSS origin in X-Y")
    r_in, r_out = (1.0 - ring_tolerance) * dist, (1.0 + ring_tolerance) * dist
    out = []
    for pid in visual_grid.ids():
        patch = visual_grid.patches[pid]
        if abs(relative_angle(o, lidar_centroid, patch.centroid)) > max_bearing_offset:
            continue
        d = np.linalg.norm(patch.points[:, :2] - o, axis=1)
        if np.any((d >= r_in) & (d <= r_out)):
            out.append(pid)
    return out


def descriptor_filter(lidar_desc: Descriptor, candidates: CandidateSet, min_correlation: float) -> CandidateSet:
    """Keep candidates whose correlation with the LiDAR descriptor exceeds
    ``min_correlation``; candidates without a usable descriptor are dropped."""
    kept = []
    for c in candidates:
        if c.descriptor is None:
            continue
        try:
            rho = pearson(lidar_desc, c.descriptor)
        except SimilarityError:
            continue
        if rho > min_correlation:
            kept.append(Candidate(c.id, c.descriptor, rho))
    return CandidateSet(candidates.lidar_patch_id, kept)


def _qualifying_neighbors(grid: PatchGrid, pid, min_points: int, descriptors: Mapping) -> list:
    return [
        descriptors[n]
        for n in neighbor_ids(grid, pid)
        if len(grid.patches[n]) > min_points and n in descriptors
    ]


def neighborhood_similarity(lidar_neighbors: list, candidate_neighbors: list) -> float | None:
    """Mean over LiDAR neighbours of the best correlation with any candidate
    neighbour; ``None`` when either side has no neighbours."""
    if not lidar_neighbors or not candidate_neighbors:
        return None
    best = []
    for ln in lidar_neighbors:
        scores = []
        for cn in candidate_neighbors:
            try:
                scores.append(pearson(ln, cn))
            except SimilarityError:
                scores.append(-1.0)
        best.append(max(scores))
    return float(np.mean(best))


def neighbor_filter(
    lidar_id,
    candidates: CandidateSet,
    lidar_grid: PatchGrid,
    visual_grid: PatchGrid,
    params: SelectionParams,
    lidar_descriptors: Mapping,
    visual_descriptors: Mapping,
) -> CandidateSet:
    """Drop candidates whose neighbourhoods look unlike the LiDAR patch's.

    Neighbour directions are not matched: each LiDAR neighbour takes its best
    correlation over all candidate neighbours.
    """
    lidar_nb = _qualifying_neighbors(lidar_grid, lidar_id, params.neighbor_min_points, lidar_descriptors)
    kept = []
    for c in candidates:
        cand_nb = _qualifying_neighbors(visual_grid, c.id, params.neighbor_min_points, visual_descriptors)
        sim = neighborhood_similarity(lidar_nb, cand_nb)
        if sim is None or sim >= params.min_neighbor_correlation:
            kept.append(c)
    return CandidateSet(candidates.lidar_patch_id, kept)
