"""Clustering and averaging of per-patch transforms into one pose."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FusionError, ParameterError
from .transforms import RigidTransform3, quaternion_angle as _qangle, slerp

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterParams:
    max_translation_gap: float = 2.0
    max_rotation_gap: float = math.radians(5.0)

    def __post_init__(self):
        if not (self.max_translation_gap > 0 and self.max_rotation_gap > 0):
            raise ParameterError("max_translation_gap and max_rotation_gap must be positive")


@dataclass(frozen=True)
class PatchTransform:
    lidar_patch_id: tuple
    transform: RigidTransform3
    match_score: float
    matched_visual_patch_id: tuple | None = None


@dataclass
class TransformCluster:
    members: list = field(default_factory=list)
    representative: RigidTransform3 | None = None

    @property
    def seed(self) -> PatchTransform:
        return self.members[0]

    def __len__(self):
        return len(self.members)

    def mean_score(self) -> float:
        return float(np.mean([m.match_score for m in self.members]))


def quaternion_angle(qa, qb) -> float:
    """Angle between two rotations; inputs are normalised with a warning if needed."""
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    for q in (qa, qb):
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            log.warning("quaternion_angle: normalising non-unit quaternion %s", q)
    return _qangle(qa, qb)


def _close(a: RigidTransform3, b: RigidTransform3, params: ClusterParams) -> bool:
    return (
        float(np.linalg.norm(a.translation - b.translation)) < params.max_translation_gap
        and abs(quaternion_angle(a.rotation, b.rotation)) < params.max_rotation_gap
    )


def cluster_transforms(K, params: ClusterParams = ClusterParams()) -> list[TransformCluster]:
    """Greedy clustering in input order: each transform joins the first cluster
    whose seed is within both gaps of it, else starts one."""
    clusters: list[TransformCluster] = []
    for pt in K:
        for c in clusters:
            if _close(c.seed.transform, pt.transform, params):
                c.members.append(pt)
                break
        else:
            clusters.append(TransformCluster([pt]))
    for c in clusters:
        ordered = sorted(c.members, key=lambda m: m.lidar_patch_id)
        c.representative = average_transforms([m.transform for m in ordered])
    return clusters


def average_transforms(transforms) -> RigidTransform3:
    """Mean translation; rotation by the running slerp ``q_k = slerp(q_{k-1}, q_k, 1/k)``."""
    if not transforms:
        raise FusionError("cannot average an empty set of transforms")
    t = np.mean([T.translation for T in transforms], axis=0)
    q = np.asarray(transforms[0].rotation, dtype=float)
    for k, T in enumerate(transforms[1:], start=2):
        qk = np.asarray(T.rotation, dtype=float)
        if np.dot(q, qk) < 0:
            qk = -qk
        q = slerp(q, qk, 1.0 / k)
    return RigidTransform3(q, t)


def largest_cluster(clusters: list[TransformCluster]) -> TransformCluster:
    """Most members wins; ties go to the lower mean match score."""
    return min(clusters, key=lambda c: (-len(c), c.mean_score()))


def fuse(K, params: ClusterParams = ClusterParams()) -> RigidTransform3:
    K = list(K)
    if not K:
        raise FusionError("no patch transforms to fuse")
    return largest_cluster(cluster_transforms(K, params)).representative
