"""Point-to-point ICP, used as the comparison baseline."""

from __future__ import annotations

import numpy as np

from .cloud import SpatialIndex
from .errors import GridError
from .ndt import RegistrationResult
from .transforms import RigidTransform3


def best_rigid_fit(src: np.ndarray, dst: np.ndarray) -> RigidTransform3:
    """Least-squares rotation and translation mapping ``src`` onto ``dst``
    (Umeyama without scale)."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    cov = (dst - mu_d).T @ (src - mu_s) / len(src)
    U, _, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    return RigidTransform3.from_rt(R, mu_d - R @ mu_s)


def truncated_residual(dist: np.ndarray, max_corr_dist: float) -> float:
    """RMS of nearest distances with each term capped at ``max_corr_dist``."""
    return float(np.sqrt(np.mean(np.minimum(dist, max_corr_dist) ** 2)))


def icp_register(
    source,
    target,
    init: RigidTransform3 | None = None,
    max_iterations: int = 50,
    max_corr_dist: float = 5.0,
    tolerance: float = 1e-6,
) -> RegistrationResult:
    """Alternate nearest-neighbour matching and closed-form rigid fits.

    ``history`` records the capped residual before each update; it never
    increases because every fit minimises the inlier sum and re-matching can
    only shorten distances.
    """
    src = np.asarray(source, dtype=float)
    tgt = np.asarray(target, dtype=float)
    if len(src) == 0 or len(tgt) == 0:
        raise GridError("ICP needs non-empty source and target")
    index = SpatialIndex(tgt)
    T = init or RigidTransform3.identity()
    history = []
    converged = False
    it = 0
    dist, nn = index.nearest(T.apply(src))
    history.append(truncated_residual(dist, max_corr_dist))
    for it in range(1, max_iterations + 1):
        inl = dist <= max_corr_dist
        if inl.sum() < 3:
            return RegistrationResult(T, history[-1], False, it, history)
        moved = T.apply(src)
        step = best_rigid_fit(moved[inl], tgt[nn[inl]])
        T_new = step @ T
        dist_new, nn_new = index.nearest(T_new.apply(src))
        res = truncated_residual(dist_new, max_corr_dist)
        if res > history[-1]:
            # re-matching cannot raise the capped cost; guard against round-off
            break
        T, dist, nn = T_new, dist_new, nn_new
        history.append(res)
        if history[-2] - res <= tolerance:
            converged = True
            break
    return RegistrationResult(T, history[-1], converged, it, history)
