"""End-to-end cross-source registration of a street-view cloud onto an
over-view cloud.

Stages: voxel downsampling, GNSS translation, patch partition, candidate
selection (annulus + descriptor + neighbourhood), per-patch 2D boundary / 3D
NDT registration, clustering of the per-patch poses and a final whole-cloud
NDT refinement.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .boundary import BoundaryParams, extract_boundary, ground_height
from .candidates import (
    Candidate,
    CandidateSet,
    SelectionParams,
    annulus_candidates,
    descriptor_filter,
    neighbor_filter,
    relative_angle,
    select_salient,
)
from .cloud import SpatialIndex, as_cloud, avg_nearest_distance, voxel_downsample
from .descriptor import compute_esf
from .errors import BoundaryError, DescriptorError, GeometryError, GridError, ParameterError, PipelineFailure
from .fusion import ClusterParams, PatchTransform, cluster_transforms, largest_cluster
from .ndt import NdtParams, register_2d, register_3d
from .patches import PatchGrid, default_step, partition, splice_with_neighbors
from .transforms import RigidTransform2, RigidTransform3

log = logging.getLogger(__name__)

LIDAR, VISUAL = 0, 1


@dataclass(frozen=True)
class PipelineParams:
    selection: SelectionParams = field(default_factory=SelectionParams)
    boundary: BoundaryParams = field(default_factory=BoundaryParams)
    ndt2d: NdtParams = field(default_factory=lambda: NdtParams(cell_size=2.0))
    # patch-level 3D refinement starts from a good 2D pose: one fine level
    ndt3d: NdtParams = field(default_factory=lambda: NdtParams(cell_size=1.0, levels=1))
    # whole-cloud refinement; coarse cells are biased when the two clouds
    # share few surfaces, so a single fine level is used
    final_ndt: NdtParams = field(default_factory=lambda: NdtParams(cell_size=1.0, levels=1))
    clustering: ClusterParams = field(default_factory=ClusterParams)
    match_dist: float = 1.0
    grid_step_ratio: float = 0.1
    leaf: float = 0.3
    # thinning of the LiDAR boundary before 2D NDT (scoring uses all points)
    boundary_leaf: float = 0.6
    esf_samples: int = 20000
    seed: int = 0

    def __post_init__(self):
        if not self.match_dist > 0:
            raise ParameterError("match_dist must be positive")
        if not 0 < self.grid_step_ratio <= 1:
            raise ParameterError("grid_step_ratio must lie in (0, 1]")
        if not self.leaf > 0:
            raise ParameterError("leaf must be positive")


@dataclass
class PatchContext:
    """Everything register_patch needs, shared read-only across workers."""

    lidar_grid: PatchGrid
    visual_grid: PatchGrid
    params: PipelineParams
    origin: np.ndarray
    # visual patch id -> (spliced cloud, boundary points, index) or None
    visual_boundaries: dict = field(default_factory=dict)

    def visual(self, pid):
        if pid not in self.visual_boundaries:
            self.visual_boundaries[pid] = _spliced_boundary(self.visual_grid, pid, self.params)
        return self.visual_boundaries[pid]


@dataclass
class PipelineResult:
    K: list
    transform: RigidTransform3
    fused_estimate: RigidTransform3
    report: dict


def _boundary(points, params: BoundaryParams):
    try:
        return extract_boundary(points, params)
    except BoundaryError:
        return None


def _spliced_boundary(grid: PatchGrid, pid, p: PipelineParams):
    cloud = splice_with_neighbors(grid, pid, p.selection.neighbor_min_points)
    b = _boundary(cloud, p.boundary)
    if b is None:
        return None
    return cloud, b, SpatialIndex(b)


def bearing_start(origin, lidar_centroid, visual_centroid) -> RigidTransform2:
    """Rotation about the GNSS origin taking the LiDAR patch bearing onto the
    candidate's bearing; the unknown heading moves patches along circles
    around that origin."""
    o = np.asarray(origin, dtype=float)[:2]
    a = relative_angle(o, lidar_centroid, visual_centroid)
    return RigidTransform2(0.0, o) @ RigidTransform2(a) @ RigidTransform2(0.0, -o)


def match_score(lidar_boundary: np.ndarray, visual_index: SpatialIndex, T2: RigidTransform2) -> float:
    return avg_nearest_distance(T2.apply(lidar_boundary), visual_index)


def _project(T: RigidTransform3) -> RigidTransform2:
    return RigidTransform2(T.yaw, T.translation[:2])


def register_patch(lidar_patch_id, candidates: CandidateSet, ctx: PatchContext) -> PatchTransform | None:
    """2D boundary registration against every candidate, 3D refinement of the
    best one.  ``None`` when nothing registers within ``match_dist``."""
    if len(candidates) == 0:
        return None
    p = ctx.params
    min_nb = p.selection.neighbor_min_points
    lidar_cloud = splice_with_neighbors(ctx.lidar_grid, lidar_patch_id, min_nb)
    lidar_b = _boundary(lidar_cloud, p.boundary)
    if lidar_b is None:
        return None

    lidar_centroid = ctx.lidar_grid.patches[lidar_patch_id].centroid
    lidar_src = voxel_downsample(lidar_b, p.boundary_leaf) if p.boundary_leaf > 0 else lidar_b
    best = None
    for cand in sorted(candidates, key=lambda c: c.id):
        vis = ctx.visual(cand.id)
        if vis is None:
            continue
        visual_cloud, visual_b, index = vis
        starts = (RigidTransform2.identity(), bearing_start(ctx.origin, lidar_centroid, ctx.visual_grid.patches[cand.id].centroid))
        for k, init in enumerate(starts):
            try:
                res = register_2d(lidar_src, visual_b, init=init, params=p.ndt2d)
            except GridError:
                continue
            score = match_score(lidar_b, index, res.transform)
            if best is None or (score, cand.id, k) < best[:3]:
                best = (score, cand.id, k, cand, res.transform, visual_cloud, index)
    if best is None:
        return None

    *_, cand, T2, visual_cloud, index = best
    init = T2.lift()
    # level the grounds first: z is weakly observable from facades alone
    q = p.boundary.ground_percentile
    dz = ground_height(visual_cloud, q) - ground_height(init.apply(lidar_cloud), q)
    init = RigidTransform3.from_translation([0.0, 0.0, dz]) @ init
    try:
        res3 = register_3d(lidar_cloud, visual_cloud, init=init, params=p.ndt3d)
    except GridError:
        return None
    T = res3.transform
    score = match_score(lidar_b, index, _project(T))
    if not (res3.converged and score < p.match_dist):
        return None
    return PatchTransform(tuple(lidar_patch_id), T, float(score), tuple(cand.id))


def _final_refinement(L_ds, G_ds, fused: RigidTransform3, p: PipelineParams):
    """Whole-cloud 3D NDT from the fused pose, kept only if it does not move
    the LiDAR boundary away from the visual boundary."""
    try:
        refined = register_3d(L_ds, G_ds, init=fused, params=p.final_ndt).transform
    except GridError:
        return fused, False, None
    lb = _boundary(L_ds, p.boundary)
    vb = _boundary(G_ds, p.boundary)
    if lb is None or vb is None:
        return fused, False, None
    index = SpatialIndex(vb)
    before = match_score(lb, index, _project(fused))
    after = match_score(lb, index, _project(refined))
    accepted = after <= before
    return (refined if accepted else fused), accepted, {"fused": before, "refined": after}


def _descriptor(grid: PatchGrid, pid, side: int, p: PipelineParams):
    rng = np.random.default_rng([p.seed, side, *pid])
    seed = int(rng.integers(0, 2**31 - 1))
    try:
        return compute_esf(grid.patches[pid].points, p.esf_samples, seed)
    except DescriptorError:
        return None


def _pmap(fn, items, workers: int):
    items = list(items)
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run_pipeline(G, L, gnss_origin, params: PipelineParams = PipelineParams(), workers: int = 1) -> PipelineResult:
    """Register the street-view cloud ``L`` (own frame) onto ``G``.

    Returns the per-patch set ``K``, the final transform mapping ``L`` into
    ``G``'s frame and a report of per-stage counts and timings.
    """
    p = params
    timings: dict[str, float] = {}
    counts: dict[str, int] = {}
    t0 = time.perf_counter()

    G = as_cloud(G)
    L = as_cloud(L)
    if len(G) == 0 or len(L) == 0:
        raise PipelineFailure("both clouds must be non-empty", {"visual_points": len(G), "lidar_points": len(L)})
    origin = np.asarray(gnss_origin, dtype=float).reshape(3)
    coarse = RigidTransform3.from_translation(origin)

    G_ds = voxel_downsample(G, p.leaf)
    L_ds = coarse.apply(voxel_downsample(L, p.leaf))
    counts.update(visual_points=len(G_ds), lidar_points=len(L_ds))
    timings["downsample"] = time.perf_counter() - t0

    t = time.perf_counter()
    step = default_step(G_ds, p.grid_step_ratio)
    vgrid = partition(G_ds, step)
    lgrid = partition(L_ds, step)
    salient = select_salient(lgrid, p.selection.salient_min_points)
    counts.update(visual_patches=len(vgrid), lidar_patches=len(lgrid), salient=len(salient))
    timings["partition"] = time.perf_counter() - t

    # annulus candidates per salient patch
    t = time.perf_counter()
    sel = p.selection
    ring = {}
    for pid in salient:
        try:
            ring[pid] = annulus_candidates(
                vgrid, origin, lgrid.patches[pid].centroid, sel.ring_tolerance, sel.max_bearing_offset
            )
        except GeometryError:
            ring[pid] = []
    counts["annulus_candidates"] = sum(len(v) for v in ring.values())
    counts["with_annulus"] = sum(1 for v in ring.values() if v)
    timings["annulus"] = time.perf_counter() - t

    # descriptors for every patch that may be compared
    t = time.perf_counter()
    big = lambda grid: {pid for pid in grid.ids() if len(grid.patches[pid]) > sel.neighbor_min_points}
    need_l = sorted(set(salient) | big(lgrid))
    need_v = sorted({c for v in ring.values() for c in v} | big(vgrid))
    ldesc = dict(zip(need_l, _pmap(lambda pid: _descriptor(lgrid, pid, LIDAR, p), need_l, workers)))
    vdesc = dict(zip(need_v, _pmap(lambda pid: _descriptor(vgrid, pid, VISUAL, p), need_v, workers)))
    ldesc = {k: v for k, v in ldesc.items() if v is not None}
    vdesc = {k: v for k, v in vdesc.items() if v is not None}
    counts.update(lidar_descriptors=len(ldesc), visual_descriptors=len(vdesc))
    timings["descriptors"] = time.perf_counter() - t

    t = time.perf_counter()
    cand_sets = {}
    n_desc = n_nb = 0
    for pid in salient:
        if pid not in ldesc or not ring[pid]:
            continue
        cs = CandidateSet(pid, [Candidate(c, vdesc.get(c)) for c in ring[pid]])
        cs = descriptor_filter(ldesc[pid], cs, sel.min_correlation)
        n_desc += len(cs)
        cs = neighbor_filter(pid, cs, lgrid, vgrid, sel, ldesc, vdesc)
        n_nb += len(cs)
        if len(cs):
            cand_sets[pid] = cs
    counts.update(descriptor_candidates=n_desc, neighbor_candidates=n_nb, with_candidates=len(cand_sets))
    timings["filtering"] = time.perf_counter() - t

    t = time.perf_counter()
    ctx = PatchContext(lgrid, vgrid, p, origin)
    needed = sorted({c.id for cs in cand_sets.values() for c in cs})
    ctx.visual_boundaries.update(zip(needed, _pmap(lambda pid: _spliced_boundary(vgrid, pid, p), needed, workers)))
    order = sorted(cand_sets)
    results = _pmap(lambda pid: register_patch(pid, cand_sets[pid], ctx), order, workers)
    K = [r for r in results if r is not None]
    counts["registered"] = len(K)
    timings["registration"] = time.perf_counter() - t
    if not K:
        raise PipelineFailure("no patch registered; the result set is empty", counts)

    t = time.perf_counter()
    clusters = cluster_transforms(K, p.clustering)
    winner = largest_cluster(clusters)
    counts.update(clusters=len(clusters), largest_cluster=len(winner))
    fused = winner.representative
    refined, accepted, scores = _final_refinement(L_ds, G_ds, fused, p)
    counts["final_refinement_accepted"] = int(accepted)
    timings["fusion"] = time.perf_counter() - t
    timings["total"] = time.perf_counter() - t0

    report = {
        "counts": counts,
        "timings": timings,
        "grid_step": step,
        "final_boundary_score": scores,
        "clusters": [[list(m.lidar_patch_id) for m in c.members] for c in clusters],
    }
    return PipelineResult(K, refined @ coarse, fused @ coarse, report)
