"""Ensemble of Shape Functions (ESF) global descriptor and Pearson similarity.

The descriptor is ten 64-bin histograms built from randomly sampled point
triples, each segment classified against a 64^3 occupancy grid of the patch:

    0-2   D2 pair distance, segment in / out / mixed
    3     D2 occupied fraction along the segment
    4-6   D3 sqrt(triangle area), all-in / all-out / mixed
    7-9   A3 vertex angle, classified by the opposite segment
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_dilation

from .errors import DescriptorError, SimilarityError

N_BINS = 64
N_HIST = 10
GRID = 64
_CHUNK = 4096
_END_GUARD = 1

IN, OUT, MIXED = 0, 1, 2


@dataclass(frozen=True, eq=False)
class Descriptor:
    bins: np.ndarray
    sample_count: int = 0
    _centered: np.ndarray = field(init=False, repr=False)
    _norm: float = field(init=False, repr=False)

    def __post_init__(self):
        b = np.asarray(self.bins, dtype=float).reshape(-1)
        b.setflags(write=False)
        object.__setattr__(self, "bins", b)
        c = b - b.mean()
        c.setflags(write=False)
        object.__setattr__(self, "_centered", c)
        object.__setattr__(self, "_norm", float(np.sqrt(np.dot(c, c))))

    def __len__(self):
        return len(self.bins)

    def histogram(self, i: int) -> np.ndarray:
        return self.bins[i * N_BINS:(i + 1) * N_BINS]


def occupancy_grid(points: np.ndarray, size: int = GRID, dilate: bool = True):
    """Boolean ``size^3`` grid over the patch's bounding cube.

    The cube is centred on the centroid with side twice the largest centroid
    distance, so its size does not change when the patch is rotated.  Each
    point marks its voxel and, with ``dilate``, the 26 around it.

    Returns the grid, the points in voxel units, and the cube side.
    """
    c = points.mean(axis=0)
    radius = float(np.sqrt(((points - c) ** 2).sum(axis=1).max()))
    extent = 2.0 * radius if radius > 0.0 else 1.0
    lo = c - 0.5 * extent
    u = (points - lo) * (size / extent)
    idx = np.minimum(u.astype(np.int64), size - 1)
    occ = np.zeros((size, size, size), dtype=bool)
    occ[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    if dilate:
        occ = binary_dilation(occ, structure=np.ones((3, 3, 3), dtype=bool))
    return occ, u, extent


def _segment_fill(grids, ua: np.ndarray, ub: np.ndarray) -> np.ndarray:
    """Fraction of occupied voxels along the open segment between two points.

    The segment is sampled at unit steps along its dominant axis, which visits
    the voxels a line-drawing traversal would; the endpoint voxels themselves
    are skipped.  Returns one column per grid in ``grids``.  Segments with no
    interior samples count as fully occupied.
    """
    size = grids[0].shape[0]
    flat_grids = [g.reshape(-1) for g in grids]
    n_steps_all = np.ceil(np.abs(ub - ua).max(axis=1))
    n_use_all = np.maximum(n_steps_all - 2 * _END_GUARD + 1, 0).astype(np.int64)
    # group segments of similar length so chunks carry little padding
    order = np.argsort(n_use_all, kind="stable")
    out = np.ones((len(ua), len(grids)))
    for s in range(0, len(ua), _CHUNK):
        sel = order[s:s + _CHUNK]
        n_use = n_use_all[sel]
        m = int(n_use.max()) if len(n_use) else 0
        if m == 0:
            continue
        a = ua[sel].astype(np.float32)
        d = ub[sel].astype(np.float32) - a
        n_steps = np.maximum(n_steps_all[sel], 1.0).astype(np.float32)
        t = (np.arange(m, dtype=np.float32) + _END_GUARD)[None, :] / n_steps[:, None]
        valid = np.arange(m)[None, :] < n_use[:, None]
        vox = np.minimum((a[:, None, :] + t[:, :, None] * d[:, None, :]).astype(np.int32), size - 1)
        flat = (vox[..., 0] * size + vox[..., 1]) * size + vox[..., 2]
        denom = np.maximum(n_use, 1)
        for j, g in enumerate(flat_grids):
            filled = (g[flat] & valid).sum(axis=1)
            out[sel, j] = np.where(n_use > 0, filled / denom, 1.0)
    return out


def _classify(fill: np.ndarray) -> np.ndarray:
    cls = np.full(fill.shape, MIXED, dtype=np.int8)
    cls[fill >= 1.0] = IN
    cls[fill <= 0.0] = OUT
    return cls


def _hist(values: np.ndarray, hi: float) -> np.ndarray:
    h = np.zeros(N_BINS)
    if len(values) == 0:
        return h
    if not hi > 0:
        h[0] = len(values)
    else:
        idx = np.clip((values / hi * N_BINS).astype(np.int64), 0, N_BINS - 1)
        h = np.bincount(idx, minlength=N_BINS).astype(float)
    total = h.sum()
    return h / total if total > 0 else h


def compute_esf(points, n_samples: int = 20000, seed: int = 0) -> Descriptor:
    """640-bin ESF descriptor of a patch; deterministic for a fixed ``seed``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 3:
        raise DescriptorError("ESF needs at least 3 points")
    if n_samples < 1:
        raise DescriptorError("n_samples must be >= 1")
    occ, u, extent = occupancy_grid(pts)
    rng = np.random.default_rng(seed)
    tri = rng.integers(0, len(pts), size=(n_samples, 3))
    ia, ib, ic = tri[:, 0], tri[:, 1], tri[:, 2]

    pa, pb, pc = pts[ia], pts[ib], pts[ic]
    # segment k is opposite vertex k: (b, c), (c, a), (a, b)
    seg_len = np.stack(
        [np.linalg.norm(pc - pb, axis=1), np.linalg.norm(pa - pc, axis=1), np.linalg.norm(pb - pa, axis=1)],
        axis=1,
    )
    grids = (occ,)
    fill = np.stack(
        [_segment_fill(grids, u[ib], u[ic]), _segment_fill(grids, u[ic], u[ia]), _segment_fill(grids, u[ia], u[ib])],
        axis=1,
    )[..., 0]
    cls = _classify(fill)

    hists = []
    diag = extent * math.sqrt(3.0)
    d2, c2 = seg_len.reshape(-1), cls.reshape(-1)
    for c in (IN, OUT, MIXED):
        hists.append(_hist(d2[c2 == c], diag))
    hists.append(_hist(fill.reshape(-1), 1.0 + 1e-12))

    area = 0.5 * np.linalg.norm(np.cross(pb - pa, pc - pa), axis=1)
    root_area = np.sqrt(area)
    n_in = (cls == IN).sum(axis=1)
    n_out = (cls == OUT).sum(axis=1)
    tri_cls = np.where(n_in == 3, IN, np.where(n_out == 3, OUT, MIXED))
    hi = float(root_area.max())
    for c in (IN, OUT, MIXED):
        hists.append(_hist(root_area[tri_cls == c], hi))

    va, vb = pb - pa, pc - pa
    na, nb = np.linalg.norm(va, axis=1), np.linalg.norm(vb, axis=1)
    ok = (na > 0) & (nb > 0)
    cosang = np.einsum("ij,ij->i", va[ok], vb[ok]) / (na[ok] * nb[ok])
    angle = np.arccos(np.clip(cosang, -1.0, 1.0))
    a_cls = cls[ok, 0]
    for c in (IN, OUT, MIXED):
        hists.append(_hist(angle[a_cls == c], math.pi))

    return Descriptor(np.concatenate(hists), sample_count=int(n_samples))


def pearson(x, y) -> float:
    """Pearson correlation of two descriptors (or plain vectors)."""
    dx = x if isinstance(x, Descriptor) else Descriptor(x)
    dy = y if isinstance(y, Descriptor) else Descriptor(y)
    if len(dx) != len(dy):
        raise SimilarityError("descriptor lengths differ")
    if dx._norm == 0.0 or dy._norm == 0.0:
        raise SimilarityError("zero-variance descriptor")
    r = float(np.dot(dx._centered, dy._centered) / (dx._norm * dy._norm))
    return max(-1.0, min(1.0, r))
