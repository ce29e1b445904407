"""X-Y grid partition of a cloud into patches."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cloud import as_cloud
from .errors import ParameterError, PatchLookupError

PatchId = tuple[int, int]

_NEIGHBOR_OFFSETS = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]


@dataclass(frozen=True, eq=False)
class Patch:
    id: PatchId
    points: np.ndarray
    centroid: np.ndarray

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class PatchGrid:
    step: float
    origin: np.ndarray
    patches: dict = field(default_factory=dict)

    def __contains__(self, pid) -> bool:
        return tuple(pid) in self.patches

    def __getitem__(self, pid) -> Patch:
        try:
            return self.patches[tuple(pid)]
        except KeyError:
            raise PatchLookupError(f"no patch with id {pid}") from None

    def __len__(self):
        return len(self.patches)

    def ids(self) -> list[PatchId]:
        return sorted(self.patches)

    def counts(self) -> dict[PatchId, int]:
        return {pid: len(p) for pid, p in self.patches.items()}

    def cell_bounds(self, pid) -> tuple[np.ndarray, np.ndarray]:
        """X-Y lower and upper corner of a cell; ``pid`` is (row, col) = (y, x)."""
        row, col = pid
        lo = self.origin + self.step * np.array([col, row], dtype=float)
        return lo, lo + self.step


def partition(cloud, step: float, origin=None) -> PatchGrid:
    """Bin points by ``floor((xy - origin) / step)``; ids are ``(row, col)``.

    ``origin`` defaults to the component-wise X-Y minimum of the cloud.
    """
    pts = as_cloud(cloud)
    if len(pts) == 0:
        raise ParameterError("cannot partition an empty cloud")
    if not step > 0:
        raise ParameterError(f"grid step must be positive, got {step}")
    origin = pts[:, :2].min(axis=0) if origin is None else np.asarray(origin, dtype=float).reshape(2)
    cells = np.floor((pts[:, :2] - origin) / step).astype(np.int64)
    # (row, col) order so ids sort row-major
    keys = cells[:, ::-1]
    order = np.lexsort((keys[:, 1], keys[:, 0]))
    keys_sorted = keys[order]
    splits = np.flatnonzero(np.any(np.diff(keys_sorted, axis=0) != 0, axis=1)) + 1
    patches = {}
    for chunk in np.split(order, splits):
        pid = (int(keys[chunk[0], 0]), int(keys[chunk[0], 1]))
        p = pts[chunk]
        patches[pid] = Patch(pid, p, p.mean(axis=0))
    origin = origin.copy()
    origin.setflags(write=False)
    return PatchGrid(float(step), origin, patches)


def default_step(cloud, ratio: float = 0.1) -> float:
    """``ratio`` times the larger X-Y extent of the cloud."""
    pts = as_cloud(cloud)
    ext = pts[:, :2].max(axis=0) - pts[:, :2].min(axis=0)
    step = float(ext.max()) * ratio
    if not step > 0:
        raise ParameterError("cloud has zero X-Y extent")
    return step


def neighbor_ids(grid: PatchGrid, pid) -> list[PatchId]:
    pid = tuple(pid)
    if pid not in grid.patches:
        raise PatchLookupError(f"no patch with id {pid}")
    r, c = pid
    return [(r + dr, c + dc) for dr, dc in _NEIGHBOR_OFFSETS if (r + dr, c + dc) in grid.patches]


def neighbors(grid: PatchGrid, pid) -> list[Patch]:
    """Occupied cells of the 8-neighbourhood, in row-major order."""
    return [grid.patches[n] for n in neighbor_ids(grid, pid)]


def splice_with_neighbors(grid: PatchGrid, pid, min_neighbor_points: int) -> np.ndarray:
    """The patch's points followed by those of neighbours holding more than
    ``min_neighbor_points`` points."""
    center = grid[pid]
    parts = [center.points] + [n.points for n in neighbors(grid, pid) if len(n) > min_neighbor_points]
    return np.concatenate(parts, axis=0)
