import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from hybridfusion.errors import ParameterError, PatchLookupError
from hybridfusion.patches import default_step, neighbors, neighbor_ids, partition, splice_with_neighbors

xy = st.floats(-200, 200, allow_nan=False)
clouds = arrays(np.float64, st.tuples(st.integers(1, 200), st.just(3)), elements=xy)


def test_single_cell():
    pts = np.array([[1, 1, 0], [2, 3, 1], [9, 9, 2], [5, 5, 5]], dtype=float)
    grid = partition(pts, 10.0, origin=(0, 0))
    assert grid.ids() == [(0, 0)]
    assert len(grid[(0, 0)]) == 4


def test_floor_binning_ids():
    grid = partition(np.array([[1.0, 1, 0], [11.0, 1, 0]]), 10.0, origin=(0, 0))
    assert grid.ids() == [(0, 0), (0, 1)]


def test_counts_match_oracle(rng):
    pts = np.c_[rng.random((10_000, 2)) * 100, rng.random(10_000)]
    grid = partition(pts, 10.0)
    origin = pts[:, :2].min(axis=0)
    oracle = Counter((int(math.floor((y - origin[1]) / 10)), int(math.floor((x - origin[0]) / 10))) for x, y, _ in pts)
    assert grid.counts() == dict(oracle)


@given(clouds, st.floats(0.5, 100))
def test_partition_conserves_points(pts, step):
    grid = partition(pts, step)
    allp = np.concatenate([grid[p].points for p in grid.ids()])
    assert len(allp) == len(pts)
    assert sorted(map(tuple, allp)) == sorted(map(tuple, pts))
    for pid in grid.ids():
        patch = grid[pid]
        lo, hi = grid.cell_bounds(pid)
        rel = (patch.points[:, :2] - grid.origin) / step
        assert np.all(np.floor(rel)[:, ::-1] == pid)
        np.testing.assert_allclose(patch.centroid, patch.points.mean(axis=0))
        assert min(pid) >= 0


def test_partition_deterministic(rng):
    pts = rng.random((500, 3)) * 50
    a, b = partition(pts, 7.0), partition(pts.copy(), 7.0)
    assert a.ids() == b.ids()
    for pid in a.ids():
        np.testing.assert_array_equal(a[pid].points, b[pid].points)


def test_partition_errors():
    with pytest.raises(ParameterError):
        partition(np.empty((0, 3)), 1.0)
    with pytest.raises(ParameterError):
        partition(np.zeros((2, 3)), 0.0)


def test_default_step_is_tenth_of_extent():
    pts = np.array([[0, 0, 0], [100, 40, 3]], dtype=float)
    assert default_step(pts) == pytest.approx(10.0)


def _lattice(cells, per=3):
    return np.array([[c + 0.5, r + 0.5, 0.0] for r, c in cells for _ in range(per)])


def test_neighbors_isolated_and_full():
    grid = partition(_lattice([(0, 0), (5, 5)]), 1.0, origin=(0, 0))
    assert neighbors(grid, (0, 0)) == []
    full = partition(_lattice([(r, c) for r in range(3) for c in range(3)]), 1.0, origin=(0, 0))
    nb = neighbors(full, (1, 1))
    assert len(nb) == 8 and all(p.id != (1, 1) for p in nb)
    with pytest.raises(PatchLookupError):
        neighbors(full, (9, 9))


@given(st.sets(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=1, max_size=40))
def test_neighbor_symmetry(cells):
    grid = partition(_lattice(sorted(cells), per=1), 1.0, origin=(0, 0))
    for a in grid.ids():
        for b in neighbor_ids(grid, a):
            assert a in neighbor_ids(grid, b)
            assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1


def test_splice_arithmetic():
    pts = np.concatenate([
        np.tile([[1.5, 1.5, 0.0]], (100, 1)),
        np.tile([[0.5, 1.5, 0.0]], (60, 1)),
        np.tile([[2.5, 2.5, 0.0]], (10, 1)),
    ])
    grid = partition(pts, 1.0, origin=(0, 0))
    assert len(splice_with_neighbors(grid, (1, 1), 50)) == 160
    assert len(splice_with_neighbors(grid, (1, 1), 500)) == 100
    with pytest.raises(PatchLookupError):
        splice_with_neighbors(grid, (7, 7), 0)


@given(st.dictionaries(st.tuples(st.integers(0, 4), st.integers(0, 4)), st.integers(1, 30), min_size=1), st.integers(0, 30))
def test_splice_count_oracle(cells, thr):
    pts = np.concatenate([np.tile([[c + 0.5, r + 0.5, 0.0]], (n, 1)) for (r, c), n in sorted(cells.items())])
    grid = partition(pts, 1.0, origin=(0, 0))
    for pid, n in cells.items():
        expect = n + sum(
            m for q, m in cells.items()
            if q != pid and max(abs(q[0] - pid[0]), abs(q[1] - pid[1])) == 1 and m > thr
        )
        assert len(splice_with_neighbors(grid, pid, thr)) == expect
