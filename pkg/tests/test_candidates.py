import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hybridfusion.candidates import (
    Candidate,
    CandidateSet,
    SelectionParams,
    annulus_candidates,
    descriptor_filter,
    neighbor_filter,
    neighborhood_similarity,
    relative_angle,
    select_salient,
)
from hybridfusion.descriptor import Descriptor
from hybridfusion.errors import GeometryError, ParameterError
from hybridfusion.patches import partition


def _grid_with_counts(counts):
    pts = np.concatenate([np.tile([[c + 0.5, r + 0.5, 0.0]], (n, 1)) for (r, c), n in sorted(counts.items())])
    return partition(pts, 1.0, origin=(0, 0))


def test_salient_strict_threshold():
    grid = _grid_with_counts({(0, 0): 150, (0, 1): 201, (1, 0): 200, (1, 1): 300})
    assert select_salient(grid, 200) == [(0, 1), (1, 1)]
    assert select_salient(grid, 1000) == []


def test_params_validated():
    with pytest.raises(ParameterError):
        SelectionParams(ring_tolerance=1.0)
    with pytest.raises(ParameterError):
        SelectionParams(max_bearing_offset=0.0)


def test_relative_angle_wraps():
    assert relative_angle((0, 0), (1, 0), (0, 1)) == pytest.approx(math.pi / 2)
    assert relative_angle((0, 0), (-1, 0.01), (-1, -0.01)) == pytest.approx(0.02, abs=1e-4)


def _ring_grid(rng, n=200):
    pts = []
    for k in range(n):
        c = rng.uniform(-60, 60, 2)
        pts.append(np.c_[c + rng.normal(0, 0.5, (20, 2)), np.zeros(20)])
    return partition(np.concatenate(pts), 4.0)


def _annulus_oracle(grid, o, lc, tol, span):
    E = math.hypot(lc[0] - o[0], lc[1] - o[1])
    bl = math.atan2(lc[1] - o[1], lc[0] - o[0])
    out = []
    for pid in grid.ids():
        p = grid[pid]
        cx, cy = p.points[:, 0].mean(), p.points[:, 1].mean()
        rel = math.remainder(math.atan2(cy - o[1], cx - o[0]) - bl, 2 * math.pi)
        if abs(rel) > span:
            continue
        if any((1 - tol) * E <= math.hypot(x - o[0], y - o[1]) <= (1 + tol) * E for x, y, _ in p.points):
            out.append(pid)
    return out


def test_annulus_matches_oracle(rng):
    grid = _ring_grid(rng)
    for _ in range(10):
        o, lc = rng.uniform(-20, 20, 2), rng.uniform(-50, 50, 2)
        tol, span = rng.uniform(0.05, 0.9), rng.uniform(0.1, math.pi)
        assert annulus_candidates(grid, o, lc, tol, span) == _annulus_oracle(grid, o, lc, tol, span)


def test_annulus_example():
    # ring [7, 13] around the origin; lidar centroid due east at 10 m
    pts = np.array([[10.5, 0.5, 0], [20.5, 0.5, 0], [0.5, 10.5, 0], [8.5, 1.5, 0]], dtype=float)
    grid = partition(pts, 1.0, origin=(0, 0))
    got = annulus_candidates(grid, (0, 0, 0), (10, 0, 0), 0.3, math.pi / 3)
    assert got == [(0, 10), (1, 8)]


def test_annulus_degenerate_origin():
    grid = _grid_with_counts({(0, 0): 3})
    with pytest.raises(GeometryError):
        annulus_candidates(grid, (1, 1), (1, 1), 0.3, 1.0)


@given(st.floats(0.05, 0.45), st.floats(0.05, 0.45), st.floats(0.1, 1.5), st.floats(0.1, 1.5))
def test_annulus_monotone(l1, l2, p1, p2):
    grid = _ring_grid(np.random.default_rng(4), 60)
    o, lc = (0.0, 0.0), (30.0, 10.0)
    small = set(annulus_candidates(grid, o, lc, min(l1, l2), min(p1, p2)))
    big = set(annulus_candidates(grid, o, lc, max(l1, l2), max(p1, p2)))
    assert small <= big


def _desc(values):
    return Descriptor(np.asarray(values, dtype=float))


def test_descriptor_filter_strict_and_sorted():
    base = np.arange(640.0) % 7
    lid = _desc(base)
    rng = np.random.default_rng(0)
    cands = []
    for i, target in enumerate([0.9, 0.61, 0.59, -0.2, 0.6]):
        # mix base with orthogonal noise to reach the target correlation
        noise = rng.normal(size=640)
        b = (base - base.mean()) / base.std()
        noise -= noise.mean()
        noise -= (noise @ b) / (b @ b) * b
        noise /= noise.std()
        v = target * b + math.sqrt(1 - target**2) * noise
        cands.append(Candidate((0, i), _desc(v)))
    out = descriptor_filter(lid, CandidateSet((0, 0), cands), 0.6)
    assert out.ids() == [(0, 0), (0, 1)]
    assert [round(c.rho, 9) for c in out] == [0.9, 0.61]


def test_descriptor_filter_drops_flat():
    lid = _desc(np.arange(640.0))
    out = descriptor_filter(lid, CandidateSet((0, 0), [Candidate((0, 1), _desc(np.ones(640))), Candidate((0, 2))]), 0.0)
    assert len(out) == 0


def test_candidate_set_dedups():
    s = CandidateSet((0, 0), [Candidate((1, 1), rho=0.7), Candidate((1, 1), rho=0.9), Candidate((0, 2), rho=0.8)])
    assert s.ids() == [(0, 2), (1, 1)]


def test_neighborhood_similarity_oracle(rng):
    ln = [_desc(rng.normal(size=640)) for _ in range(3)]
    cn = [_desc(rng.normal(size=640)) for _ in range(4)]
    expect = np.mean([max(np.corrcoef(a.bins, b.bins)[0, 1] for b in cn) for a in ln])
    assert neighborhood_similarity(ln, cn) == pytest.approx(expect, abs=1e-9)
    assert neighborhood_similarity([], cn) is None
    assert neighborhood_similarity(ln, []) is None


def _neighbor_setup(rng):
    counts = {(r, c): 300 for r in range(3) for c in range(3)}
    lgrid = _grid_with_counts(counts)
    vgrid = _grid_with_counts({(r, c): 300 for r in range(6) for c in range(6)})
    ld = {pid: _desc(rng.normal(size=640)) for pid in lgrid.ids()}
    vd = {pid: _desc(rng.normal(size=640)) for pid in vgrid.ids()}
    # candidate (4, 4) gets copies of the lidar neighbourhood
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            vd[(4 + dr, 4 + dc)] = ld[(1 + dr, 1 + dc)]
    return lgrid, vgrid, ld, vd


def test_neighbor_filter_keeps_matching(rng):
    lgrid, vgrid, ld, vd = _neighbor_setup(rng)
    cs = CandidateSet((1, 1), [Candidate((4, 4), rho=0.9), Candidate((1, 1), rho=0.8)])
    out = neighbor_filter((1, 1), cs, lgrid, vgrid, SelectionParams(), ld, vd)
    assert out.ids() == [(4, 4)]


def test_neighbor_filter_permutation_invariant(rng):
    lgrid, vgrid, ld, vd = _neighbor_setup(rng)
    cands = [Candidate((r, c), rho=0.7) for r in range(1, 5) for c in range(1, 5)]
    a = neighbor_filter((1, 1), CandidateSet((1, 1), cands), lgrid, vgrid, SelectionParams(), ld, vd)
    rng.shuffle(cands)
    b = neighbor_filter((1, 1), CandidateSet((1, 1), cands), lgrid, vgrid, SelectionParams(), ld, vd)
    assert a.ids() == b.ids()
    assert set(a.ids()) <= {c.id for c in cands}


def test_neighbor_filter_vacuous_without_neighbours(rng):
    lgrid = _grid_with_counts({(0, 0): 300, (5, 5): 300})
    vgrid = _grid_with_counts({(0, 0): 300, (0, 1): 300})
    ld = {p: _desc(rng.normal(size=640)) for p in lgrid.ids()}
    vd = {p: _desc(rng.normal(size=640)) for p in vgrid.ids()}
    cs = CandidateSet((0, 0), [Candidate((0, 0), rho=0.9)])
    assert neighbor_filter((0, 0), cs, lgrid, vgrid, SelectionParams(), ld, vd).ids() == [(0, 0)]
