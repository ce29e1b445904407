import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridfusion.errors import GridError
from hybridfusion.icp import best_rigid_fit, icp_register, truncated_residual
from hybridfusion.ndt import (
    NdtParams,
    build_ndt_grid,
    ndt_objective,
    ndt_score,
    params_to_matrix,
    regularize_covariance,
    register_2d,
    register_3d,
)
from hybridfusion.transforms import RigidTransform2, RigidTransform3

from conftest import box_surface, random_transform


def outline(rng, spacing=0.2, noise=0.02):
    """Boundary-like 2D samples: an L-shaped footprint plus a separate block."""
    def poly(corners):
        out = []
        for a, b in zip(corners, corners[1:] + corners[:1]):
            a, b = np.asarray(a, float), np.asarray(b, float)
            n = max(2, int(np.linalg.norm(b - a) / spacing))
            t = rng.random(n)[:, None]
            out.append(a + t * (b - a))
        return np.concatenate(out)

    L = poly([(0, 0), (20, 0), (20, 6), (8, 6), (8, 16), (0, 16)])
    block = poly([(26, 2), (34, 2), (34, 12), (26, 12)])
    pts = np.concatenate([L, block])
    return pts + rng.normal(0, noise, pts.shape)


def _dense_3d(rng):
    parts = [box_surface(rng, c, s, 4000) for c, s in [((0, 0), (10, 8, 6)), ((14, 3), (6, 10, 9))]]
    ground = np.c_[rng.uniform(-10, 25, (6000, 2)), rng.normal(0, 0.03, 6000)]
    return np.concatenate(parts + [ground])


def gradient_errors(dim: int, n_poses: int = 20, seed: int = 0):
    """Max relative error of the analytic gradient and Hessian against central
    differences, over random poses; poses where a point would change cell
    inside the difference stencil are redrawn."""
    rng = np.random.default_rng(seed)
    if dim == 2:
        tgt = outline(rng)
        grid = build_ndt_grid(tgt, 2.0, min_sigma=0.2)
        src = outline(rng)
        npar, scale = 3, np.array([1.0, 1.0, 0.2])
    else:
        tgt = _dense_3d(rng)
        grid = build_ndt_grid(tgt, 2.0, min_sigma=0.2)
        src = tgt[rng.choice(len(tgt), 3000, replace=False)]
        npar, scale = 6, np.array([1.0, 1.0, 0.5, 0.1, 0.1, 0.2])
    h = 1e-6
    worst_g = worst_h = 0.0
    done = 0
    while done < n_poses:
        x = rng.normal(size=npar) * scale
        stencil = [x + s * h * e for e in np.eye(npar) for s in (-1, 1)]
        cells = [grid.lookup(src @ params_to_matrix(p, dim)[0].T + p[:dim]) for p in [x] + stencil]
        if any(not np.array_equal(cells[0], c) for c in cells[1:]):
            continue
        _, g, H = ndt_objective(grid, src, x)
        g_fd = np.empty(npar)
        H_fd = np.empty((npar, npar))
        for i, e in enumerate(np.eye(npar)):
            fp = ndt_objective(grid, src, x + h * e, derivatives=1)
            fm = ndt_objective(grid, src, x - h * e, derivatives=1)
            g_fd[i] = (fp[0] - fm[0]) / (2 * h)
            H_fd[:, i] = (fp[1] - fm[1]) / (2 * h)
        worst_g = max(worst_g, np.linalg.norm(g - g_fd) / max(np.linalg.norm(g_fd), 1e-12))
        worst_h = max(worst_h, np.linalg.norm(H - H_fd) / max(np.linalg.norm(H_fd), 1e-12))
        done += 1
    return worst_g, worst_h


def recover_boundary(seed: int):
    """Register a boundary set against a 10 deg, 1 m displaced copy; returns
    (translation error, rotation error in degrees)."""
    rng = np.random.default_rng(seed)
    tgt = outline(rng)
    truth = RigidTransform2(math.radians(10.0), [0.8, 0.6])
    src = truth.inverse().apply(outline(rng))
    res = register_2d(src, tgt)
    est = res.transform
    dt = float(np.linalg.norm(est.translation - truth.translation))
    da = abs(math.degrees(math.remainder(est.angle - truth.angle, 2 * math.pi)))
    return dt, da, res.converged


def test_grid_statistics_oracle(rng):
    pts = rng.random((2000, 3)) * 10
    grid = build_ndt_grid(pts, 2.5, min_points_per_cell=5, min_sigma=0.0)
    keys = np.floor(pts / 2.5).astype(int)
    for i, k in enumerate(grid.keys):
        cell = pts[(keys == k).all(axis=1)]
        assert grid.counts[i] == len(cell)
        np.testing.assert_allclose(grid.means[i], cell.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(grid.covariances[i], regularize_covariance(np.cov(cell.T), 1e-3), atol=1e-12)
    np.testing.assert_array_equal(grid.lookup(grid.means), np.arange(len(grid)))


def test_min_points_filter():
    pts = np.r_[np.zeros((3, 2)) + 0.5, np.random.default_rng(0).random((10, 2)) + [4, 4]]
    grid = build_ndt_grid(pts, 1.0, min_points_per_cell=5)
    assert len(grid) == 1
    assert grid.lookup([[0.5, 0.5]])[0] == -1
    with pytest.raises(GridError):
        build_ndt_grid(pts[:3], 1.0)


def test_degenerate_covariance_regularised():
    line = np.c_[np.linspace(0.01, 0.99, 50), np.full(50, 0.5)]
    grid = build_ndt_grid(line, 1.0, min_sigma=0.0)
    w = np.linalg.eigvalsh(grid.covariances[0])
    assert w.min() >= 1e-3 * w.max() * (1 - 1e-9)
    assert np.all(np.isfinite(grid.inverse_covariances))


def test_score_examples():
    rng = np.random.default_rng(5)
    tgt = outline(rng)
    grid = build_ndt_grid(tgt, 2.0, min_sigma=0.2)
    on = ndt_score(grid, grid.means, RigidTransform2())
    assert on == pytest.approx(-len(grid.means))
    far = tgt + 1000
    assert ndt_score(grid, far, RigidTransform2()) == pytest.approx(-0.05 * len(far))
    s = ndt_score(grid, tgt, RigidTransform2())
    assert -len(tgt) <= s <= 0


@pytest.mark.parametrize("dim", [2, 3])
def test_gradient_matches_finite_differences(dim):
    g_err, h_err = gradient_errors(dim)
    assert g_err < 1e-5
    assert h_err < 1e-5


def test_score_invariant_under_joint_motion(rng):
    tgt = _dense_3d(rng)
    src = tgt[::7] + rng.normal(0, 0.05, tgt[::7].shape)
    T = RigidTransform3.from_euler(0.3, -0.2, 0.1, yaw=0.25)
    a = ndt_score(build_ndt_grid(tgt, 2.0), src, T)
    M = RigidTransform3.from_translation([40.0, -20.0, 6.0])
    b = ndt_score(build_ndt_grid(M.apply(tgt), 2.0), src, M @ T)
    assert a == pytest.approx(b, rel=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_recovers_boundary_motion(seed):
    dt, da, converged = recover_boundary(seed)
    assert converged
    assert dt < 0.1 and da < 1.0


def _building_patch(r):
    ground = np.c_[r.uniform(-10, 10, (3000, 2)), r.normal(0, 0.02, 3000)]
    ground = ground[~((np.abs(ground[:, 0]) < 4) & (np.abs(ground[:, 1]) < 3))]
    return np.r_[box_surface(r, (0, 0), (8, 6, 10), 5000), ground]


@pytest.mark.parametrize("seed", range(4))
def test_3d_recovers_z_shift(seed):
    truth = RigidTransform3.from_translation([0.0, 0.0, 0.8])
    tgt = _building_patch(np.random.default_rng(seed))
    src = truth.inverse().apply(_building_patch(np.random.default_rng(50 + seed)))
    res = register_3d(src, tgt)
    assert res.converged
    assert abs(res.transform.translation[2] - 0.8) < 0.1
    assert np.linalg.norm(res.transform.translation[:2]) < 0.2


def test_disjoint_not_converged():
    rng = np.random.default_rng(0)
    tgt = outline(rng)
    res = register_2d(tgt + 500.0, tgt, params=NdtParams(levels=1))
    assert not res.converged


def test_empty_inputs():
    with pytest.raises(GridError):
        register_2d(np.empty((0, 2)), np.zeros((10, 2)))


# --- ICP baseline ---------------------------------------------------------


@given(st.integers(0, 10_000))
@settings(max_examples=20)
def test_best_rigid_fit_exact(seed):
    r = np.random.default_rng(seed)
    src = r.normal(size=(30, 3))
    T = random_transform(r)
    assert best_rigid_fit(src, T.apply(src)).allclose(T, atol=1e-8)


def test_icp_recovers_and_is_monotone(rng):
    tgt = _dense_3d(rng)[::3]
    truth = RigidTransform3.from_euler(0.4, 0.3, 0.1, yaw=math.radians(4))
    res = icp_register(truth.inverse().apply(tgt), tgt)
    assert res.transform.distance_to(truth) < 0.05
    assert np.all(np.diff(res.history) <= 0)


def test_icp_disjoint():
    pts = np.random.default_rng(0).random((100, 3))
    res = icp_register(pts + 100, pts, max_corr_dist=1.0)
    assert not res.converged
    assert truncated_residual(np.array([0.0, 10.0]), 1.0) == pytest.approx(math.sqrt(0.5))
