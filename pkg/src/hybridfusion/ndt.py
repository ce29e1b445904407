"""Normal Distributions Transform registration in 2D and 3D.

The target is summarised by one Gaussian per occupied voxel.  A source point
``x'`` falling in a cell with mean ``mu`` and inverse covariance ``C``
contributes ``-exp(-0.5 (x'-mu)^T C (x'-mu))``; a point in an empty cell
contributes ``-outlier_floor``.  The pose is found by Newton's method with an
analytic gradient and Hessian.

Pose parameters are ``(tx, ty, yaw)`` in 2D and ``(tx, ty, tz, roll, pitch,
yaw)`` in 3D with ``R = Rz(yaw) Ry(pitch) Rx(roll)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridError, ParameterError
from .transforms import RigidTransform2, RigidTransform3, matrix_to_euler


@dataclass(frozen=True)
class NdtParams:
    cell_size: float = 2.0
    max_iterations: int = 50
    step_epsilon: float = 1e-4
    outlier_floor: float = 0.05
    min_points_per_cell: int = 5
    max_rotation_step: float = 0.2
    # smallest Gaussian std-dev, as a fraction of the cell size
    min_sigma_ratio: float = 0.1
    # coarse-to-fine: cells of size cell_size * 2**k for k = levels-1 .. 0
    levels: int = 3

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ParameterError("cell_size must be positive")
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be >= 1")


@dataclass
class RegistrationResult:
    transform: RigidTransform2 | RigidTransform3
    final_score: float
    converged: bool
    iterations: int
    history: list = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class NdtGrid:
    cell_size: float
    keys: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    inverse_covariances: np.ndarray
    counts: np.ndarray
    _kmin: np.ndarray = field(repr=False)
    _span: np.ndarray = field(repr=False)
    _codes: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def __len__(self):
        return len(self.counts)

    def _encode(self, keys: np.ndarray):
        rel = keys - self._kmin
        inside = np.all((rel >= 0) & (rel < self._span), axis=1)
        rel = np.where(inside[:, None], rel, 0)
        code = np.zeros(len(keys), dtype=np.int64)
        for i in range(keys.shape[1]):
            code = code * self._span[i] + rel[:, i]
        return code, inside

    def lookup(self, points) -> np.ndarray:
        """Cell index for each point, ``-1`` where the point's voxel is empty."""
        keys = np.floor(np.asarray(points, dtype=float) / self.cell_size).astype(np.int64)
        code, inside = self._encode(keys)
        pos = np.searchsorted(self._codes, code)
        pos = np.minimum(pos, len(self._codes) - 1)
        hit = inside & (self._codes[pos] == code)
        return np.where(hit, pos, -1)


def regularize_covariance(cov: np.ndarray, ratio: float = 1e-3, floor: float = 0.0) -> np.ndarray:
    """Raise every eigenvalue to at least ``max(ratio * largest, floor)``."""
    w, V = np.linalg.eigh(cov)
    lo = np.maximum(ratio * w[..., -1:], floor)
    w = np.maximum(w, lo)
    return np.einsum("...ij,...j,...kj->...ik", V, w, V)


def build_ndt_grid(target, cell_size: float, min_points_per_cell: int = 5, min_sigma: float | None = None) -> NdtGrid:
    """Per-voxel Gaussians of ``target``.

    Covariance eigenvalues are raised to ``1e-3`` of the largest and to
    ``min_sigma**2`` (default ``1e-3 * cell_size``).
    """
    pts = np.asarray(target, dtype=float)
    if pts.ndim != 2 or len(pts) == 0:
        raise GridError("NDT target is empty")
    if not cell_size > 0:
        raise ParameterError("cell_size must be positive")
    d = pts.shape[1]
    keys = np.floor(pts / cell_size).astype(np.int64)
    ukeys, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    keep = counts >= max(min_points_per_cell, 2)
    if not keep.any():
        raise GridError(f"no cell holds {min_points_per_cell} points at cell size {cell_size}")

    sums = np.zeros((len(ukeys), d))
    np.add.at(sums, inverse, pts)
    means = sums / counts[:, None]
    diff = pts - means[inverse]
    outer = np.zeros((len(ukeys), d, d))
    np.add.at(outer, inverse, diff[:, :, None] * diff[:, None, :])
    covs = outer / (counts - 1).clip(min=1)[:, None, None]

    ukeys, means, covs, counts = ukeys[keep], means[keep], covs[keep], counts[keep]
    if min_sigma is None:
        min_sigma = 1e-3 * cell_size
    covs = regularize_covariance(covs, 1e-3, min_sigma**2)
    inv = np.linalg.inv(covs)

    kmin = ukeys.min(axis=0)
    span = ukeys.max(axis=0) - kmin + 1
    grid = NdtGrid(cell_size, ukeys, means, covs, inv, counts, kmin, span, np.empty(0, dtype=np.int64))
    codes, _ = grid._encode(ukeys)
    order = np.argsort(codes, kind="stable")
    return NdtGrid(
        cell_size, ukeys[order], means[order], covs[order], inv[order], counts[order], kmin, span, codes[order]
    )


# --- pose parameterisation -------------------------------------------------


def _rot2(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s], [s, c]])


def _rotation_derivatives(x: np.ndarray, dim: int):
    """Rotation matrix and its first/second derivatives w.r.t. the angle parameters."""
    if dim == 2:
        R = _rot2(x[2])
        dR = R @ np.array([[0.0, -1.0], [1.0, 0.0]])
        return R, [dR], [[-R]]
    roll, pitch, yaw = x[3], x[4], x[5]
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    dRx = np.array([[0, 0, 0], [0, -sr, -cr], [0, cr, -sr]])
    dRy = np.array([[-sp, 0, cp], [0, 0, 0], [-cp, 0, -sp]])
    dRz = np.array([[-sy, -cy, 0], [cy, -sy, 0], [0, 0, 0]])
    d2Rx = np.array([[0, 0, 0], [0, -cr, sr], [0, -sr, -cr]])
    d2Ry = np.array([[-cp, 0, -sp], [0, 0, 0], [sp, 0, -cp]])
    d2Rz = np.array([[-cy, sy, 0], [-sy, -cy, 0], [0, 0, 0]])
    f = [(Rx, dRx, d2Rx), (Ry, dRy, d2Ry), (Rz, dRz, d2Rz)]

    def prod(orders):
        # orders[i] = derivative order of factor i (x, y, z); matrix is Z @ Y @ X
        m = [f[i][orders[i]] for i in range(3)]
        return m[2] @ m[1] @ m[0]

    R = prod((0, 0, 0))
    dR = []
    for i in range(3):
        o = [0, 0, 0]
        o[i] = 1
        dR.append(prod(o))
    d2R = [[None] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(3):
            o = [0, 0, 0]
            o[i] += 1
            o[j] += 1
            d2R[i][j] = prod(o)
    return R, dR, d2R


def params_to_matrix(x, dim: int):
    x = np.asarray(x, dtype=float)
    R, _, _ = _rotation_derivatives(x, dim)
    return R, x[:dim].copy()


def params_to_transform(x, dim: int):
    x = np.asarray(x, dtype=float)
    if dim == 2:
        return RigidTransform2(float(x[2]), x[:2])
    return RigidTransform3.from_euler(*x[:3], *x[3:])


def transform_to_params(T) -> np.ndarray:
    if isinstance(T, RigidTransform2):
        return np.array([T.translation[0], T.translation[1], T.angle])
    roll, pitch, yaw = matrix_to_euler(T.R)
    return np.concatenate([T.translation, [roll, pitch, yaw]])


def ndt_objective(grid: NdtGrid, source, x, outlier_floor: float = 0.05, derivatives: int = 2):
    """Score and (optionally) gradient and Hessian w.r.t. the pose parameters."""
    src = np.asarray(source, dtype=float)
    dim = grid.dim
    x = np.asarray(x, dtype=float)
    npar = 3 if dim == 2 else 6
    R, dR, d2R = _rotation_derivatives(x, dim)
    moved = src @ R.T + x[:dim]
    idx = grid.lookup(moved)
    hit = idx >= 0
    n_miss = int((~hit).sum())
    p = src[hit]
    dvec = moved[hit] - grid.means[idx[hit]]
    C = grid.inverse_covariances[idx[hit]]
    Cd = np.einsum("nij,nj->ni", C, dvec)
    q = np.einsum("ni,ni->n", dvec, Cd)
    e = np.exp(-0.5 * q)
    score = -float(e.sum()) - outlier_floor * n_miss
    if derivatives == 0:
        return score
    nrot = len(dR)
    J = np.zeros((len(p), dim, npar))
    J[:, :, :dim] = np.eye(dim)
    for k in range(nrot):
        J[:, :, dim + k] = p @ dR[k].T
    CdJ = np.einsum("ni,nia->na", Cd, J)
    grad = e @ CdJ
    if derivatives == 1:
        return score, grad
    eCJ = np.einsum("nij,njb->nib", e[:, None, None] * C, J)
    hess = np.einsum("nia,nib->ab", J, eCJ) - (e[:, None] * CdJ).T @ CdJ
    # second-derivative term: sum_n e_n Cd_n . (d2R p_n) = <d2R, (e Cd)^T p>
    W = (e[:, None] * Cd).T @ p
    for a in range(nrot):
        for b in range(nrot):
            hess[dim + a, dim + b] += float(np.sum(d2R[a][b] * W))
    return score, grad, hess


def ndt_score(grid: NdtGrid, source, pose, outlier_floor: float = 0.05) -> float:
    """Objective at ``pose``; lower is better and lies in ``[-n, 0]``."""
    return ndt_objective(grid, source, transform_to_params(pose), outlier_floor, derivatives=0)


def _positive_definite_solve(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    n = len(g)
    scale = max(float(np.abs(np.diag(H)).max()), 1e-12)
    mu = 0.0
    for _ in range(60):
        try:
            L = np.linalg.cholesky(H + mu * np.eye(n))
            y = np.linalg.solve(L, -g)
            return np.linalg.solve(L.T, y)
        except np.linalg.LinAlgError:
            mu = max(2.0 * mu, 1e-6 * scale)
    return -g / scale


def _newton(grid: NdtGrid, src: np.ndarray, params: NdtParams):
    dim = grid.dim
    npar = 3 if dim == 2 else 6
    x = np.zeros(npar)
    floor = params.outlier_floor
    score, g, H = ndt_objective(grid, src, x, floor)
    history = [score]
    converged = False
    it = 0
    for it in range(1, params.max_iterations + 1):
        step = _positive_definite_solve(H, g)
        tn = np.linalg.norm(step[:dim])
        if tn > 0.5 * grid.cell_size:
            step *= 0.5 * grid.cell_size / tn
        rn = np.linalg.norm(step[dim:])
        if rn > params.max_rotation_step:
            step *= params.max_rotation_step / rn
        t = 1.0
        accepted = False
        for _ in range(12):
            trial = ndt_objective(grid, src, x + t * step, floor, derivatives=0)
            if trial <= score + 1e-4 * t * float(g @ step):
                accepted = True
                break
            t *= 0.5
        taken = t * step if accepted else np.zeros(npar)
        x = x + taken
        if accepted:
            score, g, H = ndt_objective(grid, src, x, floor)
        history.append(score)
        if not accepted or np.linalg.norm(taken) < params.step_epsilon:
            converged = True
            break
    overlap = bool((grid.lookup((src @ params_to_matrix(x, dim)[0].T) + x[:dim]) >= 0).any())
    return x, score, converged and overlap, it, history


def _register(source, target, init, params: NdtParams, dim: int) -> RegistrationResult:
    src = np.asarray(source, dtype=float)
    tgt = np.asarray(target, dtype=float)
    if src.ndim != 2 or tgt.ndim != 2 or len(src) == 0 or len(tgt) == 0:
        raise GridError("registration needs non-empty source and target")
    shift = RigidTransform2 if dim == 2 else (lambda a, t: RigidTransform3.from_translation(t))
    T = init
    iters = 0
    history = []
    for level in range(params.levels - 1, -1, -1):
        cell = params.cell_size * 2**level
        moved = T.apply(src)
        # work about the source centroid so rotation and translation decouple
        c = moved.mean(axis=0)
        try:
            grid = build_ndt_grid(tgt - c, cell, params.min_points_per_cell, params.min_sigma_ratio * cell)
        except GridError:
            if level == 0:
                raise
            continue
        x, score, converged, n, hist = _newton(grid, moved - c, params)
        iters += n
        history.extend(hist)
        T = shift(0.0, c) @ params_to_transform(x, dim) @ shift(0.0, -c) @ T
    return RegistrationResult(T, score, converged, iters, history)


def register_2d(source, target, init: RigidTransform2 | None = None, params: NdtParams = NdtParams()) -> RegistrationResult:
    """Pose mapping the 2D ``source`` points onto ``target``."""
    return _register(source, target, init or RigidTransform2.identity(), params, 2)


def register_3d(source, target, init: RigidTransform3 | None = None, params: NdtParams = NdtParams(cell_size=3.0)) -> RegistrationResult:
    """Pose mapping the 3D ``source`` cloud onto ``target``."""
    return _register(source, target, init or RigidTransform3.identity(), params, 3)
