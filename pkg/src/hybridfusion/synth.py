"""Synthetic cross-view scenes: an over-view cloud and a street-view cloud of
the same box buildings with complementary visible surfaces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .transforms import RigidTransform3


@dataclass(frozen=True)
class Building:
    cx: float
    cy: float
    width: float  # along x
    depth: float  # along y
    height: float

    def facades(self):
        """(center_xy, outward normal_xy, half-length, tangent_xy) for the four walls."""
        hw, hd = 0.5 * self.width, 0.5 * self.depth
        c = np.array([self.cx, self.cy])
        return [
            (c + [hw, 0.0], np.array([1.0, 0.0]), hd, np.array([0.0, 1.0])),
            (c - [hw, 0.0], np.array([-1.0, 0.0]), hd, np.array([0.0, 1.0])),
            (c + [0.0, hd], np.array([0.0, 1.0]), hw, np.array([1.0, 0.0])),
            (c - [0.0, hd], np.array([0.0, -1.0]), hw, np.array([1.0, 0.0])),
        ]

    def contains_xy(self, xy: np.ndarray) -> np.ndarray:
        return (np.abs(xy[:, 0] - self.cx) <= 0.5 * self.width) & (np.abs(xy[:, 1] - self.cy) <= 0.5 * self.depth)


DEFAULT_BUILDINGS = (
    Building(-17.0, 16.0, 14.0, 12.0, 15.0),
    Building(18.0, 17.0, 12.0, 16.0, 12.0),
    Building(-16.0, -18.0, 12.0, 14.0, 18.0),
    Building(17.0, -16.0, 16.0, 12.0, 10.0),
)

DEFAULT_PATH = ((-35.0, 0.0), (35.0, 0.0), (0.0, -35.0), (0.0, 35.0))


@dataclass(frozen=True)
class SceneConfig:
    buildings: tuple = DEFAULT_BUILDINGS
    # street-view vehicle path as segments (x0, y0) -> (x1, y1), consecutive pairs
    street_path: tuple = DEFAULT_PATH
    overview_density: float = 40.0
    overview_ground_density: float = 6.0
    overview_facade_fraction: float = 0.3
    overview_margin: float = 10.0
    street_density: float = 50.0
    street_ground_density: float = 25.0
    street_ground_halfwidth: float = 6.0
    street_view_range: float = 20.0
    street_max_height: float = 6.0
    noise_sigma: float = 0.03
    truth: tuple = (5.0, 3.0, 0.5, 15.0)  # x, y, z metres, yaw degrees
    gnss_sigma: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if not self.buildings:
            raise ConfigError("scene needs at least one building")
        for b in self.buildings:
            if min(b.width, b.depth, b.height) <= 0:
                raise ConfigError(f"building dimensions must be positive: {b}")
        for name in ("overview_density", "street_density"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if len(self.street_path) % 2:
            raise ConfigError("street_path needs an even number of points (segment endpoints)")

    @property
    def truth_transform(self) -> RigidTransform3:
        x, y, z, yaw = self.truth
        return RigidTransform3.from_euler(x, y, z, yaw=math.radians(yaw))


@dataclass
class Scene:
    G: np.ndarray
    L: np.ndarray
    truth: RigidTransform3
    gnss_origin: np.ndarray
    L_world: np.ndarray = field(repr=False, default=None)


def _rect(rng, origin, u, v, density):
    """Uniform samples on the parallelogram origin + s*u + t*v."""
    area = float(np.linalg.norm(np.cross(u, v)))
    n = int(round(area * density))
    st = rng.random((n, 2))
    return origin + st[:, :1] * u + st[:, 1:] * v


def _segments(path):
    pts = np.asarray(path, dtype=float)
    return [(pts[i], pts[i + 1]) for i in range(0, len(pts), 2)]


def _closest_on_path(p, segments):
    best, best_d = None, math.inf
    for a, b in segments:
        ab = b - a
        t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
        q = a + t * ab
        d = float(np.linalg.norm(p - q))
        if d < best_d:
            best, best_d = q, d
    return best, best_d


def _street_facing(facade, segments, view_range):
    center, normal, _, _ = facade
    q, d = _closest_on_path(center, segments)
    return d <= view_range and float(np.dot(q - center, normal)) > 1e-9


def _facade_points(rng, b: Building, facade, z0, z1, density):
    center, _, half, tangent = facade
    o = np.array([*(center - half * tangent), z0])
    u = np.array([*(2 * half * tangent), 0.0])
    v = np.array([0.0, 0.0, z1 - z0])
    return _rect(rng, o, u, v, density)


def _ground(rng, lo, hi, density, buildings, keep=None):
    o = np.array([lo[0], lo[1], 0.0])
    pts = _rect(rng, o, np.array([hi[0] - lo[0], 0, 0]), np.array([0, hi[1] - lo[1], 0]), density)
    inside = np.zeros(len(pts), dtype=bool)
    for b in buildings:
        inside |= b.contains_xy(pts[:, :2])
    mask = ~inside
    if keep is not None:
        mask &= keep(pts[:, :2])
    return pts[mask]


def overview_cloud(cfg: SceneConfig, rng) -> np.ndarray:
    parts = []
    for b in cfg.buildings:
        o = np.array([b.cx - 0.5 * b.width, b.cy - 0.5 * b.depth, b.height])
        parts.append(_rect(rng, o, np.array([b.width, 0, 0]), np.array([0, b.depth, 0]), cfg.overview_density))
        z0 = b.height * (1.0 - cfg.overview_facade_fraction)
        for f in b.facades():
            parts.append(_facade_points(rng, b, f, z0, b.height, cfg.overview_density))
    if cfg.overview_ground_density > 0:
        xy = np.array([[b.cx, b.cy] for b in cfg.buildings])
        ext = np.array([[0.5 * b.width, 0.5 * b.depth] for b in cfg.buildings])
        lo = (xy - ext).min(axis=0) - cfg.overview_margin
        hi = (xy + ext).max(axis=0) + cfg.overview_margin
        parts.append(_ground(rng, lo, hi, cfg.overview_ground_density, cfg.buildings))
    return np.concatenate(parts, axis=0)


def streetview_cloud(cfg: SceneConfig, rng) -> np.ndarray:
    segments = _segments(cfg.street_path)
    parts = []
    for b in cfg.buildings:
        for f in b.facades():
            if _street_facing(f, segments, cfg.street_view_range):
                parts.append(_facade_points(rng, b, f, 0.0, min(b.height, cfg.street_max_height), cfg.street_density))
    path = np.asarray(cfg.street_path, dtype=float)
    lo = path.min(axis=0) - cfg.street_ground_halfwidth
    hi = path.max(axis=0) + cfg.street_ground_halfwidth

    def near_path(xy):
        d = np.full(len(xy), np.inf)
        for a, b in segments:
            ab = b - a
            t = np.clip(((xy - a) @ ab) / (ab @ ab), 0.0, 1.0)
            d = np.minimum(d, np.linalg.norm(xy - (a + t[:, None] * ab), axis=1))
        return d <= cfg.street_ground_halfwidth

    parts.append(_ground(rng, lo, hi, cfg.street_ground_density, cfg.buildings, keep=near_path))
    return np.concatenate(parts, axis=0)


def synth_scene(cfg: SceneConfig = SceneConfig()) -> Scene:
    """Sample both clouds; ``L`` is returned in the street-view sensor frame,
    i.e. ``truth.apply(L)`` lies on the buildings in the ``G`` frame."""
    rng = np.random.default_rng(cfg.seed)
    G = overview_cloud(cfg, rng)
    G = G + rng.normal(0.0, cfg.noise_sigma, G.shape)
    L_world = streetview_cloud(cfg, rng)
    L_world = L_world + rng.normal(0.0, cfg.noise_sigma, L_world.shape)
    T = cfg.truth_transform
    L = T.inverse().apply(L_world)
    gnss = T.translation + rng.normal(0.0, cfg.gnss_sigma, 3)
    return Scene(G, L, T, gnss, L_world)
