import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=20, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYBRIDFUSION_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_transform(rng, t_scale=5.0, full=True):
    from hybridfusion.transforms import RigidTransform3

    if full:
        q = rng.normal(size=4)
        return RigidTransform3(q / np.linalg.norm(q), rng.normal(size=3) * t_scale)
    return RigidTransform3.from_euler(*(rng.normal(size=3) * t_scale), yaw=rng.uniform(-np.pi, np.pi))


def box_surface(rng, center, size, n, top=True, sides=True):
    """Points on the top and/or side faces of an axis-aligned box standing on z=0."""
    cx, cy = center
    w, d, h = size
    parts = []
    if top:
        m = n // 2 if sides else n
        parts.append(np.c_[cx + (rng.random(m) - 0.5) * w, cy + (rng.random(m) - 0.5) * d, np.full(m, h)])
    if sides:
        m = n - (n // 2 if top else 0)
        per = m // 4
        s = rng.random((4, per))
        z = rng.random((4, per)) * h
        parts += [
            np.c_[np.full(per, cx + w / 2), cy + (s[0] - 0.5) * d, z[0]],
            np.c_[np.full(per, cx - w / 2), cy + (s[1] - 0.5) * d, z[1]],
            np.c_[cx + (s[2] - 0.5) * w, np.full(per, cy + d / 2), z[2]],
            np.c_[cx + (s[3] - 0.5) * w, np.full(per, cy - d / 2), z[3]],
        ]
    return np.concatenate(parts)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
