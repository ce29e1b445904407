import math
from pathlib import Path

import pytest

from hybridfusion.config import load_run_config, parse_run_config, parse_scene_config
from hybridfusion.errors import ConfigError
from hybridfusion.pipeline import PipelineParams
from hybridfusion.synth import SceneConfig

RUN = """
[run]
visual = data/G.ply
lidar = data/L.ply
out_dir = out
gnss_origin = 1.5, -2, 0.25
workers = 2

[pipeline]
leaf = 0.25
seed = 7

[selection]
salient_min_points = 150
max_bearing_offset = 0.8

[ndt3d]
cell_size = 1.5
levels = 2

[clustering]
max_translation_gap = 1.0
"""


def test_parse_run_config():
    run = parse_run_config(RUN)
    assert run.visual == Path("data/G.ply") and run.out_dir == Path("out")
    assert run.gnss_origin == (1.5, -2.0, 0.25)
    assert run.workers == 2
    p = run.params
    assert p.leaf == 0.25 and p.seed == 7
    assert p.selection.salient_min_points == 150 and p.selection.max_bearing_offset == 0.8 and p.selection.ring_tolerance == 0.3
    assert p.ndt3d.cell_size == 1.5 and p.ndt3d.levels == 2
    assert p.ndt2d == PipelineParams().ndt2d
    assert p.clustering.max_translation_gap == 1.0 and p.clustering.max_rotation_gap == pytest.approx(math.radians(5))


def test_empty_run_config_is_default():
    assert parse_run_config("").params == PipelineParams()


@pytest.mark.parametrize(
    "text",
    [
        "[run]\nbogus = 1\n",
        "[pipeline]\nleaf = abc\n",
        "[pipeline]\nleaf = -1\n",
        "[pipeline]\nselection = 3\n",
        "[mystery]\na = 1\n",
        "[selection]\nlam = 1.5\n",
        "[run]\ngnss_origin = 1 2\n",
        "[pipeline]\nleaf = nan\n",
        "no section header\n",
    ],
)
def test_run_config_errors(text):
    with pytest.raises(ConfigError):
        parse_run_config(text)


def test_load_missing(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "none.cfg")


def test_parse_scene_config():
    cfg = parse_scene_config("""
[scene]
seed = 4
gnss_sigma = 3.0
truth = 1 2 0 30

[building_a]
cx = 0
cy = 0
width = 10
depth = 8
height = 12

[street]
segment1 = -20 -10 20 -10
""")
    assert cfg.seed == 4 and cfg.gnss_sigma == 3.0
    assert cfg.truth == (1.0, 2.0, 0.0, 30.0)
    assert len(cfg.buildings) == 1 and cfg.buildings[0].height == 12.0
    assert cfg.street_path == ((-20.0, -10.0), (20.0, -10.0))
    assert cfg.overview_density == SceneConfig().overview_density


@pytest.mark.parametrize(
    "text",
    [
        "[scene]\nbuildings = 3\n",
        "[scene]\ntruth = 1 2 3\n",
        "[building1]\ncx = 0\ncy = 0\nwidth = 1\ndepth = 1\n",
        "[building1]\ncx = 0\ncy = 0\nwidth = 1\ndepth = 1\nheight = 0\n",
        "[street]\nlane = 0 0 1 1\n",
        "[scene]\nstreet_density = 0\n",
    ],
)
def test_scene_config_errors(text):
    with pytest.raises(ConfigError):
        parse_scene_config(text)


def test_shipped_configs_parse():
    root = Path(__file__).resolve().parents[1] / "configs"
    for path in root.glob("*.cfg"):
        text = path.read_text()
        if "[run]" in text or "[pipeline]" in text:
            parse_run_config(text)
        else:
            parse_scene_config(text)
