"""INI-style configuration for scenes and registration runs.

Sections map onto the parameter dataclasses; every key must name a field of
the section's dataclass, so typos fail loudly.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, HybridFusionError
from .pipeline import PipelineParams
from .synth import Building, SceneConfig

# section name -> PipelineParams attribute holding that dataclass
_PIPELINE_SECTIONS = {
    "selection": "selection",
    "boundary": "boundary",
    "ndt2d": "ndt2d",
    "ndt3d": "ndt3d",
    "final_ndt": "final_ndt",
    "clustering": "clustering",
}


@dataclass
class RunConfig:
    visual: Path | None = None
    lidar: Path | None = None
    gnss_origin: tuple | None = None
    out_dir: Path | None = None
    workers: int = 1
    params: PipelineParams = field(default_factory=PipelineParams)


def _convert(value: str, like, where: str):
    try:
        if isinstance(like, bool):
            v = value.strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(like, int):
            return int(value)
        if isinstance(like, float):
            out = float(value)
            if not math.isfinite(out):
                raise ValueError(value)
            return out
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {value!r} as {type(like).__name__}") from None
    return value


def _apply(obj, items, section: str, skip=()):
    fields = {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj) if f.name not in skip}
    updates = {}
    for key, value in items:
        if key not in fields:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        updates[key] = _convert(value, fields[key], f"[{section}] {key}")
    try:
        return dataclasses.replace(obj, **updates)
    except HybridFusionError as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def _read(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    return cp


def _floats(text: str, n: int | None, where: str) -> tuple:
    try:
        vals = tuple(float(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{where}: expected numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise ConfigError(f"{where}: expected {n} numbers, got {len(vals)}")
    return vals


def parse_run_config(text: str) -> RunConfig:
    cp = _read(text)
    params = PipelineParams()
    run = RunConfig()
    nested = {}
    for section in cp.sections():
        items = list(cp.items(section))
        if section == "run":
            for key, value in items:
                if key in ("visual", "lidar", "out_dir"):
                    setattr(run, key, Path(value))
                elif key == "gnss_origin":
                    run.gnss_origin = _floats(value, 3, "[run] gnss_origin")
                elif key == "workers":
                    run.workers = _convert(value, 1, "[run] workers")
                else:
                    raise ConfigError(f"[run] unknown key {key!r}")
        elif section == "pipeline":
            params = _apply(params, items, section, skip=tuple(_PIPELINE_SECTIONS.values()))
        elif section in _PIPELINE_SECTIONS:
            attr = _PIPELINE_SECTIONS[section]
            nested[attr] = _apply(getattr(PipelineParams(), attr), items, section)
        else:
            raise ConfigError(f"unknown section [{section}]")
    try:
        run.params = dataclasses.replace(params, **nested)
    except HybridFusionError as exc:
        raise ConfigError(str(exc)) from None
    return run


def parse_scene_config(text: str) -> SceneConfig:
    cp = _read(text)
    scene = {}
    buildings = []
    path = []
    for section in cp.sections():
        items = dict(cp.items(section))
        if section == "scene":
            base = SceneConfig()
            for key, value in items.items():
                if key == "truth":
                    scene["truth"] = _floats(value, 4, "[scene] truth")
                elif key in ("buildings", "street_path") or not hasattr(base, key):
                    raise ConfigError(f"[scene] unknown key {key!r}")
                else:
                    scene[key] = _convert(value, getattr(base, key), f"[scene] {key}")
        elif section.startswith("building"):
            names = [f.name for f in dataclasses.fields(Building)]
            unknown = set(items) - set(names)
            if unknown:
                raise ConfigError(f"[{section}] unknown key {sorted(unknown)[0]!r}")
            missing = [n for n in names if n not in items]
            if missing:
                raise ConfigError(f"[{section}] missing {missing[0]!r}")
            buildings.append(Building(*(_convert(items[n], 0.0, f"[{section}] {n}") for n in names)))
        elif section == "street":
            for key, value in items.items():
                if key != "segment" and not key.startswith("segment"):
                    raise ConfigError(f"[street] unknown key {key!r}")
                x0, y0, x1, y1 = _floats(value, 4, f"[street] {key}")
                path += [(x0, y0), (x1, y1)]
        else:
            raise ConfigError(f"unknown section [{section}]")
    if buildings:
        scene["buildings"] = tuple(buildings)
    if path:
        scene["street_path"] = tuple(path)
    try:
        return SceneConfig(**scene)
    except HybridFusionError as exc:
        raise ConfigError(str(exc)) from None


def load_run_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from None
    return parse_run_config(text)


def load_scene_config(path) -> SceneConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from None
    return parse_scene_config(text)
