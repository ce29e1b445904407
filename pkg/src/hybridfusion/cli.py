"""Command-line entry point: ``hybridfusion {synth,register,evaluate,baseline-icp}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cloud import voxel_downsample
from .config import RunConfig, load_run_config, load_scene_config
from .errors import ConfigError, HybridFusionError, ParameterError, ParseError, PipelineFailure, WriteError
from .evaluation import boundary_accuracy, evaluate
from .icp import icp_register
from .io import load_cloud, save_cloud
from .pipeline import run_pipeline
from .synth import SceneConfig, synth_scene
from .transforms import RigidTransform3

log = logging.getLogger("hybridfusion")

EXIT_OK, EXIT_PIPELINE, EXIT_IO = 0, 2, 3


def transform_dict(T: RigidTransform3) -> dict:
    w, x, y, z = (float(v) for v in T.rotation)
    return {"quaternion": {"w": w, "x": x, "y": y, "z": z}, "translation": [float(v) for v in T.translation]}


def transform_from_dict(d: dict) -> RigidTransform3:
    q = d["quaternion"]
    return RigidTransform3([q["w"], q["x"], q["y"], q["z"]], d["translation"])


def _write_json(path: Path, obj) -> None:
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _origin(text: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y,Z, got {text!r}") from None
    if len(vals) != 3 or not np.all(np.isfinite(vals)):
        raise argparse.ArgumentTypeError(f"expected three finite numbers X,Y,Z, got {text!r}")
    return vals


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise WriteError(f"cannot create {out}: {exc.strerror or exc}") from exc
    return out


def cmd_synth(args) -> int:
    cfg = load_scene_config(args.config) if args.config else SceneConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    scene = synth_scene(cfg)
    out = _out_dir(args.out_dir)
    save_cloud(scene.G, out / "G.ply")
    save_cloud(scene.L, out / "L.ply")
    _write_json(out / "truth.json", {
        "truth": transform_dict(scene.truth),
        "gnss_origin": [float(v) for v in scene.gnss_origin],
        "seed": cfg.seed,
    })
    print(f"wrote {len(scene.G)} visual and {len(scene.L)} lidar points to {out}")
    return EXIT_OK


def _run_config(args) -> RunConfig:
    run = load_run_config(args.config) if args.config else RunConfig()
    for key in ("visual", "lidar", "out_dir"):
        if getattr(args, key, None) is not None:
            setattr(run, key, Path(getattr(args, key)))
    if args.gnss_origin is not None:
        run.gnss_origin = args.gnss_origin
    if getattr(args, "workers", None) is not None:
        run.workers = args.workers
    if getattr(args, "seed", None) is not None:
        run.params = dataclasses.replace(run.params, seed=args.seed)
    for key in ("visual", "lidar", "out_dir", "gnss_origin"):
        if getattr(run, key) is None:
            raise ConfigError(f"missing {key.replace('_', '-')} (command line or [run] section)")
    if run.workers < 1:
        raise ConfigError("workers must be >= 1")
    return run


def _save_results(out: Path, G, L, T: RigidTransform3, transform_doc: dict, report: dict) -> None:
    L_reg = T.apply(L)
    save_cloud(np.concatenate([G, L_reg]), out / "fused.ply")
    save_cloud(L_reg, out / "L_registered.ply")
    _write_json(out / "transform.json", transform_doc)
    _write_json(out / "report.json", report)


def cmd_register(args) -> int:
    run = _run_config(args)
    G = load_cloud(run.visual)
    L = load_cloud(run.lidar)
    out = _out_dir(run.out_dir)
    try:
        result = run_pipeline(G, L, run.gnss_origin, run.params, workers=run.workers)
    except PipelineFailure as exc:
        _write_json(out / "report.json", {"status": "failed", "message": str(exc), "counts": exc.counts})
        print(f"pipeline failure: {exc}", file=sys.stderr)
        print(json.dumps(exc.counts, sort_keys=True), file=sys.stderr)
        return EXIT_PIPELINE
    doc = {
        "transform": transform_dict(result.transform),
        "fused_patch_estimate": transform_dict(result.fused_estimate),
        "patches": [
            {
                "lidar_patch_id": list(k.lidar_patch_id),
                "visual_patch_id": list(k.matched_visual_patch_id),
                "match_score": k.match_score,
                **transform_dict(k.transform),
            }
            for k in result.K
        ],
        "counts": result.report["counts"],
    }
    report = {"status": "ok", **result.report, "workers": run.workers, "params": dataclasses.asdict(run.params)}
    _save_results(out, G, L, result.transform, doc, report)
    T = result.transform
    print(f"registered {len(result.K)} patches; T = q{np.round(T.rotation, 6).tolist()} t{np.round(T.translation, 4).tolist()}")
    return EXIT_OK


def baseline_icp(G, L, gnss_origin, leaf: float = 0.3, max_iterations: int = 50, max_corr_dist: float = 5.0):
    """ICP of the GNSS-translated street-view cloud onto the over-view cloud."""
    coarse = RigidTransform3.from_translation(np.asarray(gnss_origin, dtype=float))
    src = coarse.apply(voxel_downsample(L, leaf))
    res = icp_register(src, voxel_downsample(G, leaf), max_iterations=max_iterations, max_corr_dist=max_corr_dist)
    return res.transform @ coarse, res


def cmd_baseline_icp(args) -> int:
    run = _run_config(args)
    G = load_cloud(run.visual)
    L = load_cloud(run.lidar)
    out = _out_dir(run.out_dir)
    T, res = baseline_icp(G, L, run.gnss_origin, run.params.leaf, args.max_iterations, args.max_corr_dist)
    doc = {"transform": transform_dict(T), "patches": [], "method": "icp"}
    report = {
        "status": "ok" if res.converged else "not_converged",
        "method": "icp",
        "iterations": res.iterations,
        "residuals": [float(r) for r in res.history],
    }
    _save_results(out, G, L, T, doc, report)
    print(f"icp {'converged' if res.converged else 'stopped'} after {res.iterations} iterations, residual {res.final_score:.4f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    O = load_cloud(args.result)
    G = load_cloud(args.reference)
    L_reg = load_cloud(args.registered_lidar) if args.registered_lidar else None
    rep = evaluate(O, G, L_reg, resolution=args.resolution)
    metrics = rep.to_dict()
    out = Path(args.out) if args.out else Path(args.result).with_name("metrics.json")
    _write_json(out, metrics)
    for k, v in metrics.items():
        print(f"{k:>20}: {v}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybridfusion", description="Cross-source point cloud registration and fusion.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic over-view / street-view scene")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_synth)

    def reg_args(p):
        p.add_argument("--visual")
        p.add_argument("--lidar")
        p.add_argument("--gnss-origin", type=_origin)
        p.add_argument("--config")
        p.add_argument("--out-dir")
        p.add_argument("--seed", type=int)

    r = sub.add_parser("register", help="run the patch-based registration")
    reg_args(r)
    r.add_argument("--workers", type=int)
    r.set_defaults(func=cmd_register)

    b = sub.add_parser("baseline-icp", help="point-to-point ICP baseline")
    reg_args(b)
    b.add_argument("--max-iterations", type=int, default=50)
    b.add_argument("--max-corr-dist", type=float, default=5.0)
    b.set_defaults(func=cmd_baseline_icp)

    e = sub.add_parser("evaluate", help="supplement degree and boundary accuracy")
    e.add_argument("--result", required=True, help="fused cloud")
    e.add_argument("--reference", required=True, help="over-view cloud")
    e.add_argument("--registered-lidar")
    e.add_argument("--resolution", type=float, default=0.5)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParseError, WriteError, ParameterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except HybridFusionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
