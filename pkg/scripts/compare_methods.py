"""Pipeline vs. ICP baseline on synthetic scenes: pose error, supplement
degree and boundary accuracy per seed.

    python scripts/compare_methods.py --seeds 0 1 2 --out results.json
"""

import argparse
import dataclasses
import json
import math
import time
from pathlib import Path

import numpy as np

from hybridfusion.cli import baseline_icp
from hybridfusion.config import load_scene_config
from hybridfusion.errors import PipelineFailure
from hybridfusion.evaluation import evaluate
from hybridfusion.pipeline import run_pipeline
from hybridfusion.synth import SceneConfig, synth_scene

ROOT = Path(__file__).resolve().parents[1]


def score(scene, T, resolution):
    L_reg = T.apply(scene.L)
    rep = evaluate(np.concatenate([scene.G, L_reg]), scene.G, L_reg, resolution=resolution)
    return {
        "t_err": T.distance_to(scene.truth),
        "r_err_deg": math.degrees(T.angle_to(scene.truth)),
        "supplement_degree": rep.supplement_degree,
        "accuracy": rep.accuracy,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "scene.cfg"))
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(10)))
    ap.add_argument("--resolution", type=float, default=0.5)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out")
    args = ap.parse_args()

    base = load_scene_config(args.config) if args.config else SceneConfig()
    rows = []
    print(f"{'seed':>4} {'method':>8} {'t err':>8} {'r err':>8} {'S_pt %':>8} {'acc m':>8} {'sec':>6}")
    for seed in args.seeds:
        scene = synth_scene(dataclasses.replace(base, seed=seed))
        for method in ("pipeline", "icp"):
            t = time.perf_counter()
            if method == "pipeline":
                try:
                    T = run_pipeline(scene.G, scene.L, scene.gnss_origin, workers=args.workers).transform
                except PipelineFailure as exc:
                    print(f"{seed:>4} {method:>8} failed: {exc}")
                    rows.append({"seed": seed, "method": method, "failed": str(exc)})
                    continue
            else:
                T, _ = baseline_icp(scene.G, scene.L, scene.gnss_origin)
            row = {"seed": seed, "method": method, **score(scene, T, args.resolution), "seconds": time.perf_counter() - t}
            rows.append(row)
            print(f"{seed:>4} {method:>8} {row['t_err']:8.3f} {row['r_err_deg']:8.3f} "
                  f"{100 * row['supplement_degree']:8.2f} {row['accuracy']:8.3f} {row['seconds']:6.1f}")
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=2) + "\n")


if __name__ == "__main__":
    main()
