"""Pattern formation: train weights on a fixture, then run the flow past T.

    python3 scripts/run_patterns.py completion --extra 5 --out results/completion.json
"""
import argparse
import json
from dataclasses import asdict, dataclass

import numpy as np

from assignflow import datagen, pipeline
from assignflow.predict import hamming_distance_matrix


@dataclass
class PatternConfig:
    kind: str = "completion"
    size: int = 32
    extra: float = 5.0        # time run past T
    frames: int = 6
    nonlinear: bool = True


def run(cfg):
    scene, target = datagen.gen_pattern_pair(cfg.kind, cfg.size)
    tc = pipeline.PRESETS[cfg.kind]()
    prob = pipeline.Problem(hamming_distance_matrix(scene.image.astype(int)), cfg.size,
                            cfg.size, 2, tc)
    res = pipeline.train_problem(prob, target)
    times = np.linspace(0, tc.T + cfg.extra, cfg.frames).tolist() + [tc.T]
    rows = []
    flows = ["linear"] + (["nonlinear"] if cfg.nonlinear else [])
    frames = {f: pipeline.evolve(prob, res.omega_star, times, flow=f) for f in flows}
    for k, t in enumerate(times):
        row = {"t": t}
        for f in flows:
            row[f] = float(np.mean(frames[f][k] == target))
        if cfg.nonlinear:
            row["agreement"] = float(np.mean(frames["linear"][k] == frames["nonlinear"][k]))
        rows.append(row)
        print(row)
    return {"iterations": res.iterations, "objective": res.objective_history, "frames": rows}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("kind", choices=["completion", "transport"])
    ap.add_argument("--extra", type=float, default=PatternConfig.extra)
    ap.add_argument("--frames", type=int, default=PatternConfig.frames)
    ap.add_argument("--linear-only", action="store_true")
    ap.add_argument("--out")
    a = ap.parse_args()
    cfg = PatternConfig(a.kind, extra=a.extra, frames=a.frames, nonlinear=not a.linear_only)
    out = run(cfg)
    if a.out:
        with open(a.out, "w") as f:
            json.dump({"config": asdict(cfg), **out}, f, indent=2)


if __name__ == "__main__":
    main()
