"""Train weights on every glyph and compare with uniform weights.

    python3 scripts/run_letters.py --size 16 --out results/letters.json
"""
import argparse
import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from assignflow import datagen, pipeline
from assignflow.learn import TrainConfig
from assignflow.predict import hamming_distance_matrix


@dataclass
class LettersConfig:
    size: int = 16
    glyphs: tuple = tuple(datagen.GLYPHS)
    max_outer: int = 50


def run(cfg):
    rows = []
    for glyph in cfg.glyphs:
        scene = datagen.gen_letter(glyph, cfg.size)
        tc = TrainConfig.letters(max_outer=cfg.max_outer)
        prob = pipeline.Problem(hamming_distance_matrix(scene.image.astype(int)), cfg.size,
                                cfg.size, 2, tc)
        t0 = time.time()
        res = pipeline.train_problem(prob, scene.ground_truth)
        gt = scene.ground_truth.ravel()
        rows.append({
            "glyph": glyph,
            "trained": float(np.mean(res.final_labeling.labels == gt)),
            "uniform": float(np.mean(pipeline.label_problem(prob).labels == gt)),
            "iterations": res.iterations,
            "objective": [res.objective_history[0], res.objective_history[-1]],
            "seconds": time.time() - t0,
        })
        r = rows[-1]
        print(f"{glyph}: trained {r['trained']:.4f} uniform {r['uniform']:.4f} "
              f"({r['iterations']} iters, {r['seconds']:.1f}s)")
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=LettersConfig.size)
    ap.add_argument("--max-outer", type=int, default=LettersConfig.max_outer)
    ap.add_argument("--glyphs", default="".join(LettersConfig.glyphs))
    ap.add_argument("--out")
    a = ap.parse_args()
    cfg = LettersConfig(a.size, tuple(a.glyphs), a.max_outer)
    rows = run(cfg)
    if a.out:
        with open(a.out, "w") as f:
            json.dump({"config": asdict(cfg), "results": rows}, f, indent=2)


if __name__ == "__main__":
    main()
