"""Voronoi line-structure experiment: train on some seeds, predict weights on others.

    python3 scripts/run_voronoi.py --train 0 1 2 3 --test 10 11 12 13 14
"""
import argparse
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from assignflow import datagen, pipeline
from assignflow.learn import TrainConfig


@dataclass
class VoronoiConfig:
    train_seeds: list = field(default_factory=lambda: [0, 1, 2, 3])
    test_seeds: list = field(default_factory=lambda: [10, 11, 12, 13, 14])
    prototypes_per_class: int = pipeline.PROTOTYPES_PER_CLASS
    coreset_per_class: int = pipeline.CORESET_PER_CLASS
    key_patch: int = pipeline.KEY_PATCH
    max_outer: int = 100


def _acc(labeling, scene):
    return float(np.mean(labeling.labels == scene.ground_truth.ravel()))


def run(cfg):
    tc = TrainConfig.curvilinear(max_outer=cfg.max_outer)
    train = [datagen.gen_voronoi_scene(s) for s in cfg.train_seeds]
    protos = pipeline.fit_prototypes([s.image for s in train], [s.ground_truth for s in train],
                                     3, cfg.prototypes_per_class)
    probs, omegas, out = [], [], {"train": [], "test": []}
    for s in train:
        prob = pipeline.Problem(pipeline.scene_distances(s.image, False, protos), *s.shape, 3,
                                tc)
        t0 = time.time()
        res = pipeline.train_problem(prob, s.ground_truth)
        probs.append(prob)
        omegas.append(res.omega_star)
        row = {"seed": s.seed, "trained": _acc(res.final_labeling, s),
               "uniform": _acc(pipeline.label_problem(prob), s),
               "iterations": res.iterations, "seconds": time.time() - t0}
        out["train"].append(row)
        print("train", row)
    core = pipeline.coreset_from_training(probs, omegas, [s.ground_truth for s in train],
                                          cfg.coreset_per_class, cfg.key_patch)
    for seed in cfg.test_seeds:
        s = datagen.gen_voronoi_scene(seed)
        prob = pipeline.Problem(pipeline.scene_distances(s.image, False, protos), *s.shape, 3,
                                tc)
        row = {"seed": seed,
               "predicted": _acc(pipeline.label_problem(prob, pipeline.predict_problem(
                   prob, core)), s),
               "uniform": _acc(pipeline.label_problem(prob), s)}
        out["test"].append(row)
        print("test", row)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--train", type=int, nargs="+", default=VoronoiConfig().train_seeds)
    ap.add_argument("--test", type=int, nargs="+", default=VoronoiConfig().test_seeds)
    ap.add_argument("--max-outer", type=int, default=VoronoiConfig.max_outer)
    ap.add_argument("--out")
    a = ap.parse_args()
    cfg = VoronoiConfig(train_seeds=a.train, test_seeds=a.test, max_outer=a.max_outer)
    out = run(cfg)
    if a.out:
        with open(a.out, "w") as f:
            json.dump({"config": asdict(cfg), **out}, f, indent=2)


if __name__ == "__main__":
    main()
