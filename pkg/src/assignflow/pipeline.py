"""Scene-level building blocks shared by the command line, scripts and tests."""
from dataclasses import dataclass

import numpy as np

from assignflow.flow import assignment_from_tangent, make_context, similarity
from assignflow.graph import build_grid_graph, uniform_weights
from assignflow.integrate import TimeGrid, geometric_euler
from assignflow.learn import TrainConfig, label_with_weights, one_hot, solve_flow, train
from assignflow.manifold import barycenter, round_assignment
from assignflow.predict import (build_coreset, distance_from_prototypes,
                                extract_filter_features, extract_letter_features,
                                hamming_distance_matrix,
                                learn_prototypes, local_assignment_patches, predict_weights)

PROTOTYPES_PER_CLASS = 100
KEY_PATCH = 5
CORESET_PER_CLASS = 200

PRESETS = {
    "letters": TrainConfig.letters,
    "curvilinear": TrainConfig.curvilinear,
    "completion": lambda **kw: TrainConfig(**{**dict(
        rho=0.5, window=7, h=0.1, T=5.0, h_prime=0.5, max_outer=100,
        rel_change_tol=1e-3), **kw}),
    "transport": lambda **kw: TrainConfig(**{**dict(
        rho=1.0, window=11, h=0.1, T=8.5, h_prime=4.0, max_outer=100,
        rel_change_tol=1e-4), **kw}),
}


def preset_for(kind):
    if kind.startswith("letter"):
        return "letters"
    if kind in ("completion", "transport"):
        return kind
    return "curvilinear"


def is_binary(scene_kind, class_count):
    return class_count == 2 and not scene_kind.startswith("voronoi")


def fit_prototypes(images, ground_truths, n_classes, k=PROTOTYPES_PER_CLASS, seed=0):
    feats = np.concatenate([extract_filter_features(im) for im in images])
    labels = np.concatenate([np.asarray(gt).ravel() for gt in ground_truths])
    return learn_prototypes(feats, labels, n_classes, k, seed=seed)


def scene_distances(image, binary, prototypes=None):
    """Hamming distances for binary scenes, prototype distances otherwise."""
    if binary:
        return hamming_distance_matrix(np.rint(image).astype(np.int64))
    if prototypes is None:
        raise ValueError("non-binary scenes need prototypes")
    return distance_from_prototypes(extract_filter_features(image), prototypes)


def accuracy_report(labels, ground_truth, n_classes):
    pred = np.asarray(labels).ravel()
    gt = np.asarray(ground_truth).ravel()
    if pred.shape != gt.shape:
        raise ValueError(f"labeling size {pred.size} != ground truth size {gt.size}")
    per_class, counts = {}, {}
    for c in range(n_classes):
        sel = gt == c
        counts[str(c)] = int(sel.sum())
        per_class[str(c)] = float((pred[sel] == c).mean()) if sel.any() else None
    correct = int((pred == gt).sum())
    return {"overall": correct / gt.size, "per_class": per_class,
            "pixels": {"total": int(gt.size), "correct": correct, "per_class": counts}}


def adaptivity_map(Omega, height, width):
    """Per-pixel ``KL(omega_i || uniform)``."""
    Omega = np.asarray(Omega, dtype=float)
    N = Omega.shape[1]
    kl = np.sum(Omega * np.log(Omega * N), axis=1)
    return np.maximum(kl, 0.0).reshape(height, width)


@dataclass
class Problem:
    D: np.ndarray
    height: int
    width: int
    n_classes: int
    cfg: TrainConfig
    image: np.ndarray = None

    @property
    def graph(self):
        return build_grid_graph(self.height, self.width, self.cfg.window)

    def context(self, g=None):
        return make_context(self.D, g or self.graph, self.cfg.rho)


def train_problem(prob, ground_truth, callback=None):
    return train(prob.D, one_hot(ground_truth, prob.n_classes), prob.graph, prob.cfg,
                 callback=callback)


def label_problem(prob, Omega=None):
    g = prob.graph
    Omega = uniform_weights(g) if Omega is None else Omega
    return label_with_weights(Omega, prob.context(g), prob.cfg)


KEY_KINDS = ("assignments", "features")


def coreset_keys(prob, key_patch, key_kind="assignments"):
    """One-hot patches of locally rounded labels, or raw image patches (binary scenes)."""
    if key_kind == "assignments":
        return local_assignment_patches(prob.D, prob.height, prob.width, key_patch)
    if key_kind == "features":
        if prob.image is None:
            raise ValueError("feature keys need the scene image")
        return extract_letter_features(prob.image, key_patch)
    raise ValueError(f"unknown key kind {key_kind!r}")


def coreset_from_training(problems, omegas, ground_truths, k_per_class=CORESET_PER_CLASS,
                          key_patch=KEY_PATCH, seed=0, key_kind="assignments"):
    keys = np.concatenate([coreset_keys(p, key_patch, key_kind) for p in problems])
    labels = np.concatenate([np.asarray(gt).ravel() for gt in ground_truths])
    n_classes = problems[0].n_classes
    return build_coreset(keys, np.concatenate(omegas), labels, n_classes, k_per_class,
                         key_patch, seed=seed)


def predict_problem(prob, coreset, key_kind="assignments"):
    if prob.cfg.window ** 2 != coreset.weights.shape[1]:
        raise ValueError(f"coreset patches have {coreset.weights.shape[1]} entries, "
                         f"window {prob.cfg.window} needs {prob.cfg.window ** 2}")
    return predict_weights(coreset_keys(prob, coreset.key_patch, key_kind), coreset,
                           prob.graph)


def evolve(prob, Omega, times, flow="linear", h=None):
    """Rounded labelings at ``times`` for the modified LAF or the nonlinear flow.

    Both flows use uniform steps of ``h`` (default ``cfg.h``); each requested time
    is rounded to the nearest grid point.
    """
    h = prob.cfg.h if h is None else h
    g = prob.graph
    idx = [int(round(t / h)) for t in times]
    if min(idx, default=0) < 0:
        raise ValueError("frame times must be nonnegative")
    last = max(idx, default=0)
    if flow == "linear":
        states = solve_flow(Omega, prob.context(g), last * h, h, keep=True) if last else \
            [np.zeros(prob.D.shape)]
        frames = [assignment_from_tangent(states[i]) for i in idx]
    elif flow == "nonlinear":
        W0 = barycenter(*prob.D.shape)
        if last:
            S = lambda W, t: similarity(W, Omega, prob.D, prob.cfg.rho, g)
            states = geometric_euler(S, W0, TimeGrid.uniform(last * h, last))
        else:
            states = [W0]
        frames = [states[i] for i in idx]
    else:
        raise ValueError(f"unknown flow {flow!r}")
    return [round_assignment(W).labels.reshape(prob.height, prob.width) for W in frames]
