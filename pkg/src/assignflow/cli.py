"""Command-line front end: generate, train, coreset, predict, label, evolve, eval.

Scene directories hold ``image.pgm``, ``labels.pgm`` (raw label indices),
``labels.ppm`` (color coded) and ``scene.json``.  Every command writes exactly one
``manifest.json`` into its output directory.

Exit codes: 0 ok, 2 bad arguments, 3 I/O failure, 4 numerical failure.
"""
import argparse
import logging
import os
import shutil
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from assignflow import __version__, datagen, io, pipeline
from assignflow.graph import uniform_weights
from assignflow.integrate import ConvergenceError
from assignflow.learn import Backtracking, TrainConfig

log = logging.getLogger("assignflow")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


KEY_CODES = {"features": io.KEY_IMAGE_PATCHES, "assignments": io.KEY_ASSIGNMENT_PATCHES}


class UsageError(Exception):
    pass


class DataError(Exception):
    """Missing or inconsistent input files."""


# ---------------------------------------------------------------- helpers

def version_string():
    src = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=src,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _parse_value(text, current):
    if isinstance(current, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    return text


def build_config(preset, overrides):
    """Preset values, then ``overrides`` (strings) keyed by TrainConfig field names.

    ``backtracking.factor`` and ``backtracking.max_halvings`` address the nested
    backtracking settings.
    """
    if preset not in pipeline.PRESETS:
        raise UsageError(f"unknown preset {preset!r}; choose from {sorted(pipeline.PRESETS)}")
    base = pipeline.PRESETS[preset]().to_dict()
    names = {f.name for f in fields(TrainConfig)}
    bt = dict(base.pop("backtracking"))
    for key, raw in overrides.items():
        try:
            if key.startswith("backtracking."):
                sub = key.split(".", 1)[1]
                if sub not in bt:
                    raise UsageError(f"unknown config key {key!r}")
                bt[sub] = _parse_value(raw, bt[sub])
            elif key in names:
                base[key] = _parse_value(raw, base[key])
            else:
                raise UsageError(f"unknown config key {key!r}")
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {raw!r}") from exc
    try:
        return TrainConfig(**base, backtracking=Backtracking(**bt))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def config_from_args(args, kind):
    overrides = {}
    if getattr(args, "config", None):
        overrides.update(io.parse_config(Path(args.config).read_text()))
    preset = overrides.pop("preset", None)
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if getattr(args, "integrator", None):
        overrides["integrator"] = args.integrator
    preset = getattr(args, "preset", None) or preset or pipeline.preset_for(kind)
    return build_config(preset, overrides), preset


def write_manifest(out, command, args, config=None, seed=None, inputs=(), outputs=(),
                   started=None):
    manifest = {
        "command": command,
        "argv": [str(a) for a in args],
        "config": config,
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "timing": {"seconds": None if started is None else time.time() - started},
        "version": version_string(),
    }
    io.write_json(Path(out) / "manifest.json", manifest)


def save_scene(directory, scene):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    io.write_pgm(d / "image.pgm", io.gray_to_u8(scene.image))
    io.write_pgm(d / "labels.pgm", scene.ground_truth)
    io.write_ppm(d / "labels.ppm", io.colorize(scene.ground_truth, scene.class_count))
    io.write_json(d / "scene.json", {"kind": scene.kind, "seed": scene.seed,
                                     "class_count": scene.class_count,
                                     "generator_version": datagen.GENERATOR_VERSION})


def load_scene(directory, need_truth=True):
    d = Path(directory)
    meta_path = d / "scene.json"
    if not meta_path.exists():
        raise DataError(f"{d}: not a scene directory (scene.json missing)")
    meta = io.read_json(meta_path)
    image = io.u8_to_gray(io.read_pnm(d / "image.pgm"))
    gt = None
    if (d / "labels.pgm").exists():
        gt = io.read_pnm(d / "labels.pgm").astype(np.int64)
    elif need_truth:
        raise DataError(f"{d}: ground truth labels.pgm missing")
    return image, gt, meta


def scene_problem(scene_dir, cfg, prototypes=None, need_truth=True):
    image, gt, meta = load_scene(scene_dir, need_truth)
    binary = pipeline.is_binary(meta["kind"], meta["class_count"])
    if not binary and prototypes is None:
        raise UsageError(f"{scene_dir}: scenes of kind {meta['kind']!r} need prototypes")
    D = pipeline.scene_distances(image, binary, prototypes)
    h, w = image.shape
    return pipeline.Problem(D, h, w, meta["class_count"], cfg, image), gt, meta


def write_labeling(d, labels, n_classes, stem="labeling"):
    io.write_pgm(Path(d) / f"{stem}.pgm", labels)
    io.write_ppm(Path(d) / f"{stem}.ppm", io.colorize(labels, n_classes))


def _map(fn, items, jobs):
    if jobs and jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def _scene_name(scene_dir):
    return Path(scene_dir).resolve().name


def _load_prototypes_from(path):
    p = Path(path) / "prototypes.afp"
    return io.read_prototypes(p) if p.exists() else None


# ---------------------------------------------------------------- commands

def cmd_generate(args):
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if args.kind == "letter":
        glyphs = args.glyph or list(datagen.BLOCKY)
        for gl in glyphs:
            try:
                scene = datagen.gen_letter(gl, args.size or 16)
            except ValueError as exc:
                raise UsageError(str(exc)) from exc
            d = out / f"letter-{gl}{'-lc' if gl.islower() else ''}"
            save_scene(d, scene)
            written.append(d)
    elif args.kind == "voronoi":
        size = args.size or 64
        for s in range(args.seed, args.seed + args.count):
            scene = datagen.gen_voronoi_scene(s, size, size, cells=args.cells)
            d = out / f"voronoi-{s:04d}"
            save_scene(d, scene)
            written.append(d)
    else:
        scene, _ = datagen.gen_pattern_pair(args.kind, args.size or 32)
        d = out / args.kind
        save_scene(d, scene)
        written.append(d)
    write_manifest(out, "generate", sys.argv[1:], config={
        "kind": args.kind, "count": args.count, "size": args.size, "cells": args.cells,
        "glyph": args.glyph}, seed=args.seed, outputs=written, started=started)
    return written


def _train_one(job):
    scene_dir, cfg, protos, out = job
    prob, gt, meta = scene_problem(scene_dir, cfg, protos)
    res = pipeline.train_problem(prob, gt)
    d = Path(out) / _scene_name(scene_dir)
    d.mkdir(parents=True, exist_ok=True)
    io.write_weights(d / "omega.afw", res.omega_star, prob.height, prob.width, cfg.window)
    io.write_matrix_csv(d / "omega.csv", res.omega_star)
    io.write_history_csv(d / "history.csv", res.objective_history)
    labels = res.final_labeling.labels.reshape(prob.height, prob.width)
    write_labeling(d, labels, prob.n_classes)
    kl = pipeline.adaptivity_map(res.omega_star, prob.height, prob.width)
    io.write_matrix_csv(d / "adaptivity.csv", kl)
    scale = kl.max() if kl.max() > 0 else 1.0
    io.write_pgm(d / "adaptivity.pgm", io.gray_to_u8(kl / scale))
    report = pipeline.accuracy_report(labels, gt, prob.n_classes)
    report.update(iterations=res.iterations, status=res.status,
                  objective=res.objective_history[-1])
    io.write_json(d / "report.json", report)
    return {"scene": str(scene_dir), "out": str(d), **report}


def cmd_train(args):
    started = time.time()
    scenes = [Path(s) for s in args.scenes]
    metas = [load_scene(s)[2] for s in scenes]
    cfg, preset = config_from_args(args, metas[0]["kind"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    protos = None
    if not all(pipeline.is_binary(m["kind"], m["class_count"]) for m in metas):
        if args.prototypes:
            protos = io.read_prototypes(args.prototypes)
        else:
            loaded = [load_scene(s) for s in scenes]
            protos = pipeline.fit_prototypes([im for im, _, _ in loaded],
                                             [gt for _, gt, _ in loaded],
                                             metas[0]["class_count"],
                                             k=args.prototypes_per_class, seed=args.seed)
        io.write_prototypes(out / "prototypes.afp", protos)
    results = _map(_train_one, [(s, cfg, protos, out) for s in scenes], args.jobs)
    io.write_json(out / "summary.json", {"preset": preset, "scenes": results})
    write_manifest(out, "train", sys.argv[1:], config={"preset": preset, **cfg.to_dict()},
                   seed=args.seed, inputs=scenes, outputs=[r["out"] for r in results],
                   started=started)
    return results


def _read_manifest(d):
    p = Path(d) / "manifest.json"
    if not p.exists():
        raise DataError(f"{d}: manifest.json missing")
    return io.read_json(p)


def cmd_coreset(args):
    started = time.time()
    train_dir = Path(args.trained)
    man = _read_manifest(train_dir)
    conf = dict(man["config"])
    preset = conf.pop("preset")
    cfg = TrainConfig(**conf)
    protos = _load_prototypes_from(train_dir)
    problems, omegas, truths = [], [], []
    for scene_dir in man["inputs"]:
        prob, gt, _ = scene_problem(scene_dir, cfg, protos)
        omega, h, w, window = io.read_weights(train_dir / _scene_name(scene_dir) / "omega.afw")
        if (h, w, window) != (prob.height, prob.width, cfg.window):
            raise DataError(f"{scene_dir}: weights do not match the scene")
        problems.append(prob)
        omegas.append(omega)
        truths.append(gt)
    if args.key_kind == "features" and protos is not None:
        raise UsageError("feature keys are only defined for binary scenes")
    core = pipeline.coreset_from_training(problems, omegas, truths, args.k_per_class,
                                          args.key_patch, seed=args.seed,
                                          key_kind=args.key_kind)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_coreset(out / "coreset.afc", core, cfg.window, KEY_CODES[args.key_kind])
    io.write_matrix_csv(out / "coreset_weights.csv", core.weights)
    io.write_matrix_csv(out / "coreset_keys.csv", core.keys)
    if protos is not None:
        shutil.copyfile(train_dir / "prototypes.afp", out / "prototypes.afp")
    write_manifest(out, "coreset", sys.argv[1:], config={"preset": preset, **cfg.to_dict(),
                   "k_per_class": args.k_per_class, "key_patch": args.key_patch,
                   "key_kind": args.key_kind},
                   seed=args.seed, inputs=[train_dir], outputs=[out / "coreset.afc"],
                   started=started)
    return core


def cmd_predict(args):
    started = time.time()
    cdir = Path(args.coreset)
    core, window, code = io.read_coreset(cdir / "coreset.afc")
    key_kind = {v: k for k, v in KEY_CODES.items()}.get(code)
    if key_kind is None:
        raise io.FormatError(f"unknown key kind code {code}")
    if args.key_patch is not None and args.key_patch != core.key_patch:
        raise UsageError(f"requested key patch {args.key_patch} but the coreset was built "
                         f"with {core.key_patch}")
    cfg = build_config("curvilinear", {"window": str(window)})
    protos = _load_prototypes_from(cdir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for scene_dir in args.scenes:
        prob, _, _ = scene_problem(scene_dir, cfg, protos, need_truth=False)
        omega = pipeline.predict_problem(prob, core, key_kind)
        d = out / _scene_name(scene_dir)
        d.mkdir(parents=True, exist_ok=True)
        io.write_weights(d / "omega.afw", omega, prob.height, prob.width, window)
        written.append(d)
    if protos is not None:
        shutil.copyfile(cdir / "prototypes.afp", out / "prototypes.afp")
    write_manifest(out, "predict", sys.argv[1:], config={"window": window,
                   "key_patch": core.key_patch}, inputs=[cdir, *args.scenes],
                   outputs=written, started=started)
    return written


def _resolve_prototypes(args, weights_dir=None):
    if args.prototypes:
        return io.read_prototypes(args.prototypes)
    return _load_prototypes_from(weights_dir) if weights_dir else None


def cmd_label(args):
    started = time.time()
    uniform = args.weights == "uniform"
    wdir = None if uniform else Path(args.weights)
    protos = _resolve_prototypes(args, wdir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = {}
    cfg_used = None
    for scene_dir in args.scenes:
        _, _, meta = load_scene(scene_dir, need_truth=False)
        cfg, preset = config_from_args(args, meta["kind"])
        omega = None
        if not uniform:
            omega, _, _, window = io.read_weights(wdir / _scene_name(scene_dir) / "omega.afw")
            if window != cfg.window:
                cfg = build_config(preset, {**_cfg_strings(cfg), "window": str(window)})
        prob, gt, _ = scene_problem(scene_dir, cfg, protos, need_truth=False)
        labels = pipeline.label_problem(prob, omega).labels.reshape(prob.height, prob.width)
        d = out / _scene_name(scene_dir)
        d.mkdir(parents=True, exist_ok=True)
        write_labeling(d, labels, prob.n_classes)
        if gt is not None:
            rep = pipeline.accuracy_report(labels, gt, prob.n_classes)
            rep["weights"] = "uniform" if uniform else str(wdir)
            io.write_json(d / "report.json", rep)
            reports[_scene_name(scene_dir)] = rep
        cfg_used = {"preset": preset, **cfg.to_dict()}
    io.write_json(out / "report.json", reports)
    write_manifest(out, "label", sys.argv[1:], config=cfg_used, inputs=args.scenes,
                   outputs=[out / "report.json"], started=started)
    return reports


def _cfg_strings(cfg):
    d = cfg.to_dict()
    d.pop("backtracking")
    return {k: str(v) for k, v in d.items()}


def cmd_evolve(args):
    started = time.time()
    _, _, meta = load_scene(args.scene, need_truth=False)
    cfg, preset = config_from_args(args, meta["kind"])
    if args.weights == "uniform":
        omega = None
    else:
        omega, _, _, window = io.read_weights(args.weights)
        if window != cfg.window:
            cfg = build_config(preset, {**_cfg_strings(cfg), "window": str(window)})
    protos = io.read_prototypes(args.prototypes) if args.prototypes else None
    prob, gt, _ = scene_problem(args.scene, cfg, protos, need_truth=False)
    if omega is None:
        omega = uniform_weights(prob.graph)
    times = sorted(set(args.frames or []) | {args.t_end})
    if min(times) < 0:
        raise UsageError("frame times must be nonnegative")
    frames = pipeline.evolve(prob, omega, times, flow=args.flow, h=args.h)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for t, lab in zip(times, frames):
        stem = f"frame_{args.flow}_t{t:08.3f}"
        write_labeling(out, lab, prob.n_classes, stem)
        entry = {"t": t, "file": f"{stem}.pgm"}
        if gt is not None:
            entry["accuracy"] = pipeline.accuracy_report(lab, gt, prob.n_classes)["overall"]
        summary.append(entry)
    io.write_json(out / "frames.json", summary)
    write_manifest(out, "evolve", sys.argv[1:], config={"preset": preset, **cfg.to_dict(),
                   "flow": args.flow, "h": args.h or cfg.h}, inputs=[args.scene, args.weights],
                   outputs=[out / e["file"] for e in summary], started=started)
    return summary


def cmd_eval(args):
    started = time.time()
    reports = {}
    for scene_dir in args.scenes:
        _, gt, meta = load_scene(scene_dir)
        path = Path(args.labels) / _scene_name(scene_dir) / "labeling.pgm"
        labels = io.read_pnm(path).astype(np.int64)
        reports[_scene_name(scene_dir)] = pipeline.accuracy_report(labels, gt,
                                                                   meta["class_count"])
    vals = [r["overall"] for r in reports.values()]
    summary = {"scenes": reports, "mean_overall": float(np.mean(vals)) if vals else None}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "eval.json", summary)
    write_manifest(out, "eval", sys.argv[1:], inputs=[args.labels, *args.scenes],
                   outputs=[out / "eval.json"], started=started)
    for name, r in reports.items():
        print(f"{name}: {r['overall']:.4f}")
    return summary


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="assignflow",
                                description="Learning assignment flow weights for labeling.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--jobs", type=int, default=1, help="parallel scenes")
        if config:
            sp.add_argument("--config", help="key=value file with TrainConfig fields")
            sp.add_argument("--preset", choices=sorted(pipeline.PRESETS))
            sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                            help="override one config field")
            sp.add_argument("--integrator", choices=["euler", "heun"])

    g = sub.add_parser("generate", help="write synthetic scenes")
    common(g, config=False)
    g.add_argument("kind", choices=["letter", "voronoi", "completion", "transport"])
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--size", type=int)
    g.add_argument("--cells", type=int, default=16)
    g.add_argument("--glyph", action="append", help="letter glyph (repeatable)")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="learn weights on scenes with ground truth")
    common(t)
    t.add_argument("scenes", nargs="+")
    t.add_argument("--prototypes", help="AFP1 file; fitted on the scenes if omitted")
    t.add_argument("--prototypes-per-class", type=int, default=pipeline.PROTOTYPES_PER_CLASS)
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("coreset", help="compress training outputs into a coreset")
    common(c, config=False)
    c.add_argument("trained", help="output directory of `train`")
    c.add_argument("--k-per-class", type=int, default=pipeline.CORESET_PER_CLASS)
    c.add_argument("--key-patch", type=int, default=pipeline.KEY_PATCH)
    c.add_argument("--key-kind", choices=pipeline.KEY_KINDS, default="assignments")
    c.set_defaults(func=cmd_coreset)

    pr = sub.add_parser("predict", help="predict weights for novel scenes")
    common(pr, config=False)
    pr.add_argument("scenes", nargs="+")
    pr.add_argument("--coreset", required=True, help="output directory of `coreset`")
    pr.add_argument("--key-patch", type=int)
    pr.set_defaults(func=cmd_predict)

    lb = sub.add_parser("label", help="label scenes with given or uniform weights")
    common(lb)
    lb.add_argument("scenes", nargs="+")
    lb.add_argument("--weights", required=True,
                    help="'uniform' or an output directory of `train`/`predict`")
    lb.add_argument("--prototypes")
    lb.set_defaults(func=cmd_label)

    ev = sub.add_parser("evolve", help="write rounded labelings along a flow")
    common(ev)
    ev.add_argument("scene")
    ev.add_argument("--weights", required=True, help="AFW1 file or 'uniform'")
    ev.add_argument("--t-end", type=float, required=True)
    ev.add_argument("--frames", type=lambda s: [float(x) for x in s.split(",") if x],
                    help="comma-separated frame times")
    ev.add_argument("--flow", choices=["linear", "nonlinear"], default="linear")
    ev.add_argument("--h", type=float, help="step size (default: config h)")
    ev.add_argument("--prototypes")
    ev.set_defaults(func=cmd_evolve)

    e = sub.add_parser("eval", help="accuracy of labelings against ground truth")
    common(e, config=False)
    e.add_argument("scenes", nargs="+")
    e.add_argument("--labels", required=True, help="output directory of `label`")
    e.set_defaults(func=cmd_eval)
    return p


def _setup_logging():
    level = os.environ.get("ASSIGNFLOW_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        with np.errstate(over="raise", invalid="raise", divide="ignore", under="ignore"):
            args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, io.FormatError, DataError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FloatingPointError, ConvergenceError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
