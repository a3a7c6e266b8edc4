"""semslam command line: generate, run, train, gradcheck, eval-map.

Every flag can also be given in a JSON config file (``--config``), either at
the top level or inside a section named after the subcommand; flags given on
the command line win. Log verbosity comes from ``SEMSLAM_LOG`` (e.g. DEBUG).
"""
import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from .artifacts import load_checkpoint, save_checkpoint, save_snapshot
from .dataset import GenerateParams, generate_dataset, load_dataset, save_dataset
from .episode import Episode, PipelineConfig, synthetic_episode
from .errors import ContractError, GenerationError, TrainingError
from .harness import (
    CSV_COLUMNS,
    CSV_VERSION,
    RUN_MODES,
    ConvLstmUpdater,
    HeuristicUpdater,
    build_episodes,
    eval_map_methods,
    make_split,
    run_episode,
    window_means,
)
from .map_updater import GATES, PARTS, ConvLstmParams
from .scene_sim import TIERS, ImuModel, MotionParams
from .trainer import TrainConfig, grad_check, train

log = logging.getLogger("semslam")

# flag defaults per subcommand; None means "required"
DEFAULTS = {
    "generate": {
        "seed": 0, "scenes": 20, "trajectories": 3, "steps": 30, "levels": 8,
        "height": 33, "width": 33, "classes": 10, "objects": 150, "min_size": 1, "max_size": 1,
        "sigma_pos": 0.4, "sigma_theta": 0.05, "bias_pos": 0.15, "bias_theta": 0.01,
        "imu_seed": 0, "max_turn": 1, "max_stride": 1, "move_prob": 0.85, "out": None,
    },
    "run": {
        "dataset": None, "checkpoint": None, "mode": "visual-inertial", "alpha": 0.3,
        "tier": "real", "h": 11, "beta": 0.02, "gamma1": None, "gamma2": None,
        "split": "all", "test_scenes": None, "split_seed": 0, "seed": 0, "workers": 1,
        "eps_smooth": 1e-4, "snapshots": False, "out": None,
    },
    "train": {
        "dataset": None, "split": "cross-scene", "test_scenes": None, "split_seed": 0,
        "tier": "real", "h": 11, "beta": 0.02, "epochs": 50, "learning_rate": 1e-2,
        "optimizer": "adam", "beta1": 0.9, "beta2": 0.999, "adam_eps": 1e-8, "steps": 30,
        "batch": 1, "eps_smooth": 1e-4, "seed": 0, "kernel_size": 3, "init_seed": 0,
        "teacher_forcing": True, "divergence_factor": 1e3, "workers": 1, "out": None,
    },
    "gradcheck": {
        "checkpoint": None, "seed": 0, "fd_step": 1e-5, "coords": 100, "precision": "double",
        "tolerance": 1e-4, "out": "",
    },
    "eval-map": {
        "dataset": None, "checkpoint": None, "tier": "all", "h": 11, "beta": 0.02,
        "split": "all", "test_scenes": None, "split_seed": 0, "seed": 0, "workers": 1,
        "eps_smooth": 1e-4, "out": None,
    },
}


def _flag(p, name, **kw):
    p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, **kw)


def build_parser():
    ap = argparse.ArgumentParser(prog="semslam", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a scene/trajectory dataset")
    for name in ("seed", "scenes", "trajectories", "steps", "levels", "height", "width", "classes",
                 "objects", "min_size", "max_size", "imu_seed", "max_turn", "max_stride"):
        _flag(g, name, type=int)
    for name in ("sigma_pos", "sigma_theta", "bias_pos", "bias_theta", "move_prob"):
        _flag(g, name, type=float)
    _flag(g, "out", help="dataset JSON path")

    r = sub.add_parser("run", help="localize and map every selected episode")
    _flag(r, "dataset")
    _flag(r, "checkpoint")
    _flag(r, "mode", choices=RUN_MODES)
    _flag(r, "alpha", type=float, help="leak factor for heuristic mode")
    _flag(r, "gamma1", type=float)
    _flag(r, "gamma2", type=float)
    r.add_argument("--snapshots", dest="snapshots", action="store_const", const=True, default=None,
                   help="also write each episode's final map snapshot")
    _common_eval(r)

    t = sub.add_parser("train", help="train the ConvLSTM map updater")
    _flag(t, "dataset")
    _split_flags(t)
    _flag(t, "tier", choices=TIERS)
    _flag(t, "h", type=int)
    _flag(t, "beta", type=float)
    for name in ("epochs", "steps", "batch", "seed", "kernel_size", "init_seed", "workers"):
        _flag(t, name, type=int)
    for name in ("learning_rate", "beta1", "beta2", "adam_eps", "eps_smooth", "divergence_factor"):
        _flag(t, name, type=float)
    _flag(t, "optimizer", choices=("adam", "sgd"))
    t.add_argument("--teacher-forcing", dest="teacher_forcing", action="store_const", const=True,
                   default=None)
    t.add_argument("--no-teacher-forcing", dest="teacher_forcing", action="store_const",
                   const=False)
    _flag(t, "out", help="output directory")

    c = sub.add_parser("gradcheck", help="finite-difference check of the BPTT gradients")
    _flag(c, "checkpoint")
    _flag(c, "seed", type=int)
    _flag(c, "fd_step", type=float)
    _flag(c, "coords", type=int)
    _flag(c, "tolerance", type=float)
    _flag(c, "precision", choices=("double", "extended"))
    _flag(c, "out", help="report JSON path (default: stdout only)")

    e = sub.add_parser("eval-map", help="map construction with ground-truth poses")
    _flag(e, "dataset")
    _flag(e, "checkpoint")
    _common_eval(e, tiers=TIERS + ("all",))

    for p in (g, r, t, c, e):
        p.add_argument("--config", help="JSON config file")
    return ap


def _split_flags(p):
    _flag(p, "split", choices=("all", "intra-scene", "cross-scene"))
    _flag(p, "test_scenes", type=int)
    _flag(p, "split_seed", type=int)


def _common_eval(p, tiers=TIERS):
    _split_flags(p)
    _flag(p, "tier", choices=tiers)
    _flag(p, "h", type=int)
    _flag(p, "beta", type=float)
    _flag(p, "seed", type=int, help="observation-noise seed")
    _flag(p, "workers", type=int)
    _flag(p, "eps_smooth", type=float)
    _flag(p, "out", help="output directory")


def resolve(command, ns):
    """Defaults, then config file (top level, then section), then flags."""
    opts = dict(DEFAULTS[command])
    if ns.config:
        with open(ns.config) as f:
            doc = json.load(f)
        for src in (doc, doc.get(command, {})):
            for k, v in src.items():
                key = k.replace("-", "_")
                if key in opts:
                    opts[key] = v
    for k in opts:
        v = getattr(ns, k, None)
        if v is not None:
            opts[k] = v
    missing = [k for k in ("out", "dataset") if k in opts and opts[k] is None]
    if command == "run" and opts["mode"] in ("visual", "visual-inertial") and not opts["checkpoint"]:
        missing.append("checkpoint")
    if command == "eval-map" and opts["checkpoint"] is None:
        missing.append("checkpoint")
    if missing:
        raise ContractError("missing required option(s): "
                            + ", ".join("--" + m.replace("_", "-") for m in missing))
    return opts


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=True)
        f.write("\n")


def _keys(ds, o, part="test"):
    split = make_split(ds, o["split"], o["test_scenes"], o["split_seed"])
    return getattr(split, part)


def cmd_generate(o):
    params = GenerateParams(
        scenes=o["scenes"], trajectories=o["trajectories"], steps=o["steps"], levels=o["levels"],
        H=o["height"], W=o["width"], L=o["classes"], n_objects=o["objects"],
        size_range=(o["min_size"], o["max_size"]),
        imu=ImuModel(o["sigma_pos"], o["sigma_theta"], o["bias_pos"], o["bias_theta"],
                     o["imu_seed"]),
        motion=MotionParams(o["max_turn"], o["max_stride"], o["move_prob"]),
    )
    ds = generate_dataset(o["seed"], params)
    save_dataset(ds, o["out"])
    log.info("wrote %d trajectories over %d scenes to %s", len(ds), len(ds.scenes), o["out"])
    return 0


def cmd_run(o):
    ds = load_dataset(o["dataset"])
    cfg = PipelineConfig(levels=ds.levels, h=o["h"], beta=o["beta"], tier=o["tier"],
                         gamma1=o["gamma1"], gamma2=o["gamma2"])
    mode = o["mode"]
    if o["checkpoint"] is not None:
        updater = ConvLstmUpdater(load_checkpoint(o["checkpoint"]))
    else:
        updater = HeuristicUpdater(o["alpha"])
    if mode == "heuristic":
        updater, mode = HeuristicUpdater(o["alpha"]), "visual-inertial"
    fusion = cfg.fusion(ds.imu)
    keys = _keys(ds, o)
    episodes = build_episodes(ds, keys, cfg, o["seed"], o["workers"])
    out = Path(o["out"])
    (out / "episodes").mkdir(parents=True, exist_ok=True)
    summaries = []
    for ep in episodes:
        res = run_episode(ep, updater, mode, fusion, o["eps_smooth"])
        stem = f"scene{ep.key[0]:03d}_traj{ep.key[1]:02d}"
        with open(out / "episodes" / f"{stem}.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for rec in res.records:
                w.writerow(rec.row())
        if o["snapshots"]:
            last = res.records[-1]
            save_snapshot(res.final_map, out / "episodes" / f"{stem}.map", len(res.records),
                          last.est, last.source)
        s = res.summary()
        s["csv"] = f"episodes/{stem}.csv"
        summaries.append(s)
    n = len(summaries)
    summary = {
        "version": CSV_VERSION,
        "csv_columns": list(CSV_COLUMNS),
        "mode": o["mode"],
        "updater": updater.name,
        "tier": o["tier"],
        "gamma1": fusion.gamma1,
        "gamma2": fusion.gamma2,
        "episodes": summaries,
        "ape": sum(s["ape"] for s in summaries) / n,
        "ade": sum(s["ade"] for s in summaries) / n,
        "final_map_mse": sum(s["final_map_mse"] for s in summaries) / n,
        "inertial_fraction": sum(s["inertial_fraction"] for s in summaries) / n,
    }
    _write_json(out / "summary.json", summary)
    log.info("APE %.4f ADE %.3f over %d episodes", summary["ape"], summary["ade"], n)
    return 0


def train_config(o):
    return TrainConfig(
        epochs=o["epochs"], learning_rate=o["learning_rate"], optimizer=o["optimizer"],
        beta1=o["beta1"], beta2=o["beta2"], adam_eps=o["adam_eps"], steps=o["steps"],
        batch=o["batch"], eps_smooth=o["eps_smooth"], seed=o["seed"],
        teacher_forcing=o["teacher_forcing"], kernel_size=o["kernel_size"],
        divergence_factor=o["divergence_factor"],
    )


def cmd_train(o):
    ds = load_dataset(o["dataset"])
    cfg = train_config(o)
    pipe = PipelineConfig(levels=ds.levels, h=o["h"], beta=o["beta"], tier=o["tier"])
    split = make_split(ds, o["split"], o["test_scenes"], o["split_seed"])
    train_eps = build_episodes(ds, split.train, pipe, o["seed"], o["workers"])
    test_eps = build_episodes(ds, split.test, pipe, o["seed"], o["workers"]) \
        if o["split"] != "all" else []
    for eps in (train_eps, test_eps):
        for i, ep in enumerate(eps):
            if ep.T > cfg.steps:
                eps[i] = _truncate(ep, cfg.steps)
    L = ds.scenes[0].scene.L
    params0 = ConvLstmParams.initialize(L, cfg.kernel_size, o["init_seed"])
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params0, out / "epoch_000.ckpt", 0, None, cfg)
    fusion = pipe.fusion(ds.imu)
    try:
        res = train(train_eps, params0, cfg, test=test_eps or None, fusion=fusion)
    except TrainingError as exc:
        _write_json(out / "diverged.json", {"error": str(exc), "diagnostics": exc.diagnostics})
        raise
    final = res.losses[-1] if res.losses else res.initial_loss
    save_checkpoint(res.params, out / "checkpoint.ckpt", cfg.epochs, final, cfg)
    _write_json(out / "history.json", {
        "version": 1, "split": split.mode, "train_scenes": split.scenes("train"),
        "test_scenes": split.scenes("test") if test_eps else [],
        "initial_loss": res.initial_loss, "train_loss": res.losses, "heldout_loss": res.heldout,
    })
    for epoch, loss in enumerate(res.losses, 1):
        held = f" heldout {res.heldout[epoch - 1]:.6f}" if res.heldout else ""
        print(f"epoch {epoch} loss {loss:.6f}{held}")
    return 0


def _truncate(ep, steps):
    return Episode(ep.key, ep.truth, ep.poses[:steps], ep.imu[:steps - 1], ep.stacks[:steps],
                   ep.imu_model)


def gradcheck_report(o):
    if o["checkpoint"] is not None:
        params = load_checkpoint(o["checkpoint"])
    else:
        params = ConvLstmParams.initialize(3, 3, o["seed"])
    L = params.channels
    blocks = [f"{g}.{p}" for g in GATES for p in PARTS]
    report = {"version": 1, "seed": o["seed"], "fd_step": o["fd_step"], "precision": o["precision"],
              "tolerance": o["tolerance"], "episodes": {}}
    ok = True
    for T in (1, 5):
        ep = synthetic_episode(o["seed"], L=L, T=T)
        rep = grad_check(params, ep, o["fd_step"], coords=o["coords"], seed=o["seed"],
                         precision=o["precision"])
        passed = bool(rep.passed(o["tolerance"]))
        ok &= passed
        report["episodes"][f"T{T}"] = {
            "max_error": float(rep.max_error), "passed": passed,
            "blocks": {b: {"max_rel_error": float(rep.errors[b]), "coords": rep.checked[b]} for b in blocks},
        }
    report["passed"] = ok
    return report


def cmd_gradcheck(o):
    report = gradcheck_report(o)
    text = json.dumps(report, indent=1, sort_keys=True)
    print(text)
    if o["out"]:
        with open(o["out"], "w") as f:
            f.write(text + "\n")
    return 0 if report["passed"] else 1


def cmd_eval_map(o):
    ds = load_dataset(o["dataset"])
    params = load_checkpoint(o["checkpoint"])
    tiers = TIERS if o["tier"] == "all" else (o["tier"],)
    keys = _keys(ds, o)
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    result = {"version": 1, "episodes": [list(k) for k in keys], "tiers": {}}
    for tier in tiers:
        cfg = PipelineConfig(levels=ds.levels, h=o["h"], beta=o["beta"], tier=tier)
        eps = build_episodes(ds, keys, cfg, o["seed"], o["workers"])
        table = eval_map_methods(eps, params, eps=o["eps_smooth"])
        early, late = window_means(table["ours"]["series"])
        result["tiers"][tier] = {"methods": table, "ours_early_mean": early, "ours_late_mean": late}
        with open(out / f"series_{tier}.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            names = list(table)
            w.writerow(["step"] + names)
            for s in range(len(table["ours"]["series"])):
                w.writerow([s + 1] + [repr(table[n]["series"][s]) for n in names])
        for name, row in table.items():
            print(f"{tier:10s} {name:14s} {row['mean']:.6f} +- {row['std']:.6f}")
    _write_json(out / "map_mse.json", result)
    return 0


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "train": cmd_train,
            "gradcheck": cmd_gradcheck, "eval-map": cmd_eval_map}


def main(argv=None):
    logging.basicConfig(level=os.environ.get("SEMSLAM_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    ns = build_parser().parse_args(argv)
    try:
        opts = resolve(ns.command, ns)
        return COMMANDS[ns.command](opts)
    except (ContractError, GenerationError, TrainingError, OSError) as exc:
        print(f"semslam {ns.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
