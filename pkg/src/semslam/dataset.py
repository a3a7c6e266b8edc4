"""Scene/trajectory datasets: generation and the versioned JSON document."""
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ContractError
from .poses import DiscretePose
from .scene_sim import (
    ImuModel,
    MotionParams,
    Scene,
    SceneObject,
    generate_scene,
    generate_trajectory,
    imu_read,
)

DATASET_VERSION = 1


@dataclass(frozen=True)
class GenerateParams:
    scenes: int = 10
    trajectories: int = 3
    steps: int = 30
    levels: int = 8
    H: int = 33
    W: int = 33
    L: int = 10
    n_objects: int = 150
    size_range: tuple = (1, 1)
    imu: ImuModel = field(default_factory=ImuModel)
    motion: MotionParams = field(default_factory=MotionParams)

    def __post_init__(self):
        if self.scenes < 1 or self.trajectories < 1 or self.steps < 1:
            raise ContractError("scenes, trajectories and steps must all be positive")
        if self.levels < 1:
            raise ContractError("need at least one orientation level")


@dataclass
class TrajectoryRecord:
    poses: list  # DiscretePose
    true_deltas: list
    imu_deltas: list


@dataclass
class SceneRecord:
    scene: Scene
    trajectories: list  # TrajectoryRecord


@dataclass
class Dataset:
    seed: int
    levels: int
    imu: ImuModel
    scenes: list  # SceneRecord

    def keys(self):
        return [(s, j) for s, rec in enumerate(self.scenes) for j in range(len(rec.trajectories))]

    def __len__(self):
        return sum(len(rec.trajectories) for rec in self.scenes)


def stream_seed(*key):
    """Independent 32-bit seed for one (dataset seed, scene, trajectory, ...) stream."""
    return int(np.random.SeedSequence(list(key)).generate_state(1)[0])


def generate_dataset(seed, params=GenerateParams()):
    """Deterministic scenes and random-walk trajectories with IMU readings."""
    scenes = []
    for s in range(params.scenes):
        scene = generate_scene(stream_seed(seed, s), params.H, params.W, params.L,
                               params.n_objects, params.size_range)
        trajs = []
        for j in range(params.trajectories):
            tr = generate_trajectory(scene, stream_seed(seed, s, j), params.steps, params.levels,
                                     params.motion)
            imu = replace(params.imu, seed=stream_seed(params.imu.seed, seed, s, j))
            readings = [imu_read(d, imu, t) for t, d in enumerate(tr.true_deltas)]
            trajs.append(TrajectoryRecord(tr.poses, tr.true_deltas, readings))
        scenes.append(SceneRecord(scene, trajs))
    return Dataset(seed, params.levels, params.imu, scenes)


def dataset_to_json(ds):
    doc = {
        "version": DATASET_VERSION,
        "seed": ds.seed,
        "levels": ds.levels,
        "imu": asdict(ds.imu),
        "scenes": [
            {
                "H": rec.scene.H,
                "W": rec.scene.W,
                "L": rec.scene.L,
                "walls": sorted([list(c) for c in rec.scene.walls]),
                "objects": [{"class": o.cls, "cells": [list(c) for c in o.cells]}
                            for o in rec.scene.objects],
                "trajectories": [
                    {
                        "poses": [list(p) for p in tr.poses],
                        "true_deltas": [list(d) for d in tr.true_deltas],
                        "imu_deltas": [list(d) for d in tr.imu_deltas],
                    }
                    for tr in rec.trajectories
                ],
            }
            for rec in ds.scenes
        ],
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def dataset_from_json(text):
    try:
        doc = json.loads(text)
        if doc.get("version") != DATASET_VERSION:
            raise ContractError(f"unsupported dataset version {doc.get('version')!r}")
        scenes = []
        for sd in doc["scenes"]:
            objects = [SceneObject(int(o["class"]), tuple(tuple(c) for c in o["cells"]))
                       for o in sd["objects"]]
            scene = Scene(sd["H"], sd["W"], sd["L"], objects,
                          frozenset(tuple(c) for c in sd["walls"]))
            trajs = [
                TrajectoryRecord(
                    [DiscretePose(*p) for p in td["poses"]],
                    [tuple(d) for d in td["true_deltas"]],
                    [tuple(d) for d in td["imu_deltas"]],
                )
                for td in sd["trajectories"]
            ]
            for tr in trajs:
                if len(tr.true_deltas) != len(tr.poses) - 1 or len(tr.imu_deltas) != len(tr.true_deltas):
                    raise ContractError("trajectory deltas do not match its poses")
            scenes.append(SceneRecord(scene, trajs))
        return Dataset(doc["seed"], doc["levels"], ImuModel(**doc["imu"]), scenes)
    except (KeyError, TypeError) as exc:
        raise ContractError(f"malformed dataset: {exc}") from exc


def save_dataset(ds, path):
    with open(path, "w") as f:
        f.write(dataset_to_json(ds))


def load_dataset(path):
    with open(path) as f:
        return dataset_from_json(f.read())
