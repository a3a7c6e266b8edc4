import json

import numpy as np
import pytest

from semslam.artifacts import (
    checkpoint_bytes,
    load_checkpoint,
    load_manifest,
    load_snapshot,
    params_from_bytes,
    save_checkpoint,
    save_snapshot,
    snapshot_bytes,
    snapshot_from_bytes,
)
from semslam.dataset import (
    GenerateParams,
    dataset_from_json,
    dataset_to_json,
    generate_dataset,
    load_dataset,
    save_dataset,
)
from semslam.errors import ContractError
from semslam.map_updater import ConvLstmParams, SemanticMap
from semslam.poses import DiscretePose
from semslam.trainer import TrainConfig

SMALL = GenerateParams(scenes=2, trajectories=2, steps=6, H=15, W=15, L=3, n_objects=12)


def test_generated_counts():
    ds = generate_dataset(0, SMALL)
    assert len(ds) == 4 and ds.keys() == [(0, 0), (0, 1), (1, 0), (1, 1)]
    for rec in ds.scenes:
        for tr in rec.trajectories:
            assert len(tr.poses) == 6 and len(tr.imu_deltas) == 5


def test_paper_scale_counts():
    ds = generate_dataset(1, GenerateParams(scenes=30, trajectories=3, steps=2, H=11, W=11,
                                            L=2, n_objects=3))
    assert len(ds) == 90


def test_minimal_dataset():
    ds = generate_dataset(0, GenerateParams(scenes=1, trajectories=1, steps=1, H=9, W=9, L=2,
                                            n_objects=1))
    tr = ds.scenes[0].trajectories[0]
    assert len(tr.poses) == 1 and tr.true_deltas == [] and tr.imu_deltas == []


def test_same_seed_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_dataset(generate_dataset(5, SMALL), a)
    save_dataset(generate_dataset(5, SMALL), b)
    assert a.read_bytes() == b.read_bytes()
    save_dataset(generate_dataset(6, SMALL), b)
    assert a.read_bytes() != b.read_bytes()


def test_trajectories_get_independent_imu_noise():
    ds = generate_dataset(0, SMALL)
    a = ds.scenes[0].trajectories[0]
    b = ds.scenes[0].trajectories[1]
    noise_a = np.subtract(a.imu_deltas, a.true_deltas)
    noise_b = np.subtract(b.imu_deltas, b.true_deltas)
    assert not np.allclose(noise_a, noise_b)


def test_json_roundtrip(tmp_path):
    ds = generate_dataset(2, SMALL)
    path = tmp_path / "d.json"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert dataset_to_json(back) == path.read_text()
    assert back.imu == ds.imu and back.levels == ds.levels
    for r1, r2 in zip(ds.scenes, back.scenes):
        assert r1.scene.objects == r2.scene.objects and r1.scene.walls == r2.scene.walls
        for t1, t2 in zip(r1.trajectories, r2.trajectories):
            assert t1.poses == t2.poses and all(isinstance(p, DiscretePose) for p in t2.poses)
            assert [tuple(d) for d in t1.imu_deltas] == t2.imu_deltas


def test_json_schema_keys():
    doc = json.loads(dataset_to_json(generate_dataset(0, SMALL)))
    assert {"version", "imu", "scenes", "levels", "seed"} <= set(doc)
    scene = doc["scenes"][0]
    assert {"H", "W", "L", "walls", "objects", "trajectories"} <= set(scene)
    assert set(scene["trajectories"][0]) == {"poses", "true_deltas", "imu_deltas"}


def test_bad_dataset_documents():
    text = dataset_to_json(generate_dataset(0, SMALL))
    doc = json.loads(text)
    doc["version"] = 99
    with pytest.raises(ContractError):
        dataset_from_json(json.dumps(doc))
    doc = json.loads(text)
    doc["scenes"][0]["trajectories"][0]["imu_deltas"].pop()
    with pytest.raises(ContractError):
        dataset_from_json(json.dumps(doc))
    doc = json.loads(text)
    del doc["scenes"][0]["walls"]
    with pytest.raises(ContractError):
        dataset_from_json(json.dumps(doc))


def test_generate_params_contract():
    with pytest.raises(ContractError):
        GenerateParams(scenes=0)


def test_checkpoint_roundtrip(tmp_path):
    p = ConvLstmParams.initialize(4, 3, 9)
    path = tmp_path / "m.ckpt"
    save_checkpoint(p, path, 7, 1.25, TrainConfig(seed=3))
    q = load_checkpoint(path)
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), q.arrays()))
    man = load_manifest(path)
    assert man["epoch"] == 7 and man["loss"] == 1.25
    assert man["config_hash"] == TrainConfig(seed=3).digest()
    assert man["config"]["seed"] == 3
    assert checkpoint_bytes(q) == path.read_bytes()


def test_checkpoint_layout():
    p = ConvLstmParams.initialize(2, 3, 0)
    blob = checkpoint_bytes(p)
    assert blob[:4] == (1).to_bytes(4, "little") and blob[4:8] == b"SSCK"
    assert len(blob) == 16 + 8 * (2 * 4 * 2 * 2 * 9 + 8)
    with pytest.raises(ContractError):
        params_from_bytes(blob[:-8])
    with pytest.raises(ContractError):
        params_from_bytes(b"\x02\x00\x00\x00" + blob[4:])
    with pytest.raises(ContractError):
        params_from_bytes(blob[:5])


def test_snapshot_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    smap = SemanticMap(rng.random((3, 5, 6)), rng.standard_normal((3, 5, 6)))
    path = tmp_path / "s.map"
    save_snapshot(smap, path, 12, DiscretePose(1, 2, 3), "visual")
    back, meta = load_snapshot(path)
    assert np.array_equal(back.grid, smap.grid) and np.array_equal(back.cell, smap.cell)
    assert meta == {"version": 1, "step": 12, "pose": [1, 2, 3], "source": "visual"}
    blob = snapshot_bytes(smap)
    assert len(blob) == 20 + 8 * 2 * 90
    with pytest.raises(ContractError):
        snapshot_from_bytes(blob[:-1])
    with pytest.raises(ContractError):
        snapshot_from_bytes(b"\x00" * 20)
