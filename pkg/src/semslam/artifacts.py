"""Binary checkpoints and map snapshots, each with a JSON sidecar.

Binary layouts are little-endian. Every file leads with a uint32 version,
followed by a 4-byte magic tag and the shape header, then raw float64 data.
"""
import json
import struct

import numpy as np

from .errors import ContractError
from .map_updater import ConvLstmParams, SemanticMap

CHECKPOINT_VERSION = 1
SNAPSHOT_VERSION = 1
_CKPT = struct.Struct("<I4sII")  # version, magic, L, k
_SNAP = struct.Struct("<I4sIII")  # version, magic, L, H, W
_F8 = np.dtype("<f8")


def _manifest_path(path):
    return str(path) + ".json"


def checkpoint_bytes(params):
    L, k = params.channels, params.ksize
    head = _CKPT.pack(CHECKPOINT_VERSION, b"SSCK", L, k)
    return head + b"".join(np.ascontiguousarray(a, dtype=_F8).tobytes() for a in params.arrays())


def params_from_bytes(blob):
    if len(blob) < _CKPT.size:
        raise ContractError("checkpoint truncated")
    version, magic, L, k = _CKPT.unpack_from(blob)
    if magic != b"SSCK" or version != CHECKPOINT_VERSION:
        raise ContractError(f"not a version-{CHECKPOINT_VERSION} checkpoint")
    n_w = 4 * L * L * k * k
    want = 2 * n_w + 4 * L
    if len(blob) != _CKPT.size + 8 * want:
        raise ContractError(f"checkpoint body is {len(blob) - _CKPT.size} bytes, expected {8 * want}")
    data = np.frombuffer(blob, dtype=_F8, offset=_CKPT.size)
    wx = data[:n_w].reshape(4, L, L, k, k).astype(np.float64)
    wh = data[n_w:2 * n_w].reshape(4, L, L, k, k).astype(np.float64)
    b = data[2 * n_w:].reshape(4, L).astype(np.float64)
    return ConvLstmParams(wx, wh, b)


def save_checkpoint(params, path, epoch, loss, config):
    """Write params to ``path`` and the manifest {version, epoch, loss, config_hash, config}."""
    with open(path, "wb") as f:
        f.write(checkpoint_bytes(params))
    manifest = {
        "version": CHECKPOINT_VERSION,
        "epoch": int(epoch),
        "loss": None if loss is None else float(loss),
        "config_hash": config.digest(),
        "config": config.to_dict(),
    }
    with open(_manifest_path(path), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")


def load_checkpoint(path):
    with open(path, "rb") as f:
        return params_from_bytes(f.read())


def load_manifest(path):
    with open(_manifest_path(path)) as f:
        return json.load(f)


def snapshot_bytes(smap):
    L, H, W = smap.grid.shape
    head = _SNAP.pack(SNAPSHOT_VERSION, b"SSMP", L, H, W)
    return (head + np.ascontiguousarray(smap.grid, dtype=_F8).tobytes()
            + np.ascontiguousarray(smap.cell, dtype=_F8).tobytes())


def snapshot_from_bytes(blob):
    if len(blob) < _SNAP.size:
        raise ContractError("snapshot truncated")
    version, magic, L, H, W = _SNAP.unpack_from(blob)
    if magic != b"SSMP" or version != SNAPSHOT_VERSION:
        raise ContractError(f"not a version-{SNAPSHOT_VERSION} map snapshot")
    n = L * H * W
    if len(blob) != _SNAP.size + 16 * n:
        raise ContractError(f"snapshot body is {len(blob) - _SNAP.size} bytes, expected {16 * n}")
    data = np.frombuffer(blob, dtype=_F8, offset=_SNAP.size)
    return SemanticMap(data[:n].reshape(L, H, W).astype(np.float64),
                       data[n:].reshape(L, H, W).astype(np.float64))


def save_snapshot(smap, path, step, pose, source):
    with open(path, "wb") as f:
        f.write(snapshot_bytes(smap))
    meta = {"version": SNAPSHOT_VERSION, "step": int(step),
            "pose": [int(v) for v in pose], "source": source}
    with open(_manifest_path(path), "w") as f:
        json.dump(meta, f, sort_keys=True)
        f.write("\n")


def load_snapshot(path):
    with open(path, "rb") as f:
        smap = snapshot_from_bytes(f.read())
    with open(_manifest_path(path)) as f:
        return smap, json.load(f)
