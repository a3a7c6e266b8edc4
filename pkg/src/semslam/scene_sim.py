"""Synthetic indoor scenes, random-walk trajectories, ray-cast detections and IMU readings.

Stands in for a simulator + RGB-D camera + detector/segmenter front end. All
randomness is drawn from explicit seeds.
"""
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import kernels
from ._kernels_py import FREE, WALL
from .errors import ContractError, GenerationError
from .poses import DiscretePose, heading_angle, to_egocentric

TIERS = ("ideal", "obstructed", "real")


@dataclass(frozen=True)
class SceneObject:
    cls: int
    cells: tuple  # ((x, y), ...)


@dataclass
class Scene:
    H: int
    W: int
    L: int
    objects: list
    walls: frozenset

    def __post_init__(self):
        ids = np.full((self.H, self.W), FREE, dtype=np.int64)
        for x, y in self.walls:
            ids[x, y] = WALL
        for k, obj in enumerate(self.objects):
            for x, y in obj.cells:
                if not (0 <= x < self.H and 0 <= y < self.W):
                    raise ContractError(f"object {k} cell {(x, y)} outside {self.H}x{self.W}")
                if ids[x, y] != FREE:
                    raise ContractError(f"cell {(x, y)} occupied twice")
                ids[x, y] = k
        self.ids = ids

    def is_free(self, x, y):
        return 0 <= x < self.H and 0 <= y < self.W and self.ids[x, y] == FREE

    def free_mask(self):
        return self.ids == FREE


@dataclass(frozen=True)
class CameraModel:
    fov: float = math.pi / 2
    max_range: float = 7.5
    rays: int = 720

    def __post_init__(self):
        if not (0 < self.fov <= 2 * math.pi):
            raise ContractError(f"fov must lie in (0, 2pi], got {self.fov}")
        if self.rays < 2:
            raise ContractError("need at least two rays")

    def ray_angles(self, heading):
        k = np.arange(self.rays)
        return heading - self.fov / 2 + self.fov * (k + 0.5) / self.rays


@dataclass(frozen=True)
class ImuModel:
    """Per-step IMU noise. Position terms in grid cells, heading terms in radians."""

    sigma_pos: float = 0.4
    sigma_theta: float = 0.05
    bias_pos: float = 0.15
    bias_theta: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.sigma_pos < 0 or self.sigma_theta < 0:
            raise ContractError("IMU sigmas must be non-negative")


@dataclass(frozen=True)
class ErrorModel:
    """Front-end error injection used by the 'real' observation tier."""

    flip_prob: float = 0.1
    mass_jitter: float = 0.3
    shift_prob: float = 0.15


@dataclass(frozen=True)
class MotionParams:
    max_turn: int = 1
    max_stride: int = 1
    move_prob: float = 0.85
    start_clearance: int = 2  # minimum distance (cells) from the perimeter for the start
    turn_when_blocked: bool = True


@dataclass
class Detection:
    cls: int
    cells: dict = field(default_factory=dict)  # egocentric (ex, ey) -> visible mass

    @property
    def total_mass(self):
        return float(sum(self.cells.values()))


@dataclass
class Trajectory:
    poses: list
    true_deltas: list  # (dx, dy, dtheta) per transition, egocentric frame, radians

    def __len__(self):
        return len(self.poses)


def generate_scene(seed, H=33, W=33, L=5, n_objects=8, size_range=(1, 3), max_retries=2000):
    """Perimeter-walled scene with non-touching rectangular objects of random class.

    Objects keep a one-cell free ring (8-neighbourhood) to each other and to the
    walls, which keeps the free space connected.
    """
    lo, hi = size_range
    if lo < 1 or hi < lo:
        raise ContractError(f"bad size range {size_range}")
    interior = (H - 4) * (W - 4)
    if n_objects * hi * hi > interior:
        raise ContractError(f"{n_objects} objects of side <= {hi} cannot fit in {H}x{W}")
    rng = np.random.default_rng(seed)
    walls = frozenset(
        (x, y) for x in range(H) for y in range(W) if x in (0, H - 1) or y in (0, W - 1)
    )
    blocked = np.zeros((H, W), dtype=bool)
    objects = []
    for k in range(n_objects):
        for _ in range(max_retries):
            sx, sy = (int(v) for v in rng.integers(lo, hi + 1, size=2))
            if H - 4 - sx < 0 or W - 4 - sy < 0:
                continue
            x0 = int(rng.integers(2, H - 1 - sx))
            y0 = int(rng.integers(2, W - 1 - sy))
            if blocked[x0 - 1:x0 + sx + 1, y0 - 1:y0 + sy + 1].any():
                continue
            cls = int(rng.integers(L))
            cells = tuple((x, y) for x in range(x0, x0 + sx) for y in range(y0, y0 + sy))
            blocked[x0:x0 + sx, y0:y0 + sy] = True
            objects.append(SceneObject(cls, cells))
            break
        else:
            raise GenerationError(f"could not place object {k} after {max_retries} tries")
    return Scene(H, W, L, objects, walls)


def ground_truth_map(scene):
    m = np.zeros((scene.L, scene.H, scene.W))
    for obj in scene.objects:
        for x, y in obj.cells:
            m[obj.cls, x, y] = 1.0
    return m


def raycast_observe(scene, pose, camera, levels, occlusion=True):
    """Egocentric detections seen from ``pose``.

    Each ray samples the object cell where it lands at the midpoint of its
    chord through that cell. With occlusion, only the first non-free cell of a
    ray is sampled and an object's mass in a cell is (rays landing there) /
    (rays that would reach the object if nothing else were in the way). Without
    occlusion every object cell a ray crosses is sampled and masses are
    normalised by the object's total sample count. Either way a fully visible
    object carries total mass 1.
    """
    if not scene.is_free(pose.x, pose.y):
        raise ContractError(f"pose {pose} is not on a free cell")
    theta = heading_angle(pose.r, levels)
    angles = camera.ray_angles(theta)
    cells, t_in, t_out, count = kernels.trace_rays(
        scene.ids, float(pose.x), float(pose.y), angles, float(camera.max_range)
    )
    hits = defaultdict(lambda: defaultdict(int))
    denom = defaultdict(int)
    rel = np.cos(angles - theta), np.sin(angles - theta)
    for k in range(len(angles)):
        seen = set()
        for m in range(count[k]):
            oid = int(scene.ids[cells[k, m, 0], cells[k, m, 1]])
            if oid < 0:
                break
            if occlusion and m > 0:
                seen.add(oid)
                continue
            t_mid = 0.5 * (t_in[k, m] + t_out[k, m])
            ego = (int(np.rint(t_mid * rel[0][k])), int(np.rint(t_mid * rel[1][k])))
            hits[oid][ego] += 1
            if occlusion:
                seen.add(oid)
            else:
                denom[oid] += 1
        if occlusion:
            for oid in seen:
                denom[oid] += 1
    detections = []
    for oid in sorted(hits):
        n = denom[oid]
        cells_mass = {c: v / n for c, v in sorted(hits[oid].items())}
        detections.append(Detection(scene.objects[oid].cls, cells_mass))
    return detections


def inject_errors(detections, rng, model, n_classes):
    """Class flips, multiplicative mass jitter and one-cell position slips."""
    out = []
    for det in detections:
        cls = det.cls
        if n_classes > 1 and rng.random() < model.flip_prob:
            cls = int((cls + rng.integers(1, n_classes)) % n_classes)
        cells = defaultdict(float)
        for (ex, ey), mass in det.cells.items():
            mass = mass * max(0.0, 1.0 + model.mass_jitter * rng.standard_normal())
            if rng.random() < model.shift_prob:
                dx, dy = 0, 0
                while dx == 0 and dy == 0:
                    dx, dy = (int(v) for v in rng.integers(-1, 2, size=2))
                ex, ey = ex + dx, ey + dy
            cells[(ex, ey)] += mass
        out.append(Detection(cls, dict(cells)))
    return out


def simulate_detections(scene, pose, camera, levels, tier, rng=None, errors=ErrorModel()):
    """Detections for one of the observation tiers: ideal, obstructed or real."""
    if tier == "ideal":
        return raycast_observe(scene, pose, camera, levels, occlusion=False)
    if tier == "obstructed":
        return raycast_observe(scene, pose, camera, levels, occlusion=True)
    if tier == "real":
        dets = raycast_observe(scene, pose, camera, levels, occlusion=True)
        return inject_errors(dets, rng, errors, scene.L)
    raise ContractError(f"unknown observation tier {tier!r}")


def imu_read(true_delta, model, step):
    """Noisy egocentric displacement: true + bias + Gaussian noise, per component."""
    rng = np.random.default_rng([model.seed, step])
    n = rng.standard_normal(3)
    dx, dy, dth = true_delta
    return (
        float(dx + model.bias_pos + model.sigma_pos * n[0]),
        float(dy + model.bias_pos + model.sigma_pos * n[1]),
        float(dth + model.bias_theta + model.sigma_theta * n[2]),
    )


def true_delta(prev, cur, levels):
    """Egocentric (dx, dy, dtheta) that carries ``prev`` onto ``cur``."""
    ex, ey = to_egocentric(cur.x - prev.x, cur.y - prev.y, heading_angle(prev.r, levels))
    dr = (cur.r - prev.r) % levels
    if dr > levels // 2:
        dr -= levels
    return (ex, ey, 2.0 * math.pi * dr / levels)


def _step_vector(r, levels, stride):
    a = heading_angle(r, levels)
    return int(round(stride * math.cos(a))), int(round(stride * math.sin(a)))


def generate_trajectory(scene, seed, T, levels, motion=MotionParams()):
    """Random walk over free cells; each step turns by at most ``max_turn`` levels
    and then moves up to ``max_stride`` cells along the new heading. A blocked
    walker keeps turning one way by ``max_turn`` levels until its path clears."""
    free = scene.free_mask()
    labels, n_comp = ndimage.label(free)
    if n_comp != 1:
        raise GenerationError(f"free space has {n_comp} components")
    rng = np.random.default_rng(seed)
    c = motion.start_clearance
    inner = free.copy()
    inner[:c] = inner[scene.H - c:] = False
    inner[:, :c] = inner[:, scene.W - c:] = False
    free_cells = np.argwhere(inner if inner.any() else free)
    x, y = (int(v) for v in free_cells[rng.integers(len(free_cells))])
    r = int(rng.integers(levels))
    poses = [DiscretePose(r, x, y)]
    neighbours = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if dx or dy]
    if not any(scene.is_free(x + dx, y + dy) for dx, dy in neighbours):
        raise GenerationError(f"walker trapped at {(x, y)}")
    spin = 0  # turn direction held while blocked
    for _ in range(T - 1):
        if motion.turn_when_blocked and _blocked(scene, x, y, r, levels):
            spin = spin or (1 if rng.random() < 0.5 else -1)
            turn = spin * motion.max_turn
        else:
            spin = 0
            turn = int(rng.integers(-motion.max_turn, motion.max_turn + 1))
        r = (r + turn) % levels
        if rng.random() < motion.move_prob:
            stride = int(rng.integers(1, motion.max_stride + 1))
            dx, dy = _step_vector(r, levels, stride)
            if (dx or dy) and _path_free(scene, x, y, dx, dy):
                x, y = x + dx, y + dy
        poses.append(DiscretePose(r, x, y))
    deltas = [true_delta(a, b, levels) for a, b in zip(poses, poses[1:])]
    return Trajectory(poses, deltas)


def _blocked(scene, x, y, r, levels):
    dx, dy = _step_vector(r, levels, 1)
    return not (dx or dy) or not _path_free(scene, x, y, dx, dy)


def _path_free(scene, x, y, dx, dy):
    n = max(abs(dx), abs(dy))
    for s in range(1, n + 1):
        cx = x + int(round(dx * s / n))
        cy = y + int(round(dy * s / n))
        if not scene.is_free(cx, cy):
            return False
    return True
