"""Visual pose belief from correlating rotated observations against the map."""
import math

import numpy as np

from .errors import ContractError
from .poses import DiscretePose
from .tensor_core import as_grid, correlate, rotate_bilinear, softmax_all


def rotation_stack(obs, levels):
    """Observation resampled at every allocentric heading 2*pi*r/levels; slice 0 is a copy."""
    if levels < 1:
        raise ContractError(f"need at least one orientation level, got {levels}")
    grid = obs.grid if hasattr(obs, "grid") else as_grid(obs)
    return np.stack([rotate_bilinear(grid, 2.0 * math.pi * r / levels) for r in range(levels)])


def visual_belief(semantic_map, stack):
    """Softmax over all (r, x, y) of the raw correlation scores."""
    return softmax_all(correlate(semantic_map, stack))


def argmax_pose(belief):
    """Index of the largest entry; ties go to the smallest (r, x, y)."""
    # np.argmax returns the first maximum in C order, which is lexicographic (r, x, y)
    r, x, y = np.unravel_index(int(np.argmax(belief)), belief.shape)
    return DiscretePose(int(r), int(x), int(y))


def one_hot(pose, shape):
    b = np.zeros(shape)
    b[pose.r, pose.x, pose.y] = 1.0
    return b
