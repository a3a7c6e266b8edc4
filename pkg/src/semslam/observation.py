"""Egocentric observation maps built from detections, and the noise floor filter."""
from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass
class ObservationMap:
    grid: np.ndarray  # (L, h, h), camera at the center cell, heading along +x
    timestamp: int = 0


def project_features(detections, h, n_classes, timestamp=0):
    """Sum per-cell visible mass of every detection into its class channel.

    Cells falling outside the h x h window are dropped.
    """
    if h % 2 == 0:
        raise ContractError(f"observation size must be odd, got {h}")
    c = h // 2
    grid = np.zeros((n_classes, h, h))
    for det in detections:
        for (ex, ey), mass in det.cells.items():
            i, j = c + ex, c + ey
            if 0 <= i < h and 0 <= j < h:
                grid[det.cls, i, j] += mass
    return ObservationMap(grid, timestamp)


def filter_noise(obs, beta=0.02):
    """Zero every entry strictly below ``beta``; entries at or above it are kept."""
    if beta < 0:
        raise ContractError(f"beta must be non-negative, got {beta}")
    grid = np.where(obs.grid < beta, 0.0, obs.grid)
    return ObservationMap(grid, obs.timestamp)
