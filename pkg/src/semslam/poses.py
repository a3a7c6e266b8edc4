import math
from typing import NamedTuple


class DiscretePose(NamedTuple):
    """Orientation level ``r`` and grid cell (``x`` row, ``y`` column)."""

    r: int
    x: int
    y: int


def heading_angle(r, levels):
    """Heading of level ``r``: angle from the +x (row) axis, counter-clockwise."""
    return 2.0 * math.pi * r / levels


def level_distance(a, b, levels):
    d = abs(a - b) % levels
    return min(d, levels - d)


def to_egocentric(dx, dy, angle):
    """Rotate a world-frame displacement into the frame of a camera at ``angle``."""
    ca, sa = math.cos(angle), math.sin(angle)
    return ca * dx + sa * dy, -sa * dx + ca * dy


def to_world(ex, ey, angle):
    ca, sa = math.cos(angle), math.sin(angle)
    return ca * ex - sa * ey, sa * ex + ca * ey
