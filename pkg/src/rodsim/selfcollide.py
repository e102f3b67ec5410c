"""Bounding-sphere broad phase for self- and inter-rod collisions.

Consecutive mass points are grouped under bounding spheres; every sphere is
tested against all others (skipping a window of neighbouring groups on the
same rod), and colliding sphere pairs are expanded to point-point checks.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class SelfCollisionConfig:
    group_size: int = 4
    sphere_radius: float = 0.01
    neighbor_exclusion: int = 2
    point_radius: float = 2e-3

    def __post_init__(self):
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")
        if self.sphere_radius <= 0.0 or self.point_radius <= 0.0:
            raise ValueError("radii must be positive")


def point_groups(num_points, group_size):
    """(start, end) index spans of consecutive-point groups."""
    spans = []
    start = 0
    while start < num_points:
        end = min(num_points, start + group_size)
        spans.append((start, end))
        start = end
    return spans


def self_collision_pairs(positions, rod_of_point, point_offsets, config):
    """Point pairs closer than twice the point radius.

    positions: (P, 3) flat array over all rods; rod_of_point: rod id per
    point; point_offsets: first point index of each rod.  Group pairs on
    the same rod within `neighbor_exclusion` groups of each other are
    skipped.  Pairs are reported once, with idx_a < idx_b.
    """
    positions = np.asarray(positions, dtype=float)
    groups = []  # (rod, local_group_index, start, end)
    for rod, offset in enumerate(point_offsets):
        next_offset = (point_offsets[rod + 1] if rod + 1 < len(point_offsets)
                       else positions.shape[0])
        for gi, (s, e) in enumerate(point_groups(next_offset - offset,
                                                 config.group_size)):
            groups.append((rod, gi, offset + s, offset + e))

    centers = np.array([positions[s:e].mean(axis=0) for _, _, s, e in groups])
    broad = 2.0 * config.sphere_radius
    touch = 2.0 * config.point_radius
    pairs = []
    for a in range(len(groups)):
        rod_a, ga, sa, ea = groups[a]
        for b in range(a + 1, len(groups)):
            rod_b, gb, sb, eb = groups[b]
            if rod_a == rod_b and abs(ga - gb) <= config.neighbor_exclusion:
                continue
            d = centers[b] - centers[a]
            if d @ d >= broad * broad:
                continue
            for i in range(sa, ea):
                for j in range(sb, eb):
                    dp = positions[j] - positions[i]
                    if dp @ dp < touch * touch:
                        pairs.append((i, j, touch))
    return pairs
