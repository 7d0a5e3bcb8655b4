"""
Block-to-block visibility by 3D Bresenham walks between block centres.

Walks always run from the lexicographically smaller endpoint to the larger one, so the
visited blocks (and therefore visibility) do not depend on which end is the viewer.
Step i of a walk whose longest axis spans L blocks sits at offset
floor((2*i*|da| + L) / (2*L)) along every axis a. That is the error-term Bresenham
that advances a minor axis when its error is >= 0, written without the loop so whole
batches of rays can be walked together.
"""
from __future__ import annotations

from typing import Iterator

import numpy as np

from voxshift.backend.classification import BlockClassification
from voxshift.backend.world import Coord, VoxelWorld, block_at


def _ordered(a: Coord, b: Coord) -> tuple[Coord, Coord]:
    return (a, b) if a <= b else (b, a)


def bresenham_line(a: Coord, b: Coord) -> Iterator[Coord]:
    """
    Yield every block on the walk between a and b, both endpoints included,
    starting from the lexicographically smaller one.
    """
    start, end = _ordered(tuple(a), tuple(b))
    delta = [e - s for s, e in zip(start, end)]
    steps = max(abs(v) for v in delta)
    if steps == 0:
        yield start
        return
    for i in range(steps + 1):
        yield tuple(
            s + (1 if dv > 0 else -1) * ((2 * i * abs(dv) + steps) // (2 * steps))
            for s, dv in zip(start, delta)
        )


def within_distance(a: Coord, b: Coord, d: float) -> bool:
    """Euclidean distance between block centres is at most d."""
    return sum((p - q) ** 2 for p, q in zip(a, b)) <= d * d


def visible(world: VoxelWorld, source: Coord, target: Coord, classification: BlockClassification, d: float) -> bool:
    """
    Return whether target is visible from source: within distance d and every block strictly
    between them on the walk is transparent. The endpoint blocks never occlude.
    """
    if not world.contains(source):
        raise ValueError(f"Viewer {source} lies outside the world")
    if not within_distance(source, target, d):
        return False
    line = list(bresenham_line(source, target))
    return all(classification.is_transparent(block_at(world, p)) for p in line[1:-1])


def blocked_rays(opaque: np.ndarray, viewer: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """
    Walk one ray per target and report which ones meet an opaque block strictly between
    the endpoints.
    Args:
        opaque: Boolean grid shaped (sy, sz, sx), True where a block stops sight
        viewer: Grid-relative (x, y, z) of the viewer, shape (3,)
        targets: Grid-relative (x, y, z) of the targets, shape (N, 3), all inside the grid
    Returns:
        np.ndarray: Boolean array of length N, True for occluded rays
    """
    targets = np.asarray(targets, dtype=np.int64).reshape(-1, 3)
    viewer = np.asarray(viewer, dtype=np.int64).reshape(3)
    n = len(targets)
    blocked = np.zeros(n, dtype=bool)
    if n == 0:
        return blocked

    # lexicographic (x, y, z) comparison of target against viewer
    diff = targets - viewer
    first = np.where(diff[:, 0] != 0, diff[:, 0], np.where(diff[:, 1] != 0, diff[:, 1], diff[:, 2]))
    swap = first < 0
    start = np.where(swap[:, None], targets, viewer)
    delta = np.where(swap[:, None], -diff, diff)
    magnitude = np.abs(delta)
    sign = np.sign(delta)
    steps = magnitude.max(axis=1)

    # endpoints are inside the grid, so every interior block is as well
    active = np.flatnonzero(steps > 1)
    i = 1
    while active.size:
        span = steps[active][:, None]
        points = start[active] + sign[active] * ((2 * i * magnitude[active] + span) // (2 * span))
        hit = opaque[points[:, 1], points[:, 2], points[:, 0]]
        blocked[active[hit]] = True
        i += 1
        active = active[~hit & (steps[active] > i)]
    return blocked
