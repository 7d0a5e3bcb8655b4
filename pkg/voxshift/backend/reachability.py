from __future__ import annotations

from collections import deque
from typing import Iterator

import numpy as np

from voxshift.backend.classification import BlockClassification, ClassifiedWorld, classify_world
from voxshift.backend.world import Coord, VoxelWorld

LATERAL = ((1, 0), (-1, 0), (0, 1), (0, -1))


class _Walker:
    """Movement rules over the classified grids, in grid-relative coordinates."""

    def __init__(self, classified: ClassifiedWorld) -> None:
        self.enterable = classified.enterable
        self.standable = classified.standable
        self.sx, self.sy, self.sz = classified.world.dims

    def _inside(self, x: int, y: int, z: int) -> bool:
        return 0 <= x < self.sx and 0 <= y < self.sy and 0 <= z < self.sz

    def can_enter(self, x: int, y: int, z: int) -> bool:
        return self._inside(x, y, z) and bool(self.enterable[y, z, x])

    def can_stand(self, x: int, y: int, z: int) -> bool:
        return self._inside(x, y, z) and bool(self.standable[y, z, x])

    def walkable(self, x: int, y: int, z: int) -> bool:
        return self.can_stand(x, y, z) and self.can_enter(x, y + 1, z) and self.can_enter(x, y + 2, z)

    def moves(self, support: Coord) -> Iterator[Coord]:
        """Support blocks one lateral transverse away: step up by one, stay level, or drop."""
        x, y, z = support
        for dx, dz in LATERAL:
            cx, cz = x + dx, z + dz
            if self.walkable(cx, y + 1, cz) and self.can_enter(x, y + 3, z):
                yield cx, y + 1, cz
            if self.can_enter(cx, y + 1, cz) and self.can_enter(cx, y + 2, cz):
                floor = y
                # a fall ends on the first standable block, enterable or not
                while floor >= 0 and self.can_enter(cx, floor, cz) and not self.can_stand(cx, floor, cz):
                    floor -= 1
                if self.can_stand(cx, floor, cz):
                    yield cx, floor, cz


def reachable_local(classified: ClassifiedWorld, start: Coord, n: int) -> set[Coord]:
    """Breadth-first floodfill from a grid-relative support block, at most n transverses deep."""
    if n < 0:
        raise ValueError(f"Step budget must be non-negative, got {n}")
    walker = _Walker(classified)
    seen = {start}
    frontier = deque([(start, 0)])
    while frontier:
        block, cost = frontier.popleft()
        if cost == n:
            continue
        for nxt in walker.moves(block):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, cost + 1))
    return seen


def reachable_set(world: VoxelWorld, start: Coord, classification: BlockClassification, n: int,
                  classified: ClassifiedWorld | None = None) -> frozenset[Coord]:
    """
    Return every support block walkable from `start` within n lateral transverses, start included.
    Args:
        world: World to walk
        start: World coordinate of a standable block with two enterable blocks above
        classification: Block lists
        n: Step budget
        classified: Precomputed grids for `world`, reused across calls when given
    Returns:
        frozenset: World coordinates of the reachable support blocks
    """
    if classified is None:
        classified = classify_world(world, classification)
    ox, oy, oz = world.origin
    local = reachable_local(classified, world.to_local(start), n)
    return frozenset((x + ox, y + oy, z + oz) for x, y, z in local)


def reachable_array(classified: ClassifiedWorld, start: Coord, n: int) -> np.ndarray:
    """Grid-relative reachable blocks as an (N, 3) array."""
    return np.array(sorted(reachable_local(classified, start, n)), dtype=np.int64).reshape(-1, 3)
