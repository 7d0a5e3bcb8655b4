from __future__ import annotations

from dataclasses import dataclass
import logging
import math

import numpy as np

from voxshift.backend.world import AIR, Coord, VoxelWorld

log = logging.getLogger(__name__)

DEFAULT_STRUCTURES = 4
DEFAULT_FOOTPRINT = (5, 9)
DEFAULT_WALL_HEIGHT = (3, 5)
DEFAULT_MATERIAL = "bricks"
# draws per structure before accepting a placement that touches another one
MAX_ATTEMPTS = 100


@dataclass(frozen=True)
class ToyGeneratorParams:
    """Settings of the walled-structure generator."""
    structure_count: int = DEFAULT_STRUCTURES
    footprint: tuple[int, int] = DEFAULT_FOOTPRINT
    wall_height: tuple[int, int] = DEFAULT_WALL_HEIGHT
    material: str = DEFAULT_MATERIAL
    seed: int = 0

    def __post_init__(self) -> None:
        if self.structure_count < 0:
            raise ValueError(f"Structure count must be non-negative, got {self.structure_count}")
        for label, (lo, hi) in (("footprint", self.footprint), ("wall height", self.wall_height)):
            if not 1 <= lo <= hi:
                raise ValueError(f"{label} range must satisfy 1 <= min <= max, got ({lo}, {hi})")
        if not self.material or self.material == AIR:
            raise ValueError(f"Structure material must be a solid block name, got {self.material!r}")
        if self.seed < 0:
            raise ValueError(f"Seed must be a non-negative integer, got {self.seed}")


@dataclass(frozen=True)
class Structure:
    """A hollow rectangular building: walls on the footprint ring from base_y up to base_y + height."""
    x0: int
    z0: int
    width: int
    depth: int
    height: int
    base_y: int

    def contains(self, x: int, z: int) -> bool:
        return self.x0 <= x < self.x0 + self.width and self.z0 <= z < self.z0 + self.depth

    def gap(self, x: int, z: int) -> float:
        """Horizontal Euclidean distance from a column to the footprint; 0 inside it."""
        dx = max(self.x0 - x, 0, x - (self.x0 + self.width - 1))
        dz = max(self.z0 - z, 0, z - (self.z0 + self.depth - 1))
        return math.hypot(dx, dz)

    def touches(self, other: Structure) -> bool:
        """Footprints overlap or share a face once grown by one block."""
        return (self.x0 - 1 < other.x0 + other.width and other.x0 < self.x0 + self.width + 1
                and self.z0 - 1 < other.z0 + other.depth and other.z0 < self.z0 + self.depth + 1)


def _surface_levels(world: VoxelWorld) -> np.ndarray:
    """Local y of the highest non-air block per (z, x) column, -1 for empty columns."""
    solid = world.grid != world.palette.index(AIR) if AIR in world.palette else np.ones(world.grid.shape, bool)
    sy = world.dims[1]
    top = sy - 1 - np.argmax(solid[::-1], axis=0)
    return np.where(solid.any(axis=0), top, -1)


def plan_structures(world: VoxelWorld, params: ToyGeneratorParams) -> list[Structure]:
    """
    Draw the structure footprints `apply_toy_generator` builds, in world coordinates.
    Footprints are kept apart by at least one block when the world has room for it.
    """
    rng = np.random.default_rng(params.seed)
    sx, _, sz = world.dims
    ox, oy, oz = world.origin
    surface = _surface_levels(world)

    planned: list[Structure] = []
    for i in range(params.structure_count):
        for attempt in range(MAX_ATTEMPTS):
            width = int(rng.integers(params.footprint[0], params.footprint[1] + 1))
            depth = int(rng.integers(params.footprint[0], params.footprint[1] + 1))
            height = int(rng.integers(params.wall_height[0], params.wall_height[1] + 1))
            lx = int(rng.integers(0, max(sx - width, 0) + 1))
            lz = int(rng.integers(0, max(sz - depth, 0) + 1))
            base = int(surface[lz:lz + depth, lx:lx + width].max()) + 1
            candidate = Structure(lx + ox, lz + oz, width, depth, height, base + oy)
            if not any(candidate.touches(p) for p in planned):
                break
        else:
            log.warning("Structure %d overlaps a neighbour after %d attempts", i, MAX_ATTEMPTS)
        planned.append(candidate)
    return planned


def apply_toy_generator(world: VoxelWorld, params: ToyGeneratorParams) -> VoxelWorld:
    """
    Place hollow walled structures on the surface of a copy of `world`.
    Args:
        world: Base world, left untouched
        params: Generator settings
    Returns:
        VoxelWorld: A new world; walls are clipped to the world bounds
    """
    if params.structure_count == 0:
        return world.with_grid(world.palette, world.grid)

    palette = world.palette
    if params.material not in palette:
        palette = (*palette, params.material)
    index = palette.index(params.material)
    grid = np.array(world.grid, copy=True)
    sx, sy, sz = world.dims
    ox, oy, oz = world.origin

    for s in plan_structures(world, params):
        x0, x1 = s.x0 - ox, min(s.x0 - ox + s.width, sx)
        z0, z1 = s.z0 - oz, min(s.z0 - oz + s.depth, sz)
        y0, y1 = s.base_y - oy, min(s.base_y - oy + s.height, sy)
        if y0 >= y1:
            continue
        ring = np.zeros((s.depth, s.width), dtype=bool)
        ring[[0, -1], :] = True
        ring[:, [0, -1]] = True
        # far walls past the world edge are dropped, near walls keep their full length
        ring = ring[:z1 - z0, :x1 - x0]
        grid[y0:y1, z0:z1, x0:x1][:, ring] = index
        log.debug("Placed %s", s)

    return world.with_grid(palette, grid)


def footprint_distance(coord: Coord, structures: list[Structure]) -> float:
    """Horizontal distance from the column of `coord` to the nearest footprint, inf without structures."""
    x, _, z = coord
    return min((s.gap(x, z) for s in structures), default=math.inf)
