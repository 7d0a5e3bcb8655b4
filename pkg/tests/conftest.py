from dataclasses import dataclass
from typing import Callable

import numpy as np
import pytest

from voxshift.backend.classification import BlockClassification, load_classification
from voxshift.backend.world import VoxelWorld

# --- Fixtures and Helpers ---

RANDOM_BLOCKS = ("air", "stone", "glass", "dirt", "water")
RANDOM_WEIGHTS = (0.62, 0.2, 0.08, 0.06, 0.04)


def world_from_blocks(dims: tuple[int, int, int], blocks: dict[tuple[int, int, int], str],
                      fill: str = "air", origin: tuple[int, int, int] = (0, 0, 0)) -> VoxelWorld:
    """World filled with `fill` except for the listed world coordinates."""
    palette = [fill] + sorted({name for name in blocks.values() if name != fill})
    sx, sy, sz = dims
    grid = np.zeros((sy, sz, sx), dtype=np.uint16)
    ox, oy, oz = origin
    for (x, y, z), name in blocks.items():
        grid[y - oy, z - oz, x - ox] = palette.index(name)
    return VoxelWorld(dims, origin, tuple(palette), grid)


def random_world(seed: int, dims: tuple[int, int, int], origin: tuple[int, int, int] = (0, 0, 0)) -> VoxelWorld:
    """Air-heavy noise over a stone floor, so most worlds hold some headspaces."""
    rng = np.random.default_rng(seed)
    sx, sy, sz = dims
    grid = rng.choice(len(RANDOM_BLOCKS), size=(sy, sz, sx), p=RANDOM_WEIGHTS).astype(np.uint16)
    grid[0] = RANDOM_BLOCKS.index("stone")
    return VoxelWorld(dims, origin, RANDOM_BLOCKS, grid)


@pytest.fixture(scope="session")
def classification() -> BlockClassification:
    """The packaged default block lists."""
    return load_classification()


@pytest.fixture(scope="session")
def make_world() -> Callable[..., VoxelWorld]:
    return world_from_blocks


@pytest.fixture(scope="session")
def make_random_world() -> Callable[..., VoxelWorld]:
    return random_world


@pytest.fixture
def sealed_cavity(make_world) -> VoxelWorld:
    """3x4x3 stone box with a 1x2x1 air cavity at x=1, z=1, y=1..2."""
    blocks = {(x, y, z): "stone" for x in range(3) for y in range(4) for z in range(3)}
    blocks[(1, 1, 1)] = "air"
    blocks[(1, 2, 1)] = "air"
    return make_world((3, 4, 3), blocks, fill="stone")


# --- Brute-force oracles shared by the visibility and metric tests ---

FACES = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))


def bresenham_walk(a, b) -> list[tuple[int, int, int]]:
    """Classic error-term 3D Bresenham, walked from the lexicographically smaller endpoint."""
    (x, y, z), (x2, y2, z2) = sorted([tuple(a), tuple(b)])
    dx, dy, dz = abs(x2 - x), abs(y2 - y), abs(z2 - z)
    sx, sy, sz = (1 if x2 > x else -1), (1 if y2 > y else -1), (1 if z2 > z else -1)
    points = [(x, y, z)]
    if dx >= dy and dx >= dz:
        p1, p2 = 2 * dy - dx, 2 * dz - dx
        while x != x2:
            x += sx
            if p1 >= 0:
                y += sy
                p1 -= 2 * dx
            if p2 >= 0:
                z += sz
                p2 -= 2 * dx
            p1 += 2 * dy
            p2 += 2 * dz
            points.append((x, y, z))
    elif dy >= dx and dy >= dz:
        p1, p2 = 2 * dx - dy, 2 * dz - dy
        while y != y2:
            y += sy
            if p1 >= 0:
                x += sx
                p1 -= 2 * dy
            if p2 >= 0:
                z += sz
                p2 -= 2 * dy
            p1 += 2 * dx
            p2 += 2 * dz
            points.append((x, y, z))
    else:
        p1, p2 = 2 * dy - dz, 2 * dx - dz
        while z != z2:
            z += sz
            if p1 >= 0:
                y += sy
                p1 -= 2 * dz
            if p2 >= 0:
                x += sx
                p2 -= 2 * dz
            p1 += 2 * dy
            p2 += 2 * dx
            points.append((x, y, z))
    return points


def brute_headspaces(world: VoxelWorld, classification: BlockClassification) -> list[tuple[int, int, int]]:
    """Grid-relative heads found by scanning every column, in (y, z, x) order."""
    names = world.block_names()
    sx, sy, sz = world.dims
    return [(x, y, z) for y in range(2, sy) for z in range(sz) for x in range(sx)
            if names[y, z, x] in classification.enterable and names[y - 1, z, x] in classification.enterable
            and names[y - 2, z, x] in classification.standable]


@dataclass
class OracleIsovist:
    visible_heads: set
    perimeter: set
    real_perimeter: set
    sky: set


def brute_isovist(world: VoxelWorld, classification: BlockClassification, head, d: float) -> OracleIsovist:
    """Cast one independent ray to every block of a world placed at the origin."""
    names = world.block_names()
    sx, sy, sz = world.dims
    heads = set(brute_headspaces(world, classification))
    result = OracleIsovist({tuple(head)}, set(), set(), set())

    def dist2(p):
        return sum((a - b) ** 2 for a, b in zip(p, head))

    for y in range(sy):
        for z in range(sz):
            for x in range(sx):
                block = (x, y, z)
                if block == tuple(head) or dist2(block) > d * d:
                    continue
                interior = bresenham_walk(head, block)[1:-1]
                if any(names[py, pz, px] not in classification.transparent for px, py, pz in interior):
                    continue
                name = names[y, z, x]
                if block in heads:
                    result.visible_heads.add(block)
                if not (name in classification.transparent and name in classification.enterable):
                    result.perimeter.add((block, name))
                    if name not in classification.transparent:
                        result.real_perimeter.add((block, name))
                    continue
                for fx, fy, fz in FACES:
                    nx, ny, nz = x + fx, y + fy, z + fz
                    inside = 0 <= nx < sx and 0 <= ny < sy and 0 <= nz < sz
                    if not inside or dist2((nx, ny, nz)) > d * d:
                        result.sky.add(block)
                        break
    return result


@pytest.fixture(scope="session")
def line_oracle() -> Callable[..., list]:
    return bresenham_walk


@pytest.fixture(scope="session")
def headspace_oracle() -> Callable[..., list]:
    return brute_headspaces


@pytest.fixture(scope="session")
def isovist_oracle() -> Callable[..., OracleIsovist]:
    return brute_isovist


@pytest.fixture(scope="session")
def oracle_corpus(classification) -> list[tuple[VoxelWorld, float, list[tuple[int, int, int]]]]:
    """50 random worlds up to 16 blocks a side, each with a view distance and up to two heads."""
    rng = np.random.default_rng(2024)
    corpus = []
    seed = 0
    while len(corpus) < 50:
        seed += 1
        dims = (16, 16, 16) if len(corpus) % 10 == 9 else tuple(int(v) for v in rng.integers(4, 13, 3))
        world = random_world(seed, dims)
        heads = brute_headspaces(world, classification)
        if not heads:
            continue
        d = float(rng.choice([3.0, 5.5, 256.0]))
        picks = rng.choice(len(heads), size=min(2, len(heads)), replace=False)
        corpus.append((world, d, [heads[i] for i in sorted(picks.tolist())]))
    return corpus
