from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
import logging
import struct

import numpy as np

from voxshift.errors import WorldFormatError

log = logging.getLogger(__name__)

# voxgrid v1 layout
MAGIC = b"VOXG"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sH3i3IH")
INDEX_DTYPE = np.dtype("<u2")
MAX_PALETTE = 0xFFFF
MAX_NAME_BYTES = 0xFF

AIR = "air"

Coord = tuple[int, int, int]


class _Bounds(Enum):
    OUT_OF_BOUNDS = "out_of_bounds"

    def __repr__(self) -> str:
        return "OutOfBounds"


# Returned by block_at outside the grid; consumers treat it as transparent,
# non-enterable and non-standable.
OUT_OF_BOUNDS = _Bounds.OUT_OF_BOUNDS


@dataclass(frozen=True, eq=False)
class VoxelWorld:
    """
    Immutable block grid. `grid` holds palette indices shaped (sy, sz, sx) so that
    its C-order flattening is x-fastest, then z, then y.
    """
    dims: Coord
    origin: Coord
    palette: tuple[str, ...]
    grid: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        sx, sy, sz = (int(v) for v in self.dims)
        if min(sx, sy, sz) <= 0:
            raise ValueError(f"World dimensions must be positive, got {self.dims}")
        palette = tuple(self.palette)
        if any(not name for name in palette):
            raise ValueError("Palette entries must be non-empty names")
        if len(set(palette)) != len(palette):
            raise ValueError(f"Palette entries must be unique: {palette}")

        grid = np.array(self.grid, dtype=np.uint16, copy=True)
        if grid.size != sx * sy * sz:
            raise ValueError(f"Grid holds {grid.size} blocks, dims {self.dims} require {sx * sy * sz}")
        grid = grid.reshape((sy, sz, sx))
        if grid.size and int(grid.max()) >= len(palette):
            raise ValueError(f"Grid references palette index {int(grid.max())} but palette has {len(palette)} entries")
        grid.setflags(write=False)

        object.__setattr__(self, "dims", (sx, sy, sz))
        object.__setattr__(self, "origin", tuple(int(v) for v in self.origin))
        object.__setattr__(self, "palette", palette)
        object.__setattr__(self, "grid", grid)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VoxelWorld):
            return NotImplemented
        return (self.dims == other.dims and self.origin == other.origin
                and self.palette == other.palette and np.array_equal(self.grid, other.grid))

    __hash__ = None  # type: ignore[assignment]

    @property
    def size(self) -> int:
        sx, sy, sz = self.dims
        return sx * sy * sz

    def contains(self, coord: Coord) -> bool:
        """Return whether a world coordinate lies within [origin, origin + dims)."""
        return all(o <= c < o + s for c, o, s in zip(coord, self.origin, self.dims))

    def to_local(self, coord: Coord) -> Coord:
        """World coordinate to grid-relative (x, y, z)."""
        ox, oy, oz = self.origin
        x, y, z = coord
        return x - ox, y - oy, z - oz

    def block_names(self) -> np.ndarray:
        """Return the grid as block names, shaped (sy, sz, sx). Comparable across palettes."""
        return np.asarray(self.palette, dtype=object)[self.grid]

    def with_grid(self, palette: tuple[str, ...], grid: np.ndarray) -> VoxelWorld:
        """Return a new world with the same placement and a different content."""
        return VoxelWorld(self.dims, self.origin, palette, grid)


def block_at(world: VoxelWorld, coord: Coord) -> str | _Bounds:
    """
    Return the block name at a world coordinate.
    Args:
        world: World to read
        coord: Signed (x, y, z) world coordinate
    Returns:
        The palette name, or OUT_OF_BOUNDS when coord is outside the grid.
    """
    if not world.contains(coord):
        return OUT_OF_BOUNDS
    x, y, z = world.to_local(coord)
    return world.palette[int(world.grid[y, z, x])]


def save_world(world: VoxelWorld) -> bytes:
    """Serialize a world to voxgrid v1 bytes."""
    if len(world.palette) > MAX_PALETTE:
        raise ValueError(f"Palette of {len(world.palette)} entries exceeds the format limit of {MAX_PALETTE}")
    parts = [HEADER.pack(MAGIC, FORMAT_VERSION, *world.origin, *world.dims, len(world.palette))]
    for name in world.palette:
        encoded = name.encode("utf-8")
        if len(encoded) > MAX_NAME_BYTES:
            raise ValueError(f"Block name {name!r} is longer than {MAX_NAME_BYTES} bytes")
        parts.append(struct.pack("<B", len(encoded)))
        parts.append(encoded)
    parts.append(world.grid.astype(INDEX_DTYPE).tobytes(order="C"))
    return b"".join(parts)


def load_world(data: bytes) -> VoxelWorld:
    """
    Parse voxgrid v1 bytes.
    Args:
        data: Full file content
    Returns:
        VoxelWorld: The decoded world, palette order preserved
    Raises:
        WorldFormatError: On a malformed header, a truncated palette, a payload whose length
            does not match the dimensions or an out-of-range palette index.
    """
    if len(data) < HEADER.size:
        raise WorldFormatError(f"Truncated header: {len(data)} bytes, need {HEADER.size}", len(data))
    magic, version, ox, oy, oz, sx, sy, sz, count = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise WorldFormatError(f"Bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != FORMAT_VERSION:
        raise WorldFormatError(f"Unsupported format version {version}", 4)
    if min(sx, sy, sz) == 0:
        raise WorldFormatError(f"Dimensions must be positive, got {(sx, sy, sz)}", 18)

    offset = HEADER.size
    palette: list[str] = []
    for _ in range(count):
        if offset >= len(data):
            raise WorldFormatError("Truncated palette", offset)
        length = data[offset]
        start, end = offset + 1, offset + 1 + length
        if length == 0:
            raise WorldFormatError("Empty palette name", offset)
        if end > len(data):
            raise WorldFormatError("Truncated palette name", offset)
        try:
            name = data[start:end].decode("utf-8")
        except UnicodeDecodeError as e:
            raise WorldFormatError(f"Palette name is not UTF-8: {e}", start) from e
        if name in palette:
            raise WorldFormatError(f"Duplicate palette name {name!r}", offset)
        palette.append(name)
        offset = end

    n_blocks = sx * sy * sz
    payload = data[offset:]
    if len(payload) != n_blocks * INDEX_DTYPE.itemsize:
        raise WorldFormatError(
            f"Payload length mismatch: {n_blocks} indices need {n_blocks * INDEX_DTYPE.itemsize} bytes, "
            f"found {len(payload)}", offset)
    indices = np.frombuffer(payload, dtype=INDEX_DTYPE)
    bad = np.flatnonzero(indices >= len(palette))
    if bad.size:
        first = int(bad[0])
        raise WorldFormatError(
            f"Palette index {int(indices[first])} out of range for {len(palette)} entries",
            offset + first * INDEX_DTYPE.itemsize)

    return VoxelWorld((sx, sy, sz), (ox, oy, oz), tuple(palette), indices.reshape((sy, sz, sx)))


def read_world(path: Path) -> VoxelWorld:
    """Load a voxgrid file from disk."""
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError as f:
        raise FileNotFoundError(f"World file not found at: {path}") from f
    world = load_world(data)
    log.info("Loaded %s: dims %s, %d palette entries", path, world.dims, len(world.palette))
    return world


def write_world(path: Path, world: VoxelWorld) -> None:
    """Write a world as a voxgrid file."""
    Path(path).write_bytes(save_world(world))


def generate_flat_world(dims: Coord, ground_height: int, ground_material: str, seed: int,
                        origin: Coord = (0, 0, 0)) -> VoxelWorld:
    """
    Build a world whose layers below `ground_height` are `ground_material` and the rest air.
    Flat worlds have no random content; the seed is accepted so every world builder
    shares one call shape.
    """
    sx, sy, sz = dims
    if not 0 < ground_height < sy:
        raise ValueError(f"Ground height must lie in (0, {sy}), got {ground_height}")
    if seed < 0:
        raise ValueError(f"Seed must be a non-negative integer, got {seed}")
    if ground_material == AIR:
        raise ValueError("Ground material cannot be air")
    grid = np.zeros((sy, sz, sx), dtype=np.uint16)
    grid[:ground_height] = 1
    return VoxelWorld((sx, sy, sz), origin, (AIR, ground_material), grid)
