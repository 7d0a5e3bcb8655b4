from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
import logging
import math

from joblib import Parallel, delayed
import numpy as np

from voxshift.backend.classification import BlockClassification, ClassifiedWorld, classify_world
from voxshift.backend.raycast import blocked_rays
from voxshift.backend.reachability import reachable_array
from voxshift.backend.sampling import sample_size, validate_fraction
from voxshift.backend.world import Coord, VoxelWorld

log = logging.getLogger(__name__)

DEFAULT_VIEW_DISTANCE = 256
DEFAULT_STEP_BUDGET = 32
BATCHES_PER_WORKER = 4

SET_DUMP_COLUMNS = ("x", "y", "z", "visible", "support", "perimeter", "real_perimeter",
                    "reachable", "radials", "sky_radials")


@dataclass(frozen=True)
class Headspace:
    """A block a standing avatar's head can occupy."""
    head: Coord

    @property
    def feet(self) -> Coord:
        x, y, z = self.head
        return x, y - 1, z

    @property
    def support(self) -> Coord:
        x, y, z = self.head
        return x, y - 2, z

    @property
    def sort_key(self) -> tuple[int, int, int]:
        x, y, z = self.head
        return y, z, x


def sort_yzx(coords: np.ndarray) -> np.ndarray:
    """Sort (N, 3) x/y/z rows ascending by (y, z, x)."""
    coords = np.asarray(coords).reshape(-1, 3)
    return coords[np.lexsort((coords[:, 0], coords[:, 2], coords[:, 1]))]


def coord_set(coords: np.ndarray) -> set[Coord]:
    return {tuple(row) for row in np.asarray(coords).reshape(-1, 3).tolist()}


@dataclass(frozen=True, eq=False)
class IsovistSets:
    """
    The raw sets of one isovist, all in world coordinates and sorted by (y, z, x).
    `radials[i]` is the length of the ray to `perimeter[i]`. Rays that leave the world or
    reach the view distance without meeting a surface are kept apart as sky terminations.
    """
    centroid: Headspace
    view_distance: float
    palette: tuple[str, ...]
    visible_heads: np.ndarray = field(repr=False)
    perimeter: np.ndarray = field(repr=False)
    perimeter_kinds: np.ndarray = field(repr=False)
    real_mask: np.ndarray = field(repr=False)
    reachable: np.ndarray = field(repr=False)
    radials: np.ndarray = field(repr=False)
    sky_endpoints: np.ndarray = field(repr=False)

    @property
    def support_blocks(self) -> np.ndarray:
        return self.visible_heads - np.array([0, 2, 0])

    @property
    def real_perimeter(self) -> np.ndarray:
        return self.perimeter[self.real_mask]

    @property
    def perimeter_types(self) -> list[str]:
        return [self.palette[k] for k in self.perimeter_kinds.tolist()]

    @property
    def radial_endpoints(self) -> np.ndarray:
        return self.perimeter.astype(float)

    @property
    def sky_radials(self) -> np.ndarray:
        return np.full(len(self.sky_endpoints), float(self.view_distance))

    @property
    def all_radials(self) -> np.ndarray:
        """Perimeter radials followed by length-d sky radials; the radial statistics use these."""
        return np.concatenate([self.radials, self.sky_radials])

    @property
    def all_endpoints(self) -> np.ndarray:
        return np.concatenate([self.radial_endpoints, self.sky_endpoints.reshape(-1, 3)])

    def counts(self) -> dict[str, int]:
        """Set sizes, keyed like the set dump columns."""
        x, y, z = self.centroid.head
        return {
            "x": x, "y": y, "z": z,
            "visible": len(self.visible_heads),
            "support": len(self.visible_heads),
            "perimeter": len(self.perimeter),
            "real_perimeter": int(self.real_mask.sum()),
            "reachable": len(self.reachable),
            "radials": len(self.radials),
            "sky_radials": len(self.sky_endpoints),
        }


def enumerate_headspaces(world: VoxelWorld, classification: BlockClassification,
                         classified: ClassifiedWorld | None = None) -> list[Headspace]:
    """Every enterable block over an enterable block over a standable block, sorted by (y, z, x)."""
    if classified is None:
        classified = classify_world(world, classification)
    ox, oy, oz = world.origin
    # argwhere walks the (y, z, x) grid in C order, which is already the required order
    return [Headspace((int(x) + ox, int(y) + oy, int(z) + oz))
            for y, z, x in np.argwhere(classified.headspace)]


def subsample_headspaces(headspaces: list[Headspace], fraction: float, seed: int) -> list[Headspace]:
    """
    Keep ceil(fraction * count) randomly chosen headspaces on every Y level.
    Args:
        headspaces: Candidates, any order
        fraction: Share to keep per level, in (0, 1]
        seed: Seed of the generator; levels are drawn in ascending y from one stream
    Returns:
        list[Headspace]: The selection, sorted by (y, z, x)
    """
    fraction = validate_fraction(fraction)
    if fraction == 1.0:
        return sorted(headspaces, key=lambda h: h.sort_key)
    rng = np.random.default_rng(seed)
    levels: dict[int, list[Headspace]] = {}
    for hs in sorted(headspaces, key=lambda h: h.sort_key):
        levels.setdefault(hs.head[1], []).append(hs)

    selected: list[Headspace] = []
    for y in sorted(levels):
        members = levels[y]
        picks = rng.choice(len(members), size=sample_size(fraction, len(members)), replace=False)
        selected.extend(members[i] for i in np.sort(picks))
    return sorted(selected, key=lambda h: h.sort_key)


def compute_isovist(world: VoxelWorld, hs: Headspace, classification: BlockClassification, d: float,
                    n: int, classified: ClassifiedWorld | None = None) -> IsovistSets:
    """
    Build the visible-headspace, support, perimeter, real-perimeter and reachable sets plus
    radials for one headspace.
    Args:
        world: World the headspace belongs to
        hs: Centroid of the isovist
        classification: Block lists
        d: View distance in blocks
        n: Reachability step budget
        classified: Precomputed grids for `world`, reused across calls when given
    Returns:
        IsovistSets: The sets, in world coordinates
    """
    if d < 1:
        raise ValueError(f"View distance must be at least 1, got {d}")
    if classified is None:
        classified = classify_world(world, classification)
    sx, sy, sz = world.dims
    origin = np.array(world.origin, dtype=np.int64)
    head = np.array(world.to_local(hs.head), dtype=np.int64)
    hx, hy, hz = head.tolist()
    if not (0 <= hx < sx and 2 <= hy < sy and 0 <= hz < sz) or not classified.headspace[hy, hz, hx]:
        raise ValueError(f"{hs.head} is not a headspace of this world")

    # candidate box: the d-ball clipped to the world
    reach = int(math.floor(d))
    lo = np.maximum(head - reach, 0)
    hi = np.minimum(head + reach + 1, np.array([sx, sy, sz]))
    ys = np.arange(lo[1], hi[1])[:, None, None]
    zs = np.arange(lo[2], hi[2])[None, :, None]
    xs = np.arange(lo[0], hi[0])[None, None, :]
    dist2 = (xs - hx) ** 2 + (ys - hy) ** 2 + (zs - hz) ** 2
    in_range = dist2 <= d * d
    in_range[hy - lo[1], hz - lo[2], hx - lo[0]] = False

    box = (slice(lo[1], hi[1]), slice(lo[2], hi[2]), slice(lo[0], hi[0]))
    open_box = classified.open[box]
    is_head = in_range & classified.headspace[box]
    is_surface = in_range & ~open_box
    # an open block whose face neighbour is off the grid or past d ends a ray in the sky
    on_edge = (xs == 0) | (xs == sx - 1) | (ys == 0) | (ys == sy - 1) | (zs == 0) | (zs == sz - 1)
    widest = np.maximum(np.maximum(np.abs(xs - hx), np.abs(ys - hy)), np.abs(zs - hz))
    on_shell = dist2 + 2 * widest + 1 > d * d
    is_sky = in_range & open_box & (on_edge | on_shell)

    candidates = is_head | is_surface | is_sky
    yzx = np.argwhere(candidates) + lo[[1, 2, 0]]
    targets = yzx[:, [2, 0, 1]]
    seen = ~blocked_rays(classified.opaque, head, targets)

    heads = np.vstack([targets[seen & is_head[candidates]], head[None, :]])
    perimeter = targets[seen & is_surface[candidates]]
    sky = targets[seen & is_sky[candidates]]

    px, py, pz = perimeter[:, 0], perimeter[:, 1], perimeter[:, 2]
    kinds = world.grid[py, pz, px].astype(np.int64)
    real = ~classified.transparent[py, pz, px]
    radials = np.sqrt(((perimeter - head) ** 2).sum(axis=1).astype(float))

    offsets = (sky - head).astype(float)
    sky_endpoints = head + d * offsets / np.linalg.norm(offsets, axis=1, keepdims=True) if len(sky) else np.empty((0, 3))

    reachable = reachable_array(classified, (hx, hy - 2, hz), n)

    return IsovistSets(
        centroid=hs,
        view_distance=float(d),
        palette=world.palette,
        visible_heads=sort_yzx(heads) + origin,
        perimeter=perimeter + origin,
        perimeter_kinds=kinds,
        real_mask=real,
        reachable=sort_yzx(reachable) + origin,
        radials=radials,
        sky_endpoints=sky_endpoints + origin,
    )


def _isovist_batch(world: VoxelWorld, classified: ClassifiedWorld, batch: list[Headspace],
                   d: float, n: int) -> list[IsovistSets]:
    return [compute_isovist(world, hs, classified.classification, d, n, classified) for hs in batch]


def compute_isovists(world: VoxelWorld, headspaces: list[Headspace], classification: BlockClassification,
                     d: float = DEFAULT_VIEW_DISTANCE, n: int = DEFAULT_STEP_BUDGET,
                     workers: int = 1) -> list[IsovistSets]:
    """
    Compute isovists for many headspaces over a pool of `workers` processes.
    The output is sorted by centroid (y, z, x) and does not depend on the worker count.
    """
    if workers < 1:
        raise ValueError(f"Worker count must be at least 1, got {workers}")
    ordered = sorted(headspaces, key=lambda h: h.sort_key)
    if not ordered:
        return []
    classified = classify_world(world, classification)
    size = math.ceil(len(ordered) / (workers * BATCHES_PER_WORKER))
    batches = [ordered[i:i + size] for i in range(0, len(ordered), size)]
    n_batches = len(batches)
    log.info("Computing %d isovists in %d batches on %d workers", len(ordered), n_batches, workers)

    results = Parallel(n_jobs=workers, backend="loky")(
        delayed(_isovist_batch)(world, classified, batch, d, n) for batch in batches
    )
    sets = [s for batch in results for s in batch]
    return sorted(sets, key=lambda s: s.centroid.sort_key)


def write_set_dump(path: Path, sets: list[IsovistSets]) -> None:
    """Debug dump: one tab-separated line of set sizes per headspace. Not a stable format."""
    lines = ["#" + "\t".join(SET_DUMP_COLUMNS)]
    for s in sets:
        counts = s.counts()
        lines.append("\t".join(str(counts[c]) for c in SET_DUMP_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
