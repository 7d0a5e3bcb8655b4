from __future__ import annotations

from collections import Counter
from pathlib import Path
from typing import Iterable
import logging

import numpy as np
from PIL import Image

from voxshift.backend.isovist import Headspace
from voxshift.backend.world import Coord, VoxelWorld
from voxshift.renders.plot_spec import RAMP_SIZE, PlotSpec, load_ramp

log = logging.getLogger(__name__)

NO_DATA_COLOR = (0, 0, 0)
HIGHLIGHT_COLOR = (255, 0, 0)
COLUMN_AGGREGATES = ("mean", "highest")


def ground_threshold(headspaces: list[Headspace]) -> int:
    """The most common head y; ties go to the lower level."""
    if not headspaces:
        raise ValueError("Cannot derive a ground threshold from zero headspaces")
    counts = Counter(hs.head[1] for hs in headspaces)
    return min(counts, key=lambda y: (-counts[y], y))


def column_values(world: VoxelWorld, projected: list[tuple[Headspace, float]], threshold: int,
                  column_agg: str = "mean") -> np.ndarray:
    """
    Aggregate PC-1 per (x, z) column over the headspaces with head y >= threshold.
    Args:
        world: World the headspaces belong to
        projected: (headspace, PC-1) pairs
        threshold: Lowest head y that contributes
        column_agg: "mean" of every qualifying value, or the value of the "highest" headspace
    Returns:
        np.ndarray: (sz, sx) values, NaN where no headspace qualifies
    """
    sx, sy, sz = world.dims
    ox, oy, oz = world.origin
    if not oy <= threshold < oy + sy:
        raise ValueError(f"Ground threshold {threshold} lies outside the world's y range [{oy}, {oy + sy})")
    if column_agg not in COLUMN_AGGREGATES:
        raise ValueError(f"Column aggregate must be one of {COLUMN_AGGREGATES}, got {column_agg!r}")

    total = np.zeros((sz, sx))
    count = np.zeros((sz, sx), dtype=np.int64)
    highest = np.full((sz, sx), -1, dtype=np.int64)
    top_value = np.full((sz, sx), np.nan)
    for hs, value in projected:
        if not world.contains(hs.head):
            raise ValueError(f"Headspace {hs.head} lies outside the world")
        x, y, z = hs.head
        if y < threshold:
            continue
        row, col = z - oz, x - ox
        total[row, col] += value
        count[row, col] += 1
        if y > highest[row, col]:
            highest[row, col] = y
            top_value[row, col] = value

    if column_agg == "highest":
        return top_value
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(count > 0, total / np.maximum(count, 1), np.nan)


def render_overlay(world: VoxelWorld, projected: list[tuple[Headspace, np.ndarray]], threshold: int,
                   spec: PlotSpec, column_agg: str = "mean", highlights: Iterable[Coord] = ()) -> Image.Image:
    """
    Paint one pixel per (x, z) column with its aggregated PC-1 on the colour ramp, scaled
    between the smallest and largest column value. Row is z - oz, column is x - ox.
    Columns of the `highlights` coordinates (the most shifted locations) are painted
    HIGHLIGHT_COLOR on top.
    """
    values = column_values(world, [(hs, float(np.asarray(pc)[0])) for hs, pc in projected], threshold,
                           column_agg)
    ramp = load_ramp(spec.ramp)
    has_data = ~np.isnan(values)
    pixels = np.empty((*values.shape, 3), dtype=np.uint8)
    pixels[:] = NO_DATA_COLOR
    if has_data.any():
        lo, hi = float(values[has_data].min()), float(values[has_data].max())
        if hi > lo:
            scaled = (values[has_data] - lo) / (hi - lo)
        else:
            scaled = np.full(int(has_data.sum()), 0.5)
        pixels[has_data] = ramp[np.rint(scaled * (RAMP_SIZE - 1)).astype(int)]
    ox, _, oz = world.origin
    for coord in highlights:
        if not world.contains(coord):
            raise ValueError(f"Highlighted location {coord} lies outside the world")
        pixels[coord[2] - oz, coord[0] - ox] = HIGHLIGHT_COLOR
    log.debug("Overlay: %d of %d columns hold data", int(has_data.sum()), values.size)
    return Image.fromarray(pixels)


def write_ppm(path: Path, image: Image.Image) -> None:
    """Save as binary PPM (P6)."""
    image.save(path, format="PPM")
    log.info("Wrote %s", path)
