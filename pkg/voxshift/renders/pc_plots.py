from __future__ import annotations

from io import BytesIO
from pathlib import Path
import logging
import math

import matplotlib as mpl
from matplotlib.figure import Figure
from matplotlib.lines import Line2D
import numpy as np

from voxshift.backend.shift import ShiftRecord, top_k_shifts
from voxshift.renders.plot_spec import (MARGIN, PlotSpec, Range, check_points, data_to_canvas, load_ramp,
                                        resolve_ranges)

log = logging.getLogger(__name__)

# SVG user units are points; a 72 dpi figure makes them equal to output pixels
DPI = 72
HIGHLIGHT_COLOR = "#ff0000"
ARROW_COLOR = "#808080"
MARKER_SIZE = 4.0
HEAD_SIZE = 5.0
LINE_WIDTH = 0.8

# byte-identical output across runs
SVG_RC = {
    "svg.hashsalt": "voxshift",
    "svg.fonttype": "none",
    "path.simplify": False,
    "path.snap": False,
}

# group ids written into the SVG, one per artist
ERA_GID = "era-points"
SHIFT_GID = "shift-{}"
HEAD_GID = "head-{}"
TOP_SHIFT_GID = "top-shift-{}"
TOP_HEAD_GID = "top-head-{}"


def _new_axes(spec: PlotSpec, x_range: Range, y_range: Range) -> tuple[Figure, object]:
    fig = Figure(figsize=(spec.width / DPI, spec.height / DPI), dpi=DPI)
    ax = fig.add_axes((MARGIN / spec.width, MARGIN / spec.height,
                       1 - 2 * MARGIN / spec.width, 1 - 2 * MARGIN / spec.height))
    ax.set_xlim(*x_range)
    ax.set_ylim(*y_range)
    ax.set_xlabel("PC-1")
    ax.set_ylabel("PC-2")
    if spec.title:
        ax.set_title(spec.title)
    return fig, ax


def _svg_bytes(fig: Figure) -> bytes:
    buffer = BytesIO()
    with mpl.rc_context(SVG_RC):
        fig.savefig(buffer, format="svg", metadata={"Date": None})
    return buffer.getvalue()


def render_era_scatter(points: np.ndarray, spec: PlotSpec) -> bytes:
    """
    Scatter PC-1 against PC-2, one marker per location.
    Args:
        points: (n, 2) projected locations
        spec: Canvas size, ranges and colour ramp
    Returns:
        bytes: A standalone SVG document; marker centres are the `use` elements of group `era-points`
    """
    points = check_points(points)
    x_range, y_range = resolve_ranges(spec, points)
    fig, ax = _new_axes(spec, x_range, y_range)
    colour = load_ramp(spec.ramp)[64] / 255.0
    ax.add_line(Line2D(points[:, 0], points[:, 1], linestyle="none", marker="o", markersize=MARKER_SIZE,
                       markerfacecolor=colour, markeredgewidth=0, gid=ERA_GID))
    log.debug("ERA scatter of %d points over x %s, y %s", len(points), x_range, y_range)
    return _svg_bytes(fig)


def _head_rotation(pre: np.ndarray, post: np.ndarray) -> float:
    """Degrees turning an upward triangle onto the canvas direction pre -> post."""
    dx, dy = post[0] - pre[0], pre[1] - post[1]  # canvas y grows downwards
    if dx == 0 and dy == 0:
        return 0.0
    return math.degrees(math.atan2(dy, dx)) - 90.0


def _draw_arrow(ax: object, pre: np.ndarray, post: np.ndarray, angle: float, colour: str, zorder: float,
                line_gid: str, head_gid: str) -> None:
    ax.add_line(Line2D([pre[0], post[0]], [pre[1], post[1]], color=colour, linewidth=LINE_WIDTH,
                       zorder=zorder, gid=line_gid))
    ax.add_line(Line2D([post[0]], [post[1]], linestyle="none", marker=(3, 0, angle), markersize=HEAD_SIZE,
                       color=colour, markeredgewidth=0, zorder=zorder, gid=head_gid))


def render_flow_plot(records: list[ShiftRecord], spec: PlotSpec) -> bytes:
    """
    Draw one arrow per shift record from its pre to its post point. The `spec.highlight_k`
    largest shifts are drawn last in the highlight colour.
    Returns:
        bytes: A standalone SVG document; arrow `i` is group `shift-i` (shaft) plus `head-i`,
        highlighted arrows are `top-shift-r` / `top-head-r` by rank r starting at 1
    """
    if not records:
        raise ValueError("Cannot plot zero shift records")
    pre = check_points([r.pre for r in records], "pre points")
    post = check_points([r.post for r in records], "post points")
    x_range, y_range = resolve_ranges(spec, np.vstack([pre, post]))
    fig, ax = _new_axes(spec, x_range, y_range)
    pre_c = data_to_canvas(pre, x_range, y_range, spec)
    post_c = data_to_canvas(post, x_range, y_range, spec)

    top = top_k_shifts(records, spec.highlight_k) if spec.highlight_k else []
    ranks = {id(r): rank for rank, r in enumerate(top, start=1)}
    for i, r in enumerate(records):
        if id(r) in ranks:
            continue
        _draw_arrow(ax, pre[i], post[i], _head_rotation(pre_c[i], post_c[i]), ARROW_COLOR, 2.0,
                    SHIFT_GID.format(i), HEAD_GID.format(i))

    index = {id(r): i for i, r in enumerate(records)}
    for rank, r in enumerate(top, start=1):
        i = index[id(r)]
        _draw_arrow(ax, pre[i], post[i], _head_rotation(pre_c[i], post_c[i]), HIGHLIGHT_COLOR, 3.0,
                    TOP_SHIFT_GID.format(rank), TOP_HEAD_GID.format(rank))
    return _svg_bytes(fig)


def write_svg(path: Path, document: bytes) -> None:
    Path(path).write_bytes(document)
    log.info("Wrote %s", path)
