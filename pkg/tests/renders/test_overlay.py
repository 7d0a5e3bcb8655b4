from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from voxshift.backend.isovist import Headspace, enumerate_headspaces
from voxshift.backend.toy_generator import ToyGeneratorParams, apply_toy_generator, plan_structures
from voxshift.backend.world import generate_flat_world
from voxshift.renders.overlay import (HIGHLIGHT_COLOR, NO_DATA_COLOR, column_values, ground_threshold, render_overlay,
                                     write_ppm)
from voxshift.renders.plot_spec import PlotSpec, load_ramp

# --- Fixtures and Helpers ---

@pytest.fixture
def world():
    """4 wide, 3 deep, flat ground one block thick."""
    return generate_flat_world((4, 6, 3), 1, "stone", seed=0)


def pc(value: float) -> np.ndarray:
    return np.array([value, 0.0])

# --- Tests for ground_threshold ---

def test_ground_threshold_is_the_modal_level():
    heads = [Headspace((x, 2, 0)) for x in range(5)] + [Headspace((0, 4, 1)), Headspace((1, 4, 1))]
    assert ground_threshold(heads) == 2


def test_ground_threshold_ties_go_low():
    heads = [Headspace((0, 5, 0)), Headspace((0, 3, 0)), Headspace((1, 5, 0)), Headspace((1, 3, 0))]
    assert ground_threshold(heads) == 3
    with pytest.raises(ValueError):
        ground_threshold([])

# --- Tests for column_values ---

def test_column_mean_and_highest(world):
    projected = [(Headspace((1, 2, 1)), 2.0), (Headspace((1, 4, 1)), 4.0), (Headspace((3, 2, 0)), -1.0)]
    mean = column_values(world, projected, threshold=2)
    assert mean.shape == (3, 4)
    assert mean[1, 1] == 3.0
    assert mean[0, 3] == -1.0
    assert np.isnan(mean[2, 2])
    assert column_values(world, projected, threshold=2, column_agg="highest")[1, 1] == 4.0
    assert column_values(world, projected, threshold=3)[1, 1] == 4.0
    assert np.isnan(column_values(world, projected, threshold=3)[0, 3])


def test_column_values_validation(world):
    with pytest.raises(ValueError, match="threshold"):
        column_values(world, [], threshold=6)
    with pytest.raises(ValueError, match="aggregate"):
        column_values(world, [], threshold=2, column_agg="median")
    with pytest.raises(ValueError, match="outside"):
        column_values(world, [(Headspace((9, 2, 0)), 1.0)], threshold=2)

# --- Tests for render_overlay ---

def test_uniform_values_use_the_ramp_midpoint(world):
    projected = [(Headspace((x, 2, z)), pc(0.7)) for x in range(4) for z in range(3)]
    image = render_overlay(world, projected, 2, PlotSpec())
    assert image.size == (4, 3)
    assert image.mode == "RGB"
    expected = tuple(int(v) for v in load_ramp("viridis")[128])
    assert set(image.getdata()) == {expected}


def test_missing_columns_are_black(world):
    projected = [(Headspace((0, 2, 0)), pc(-2.0)), (Headspace((3, 2, 2)), pc(5.0))]
    image = render_overlay(world, projected, 2, PlotSpec())
    ramp = load_ramp("viridis")
    assert image.getpixel((0, 0)) == tuple(int(v) for v in ramp[0])
    assert image.getpixel((3, 2)) == tuple(int(v) for v in ramp[255])
    assert image.getpixel((1, 1)) == NO_DATA_COLOR


def test_overlay_with_no_data_is_black(world):
    image = render_overlay(world, [(Headspace((0, 2, 0)), pc(1.0))], 4, PlotSpec())
    assert set(image.getdata()) == {NO_DATA_COLOR}


def test_ppm_reads_back(tmp_path: Path, world):
    projected = [(Headspace((x, 2, z)), pc(float(x + z))) for x in range(4) for z in range(3)]
    image = render_overlay(world, projected, 2, PlotSpec(), column_agg="highest")
    path = tmp_path / "gen1_pc1.ppm"
    write_ppm(path, image)
    assert path.read_bytes()[:2] == b"P6"
    with Image.open(path) as again:
        assert again.size == (4, 3)
        assert np.array_equal(np.asarray(again), np.asarray(image))


def test_highlighted_columns_are_marked(world):
    projected = [(Headspace((x, 2, z)), pc(float(x))) for x in range(4) for z in range(3)]
    image = render_overlay(world, projected, 2, PlotSpec(), highlights=[(2, 2, 1), (0, 3, 2)])
    assert image.getpixel((2, 1)) == HIGHLIGHT_COLOR
    assert image.getpixel((0, 2)) == HIGHLIGHT_COLOR
    assert image.getpixel((1, 1)) != HIGHLIGHT_COLOR
    with pytest.raises(ValueError, match="outside"):
        render_overlay(world, projected, 2, PlotSpec(), highlights=[(4, 2, 0)])


def test_toy_structures_show_on_the_overlay(tmp_path: Path, classification):
    # above the plain's head level only the wall tops hold headspaces
    base = generate_flat_world((20, 12, 20), 2, "grass", seed=0)
    params = ToyGeneratorParams(structure_count=3, footprint=(4, 6), wall_height=(2, 3), seed=5)
    gen = apply_toy_generator(base, params)
    footprints = np.zeros((20, 20), dtype=bool)
    for s in plan_structures(base, params):
        footprints[s.z0:s.z0 + s.depth, s.x0:s.x0 + s.width] = True

    pixels = []
    for name, w in (("base", base), ("gen", gen)):
        projected = [(hs, pc(float(hs.head[0] + hs.head[2]))) for hs in enumerate_headspaces(w, classification)]
        path = tmp_path / f"{name}_pc1.ppm"
        write_ppm(path, render_overlay(w, projected, 4, PlotSpec()))
        with Image.open(path) as again:
            pixels.append(np.asarray(again).copy())
    plain, built = pixels

    assert np.all(plain == 0)
    lit = np.any(built != 0, axis=2)
    assert lit.any()
    assert not lit[~footprints].any()
    assert np.array_equal(np.any(plain != built, axis=2), lit)
