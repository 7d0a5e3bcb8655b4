from pathlib import Path
import math

import numpy as np
import pandas as pd
import pytest

from voxshift.backend.isovist import Headspace
from voxshift.backend.metrics import IsovistMetrics
from voxshift.backend.pca import PCAModel, StandardizationParams
from voxshift.backend.shift import (SHIFT_COLUMNS, LocationPair, compute_shift, format_summary, format_top_k,
                                    pair_locations, sample_base, shift_summary, top_k_shifts, write_shift_csv,
                                    write_summary)
from voxshift.errors import EmptyInputError

# --- Fixtures and Helpers ---

def metrics(area: int = 1, perimeter: int = 1) -> IsovistMetrics:
    return IsovistMetrics(area, perimeter, 1, 0.0, 1.0, 1.0, 1.0, 0.0, 1, 1.0, 0.0, 1.0, perimeter)


def records(heads, area: int = 1, perimeter: int = 1) -> list:
    return [(Headspace(tuple(h)), metrics(area, perimeter)) for h in heads]


@pytest.fixture
def identity_model() -> PCAModel:
    """Unit scaling with PC-1 on area and PC-2 on perimeter."""
    loadings = np.zeros((2, 13))
    loadings[0, 0] = loadings[1, 1] = 1.0
    return PCAModel(StandardizationParams(np.zeros(13), np.ones(13)), loadings, np.array([0.6, 0.4]))


def make_pair(base, gen, pre=(1, 1), post=(1, 1)) -> LocationPair:
    return LocationPair(Headspace(base), Headspace(gen), metrics(*pre), metrics(*post))


def greedy_oracle(base_heads, gen_heads, radius):
    """Pair sorted base heads one at a time by scanning every generated head."""
    free = set(gen_heads)
    result = {}
    for b in sorted(base_heads, key=lambda h: (h[1], h[2], h[0])):
        column = [g for g in free if (g[0], g[2]) == (b[0], b[2])]
        if column:
            match = min(column, key=lambda g: (abs(g[1] - b[1]), g[1]))
        else:
            near = [g for g in free if sum((p - q) ** 2 for p, q in zip(g, b)) <= radius ** 2]
            if not near:
                continue
            match = min(near, key=lambda g: (sum((p - q) ** 2 for p, q in zip(g, b)), g[1], g[2], g[0]))
        free.remove(match)
        result[b] = match
    return result

# --- Tests for pair_locations ---

def test_identical_worlds_pair_every_location_with_itself():
    heads = [(x, 2, z) for x in range(6) for z in range(5)]
    result = pair_locations(records(heads), records(heads), fraction=1.0)
    assert result.sampled == 30
    assert result.dropped == 0
    assert result.pairing_rate == 1.0
    assert all(p.base == p.gen for p in result.pairs)
    assert [p.base.sort_key for p in result.pairs] == sorted(p.base.sort_key for p in result.pairs)


def test_missing_column_is_dropped():
    base = records([(0, 2, 0), (1, 2, 0), (2, 2, 0)])
    gen = records([(0, 2, 0), (2, 5, 0)])
    result = pair_locations(base, gen, fraction=1.0)
    assert result.dropped == 1
    assert [(p.base.head, p.gen.head) for p in result.pairs] == [((0, 2, 0), (0, 2, 0)), ((2, 2, 0), (2, 5, 0))]


def test_same_column_prefers_small_dy_then_lower_y():
    base = records([(0, 5, 0)])
    gen = records([(0, 6, 0), (0, 4, 0), (0, 9, 0)])
    assert pair_locations(base, gen, fraction=1.0).pairs[0].gen == Headspace((0, 4, 0))


def test_generated_headspaces_are_used_once():
    base = records([(0, 2, 0), (0, 6, 0)])
    gen = records([(0, 3, 0)])
    result = pair_locations(base, gen, fraction=1.0)
    assert [p.base.head for p in result.pairs] == [(0, 2, 0)]
    assert result.dropped == 1


def test_radius_fallback():
    base = records([(0, 2, 0)])
    gen = records([(2, 2, 0), (0, 2, 3)])
    assert pair_locations(base, gen, fraction=1.0, match_radius=0.0).dropped == 1
    assert pair_locations(base, gen, fraction=1.0, match_radius=1.9).dropped == 1
    assert pair_locations(base, gen, fraction=1.0, match_radius=2.1).pairs[0].gen == Headspace((2, 2, 0))


def test_radius_fallback_matches_greedy_oracle():
    rng = np.random.default_rng(12)
    for _ in range(20):
        base_heads = {tuple(int(v) for v in rng.integers(0, 8, 3)) for _ in range(25)}
        gen_heads = {tuple(int(v) for v in rng.integers(0, 8, 3)) for _ in range(25)}
        radius = float(rng.choice([0.0, 1.5, 2.5]))
        result = pair_locations(records(base_heads), records(gen_heads), fraction=1.0, match_radius=radius)
        assert {p.base.head: p.gen.head for p in result.pairs} == greedy_oracle(base_heads, gen_heads, radius)
        gens = [p.gen for p in result.pairs]
        assert len(gens) == len(set(gens))


def test_pairs_and_drops_cover_the_sample():
    base = records([(x, 2, z) for x in range(10) for z in range(5)])
    gen = records([(x, 3, z) for x in range(0, 10, 2) for z in range(5)])
    result = pair_locations(base, gen, fraction=0.07, seed=3)
    assert result.sampled == math.ceil(0.07 * 50)
    assert len(result.pairs) + result.dropped == result.sampled


def test_sample_is_deterministic():
    base = records([(x, 2, z) for x in range(10) for z in range(10)])
    a = sample_base(base, 0.2, seed=5)
    b = sample_base(list(reversed(base)), 0.2, seed=5)
    assert [hs for hs, _ in a] == [hs for hs, _ in b]
    assert len(a) == 20


def test_pairing_rejects_empty_sides():
    with pytest.raises(EmptyInputError):
        pair_locations([], records([(0, 2, 0)]))
    with pytest.raises(EmptyInputError):
        pair_locations(records([(0, 2, 0)]), [])
    with pytest.raises(ValueError, match="radius"):
        pair_locations(records([(0, 2, 0)]), records([(0, 2, 0)]), match_radius=-1.0)

# --- Tests for compute_shift ---

def test_unchanged_location_has_zero_shift(identity_model):
    (record,) = compute_shift([make_pair((0, 2, 0), (0, 2, 0), (3, 7), (3, 7))], identity_model)
    assert np.array_equal(record.delta, np.zeros(2))
    assert record.magnitude == 0.0


def test_shift_is_post_minus_pre(identity_model):
    (record,) = compute_shift([make_pair((0, 2, 0), (0, 3, 0), (1, 1), (4, 5))], identity_model)
    np.testing.assert_allclose(record.pre, [1, 1])
    np.testing.assert_allclose(record.post, [4, 5])
    np.testing.assert_allclose(record.delta, [3, 4])
    assert record.magnitude == pytest.approx(5.0)


def test_swapping_sides_negates_the_shift(identity_model):
    forward = compute_shift([make_pair((0, 2, 0), (0, 2, 0), (2, 9), (6, 1))], identity_model)[0]
    backward = compute_shift([make_pair((0, 2, 0), (0, 2, 0), (6, 1), (2, 9))], identity_model)[0]
    np.testing.assert_allclose(forward.delta, -backward.delta)
    assert forward.magnitude == backward.magnitude


def test_shift_needs_two_components(identity_model):
    model = PCAModel(identity_model.params, identity_model.loadings[:1], np.array([1.0]))
    with pytest.raises(ValueError, match="at least 2 components"):
        compute_shift([make_pair((0, 2, 0), (0, 2, 0))], model)

# --- Tests for top_k_shifts and shift_summary ---

def test_top_k_breaks_ties_by_base_position(identity_model):
    pairs = [make_pair((5, 2, 0), (5, 2, 0), (1, 1), (2, 1)),
             make_pair((1, 2, 0), (1, 2, 0), (1, 1), (2, 1)),
             make_pair((0, 4, 0), (0, 4, 0), (1, 1), (1, 9)),
             make_pair((0, 2, 3), (0, 2, 3), (1, 1), (1, 1))]
    top = top_k_shifts(compute_shift(pairs, identity_model), 3)
    assert [r.pair.base.head for r in top] == [(0, 4, 0), (1, 2, 0), (5, 2, 0)]


def test_top_k_matches_sorting_oracle(identity_model):
    rng = np.random.default_rng(8)
    pairs = [make_pair((int(x), 2, int(z)), (int(x), 2, int(z)), (1, 1), tuple(int(v) for v in rng.integers(0, 4, 2)))
             for x in range(6) for z in range(6)]
    shifts = compute_shift(pairs, identity_model)
    expected = sorted(shifts, key=lambda r: (-r.magnitude, r.pair.base.head[1], r.pair.base.head[2], r.pair.base.head[0]))
    assert top_k_shifts(shifts, 5) == expected[:5]
    assert len(top_k_shifts(shifts, 100)) == 36
    with pytest.raises(ValueError):
        top_k_shifts(shifts, 0)


def test_summary_of_opposite_shifts(identity_model):
    pairs = [make_pair((0, 2, 0), (0, 2, 0), (2, 2), (3, 2)), make_pair((1, 2, 0), (1, 2, 0), (2, 2), (1, 2))]
    summary = shift_summary(compute_shift(pairs, identity_model), dropped=4)
    assert summary.count == 2
    assert summary.dropped == 4
    assert summary.mean_delta == (0.0, 0.0)
    assert (summary.mean_magnitude, summary.median_magnitude, summary.max_magnitude) == (1.0, 1.0, 1.0)


def test_summary_rejects_no_records():
    with pytest.raises(EmptyInputError):
        shift_summary([])

# --- Tests for the shift outputs ---

def test_shift_csv(tmp_path: Path, identity_model):
    pairs = [make_pair((0, 2, 0), (0, 3, 0), (1, 1), (4, 5)), make_pair((1, 2, 0), (1, 2, 0))]
    path = tmp_path / "gen1_shift.csv"
    write_shift_csv(path, compute_shift(pairs, identity_model))
    assert path.read_text(encoding="utf-8").splitlines()[0] == ",".join(SHIFT_COLUMNS)
    df = pd.read_csv(path)
    assert len(df) == 2
    assert df.loc[0, "gen_y"] == 3
    assert df.loc[0, "magnitude"] == pytest.approx(5.0)
    assert df.loc[1, "magnitude"] == 0.0


def test_summary_files(tmp_path: Path, identity_model):
    summary = shift_summary(compute_shift([make_pair((0, 2, 0), (0, 2, 0), (1, 1), (4, 5))], identity_model))
    path = tmp_path / "gen1_summary.txt"
    write_summary(path, summary)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "count=1"
    assert "mean_magnitude=5" in lines
    assert "mean_delta_pc2=4" in lines
    assert "max_magnitude: 5" in format_summary(summary)


def test_top_k_table(identity_model):
    shifts = compute_shift([make_pair((7, 2, 1), (7, 2, 1), (1, 1), (4, 5))], identity_model)
    table = format_top_k(top_k_shifts(shifts))
    header, row = table.splitlines()
    assert header.split()[:4] == ["rank", "base_x", "base_y", "base_z"]
    assert row.split()[:4] == ["1", "7", "2", "1"]
