from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import logging
import math

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from voxshift.backend.isovist import Headspace
from voxshift.backend.metrics import FLOAT_FORMAT, IsovistMetrics
from voxshift.backend.pca import PCAModel, project
from voxshift.backend.sampling import sample_size, validate_fraction
from voxshift.errors import EmptyInputError

log = logging.getLogger(__name__)

DEFAULT_PAIR_FRACTION = 0.02
DEFAULT_MATCH_RADIUS = 0.0
DEFAULT_TOP_K = 5

SHIFT_COLUMNS = ("base_x", "base_y", "base_z", "gen_x", "gen_y", "gen_z", "pre_pc1", "pre_pc2",
                 "post_pc1", "post_pc2", "delta_pc1", "delta_pc2", "magnitude")

Record = tuple[Headspace, IsovistMetrics]


@dataclass(frozen=True)
class LocationPair:
    """A base-world location and the generated-world headspace matched to it."""
    base: Headspace
    gen: Headspace
    base_metrics: IsovistMetrics
    gen_metrics: IsovistMetrics


@dataclass(frozen=True)
class PairingResult:
    pairs: list[LocationPair]
    sampled: int
    dropped: int

    @property
    def pairing_rate(self) -> float:
        return len(self.pairs) / self.sampled if self.sampled else 0.0


@dataclass(frozen=True, eq=False)
class ShiftRecord:
    """Displacement of one paired location in the first two principal components."""
    pair: LocationPair
    pre: np.ndarray
    post: np.ndarray
    delta: np.ndarray
    magnitude: float

    @property
    def sort_key(self) -> tuple[float, int, int, int]:
        """Largest magnitude first, then base (y, z, x)."""
        return (-self.magnitude, *self.pair.base.sort_key)


@dataclass(frozen=True)
class ShiftSummary:
    count: int
    dropped: int
    mean_magnitude: float
    median_magnitude: float
    max_magnitude: float
    mean_delta: tuple[float, float]

    def as_dict(self) -> dict[str, float | int]:
        return {
            "count": self.count,
            "dropped": self.dropped,
            "mean_magnitude": self.mean_magnitude,
            "median_magnitude": self.median_magnitude,
            "max_magnitude": self.max_magnitude,
            "mean_delta_pc1": self.mean_delta[0],
            "mean_delta_pc2": self.mean_delta[1],
        }


def _dist2(a: tuple[int, int, int], b: tuple[int, int, int]) -> int:
    return sum((p - q) ** 2 for p, q in zip(a, b))


def sample_base(base: list[Record], fraction: float, seed: int) -> list[Record]:
    """Draw ceil(fraction * |base|) base records without replacement, returned in (y, z, x) order."""
    fraction = validate_fraction(fraction, "pairing fraction")
    base = sorted(base, key=lambda r: r[0].sort_key)
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(len(base), size=sample_size(fraction, len(base)), replace=False))
    return [base[i] for i in picks.tolist()]


def pair_locations(base: list[Record], gen: list[Record], fraction: float = DEFAULT_PAIR_FRACTION,
                   match_radius: float = DEFAULT_MATCH_RADIUS, seed: int = 0) -> PairingResult:
    """
    Sample base locations and match each to a generated-world headspace.
    A sample takes the unused generated headspace in its own (x, z) column with the smallest
    |dy| (ties: lower y). Failing that, and with a positive match radius, it takes the nearest
    unused generated headspace within the radius (ties: lower (y, z, x)). Samples are matched in
    ascending (y, z, x) order, so no generated headspace is used twice.
    Args:
        base: Base-world (headspace, metrics) records
        gen: Generated-world (headspace, metrics) records
        fraction: Share of base records to sample, in (0, 1]
        match_radius: Euclidean fallback radius in blocks, 0 disables the fallback
        seed: Seed of the sampling generator
    Returns:
        PairingResult: The pairs plus the sampled and dropped counts
    """
    if not base or not gen:
        raise EmptyInputError(f"Pairing needs records on both sides, got {len(base)} base and {len(gen)} generated")
    if match_radius < 0:
        raise ValueError(f"Match radius must be non-negative, got {match_radius}")

    sampled = sample_base(base, fraction, seed)
    gen = sorted(gen, key=lambda r: r[0].sort_key)

    columns: dict[tuple[int, int], list[int]] = {}
    for idx, (hs, _) in enumerate(gen):
        x, _, z = hs.head
        columns.setdefault((x, z), []).append(idx)
    tree = cKDTree(np.array([hs.head for hs, _ in gen], dtype=float)) if match_radius > 0 else None

    used: set[int] = set()
    pairs: list[LocationPair] = []
    for hs, metrics in sampled:
        x, y, z = hs.head
        same_column = [i for i in columns.get((x, z), []) if i not in used]
        if same_column:
            match = min(same_column, key=lambda i: (abs(gen[i][0].head[1] - y), gen[i][0].head[1]))
        elif tree is not None:
            nearby = [i for i in tree.query_ball_point(hs.head, r=match_radius)
                      if i not in used and _dist2(gen[i][0].head, hs.head) <= match_radius ** 2]
            if not nearby:
                continue
            match = min(nearby, key=lambda i: (_dist2(gen[i][0].head, hs.head), gen[i][0].sort_key))
        else:
            continue
        used.add(match)
        pairs.append(LocationPair(hs, gen[match][0], metrics, gen[match][1]))

    result = PairingResult(pairs, sampled=len(sampled), dropped=len(sampled) - len(pairs))
    log.info("Paired %d of %d sampled locations (%d dropped, rate %.3f)", len(pairs), result.sampled,
             result.dropped, result.pairing_rate)
    return result


def compute_shift(pairs: list[LocationPair], model: PCAModel) -> list[ShiftRecord]:
    """Project both sides of every pair onto PC-1/PC-2 and take the difference, keeping input order."""
    if model.k < 2:
        raise ValueError(f"Shift needs a model with at least 2 components, got {model.k}")
    records = []
    for pair in pairs:
        pre = project(model, pair.base_metrics.as_row())[:2]
        post = project(model, pair.gen_metrics.as_row())[:2]
        delta = post - pre
        magnitude = math.sqrt(float(delta[0] * delta[0] + delta[1] * delta[1]))
        records.append(ShiftRecord(pair, pre, post, delta, magnitude))
    return records


def top_k_shifts(records: list[ShiftRecord], k: int = DEFAULT_TOP_K) -> list[ShiftRecord]:
    """The k most shifted locations, largest first; ties go to the smaller base (y, z, x)."""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    return sorted(records, key=lambda r: r.sort_key)[:k]


def shift_summary(records: list[ShiftRecord], dropped: int = 0) -> ShiftSummary:
    """Aggregate magnitudes and the mean drift direction of a generative step."""
    if not records:
        raise EmptyInputError("Cannot summarize zero shift records")
    magnitudes = np.array([r.magnitude for r in records])
    mean_delta = np.mean([r.delta for r in records], axis=0)
    return ShiftSummary(
        count=len(records),
        dropped=dropped,
        mean_magnitude=float(magnitudes.mean()),
        median_magnitude=float(np.median(magnitudes)),
        max_magnitude=float(magnitudes.max()),
        mean_delta=(float(mean_delta[0]), float(mean_delta[1])),
    )


def shift_frame(records: list[ShiftRecord]) -> pd.DataFrame:
    """One row per record in the shift CSV layout."""
    rows = [(*r.pair.base.head, *r.pair.gen.head, *r.pre, *r.post, *r.delta, r.magnitude) for r in records]
    return pd.DataFrame(rows, columns=list(SHIFT_COLUMNS))


def write_shift_csv(path: Path, records: list[ShiftRecord]) -> None:
    shift_frame(records).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def format_summary(summary: ShiftSummary) -> str:
    """Human-readable `key: value` block."""
    return "\n".join(f"{key}: {value:.9g}" if isinstance(value, float) else f"{key}: {value}"
                     for key, value in summary.as_dict().items())


def write_summary(path: Path, summary: ShiftSummary) -> None:
    """Machine-readable `key=value` lines."""
    lines = [f"{key}={value:.9g}" if isinstance(value, float) else f"{key}={value}"
             for key, value in summary.as_dict().items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def format_top_k(records: list[ShiftRecord]) -> str:
    """Ranked table of base coordinates and magnitudes."""
    df = shift_frame(records)[["base_x", "base_y", "base_z", "gen_x", "gen_y", "gen_z", "magnitude"]]
    df.insert(0, "rank", range(1, len(df) + 1))
    return df.to_string(index=False, float_format=lambda v: f"{v:.6g}")
