from __future__ import annotations

from dataclasses import astuple, dataclass
from pathlib import Path
import logging

import numpy as np
import pandas as pd

from voxshift.backend.isovist import Headspace, IsovistSets, coord_set
from voxshift.errors import EmptyInputError

log = logging.getLogger(__name__)

# Define constants for column names
X, Y, Z = "x", "y", "z"
AREA = "area"
PERIMETER = "perimeter"
DIVERSITY = "diversity"
VAR_RADIALS = "var_radials"
MEAN_RADIALS = "mean_radials"
ROUNDNESS = "roundness"
OPENNESS = "openness"
CLUTTER = "clutter"
REACHABILITY = "reachability"
OCCLUSIVITY = "occlusivity"
DRIFT_LENGTH = "drift_length"
VISTA_LENGTH = "vista_length"
REAL_PERIMETER_SIZE = "real_perimeter_size"
DEGENERATE = "degenerate"

METRIC_COLUMNS = (AREA, PERIMETER, DIVERSITY, VAR_RADIALS, MEAN_RADIALS, ROUNDNESS, OPENNESS, CLUTTER,
                  REACHABILITY, OCCLUSIVITY, DRIFT_LENGTH, VISTA_LENGTH, REAL_PERIMETER_SIZE)
CSV_COLUMNS = (X, Y, Z, *METRIC_COLUMNS, DEGENERATE)
COUNT_COLUMNS = (AREA, PERIMETER, DIVERSITY, REACHABILITY, REAL_PERIMETER_SIZE)
FLOAT_FORMAT = "%.9g"


@dataclass(frozen=True)
class IsovistMetrics:
    """The 13 isovist metrics of one location, in table column order."""
    area: int
    perimeter: int
    diversity: int
    var_radials: float
    mean_radials: float
    roundness: float
    openness: float
    clutter: float
    reachability: int
    occlusivity: float
    drift_length: float
    vista_length: float
    real_perimeter_size: int

    @property
    def degenerate(self) -> bool:
        """A ratio or radial statistic fell back to 0 on an empty denominator."""
        return min(self.area, self.perimeter, self.real_perimeter_size, self.reachability) == 0

    def as_row(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else 0.0


def compute_metrics(sets: IsovistSets) -> IsovistMetrics:
    """
    Reduce the raw isovist sets to the 13 metrics. Ratios with an empty denominator are 0,
    and so are the radial statistics of an isovist without radials.
    """
    area = len(sets.visible_heads)
    perimeter = len(sets.perimeter)
    real_perimeter = int(sets.real_mask.sum())
    reachability = len(sets.reachable)
    support = coord_set(sets.support_blocks)

    radials = sets.all_radials
    if radials.size:
        mean_radials = float(radials.mean())
        var_radials = float(radials.var())
        vista = float(radials.max())
        head = np.array(sets.centroid.head, dtype=float)
        drift = float(np.linalg.norm(sets.all_endpoints.mean(axis=0) - head))
    else:
        mean_radials = var_radials = vista = drift = 0.0

    return IsovistMetrics(
        area=area,
        perimeter=perimeter,
        diversity=len(np.unique(sets.perimeter_kinds)),
        var_radials=var_radials,
        mean_radials=mean_radials,
        roundness=_ratio(area, perimeter),
        openness=_ratio(area, real_perimeter),
        clutter=_ratio(len(support & coord_set(sets.perimeter)), area),
        reachability=reachability,
        occlusivity=_ratio(len(coord_set(sets.reachable) & support), reachability),
        drift_length=drift,
        vista_length=vista,
        real_perimeter_size=real_perimeter,
    )


def metrics_matrix(records: list[tuple[Headspace, IsovistMetrics]]) -> tuple[np.ndarray, list[Headspace]]:
    """
    Stack metrics into an (n, 13) matrix ordered by centroid (y, z, x).
    Returns:
        The matrix and the headspace of each row.
    """
    if not records:
        raise EmptyInputError("Cannot build a metrics matrix from zero records")
    ordered = sorted(records, key=lambda r: r[0].sort_key)
    matrix = np.vstack([m.as_row() for _, m in ordered])
    return matrix, [hs for hs, _ in ordered]


class MetricsTable:
    """
    Per-headspace metrics of one world, backed by a DataFrame with the CSV column layout.
    """

    def __init__(self, df: pd.DataFrame, name: str = "") -> None:
        missing = [c for c in CSV_COLUMNS if c not in df.columns and c != DEGENERATE]
        if missing:
            raise ValueError(f"Metrics table {name!r} lacks columns {missing}")
        self.name = name
        self.df = df.sort_values(by=[Y, Z, X], kind="stable").reset_index(drop=True)
        if DEGENERATE not in self.df.columns:
            self.df[DEGENERATE] = 0

    @classmethod
    def from_records(cls, records: list[tuple[Headspace, IsovistMetrics]], name: str = "") -> MetricsTable:
        """Build the table from computed metrics."""
        matrix, heads = metrics_matrix(records)
        df = pd.DataFrame(matrix, columns=list(METRIC_COLUMNS))
        df.insert(0, Z, [h.head[2] for h in heads])
        df.insert(0, Y, [h.head[1] for h in heads])
        df.insert(0, X, [h.head[0] for h in heads])
        for col in COUNT_COLUMNS:
            df[col] = df[col].astype(np.int64)
        df[DEGENERATE] = [int(m.degenerate) for _, m in sorted(records, key=lambda r: r[0].sort_key)]
        return cls(df, name)

    @classmethod
    def from_csv(cls, csv_file: Path) -> MetricsTable:
        """Load a metrics CSV written by `save_csv`."""
        try:
            df = pd.read_csv(csv_file)
        except FileNotFoundError as f:
            raise FileNotFoundError(f"Metrics file not found at: {csv_file}") from f
        return cls(df, Path(csv_file).stem)

    def save_csv(self, csv_file: Path) -> None:
        """Write the table with 9 significant digits per float."""
        self.df[list(CSV_COLUMNS)].to_csv(csv_file, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        log.info("Wrote %d metric rows to %s", len(self.df), csv_file)

    def __len__(self) -> int:
        return len(self.df)

    @property
    def matrix(self) -> np.ndarray:
        """The (n, 13) metric matrix in table row order."""
        return self.df[list(METRIC_COLUMNS)].to_numpy(dtype=float)

    @property
    def headspaces(self) -> list[Headspace]:
        return [Headspace((int(x), int(y), int(z))) for x, y, z in self.df[[X, Y, Z]].itertuples(index=False)]

    def records(self) -> list[tuple[Headspace, IsovistMetrics]]:
        """Rows as (headspace, metrics) pairs."""
        out = []
        for hs, row in zip(self.headspaces, self.df[list(METRIC_COLUMNS)].itertuples(index=False)):
            values = dict(zip(METRIC_COLUMNS, row))
            for col in COUNT_COLUMNS:
                values[col] = int(values[col])
            out.append((hs, IsovistMetrics(**values)))
        return out
