from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
import logging

import numpy as np
import pandas as pd

from voxshift.backend.metrics import FLOAT_FORMAT, METRIC_COLUMNS
from voxshift.errors import EmptyInputError, NonFiniteInputError

log = logging.getLogger(__name__)

JACOBI_TOLERANCE = 1.0e-12
MAX_SWEEPS = 100
SKIP_AFTER_SWEEPS = 4
MODEL_FORMAT = "%.12g"
EXPLAINED_VARIANCE_ROW = "explained_variance_ratio"


@dataclass(frozen=True, eq=False)
class StandardizationParams:
    """Column means and scales; constant columns get scale 1."""
    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self) -> None:
        if np.any(self.scales <= 0):
            raise ValueError(f"Scales must be strictly positive, got {self.scales}")

    def apply(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self.means) / self.scales


@dataclass(frozen=True, eq=False)
class PCAModel:
    """
    Top-k principal axes of the standardized metrics. `loadings` is (k, m), one unit row per
    component; the largest-magnitude entry of each row is positive.
    """
    params: StandardizationParams
    loadings: np.ndarray
    explained_variance_ratio: np.ndarray
    explained_variance: np.ndarray | None = field(default=None)

    @property
    def k(self) -> int:
        return len(self.loadings)


def _check_finite(values: np.ndarray, what: str) -> None:
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        raise NonFiniteInputError(f"Non-finite value in {what}", tuple(int(i) for i in bad[0]))


def jacobi_eigh(a: np.ndarray, tol: float = JACOBI_TOLERANCE) -> tuple[np.ndarray, np.ndarray]:
    """
    Cyclic Jacobi eigensolver for a symmetric matrix.
    Sweeps the upper triangle row by row, rotating every nonzero (p, q) entry to zero, until
    the off-diagonal Frobenius norm drops under tol (relative to the matrix norm when that
    exceeds 1). After the first few sweeps an entry too small to move either diagonal value
    is set to zero instead of rotated.
    Args:
        a: Symmetric (m, m) matrix
        tol: Convergence threshold
    Returns:
        The eigenvalues and a matrix whose columns are the matching unit eigenvectors.
    Raises:
        np.linalg.LinAlgError: If MAX_SWEEPS sweeps do not converge.
    """
    a = np.array(a, dtype=float, copy=True)
    m = len(a)
    v = np.identity(m)
    scale = max(1.0, float(np.linalg.norm(a)))
    for sweep in range(MAX_SWEEPS):
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            return np.diag(a).copy(), v
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                g = 100.0 * abs(apq)
                negligible = abs(a[p, p]) + g == abs(a[p, p]) and abs(a[q, q]) + g == abs(a[q, q])
                if sweep >= SKIP_AFTER_SWEEPS and negligible:
                    a[p, q] = a[q, p] = 0.0
                    continue
                h = a[q, q] - a[p, p]
                if abs(h) + g == abs(h):
                    t = apq / h
                else:
                    theta = h / (2.0 * apq)
                    t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c

                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0

                vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
    raise np.linalg.LinAlgError(f"Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps")


def standardize(matrix: np.ndarray) -> StandardizationParams:
    """Column means and sample standard deviations (ddof=1); constant columns keep scale 1."""
    constant = np.all(matrix == matrix[0], axis=0)
    means = np.where(constant, matrix[0], matrix.mean(axis=0))
    scales = np.where(constant, 1.0, matrix.std(axis=0, ddof=1))
    return StandardizationParams(means, scales)


def fit_pca(matrix: np.ndarray, k: int) -> PCAModel:
    """
    Fit the top-k principal components of a metric matrix.
    Args:
        matrix: (n, m) metric rows, n >= 2
        k: Number of components, 1 <= k <= m
    Returns:
        PCAModel: Loadings sorted by decreasing eigenvalue, sign convention applied
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or len(matrix) < 2:
        raise EmptyInputError(f"PCA needs at least 2 rows, got shape {matrix.shape}")
    n, m = matrix.shape
    if not 1 <= k <= m:
        raise ValueError(f"Component count must lie in [1, {m}], got {k}")
    _check_finite(matrix, "metric matrix")

    params = standardize(matrix)
    z = params.apply(matrix)
    cov = z.T @ z / (n - 1)
    cov = (cov + cov.T) / 2.0

    eigenvalues, eigenvectors = jacobi_eigh(cov)
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    loadings = eigenvectors[:, order].T.copy()
    for row in loadings:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0

    total = float(np.clip(eigenvalues, 0.0, None).sum())
    ratios = np.clip(eigenvalues / total, 0.0, 1.0) if total > 0 else np.zeros(m)
    log.info("PCA on %d rows: explained variance ratios %s", n, np.round(ratios[:k], 4))
    return PCAModel(params, loadings[:k], ratios[:k], eigenvalues[:k])


def project(model: PCAModel, row: np.ndarray) -> np.ndarray:
    """Coordinates of one metric row in the model's component space."""
    row = np.asarray(row, dtype=float)
    _check_finite(row, "projected row")
    return model.loadings @ model.params.apply(row)


def project_rows(model: PCAModel, matrix: np.ndarray) -> np.ndarray:
    """Project every row of an (n, m) matrix; returns (n, k)."""
    matrix = np.asarray(matrix, dtype=float)
    _check_finite(matrix, "projected matrix")
    return model.params.apply(matrix) @ model.loadings.T


def save_model(path: Path, model: PCAModel) -> None:
    """
    Write the model as text: means, scales, one line per loading vector, then the
    explained variance ratios.
    """
    def line(values: np.ndarray) -> str:
        return " ".join(MODEL_FORMAT % v for v in values)

    lines = [line(model.params.means), line(model.params.scales)]
    lines.extend(line(vec) for vec in model.loadings)
    lines.append(line(model.explained_variance_ratio))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path: Path) -> PCAModel:
    """Read a model written by `save_model`."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as f:
        raise FileNotFoundError(f"Model file not found at: {path}") from f
    try:
        rows = [np.array([float(v) for v in ln.split()]) for ln in text.splitlines() if ln.strip()]
    except ValueError as e:
        raise ValueError(f"Model file {path} holds a non-numeric value: {e}") from e
    if len(rows) < 4:
        raise ValueError(f"Model file {path} needs at least 4 lines, found {len(rows)}")
    means, scales, *loadings, ratios = rows
    m = len(means)
    if len(scales) != m or any(len(vec) != m for vec in loadings) or len(ratios) != len(loadings):
        raise ValueError(f"Model file {path} has inconsistent line lengths")
    return PCAModel(StandardizationParams(means, scales), np.vstack(loadings), ratios)


def loadings_frame(model: PCAModel, names: Sequence[str] = METRIC_COLUMNS) -> pd.DataFrame:
    """
    Metric-named loadings: one row per metric, one `pc<i>` column per component, and a final
    row holding the explained variance ratios.
    """
    if len(names) != model.loadings.shape[1]:
        raise ValueError(f"Got {len(names)} metric names for a model over {model.loadings.shape[1]} metrics")
    df = pd.DataFrame(model.loadings.T, index=list(names), columns=[f"pc{i + 1}" for i in range(model.k)])
    df.loc[EXPLAINED_VARIANCE_ROW] = model.explained_variance_ratio
    df.index.name = "metric"
    return df


def write_loadings(path: Path, model: PCAModel) -> None:
    loadings_frame(model).to_csv(path, float_format=FLOAT_FORMAT, lineterminator="\n")
