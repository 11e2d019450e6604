"""
Gromov δ-hyperbolicity of finite metric spaces.

δ is computed exactly from the four-point condition in its Gromov-product
form. For clouds too large to enumerate, ``delta_rel_sampled`` averages the
diameter-normalized ``2δ/diam`` over random batches.
"""

import csv
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import DataError, DeltaError

logger = logging.getLogger(__name__)

METRICS = ("euclidean", "precomputed")
MAX_EXACT_POINTS = 400
DEFAULT_BATCH_SIZE = 400
DEFAULT_BATCHES = 10
# violations this small relative to the diameter are rounding, not geometry
SNAP_RELATIVE = 1e-12
SYMMETRY_TOL = 1e-9
CHUNK_ELEMENTS = 2_000_000


@dataclass(frozen=True, eq=False)
class MetricCloud:
    """
    A finite metric space given either by points in R^d (Euclidean metric) or
    by a precomputed distance matrix.
    """

    points: np.ndarray
    metric: str = "euclidean"

    def __post_init__(self):
        if self.metric not in METRICS:
            raise DataError(f"unknown metric {self.metric!r}; expected one of {', '.join(METRICS)}")
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[0] == 0:
            raise DataError(f"expected a non-empty matrix, got shape {points.shape}")
        if not np.isfinite(points).all():
            raise DataError("cloud contains non-finite values")
        if self.metric == "precomputed":
            if points.shape[0] != points.shape[1]:
                raise DataError(f"distance matrix must be square, got shape {points.shape}")
            scale = max(1.0, float(np.abs(points).max()))
            if not np.allclose(points, points.T, rtol=0.0, atol=SYMMETRY_TOL * scale):
                raise DataError("distance matrix is not symmetric")
            if np.any(np.diag(points) != 0):
                raise DataError("distance matrix must have a zero diagonal")
            if np.any(points < 0):
                raise DataError("distances must be non-negative")
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return self.points.shape[0]

    def subset(self, indices: np.ndarray) -> "MetricCloud":
        if self.metric == "precomputed":
            return MetricCloud(self.points[np.ix_(indices, indices)], "precomputed")
        return MetricCloud(self.points[indices], "euclidean")


@dataclass(frozen=True)
class DeltaReport:
    """Per-batch δ, diameter and δ_rel with their across-batch summary."""

    deltas: Tuple[float, ...]
    diameters: Tuple[float, ...]
    batch_size: int
    points: int
    metric: str
    seed: Optional[int] = None
    delta_rels: Tuple[float, ...] = field(init=False)

    def __post_init__(self):
        rels = tuple(2.0 * d / diam for d, diam in zip(self.deltas, self.diameters))
        object.__setattr__(self, "delta_rels", rels)

    @property
    def batches(self) -> int:
        return len(self.deltas)

    @property
    def delta(self) -> float:
        return float(np.mean(self.deltas))

    @property
    def diameter(self) -> float:
        return float(np.mean(self.diameters))

    @property
    def delta_rel(self) -> float:
        return float(np.mean(self.delta_rels))

    @property
    def delta_rel_std(self) -> float:
        return float(np.std(self.delta_rels))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "delta": self.delta,
            "delta_std": float(np.std(self.deltas)),
            "diameter": self.diameter,
            "delta_rel": self.delta_rel,
            "delta_rel_std": self.delta_rel_std,
            "batches": self.batches,
            "batch_size": self.batch_size,
            "per_batch": [
                {"delta": d, "diameter": diam, "delta_rel": rel}
                for d, diam, rel in zip(self.deltas, self.diameters, self.delta_rels)
            ],
            "metadata": {
                "points": self.points,
                "metric": self.metric,
                "seed": self.seed,
                "spread": "across sampled batches",
            },
        }


def distance_matrix(cloud: MetricCloud) -> np.ndarray:
    """Full pairwise distance matrix of ``cloud``."""
    if cloud.metric == "precomputed":
        return cloud.points
    if len(cloud) == 1:
        return np.zeros((1, 1))
    return squareform(pdist(cloud.points, metric="euclidean"))


def gromov_product(distances: np.ndarray, x: int, y: int, w: int) -> float:
    """``(x|y)_w = (d(w,x) + d(w,y) - d(x,y)) / 2``."""
    return 0.5 * float(distances[w, x] + distances[w, y] - distances[x, y])


def gromov_products(distances: np.ndarray, w: int) -> np.ndarray:
    """Matrix of ``(x|y)_w`` for all ``x, y``."""
    row = distances[w][None, :]
    col = distances[:, w][:, None]
    return 0.5 * (row + col - distances)


def _maxmin_violation(products: np.ndarray) -> float:
    """``max_{x,z} (max_y min{A[x,y], A[y,z]} - A[x,z])``, chunked over ``x``."""
    m = products.shape[0]
    chunk = max(1, CHUNK_ELEMENTS // (m * m))
    worst = -np.inf
    for start in range(0, m, chunk):
        rows = products[start:start + chunk]
        maxmin = np.minimum(rows[:, :, None], products[None, :, :]).max(axis=1)
        worst = max(worst, float((maxmin - rows).max()))
    return worst


def delta_from_distances(distances: np.ndarray) -> float:
    """
    Exact four-point δ of a distance matrix.

    The four-point quantity depends only on the set of four points, so each
    basepoint ``w`` only needs the points with index ``>= w``.
    """
    n = distances.shape[0]
    if n < 4:
        raise DeltaError(f"δ needs at least 4 points, got {n}")
    worst = 0.0
    for w in range(n - 3):
        worst = max(worst, _maxmin_violation(gromov_products(distances[w:, w:], 0)))
    diameter = float(distances.max())
    if worst <= SNAP_RELATIVE * diameter:
        return 0.0
    return worst


def delta_exact(cloud: MetricCloud) -> float:
    """
    Exact Gromov δ of ``cloud``, floored at 0.

    Raises:
        DeltaError: With fewer than 4 points, or more than ``MAX_EXACT_POINTS``
            (use ``delta_rel_sampled`` for those)
    """
    n = len(cloud)
    if n < 4:
        raise DeltaError(f"δ needs at least 4 points, got {n}")
    if n > MAX_EXACT_POINTS:
        raise DeltaError(
            f"exact δ enumerates at most {MAX_EXACT_POINTS} points, got {n}; use the sampled estimate"
        )
    return delta_from_distances(distance_matrix(cloud))


def delta_rel_sampled(
    cloud: MetricCloud,
    batch_size: int = DEFAULT_BATCH_SIZE,
    n_batches: int = DEFAULT_BATCHES,
    seed: Optional[int] = 0,
) -> DeltaReport:
    """
    Diameter-normalized δ averaged over random batches.

    Each batch draws ``batch_size`` distinct points (sorted by index); a cloud
    no larger than ``batch_size`` is measured once as a whole.

    Args:
        cloud: Metric space to measure
        batch_size: Points per batch, at least 4
        n_batches: Number of batches
        seed: Seed of the batch sampler

    Returns:
        ``DeltaReport`` with per-batch values

    Raises:
        DeltaError: On too few points, a bad batch layout or a zero diameter
    """
    if batch_size < 4:
        raise DeltaError(f"batch_size must be >= 4, got {batch_size}")
    if batch_size > MAX_EXACT_POINTS:
        raise DeltaError(f"batch_size must be <= {MAX_EXACT_POINTS}, got {batch_size}")
    if n_batches < 1:
        raise DeltaError(f"need at least one batch, got {n_batches}")
    n = len(cloud)
    if n < 4:
        raise DeltaError(f"δ needs at least 4 points, got {n}")

    rng = np.random.default_rng(seed)
    if n <= batch_size:
        samples = [np.arange(n)]
    else:
        samples = [np.sort(rng.choice(n, size=batch_size, replace=False)) for _ in range(n_batches)]

    deltas = []
    diameters = []
    for index, sample in enumerate(samples):
        distances = distance_matrix(cloud.subset(sample))
        diameter = float(distances.max())
        if diameter <= 0:
            raise DeltaError(f"batch {index} has zero diameter; δ_rel is undefined")
        deltas.append(delta_from_distances(distances))
        diameters.append(diameter)
        logger.debug(f"Batch {index}: δ={deltas[-1]:.6g}, diam={diameter:.6g}")

    report = DeltaReport(tuple(deltas), tuple(diameters), min(batch_size, n), n, cloud.metric, seed)
    logger.info(f"δ_rel = {report.delta_rel:.4f} ± {report.delta_rel_std:.4f} over {report.batches} batch(es)")
    return report


def load_cloud(path: str, metric: str = "euclidean") -> MetricCloud:
    """
    Read a point cloud (or a distance matrix) from CSV.

    A first row that is not entirely numeric is taken as a header.
    """
    try:
        with open(path, 'r', encoding='utf-8', newline='') as f:
            rows = [row for row in csv.reader(f) if row]
    except FileNotFoundError:
        raise DataError(f"{path}: file not found")
    if rows:
        try:
            [float(v) for v in rows[0]]
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise DeltaError(f"{path}: no data rows")
    try:
        values = np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
    except ValueError as e:
        raise DataError(f"{path}: non-numeric value ({e})")
    if values.ndim != 2:
        raise DataError(f"{path}: rows have different lengths")
    if len(values) < 4:
        raise DeltaError(f"{path}: δ needs at least 4 points, got {len(values)}")
    return MetricCloud(values, metric)
