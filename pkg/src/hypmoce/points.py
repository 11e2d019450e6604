"""
Checked value types for single points and tangent vectors.

The kernels in ``lorentz`` are unchecked and batched; this module wraps them
for callers that want validated, immutable values: every ``LorentzPoint``
satisfies its hyperboloid constraint and every ``TangentVector`` is tangent
to its base point.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple, Union

import torch

from . import lorentz
from .config import CURVATURE_MAX, CURVATURE_MIN
from .errors import DimensionError, GeometryError, NumericError

RESIDUAL_TOL = 1e-9
TANGENT_TOL = 1e-9
ZERO_NORM = 1e-12

VectorLike = Union[Sequence[float], torch.Tensor]


def _as_vector(values: VectorLike, name: str = "vector") -> torch.Tensor:
    vec = torch.as_tensor(values, dtype=lorentz.DTYPE).detach().clone()
    if vec.dim() != 1:
        raise DimensionError(f"{name}: expected a 1-D vector, got shape {tuple(vec.shape)}")
    if not torch.isfinite(vec).all():
        raise NumericError(f"{name}: contains non-finite values")
    return vec


@dataclass(frozen=True)
class Curvature:
    """Constant negative sectional curvature ``K``."""

    value: float

    def __post_init__(self):
        value = float(self.value)
        if not math.isfinite(value) or value >= 0:
            raise GeometryError(f"curvature must be finite and negative, got {self.value}")
        object.__setattr__(self, "value", value)

    @property
    def bounded(self) -> bool:
        """Whether K lies in the range allowed for learnable curvatures."""
        return CURVATURE_MIN <= self.value <= CURVATURE_MAX

    @property
    def radius(self) -> float:
        return 1.0 / math.sqrt(-self.value)


@dataclass(frozen=True, eq=False)
class LorentzPoint:
    """A point on the upper hyperboloid sheet of ``curvature``."""

    coords: torch.Tensor
    curvature: Curvature

    def __post_init__(self):
        coords = _as_vector(self.coords, "point")
        if coords.numel() < 2:
            raise DimensionError("point: needs at least one space coordinate")
        if coords[0] <= 0:
            raise GeometryError("point: time coordinate must be positive")
        res = float(lorentz.residual(coords, self.curvature.value))
        if res > RESIDUAL_TOL:
            raise GeometryError(f"point: off the hyperboloid (relative residual {res:.3e})")
        object.__setattr__(self, "coords", coords)

    @property
    def dim(self) -> int:
        """Manifold dimension ``n`` (coordinates have length n+1)."""
        return self.coords.numel() - 1

    @classmethod
    def origin(cls, dim: int, curvature: Curvature) -> "LorentzPoint":
        return cls(lorentz.origin(dim, curvature.value), curvature)


@dataclass(frozen=True, eq=False)
class TangentVector:
    """A vector in the tangent space at ``base``; projected onto it on construction."""

    base: LorentzPoint
    coords: torch.Tensor

    def __post_init__(self):
        coords = _as_vector(self.coords, "tangent")
        if coords.numel() != self.base.coords.numel():
            raise DimensionError(
                f"tangent: length {coords.numel()} does not match base length {self.base.coords.numel()}"
            )
        coords = lorentz.project_tangent(self.base.coords, coords, self.base.curvature.value)
        object.__setattr__(self, "coords", coords)

    @property
    def norm(self) -> float:
        return float(lorentz.norm(self.coords))


@dataclass(frozen=True, eq=False)
class PointBatch:
    """Non-empty ordered collection of points sharing one curvature and dimension."""

    points: Tuple[LorentzPoint, ...]

    def __post_init__(self):
        points = tuple(self.points)
        if not points:
            raise DimensionError("batch: must contain at least one point")
        first = points[0]
        for i, p in enumerate(points[1:], start=1):
            if p.dim != first.dim:
                raise DimensionError(f"batch: point {i} has dimension {p.dim}, expected {first.dim}")
            if p.curvature != first.curvature:
                raise GeometryError(f"batch: point {i} has curvature {p.curvature.value}, expected {first.curvature.value}")
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def curvature(self) -> Curvature:
        return self.points[0].curvature

    @property
    def dim(self) -> int:
        return self.points[0].dim

    def stacked(self) -> torch.Tensor:
        return torch.stack([p.coords for p in self.points])

    @classmethod
    def from_tensor(cls, coords: torch.Tensor, curvature: Curvature) -> "PointBatch":
        return cls(tuple(LorentzPoint(row, curvature) for row in coords))


def _same_manifold(p: LorentzPoint, q: LorentzPoint) -> None:
    if p.curvature != q.curvature:
        raise GeometryError(f"curvature mismatch: {p.curvature.value} vs {q.curvature.value}")
    if p.dim != q.dim:
        raise DimensionError(f"dimension mismatch: {p.dim} vs {q.dim}")


def _point(coords: torch.Tensor, curvature: Curvature) -> LorentzPoint:
    if not torch.isfinite(coords).all():
        raise NumericError("operation produced non-finite coordinates")
    return LorentzPoint(lorentz.project(coords, curvature.value), curvature)


def lorentz_inner(p: VectorLike, q: VectorLike) -> float:
    """Lorentzian inner product ``p_s·q_s - p_t q_t`` of two raw vectors."""
    u, v = _as_vector(p, "p"), _as_vector(q, "q")
    if u.numel() != v.numel():
        raise DimensionError(f"length mismatch: {u.numel()} vs {v.numel()}")
    if u.numel() < 2:
        raise DimensionError("vectors need length >= 2")
    return float(lorentz.inner(u, v))


def geodesic_distance(p: LorentzPoint, q: LorentzPoint) -> float:
    _same_manifold(p, q)
    return float(lorentz.dist(p.coords, q.coords, p.curvature.value))


def exp_map(base: LorentzPoint, v: TangentVector) -> LorentzPoint:
    if v.base is not base and not torch.equal(v.base.coords, base.coords):
        raise GeometryError("exp_map: tangent vector is attached to a different base point")
    _same_manifold(base, v.base)
    if v.norm < ZERO_NORM:
        return base
    return _point(lorentz.expmap(base.coords, v.coords, base.curvature.value), base.curvature)


def log_map(base: LorentzPoint, q: LorentzPoint) -> TangentVector:
    _same_manifold(base, q)
    k = base.curvature.value
    beta = k * float(lorentz.inner(base.coords, q.coords))
    if beta <= 1 + ZERO_NORM:
        return TangentVector(base, torch.zeros_like(base.coords))
    return TangentVector(base, lorentz.logmap(base.coords, q.coords, k))


def exp_map_origin(x: VectorLike, curvature: Curvature) -> LorentzPoint:
    """Lift an n-vector to a point with n+1 coordinates through ``exp_o``."""
    vec = _as_vector(x, "x")
    return _point(lorentz.expmap0(vec, curvature.value), curvature)


def log_map_origin(p: LorentzPoint) -> torch.Tensor:
    """Space coordinates of ``log_o(p)``."""
    return lorentz.logmap0(p.coords, p.curvature.value)


def parallel_transport(p: LorentzPoint, q: LorentzPoint, v: TangentVector) -> TangentVector:
    _same_manifold(p, q)
    if not torch.equal(v.base.coords, p.coords):
        raise GeometryError("parallel_transport: vector is not tangent at the source point")
    return TangentVector(q, lorentz.transp(p.coords, q.coords, v.coords, p.curvature.value))


def gyro_add(p: LorentzPoint, q: LorentzPoint) -> LorentzPoint:
    _same_manifold(p, q)
    return _point(lorentz.gyro_add(p.coords, q.coords, p.curvature.value), p.curvature)


def gyro_inverse(p: LorentzPoint) -> LorentzPoint:
    return LorentzPoint(lorentz.gyro_inverse(p.coords), p.curvature)


def gyro_scale(t: float, p: LorentzPoint) -> LorentzPoint:
    if not math.isfinite(t):
        raise NumericError(f"gyro_scale: scale must be finite, got {t}")
    return _point(lorentz.gyro_scale(t, p.coords, p.curvature.value), p.curvature)


def geodesic(p: LorentzPoint, q: LorentzPoint, t: float) -> LorentzPoint:
    """Point at fraction ``t`` along the geodesic from ``p`` to ``q``."""
    _same_manifold(p, q)
    return _point(lorentz.geodesic(p.coords, q.coords, t, p.curvature.value), p.curvature)


def project_to_hyperboloid(raw: VectorLike, curvature: Curvature) -> LorentzPoint:
    """Keep the space part of ``raw`` and recompute the time coordinate."""
    vec = _as_vector(raw, "raw")
    if vec.numel() < 2:
        raise DimensionError("raw: needs at least one space coordinate")
    return LorentzPoint(lorentz.project(vec, curvature.value), curvature)


def batch_of(points: Iterable[LorentzPoint]) -> PointBatch:
    return PointBatch(tuple(points))
