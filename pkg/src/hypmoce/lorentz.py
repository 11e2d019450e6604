"""
Tensor kernels for the Lorentz (hyperboloid) model of curvature ``k < 0``.

Points are ``(..., n+1)`` float64 tensors with the time coordinate at index 0.
Every kernel broadcasts over leading dimensions and takes the curvature as a
python float or a 0-dim tensor, so gradients flow into learnable curvatures.
Near-singular branches (zero tangent norms, coincident points) switch to
series expansions through a double ``torch.where`` so both the value and the
gradient stay finite.
"""

from typing import Union

import torch

DTYPE = torch.float64
SERIES_EPS = 1e-6
TINY = 1e-30

CurvatureLike = Union[float, torch.Tensor]


def as_curvature(k: CurvatureLike) -> torch.Tensor:
    return torch.as_tensor(k, dtype=DTYPE)


def curvature_value(k: CurvatureLike) -> float:
    """Plain float of a curvature, detached from any autograd graph."""
    return float(as_curvature(k).detach())


def _sqrt_neg(k: CurvatureLike) -> torch.Tensor:
    return torch.sqrt(-as_curvature(k))


def _safe_sqrt(x: torch.Tensor) -> torch.Tensor:
    # sqrt(max(x, 0)) with a zero (not infinite) gradient at 0
    small = x <= TINY
    safe = torch.where(small, torch.ones_like(x), x)
    return torch.where(small, torch.zeros_like(x), torch.sqrt(safe))


def _sinhc(a: torch.Tensor) -> torch.Tensor:
    small = a.abs() < SERIES_EPS
    safe = torch.where(small, torch.ones_like(a), a)
    return torch.where(small, 1 + a * a / 6, torch.sinh(safe) / safe)


def _asinhc(a: torch.Tensor) -> torch.Tensor:
    small = a.abs() < SERIES_EPS
    safe = torch.where(small, torch.ones_like(a), a)
    return torch.where(small, 1 - a * a / 6, torch.asinh(safe) / safe)


def _acosh_ratio(beta: torch.Tensor) -> torch.Tensor:
    """acosh(β)/sqrt(β²-1) for β >= 1, with its series near β = 1."""
    delta = torch.clamp(beta - 1, min=0)
    small = delta < SERIES_EPS
    safe = torch.where(small, torch.full_like(beta, 2.0), beta)
    exact = torch.acosh(safe) / torch.sqrt(safe * safe - 1)
    return torch.where(small, 1 - delta / 3 + 2 * delta * delta / 15, exact)


def inner(u: torch.Tensor, v: torch.Tensor, keepdim: bool = False) -> torch.Tensor:
    """Lorentzian inner product ``u_s·v_s - u_t v_t`` along the last axis."""
    prod = u * v
    res = prod.narrow(-1, 1, prod.shape[-1] - 1).sum(-1, keepdim=True) - prod.narrow(-1, 0, 1)
    return res if keepdim else res.squeeze(-1)


def origin(dim: int, k: CurvatureLike, batch_shape=()) -> torch.Tensor:
    """Origin ``[sqrt(-1/k), 0, ..., 0]`` of the ``dim``-dimensional hyperboloid."""
    time = torch.sqrt(-1.0 / as_curvature(k)).expand(*batch_shape, 1)
    space = torch.zeros(*batch_shape, dim, dtype=DTYPE)
    return torch.cat([time, space], dim=-1)


def time_from_space(space: torch.Tensor, k: CurvatureLike) -> torch.Tensor:
    return torch.sqrt((space * space).sum(-1, keepdim=True) - 1.0 / as_curvature(k))


def lift(space: torch.Tensor, k: CurvatureLike) -> torch.Tensor:
    """Complete space coordinates to a point by solving the constraint for time."""
    return torch.cat([time_from_space(space, k), space], dim=-1)


def project(x: torch.Tensor, k: CurvatureLike) -> torch.Tensor:
    """Keep the space part of ``x`` and recompute its time coordinate."""
    return lift(x[..., 1:], k)


def project_tangent(p: torch.Tensor, v: torch.Tensor, k: CurvatureLike) -> torch.Tensor:
    """Lorentz-orthogonal projection of ``v`` onto the tangent space at ``p``."""
    return v - as_curvature(k) * inner(p, v, keepdim=True) * p


def norm(v: torch.Tensor, keepdim: bool = False) -> torch.Tensor:
    return _safe_sqrt(inner(v, v, keepdim=keepdim))


def residual(p: torch.Tensor, k: CurvatureLike) -> torch.Tensor:
    """Constraint residual ``<p,p> - 1/k`` relative to the magnitude of the cancelled terms."""
    kk = as_curvature(k)
    scale = torch.clamp(p[..., 0] ** 2, min=1.0)
    scale = torch.maximum(scale, torch.abs(1.0 / kk).expand_as(scale))
    return torch.abs(inner(p, p) - 1.0 / kk) / scale


def sqdist(p: torch.Tensor, q: torch.Tensor, k: CurvatureLike) -> torch.Tensor:
    """Squared geodesic distance, smooth at coincident points."""
    kk = as_curvature(k)
    w = p - q
    s = torch.clamp(-kk * inner(w, w), min=0)
    small = s < SERIES_EPS
    safe = torch.where(small, torch.ones_like(s), s)
    exact = 4 * torch.asinh(torch.sqrt(safe) / 2) ** 2
    return torch.where(small, s - s * s / 12, exact) / -kk


def dist(p: torch.Tensor, q: torch.Tensor, k: CurvatureLike) -> torch.Tensor:
    """
    Geodesic distance ``acosh(k<p,q>)/sqrt(-k)``.

    Evaluated through the chord ``p - q``: ``2 asinh(sqrt(-k<w,w>)/2)/sqrt(-k)``
    is the same quantity but stays exact for nearby points, where the acosh
    argument loses every significant digit.
    """
    kk = as_curvature(k)
    w = p - q
    chord = _safe_sqrt(-kk * inner(w, w))
    return 2 * torch.asinh(chord / 2) / torch.sqrt(-kk)


def expmap(p: torch.Tensor, v: torch.Tensor, k: CurvatureLike) -> torch.Tensor:
    """Exponential map ``cosh(a) p + sinh(a)/a v`` with ``a = sqrt(-k)|v|``."""
    a = _sqrt_neg(k) * norm(v, keepdim=True)
    return torch.cosh(a) * p + _sinhc(a) * v


def logmap(p: torch.Tensor, q: torch.Tensor, k: CurvatureLike) -> torch.Tensor:
    """Logarithmic map ``acosh(b)/sqrt(b²-1) (q - b p)`` with ``b = k<p,q>``."""
    beta = torch.clamp(as_curvature(k) * inner(p, q, keepdim=True), min=1.0)
    v = _acosh_ratio(beta) * (q - beta * p)
    return project_tangent(p, v, k)


def expmap0(x: torch.Tensor, k: CurvatureLike) -> torch.Tensor:
    """Lift a Euclidean vector ``x`` in R^n through the exponential map at the origin."""
    sk = _sqrt_neg(k)
    a = sk * _safe_sqrt((x * x).sum(-1, keepdim=True))
    return torch.cat([torch.cosh(a) / sk, _sinhc(a) * x], dim=-1)


def logmap0(p: torch.Tensor, k: CurvatureLike) -> torch.Tensor:
    """Space part of ``log_o(p)``; the time part of that tangent vector is zero."""
    space = p[..., 1:]
    a = _sqrt_neg(k) * _safe_sqrt((space * space).sum(-1, keepdim=True))
    return _asinhc(a) * space


def transp(p: torch.Tensor, q: torch.Tensor, v: torch.Tensor, k: CurvatureLike) -> torch.Tensor:
    """Parallel transport of ``v`` from ``T_p`` to ``T_q`` along the geodesic."""
    kk = as_curvature(k)
    coef = kk * inner(q, v, keepdim=True) / (1 + kk * inner(p, q, keepdim=True))
    return v - coef * (p + q)


def transp0(p: torch.Tensor, v: torch.Tensor, k: CurvatureLike) -> torch.Tensor:
    """Parallel transport of ``v`` from the origin to ``p``."""
    o = origin(p.shape[-1] - 1, k, p.shape[:-1])
    return transp(o, p, v, k)


def gyro_add(p: torch.Tensor, q: torch.Tensor, k: CurvatureLike) -> torch.Tensor:
    """``p ⊕ q``: the Lorentz boost carrying the origin to ``p``, applied to ``q``."""
    p, q = torch.broadcast_tensors(p, q)
    zeros = torch.zeros_like(q[..., :1])
    u = torch.cat([zeros, logmap0(q, k)], dim=-1)
    return expmap(p, transp0(p, u, k), k)


def gyro_inverse(p: torch.Tensor) -> torch.Tensor:
    return torch.cat([p[..., :1], -p[..., 1:]], dim=-1)


def gyro_scale(t: Union[float, torch.Tensor], p: torch.Tensor, k: CurvatureLike) -> torch.Tensor:
    """``t ⊙ p = exp_o(t log_o(p))``."""
    return expmap0(t * logmap0(p, k), k)


def geodesic(p: torch.Tensor, q: torch.Tensor, t: Union[float, torch.Tensor], k: CurvatureLike) -> torch.Tensor:
    """Point at fraction ``t`` of the way along the geodesic from ``p`` to ``q``."""
    return expmap(p, t * logmap(p, q, k), k)


def rescale(p: torch.Tensor, k_old: CurvatureLike, k_new: CurvatureLike) -> torch.Tensor:
    """Map a point between manifolds: ``exp_o^{new}(sqrt(k_old/k_new) log_o^{old}(p))``."""
    factor = torch.sqrt(as_curvature(k_old) / as_curvature(k_new))
    return expmap0(factor * logmap0(p, k_old), k_new)
