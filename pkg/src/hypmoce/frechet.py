"""
Weighted Fréchet (Karcher) mean and variance on the Lorentz manifold.
"""

import logging
from typing import Optional, Sequence

import torch

from . import lorentz
from .config import FrechetConfig
from .errors import ConvergenceError, DimensionError, ParameterError
from .points import LorentzPoint, PointBatch

logger = logging.getLogger(__name__)

MAX_HALVINGS = 20
# an accepted step of size s shrinks the gradient norm by at least this fraction of s
SUFFICIENT_DECREASE = 0.25


def _normalized_weights(points: torch.Tensor, weights: Optional[torch.Tensor]) -> torch.Tensor:
    if weights is None:
        size = points.shape[-2]
        return torch.full(points.shape[:-1], 1.0 / size, dtype=points.dtype)
    if weights.shape != points.shape[:-1]:
        raise DimensionError(f"weights shape {tuple(weights.shape)} does not match points {tuple(points.shape[:-1])}")
    if (weights < 0).any():
        raise ParameterError("weights must be non-negative")
    total = weights.sum(-1, keepdim=True)
    if (total <= 0).any():
        raise ParameterError("weights must have a positive sum")
    return weights / total


def _objective(mu: torch.Tensor, points: torch.Tensor, w: torch.Tensor, k) -> torch.Tensor:
    return (w * lorentz.sqdist(mu.unsqueeze(-2), points, k)).sum(-1)


def _gradient_norm(mu: torch.Tensor, points: torch.Tensor, w: torch.Tensor, k) -> torch.Tensor:
    tangent = (w.unsqueeze(-1) * lorentz.logmap(mu.unsqueeze(-2), points, k)).sum(-2)
    return lorentz.norm(tangent)


def newton_direction(mu: torch.Tensor, logs: torch.Tensor, w: torch.Tensor, k) -> torch.Tensor:
    """
    Solve ``H v = sum_i w_i log_mu(p_i)`` for the tangent vector ``v`` at ``mu``.

    ``H`` is the Riemannian Hessian of ``sum_i w_i d²(mu, p_i) / 2``. Each term
    contributes ``c v + (1 - c) <u, v> u``, with ``u`` the unit direction of
    ``log_mu(p_i)`` and ``c = r coth r`` for ``r = sqrt(-k) d(mu, p_i)``. The
    system is solved for the space part of ``v``; the time part follows from
    ``<mu, v> = 0``.

    Args:
        mu: ``(..., n+1)`` current iterate
        logs: ``(..., M, n+1)`` logarithms ``log_mu(p_i)``
        w: ``(..., M)`` normalized weights
        k: Curvature

    Returns:
        ``(..., n+1)`` tangent vector at ``mu``
    """
    kk = lorentz.as_curvature(k)
    r2 = -kk * torch.clamp(lorentz.inner(logs, logs), min=0)
    small = r2 < lorentz.SERIES_EPS
    safe = torch.where(small, torch.ones_like(r2), r2)
    r = torch.sqrt(safe)
    # (1 - r coth r) / r²
    bend = torch.where(small, -1.0 / 3 + r2 / 45, (1 - r / torch.tanh(r)) / safe)

    space, time = mu[..., 1:], mu[..., :1]
    log_space = logs[..., 1:]
    # <log_i, v> as a linear form in the space part of v
    forms = log_space - logs[..., :1] * (space / time).unsqueeze(-2)
    eye = torch.eye(space.shape[-1], dtype=mu.dtype)
    diagonal = (w * (1 - r2 * bend)).sum(-1)
    hessian = diagonal[..., None, None] * eye + torch.einsum('...m,...mi,...mj->...ij', w * -kk * bend, log_space, forms)

    rhs = (w.unsqueeze(-1) * log_space).sum(-2)
    v_space = torch.linalg.solve(hessian, rhs.unsqueeze(-1)).squeeze(-1)
    v_time = (space * v_space).sum(-1, keepdim=True) / time
    return torch.cat([v_time, v_space], dim=-1)


def frechet_mean(
    points: torch.Tensor,
    k,
    weights: Optional[torch.Tensor] = None,
    config: Optional[FrechetConfig] = None,
) -> torch.Tensor:
    """
    Weighted Fréchet mean of ``points`` by Riemannian Newton iteration.

    Iterates ``mu <- exp_mu(step * H^-1 sum_i w_i log_mu(p_i))`` from the point
    of largest weight (lowest index on ties), where ``H`` is the Riemannian
    Hessian of the objective. Each iteration starts from ``config.step`` and
    halves the step, per batch element, until the gradient norm shrinks. The
    iterations stay on the autograd tape, so the result is differentiable in
    the points, weights and curvature.

    Args:
        points: ``(..., M, n+1)`` points sharing curvature ``k``
        k: Curvature
        weights: ``(..., M)`` non-negative weights, uniform when omitted
        config: Solver settings

    Returns:
        ``(..., n+1)`` tensor of means

    Raises:
        ConvergenceError: If the Riemannian gradient norm is still above
            ``config.tol`` after ``config.max_iters`` iterations
    """
    config = config or FrechetConfig()
    w = _normalized_weights(points, weights)

    idx = torch.argmax(w.detach(), dim=-1)
    index = idx[..., None, None].expand(*idx.shape, 1, points.shape[-1])
    mu = torch.gather(points, -2, index).squeeze(-2)

    grad_norm = None
    for iteration in range(config.max_iters):
        logs = lorentz.logmap(mu.unsqueeze(-2), points, k)
        tangent = (w.unsqueeze(-1) * logs).sum(-2)
        grad_norm = lorentz.norm(tangent).detach()
        converged = grad_norm < config.tol
        if bool(converged.all()):
            return mu

        direction = newton_direction(mu, logs, w, k)
        with torch.no_grad():
            step = torch.full_like(grad_norm, config.step)
            halvings = 0
            while True:
                candidate = lorentz.expmap(mu, step.unsqueeze(-1) * direction, k)
                target = (1 - SUFFICIENT_DECREASE * step) * grad_norm
                shrunk = _gradient_norm(candidate, points, w, k) <= target
                if bool((shrunk | converged).all()) or halvings == MAX_HALVINGS:
                    break
                step = torch.where(shrunk | converged, step, step / 2)
                halvings += 1
            if halvings:
                logger.debug(f"Fréchet iteration {iteration}: step halved {halvings} time(s)")
            # converged elements, and those no step could improve, stay put
            step = torch.where(shrunk & ~converged, step, torch.zeros_like(step))

        mu = lorentz.expmap(mu, step.unsqueeze(-1) * direction, k)

    worst = float(grad_norm.max()) if grad_norm is not None else float("nan")
    raise ConvergenceError(
        f"Fréchet mean did not converge in {config.max_iters} iterations (gradient norm {worst:.3e})",
        last_iterate=mu.detach(),
        grad_norm=worst,
    )


def frechet_var(points: torch.Tensor, mean: torch.Tensor, k, weights: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Weight-normalized Fréchet variance ``sum_i w_i d²(mean, p_i) / sum_i w_i``."""
    w = _normalized_weights(points, weights)
    return _objective(mean, points, w, k)


def _weights_tensor(batch: PointBatch, weights: Optional[Sequence[float]]) -> Optional[torch.Tensor]:
    if weights is None:
        return None
    w = torch.as_tensor(weights, dtype=lorentz.DTYPE)
    if w.shape != (len(batch),):
        raise DimensionError(f"expected {len(batch)} weights, got {tuple(w.shape)}")
    return w


def weighted_frechet_mean(
    batch: PointBatch,
    weights: Optional[Sequence[float]] = None,
    config: Optional[FrechetConfig] = None,
) -> LorentzPoint:
    """Checked single-batch form of ``frechet_mean``."""
    k = batch.curvature.value
    mean = frechet_mean(batch.stacked(), k, _weights_tensor(batch, weights), config)
    return LorentzPoint(lorentz.project(mean, k), batch.curvature)


def frechet_variance(batch: PointBatch, weights: Optional[Sequence[float]], mean: LorentzPoint) -> float:
    if mean.curvature != batch.curvature:
        raise ParameterError("mean lives on a different manifold than the batch")
    value = frechet_var(batch.stacked(), mean.coords, batch.curvature.value, _weights_tensor(batch, weights))
    return float(value)
