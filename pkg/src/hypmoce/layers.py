"""
Manifold-preserving neural layers on the Lorentz model.

Layers take the curvature at call time (``forward(x, k)``) because the
curvature is owned, and learned, by the expert that uses them.
"""

import logging
import math
from typing import Callable, Dict, Optional, Sequence, Union

import torch
import torch.nn as nn
import torch.nn.functional as F
import torch.nn.init as init

from . import lorentz
from .config import FrechetConfig, HBNConfig
from .errors import DimensionError, GeometryError, ParameterError
from .frechet import frechet_mean, frechet_var
from .lorentz import DTYPE
from .points import LorentzPoint

logger = logging.getLogger(__name__)

ACTIVATIONS: Dict[str, Callable[[torch.Tensor], torch.Tensor]] = {
    "none": lambda x: x,
    "relu": F.relu,
    "elu": F.elu,
}

Activation = Union[str, Callable[[torch.Tensor], torch.Tensor]]


def _resolve(activation: Activation) -> Callable[[torch.Tensor], torch.Tensor]:
    if callable(activation):
        return activation
    try:
        return ACTIVATIONS[activation]
    except KeyError:
        raise ParameterError(f"unknown activation {activation!r}")


def lorentz_linear(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor, k, activation: Activation = "none") -> torch.Tensor:
    """Space part ``psi(W x + b)`` on the full Lorentz vector, time rebuilt from the constraint."""
    if weight.shape[-1] != x.shape[-1]:
        raise DimensionError(f"weight expects {weight.shape[-1]} input coordinates, got {x.shape[-1]}")
    space = _resolve(activation)(F.linear(x, weight, bias))
    return lorentz.lift(space, k)


def lorentz_activation(x: torch.Tensor, k, activation: Activation = "elu") -> torch.Tensor:
    """Apply ``activation`` to the space coordinates only."""
    return lorentz.lift(_resolve(activation)(x[..., 1:]), k)


def hyperbolic_concat(points: Union[torch.Tensor, Sequence[torch.Tensor]], k) -> torch.Tensor:
    """
    Lorentz direct concatenation of ``N`` points into one of dimension ``N*n``.

    Args:
        points: ``(..., N, n+1)`` tensor or a sequence of ``(..., n+1)`` tensors
        k: Shared curvature

    Returns:
        ``(..., N*n + 1)`` tensor
    """
    if not torch.is_tensor(points):
        if len(points) == 0:
            raise DimensionError("concat needs at least one point")
        points = torch.stack(list(points), dim=-2)
    count = points.shape[-2]
    time = torch.sqrt((points[..., 0] ** 2).sum(-1, keepdim=True) + (count - 1) / lorentz.as_curvature(k))
    space = points[..., 1:].reshape(*points.shape[:-2], -1)
    return torch.cat([time, space], dim=-1)


def concat_points(points: Sequence[LorentzPoint]) -> LorentzPoint:
    """Checked concatenation of individual points."""
    if not points:
        raise DimensionError("concat needs at least one point")
    first = points[0]
    for p in points[1:]:
        if p.curvature != first.curvature:
            raise GeometryError(f"concat of mixed curvatures {first.curvature.value} and {p.curvature.value}")
        if p.dim != first.dim:
            raise DimensionError(f"concat of mixed dimensions {first.dim} and {p.dim}")
    coords = hyperbolic_concat([p.coords for p in points], first.curvature.value)
    return LorentzPoint(coords, first.curvature)


class LorentzLinear(nn.Module):
    """Lorentz fully-connected layer from an n-dimensional to a d'-dimensional manifold."""

    def __init__(self, in_features: int, out_features: int, activation: str = "none"):
        super(LorentzLinear, self).__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.activation = activation
        _resolve(activation)
        self.weight = nn.Parameter(torch.empty(out_features, in_features + 1, dtype=DTYPE))
        self.bias = nn.Parameter(torch.empty(out_features, dtype=DTYPE))
        self.reset_parameters()

    def reset_parameters(self):
        init.xavier_uniform_(self.weight)
        init.zeros_(self.bias)

    def forward(self, x: torch.Tensor, k) -> torch.Tensor:
        return lorentz_linear(x, self.weight, self.bias, k, self.activation)

    def extra_repr(self) -> str:
        return f"in_features={self.in_features}, out_features={self.out_features}, activation={self.activation}"


class HyperbolicLayerNorm(nn.Module):
    """Standardize the space coordinates, apply an affine map, rebuild time."""

    def __init__(self, dim: int, eps: float = 1e-5):
        super(HyperbolicLayerNorm, self).__init__()
        if dim < 2:
            raise DimensionError("layer norm needs at least two space coordinates")
        self.norm = nn.LayerNorm(dim, eps=eps, dtype=DTYPE)

    def forward(self, x: torch.Tensor, k) -> torch.Tensor:
        return lorentz.lift(self.norm(x[..., 1:]), k)


def hmlr_logits(x: torch.Tensor, z: torch.Tensor, a: torch.Tensor, k) -> torch.Tensor:
    """
    Signed geodesic distances from ``x`` to the class hyperplanes.

    Each class hyperplane is given by a direction ``z_c`` in R^n and an offset
    ``a_c``; the logit is ``(b/sqrt(-k)) asinh(sqrt(-k) alpha / b)`` with
    ``alpha = cosh(sqrt(-k) a)<z, x_s> - sinh(sqrt(-k) a)|z| x_t`` and
    ``b = |z|``.

    Raises:
        ParameterError: If some ``|z_c|`` is zero or non-finite
    """
    if z.shape[-1] != x.shape[-1] - 1:
        raise DimensionError(f"class directions have {z.shape[-1]} coordinates, points have {x.shape[-1] - 1}")
    sk = torch.sqrt(-lorentz.as_curvature(k))
    beta = torch.linalg.norm(z, dim=-1)
    if not torch.isfinite(beta).all() or bool((beta == 0).any()):
        raise ParameterError("hyperplane directions must have finite non-zero norm")
    scaled = sk * a
    alpha = torch.cosh(scaled) * (x[..., 1:] @ z.transpose(-1, -2)) - torch.sinh(scaled) * beta * x[..., :1]
    return beta / sk * torch.asinh(sk * alpha / beta)


class HyperbolicMLR(nn.Module):
    """Multinomial logistic regression with geodesic hyperplanes."""

    def __init__(self, dim: int, classes: int):
        super(HyperbolicMLR, self).__init__()
        self.dim = dim
        self.classes = classes
        self.z = nn.Parameter(torch.empty(classes, dim, dtype=DTYPE))
        self.a = nn.Parameter(torch.empty(classes, dtype=DTYPE))
        self.reset_parameters()

    def reset_parameters(self):
        init.normal_(self.z, mean=0.0, std=1.0 / math.sqrt(self.dim))
        init.zeros_(self.a)

    def forward(self, x: torch.Tensor, k) -> torch.Tensor:
        return hmlr_logits(x, self.z, self.a, k)


class HyperbolicBatchNorm(nn.Module):
    """
    Gyro-centering and gyro-scaling batch norm with per-domain running statistics.

    Training mode normalizes with the batch Fréchet mean and variance and
    moves the batch's domain statistics toward them along the geodesic with
    momentum ``momentum * momentum_decay**epoch``. The first batch of a domain
    sets its statistics outright. Eval mode first adapts the domain's
    statistics with the fixed ``momentum_test`` and then normalizes with them;
    an unseen domain starts from the Fréchet mean of the stored means and the
    mean stored variance.
    """

    def __init__(self, dim: int, config: Optional[HBNConfig] = None, frechet: Optional[FrechetConfig] = None):
        super(HyperbolicBatchNorm, self).__init__()
        self.dim = dim
        self.config = config or HBNConfig()
        self.frechet = frechet or FrechetConfig()
        self.gamma = nn.Parameter(torch.ones((), dtype=DTYPE))
        self.running_mean: Dict[str, torch.Tensor] = {}
        self.running_var: Dict[str, torch.Tensor] = {}
        self.epoch = 0

    @property
    def momentum(self) -> float:
        return self.config.momentum * self.config.momentum_decay ** self.epoch

    def end_epoch(self) -> None:
        self.epoch += 1

    def normalize(self, x: torch.Tensor, mean: torch.Tensor, var: torch.Tensor, k) -> torch.Tensor:
        centered = lorentz.gyro_add(lorentz.gyro_inverse(mean), x, k)
        scale = self.gamma / torch.sqrt(var + self.config.eps)
        return lorentz.gyro_scale(scale, centered, k)

    def batch_statistics(self, x: torch.Tensor, k):
        mean = frechet_mean(x, k, config=self.frechet)
        return mean, frechet_var(x, mean, k)

    def update_running(self, domain: str, mean: torch.Tensor, var: torch.Tensor, k, momentum: float) -> None:
        """Interpolate a domain's running statistics toward batch statistics."""
        mean = mean.detach()
        var = var.detach()
        if domain not in self.running_mean:
            self.running_mean[domain] = mean.clone()
            self.running_var[domain] = var.clone()
            return
        k = lorentz.curvature_value(k)
        moved = lorentz.geodesic(self.running_mean[domain], mean, momentum, k)
        self.running_mean[domain] = lorentz.project(moved, k)
        self.running_var[domain] = (1 - momentum) * self.running_var[domain] + momentum * var

    def initial_statistics(self, k):
        """Starting statistics for a domain never seen before."""
        k = lorentz.curvature_value(k)
        if not self.running_mean:
            return lorentz.origin(self.dim, k), torch.ones((), dtype=DTYPE)
        domains = sorted(self.running_mean)
        means = torch.stack([self.running_mean[d] for d in domains])
        mean = frechet_mean(means, k, config=self.frechet)
        var = torch.stack([self.running_var[d] for d in domains]).mean()
        return lorentz.project(mean, k), var

    def forward(self, x: torch.Tensor, k, domain: str) -> torch.Tensor:
        if x.dim() < 2 or x.shape[-2] == 0:
            raise DimensionError("batch norm needs a non-empty batch of points")

        if self.training:
            mean, var = self.batch_statistics(x, k)
            self.update_running(domain, mean, var, k, self.momentum)
            return self.normalize(x, mean, var, k)

        with torch.no_grad():
            batch_mean, batch_var = self.batch_statistics(x.detach(), lorentz.curvature_value(k))
            if domain not in self.running_mean:
                logger.debug(f"Initializing statistics for unseen domain {domain!r}")
                self.running_mean[domain], self.running_var[domain] = self.initial_statistics(k)
            self.update_running(domain, batch_mean, batch_var, k, self.config.momentum_test)
        return self.normalize(x, self.running_mean[domain], self.running_var[domain], k)

    def rescale_curvature(self, k_old: float, k_new: float) -> None:
        """Carry running statistics over to a manifold of different curvature."""
        if k_old == k_new:
            return
        for domain in self.running_mean:
            self.running_mean[domain] = lorentz.rescale(self.running_mean[domain], k_old, k_new)
            self.running_var[domain] = self.running_var[domain] * (k_old / k_new)

    def state(self) -> Dict[str, object]:
        """JSON-ready running statistics."""
        return {
            "epoch": self.epoch,
            "running": {
                domain: {
                    "mean": self.running_mean[domain].tolist(),
                    "var": float(self.running_var[domain]),
                }
                for domain in sorted(self.running_mean)
            },
        }

    def load_state(self, state: Dict[str, object]) -> None:
        self.epoch = int(state["epoch"])
        self.running_mean = {}
        self.running_var = {}
        for domain, stats in state["running"].items():
            self.running_mean[domain] = torch.tensor(stats["mean"], dtype=DTYPE)
            self.running_var[domain] = torch.tensor(stats["var"], dtype=DTYPE)
