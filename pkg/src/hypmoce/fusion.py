"""
Curvature-oriented cross-modal fusion.

Each modality contributes one point on its own manifold. Points are moved to a
shared fusion manifold whose curvature is the mean of the modality
curvatures, refined by cross-attention layers in which a modality attends only
to the others, and pooled with a Fréchet mean followed by a Lorentz linear
map. Attention temperatures shrink with ``|K|`` and the first layer adds a
learnable prior that favours strongly curved modalities.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from . import lorentz
from .config import FrechetConfig
from .errors import DimensionError, GeometryError
from .frechet import frechet_mean
from .layers import HyperbolicLayerNorm, LorentzLinear
from .lorentz import DTYPE
from .points import Curvature, LorentzPoint

logger = logging.getLogger(__name__)


def fusion_curvature(curvatures: torch.Tensor) -> torch.Tensor:
    """Arithmetic mean of the modality curvatures."""
    curvatures = torch.as_tensor(curvatures, dtype=DTYPE)
    if curvatures.numel() == 0:
        raise DimensionError("fusion curvature needs at least one modality")
    return curvatures.mean()


def project_between_manifolds(z: torch.Tensor, k_source, k_target) -> torch.Tensor:
    """``exp_o^{K_f}(sqrt(K_m/K_f) log_o^{K_m}(z))``."""
    return lorentz.rescale(z, k_source, k_target)


def curvature_temperature(k, tau0: float) -> torch.Tensor:
    """Attention temperature ``tau0 / sqrt(|K|)``."""
    return tau0 / torch.sqrt(torch.abs(lorentz.as_curvature(k)))


def curvature_prior(curvatures: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    return torch.log(torch.abs(curvatures) + eps)


def attention_weights(
    query: torch.Tensor,
    keys: torch.Tensor,
    k_fusion,
    tau: torch.Tensor,
    prior: Optional[torch.Tensor] = None,
    strength: Optional[torch.Tensor] = None,
    mask: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """
    Softmax attention over keys from negative squared geodesic distances.

    Args:
        query: ``(..., n+1)`` query points
        keys: ``(..., J, n+1)`` key points
        k_fusion: Curvature shared by queries and keys
        tau: Temperature, broadcastable to ``(...)``
        prior: ``(..., J)`` per-key prior ``log(|K_j| + eps)``, or None
        strength: Prior strength ``lambda``; required with ``prior``
        mask: ``(..., J)`` boolean, True where a key must be ignored

    Returns:
        ``(..., J)`` non-negative weights summing to one
    """
    if keys.shape[-2] == 0:
        raise DimensionError("attention needs at least one key")
    scores = -lorentz.sqdist(query.unsqueeze(-2), keys, k_fusion) / torch.as_tensor(tau, dtype=DTYPE).unsqueeze(-1)
    if prior is not None:
        scores = scores + strength * prior
    if mask is not None:
        scores = scores.masked_fill(mask, float("-inf"))
    return torch.softmax(scores, dim=-1)


@dataclass(frozen=True, eq=False)
class ModalitySet:
    """Per-modality representations, each on its own manifold, in a fixed order."""

    ids: Tuple[str, ...]
    curvatures: Tuple[Curvature, ...]
    reps: Tuple[LorentzPoint, ...]

    def __post_init__(self):
        if not (len(self.ids) == len(self.curvatures) == len(self.reps)):
            raise DimensionError("modality ids, curvatures and representations must align")
        if len(set(self.ids)) != len(self.ids):
            raise DimensionError("modality ids must be unique")
        for mid, k, rep in zip(self.ids, self.curvatures, self.reps):
            if rep.curvature != k:
                raise GeometryError(f"modality {mid!r}: representation curvature {rep.curvature.value} != {k.value}")

    def curvature_tensor(self) -> torch.Tensor:
        return torch.tensor([k.value for k in self.curvatures], dtype=DTYPE)

    def stacked(self) -> torch.Tensor:
        return torch.stack([rep.coords for rep in self.reps])


class CrossModalAttention(nn.Module):
    """
    One fusion layer: per-head Lorentz q/k/v maps, distance attention over the
    other modalities, Fréchet aggregation of values and then of heads, and a
    hyperbolic layer norm. There is no residual connection.
    """

    def __init__(self, dim: int, heads: int, frechet: Optional[FrechetConfig] = None):
        super(CrossModalAttention, self).__init__()
        self.heads = heads
        self.frechet = frechet or FrechetConfig()
        self.query = nn.ModuleList([LorentzLinear(dim, dim) for _ in range(heads)])
        self.key = nn.ModuleList([LorentzLinear(dim, dim) for _ in range(heads)])
        self.value = nn.ModuleList([LorentzLinear(dim, dim) for _ in range(heads)])
        self.norm = HyperbolicLayerNorm(dim)

    def forward(self, x: torch.Tensor, k_fusion, tau: torch.Tensor, prior=None, strength=None):
        """
        Args:
            x: ``(B, M, n+1)`` modality tokens on the fusion manifold
            k_fusion: Fusion curvature
            tau: ``(M,)`` per-query-modality temperatures
            prior: ``(M,)`` per-key-modality prior, applied when given
            strength: Prior strength ``lambda``

        Returns:
            Updated tokens ``(B, M, n+1)`` and attention ``(B, H, M, M)``
            where entry ``[b, h, m, j]`` is the weight modality m gives j
        """
        count = x.shape[-2]
        if count < 2:
            raise DimensionError("cross-modal attention needs at least two modalities")

        q = torch.stack([f(x, k_fusion) for f in self.query], dim=1)
        kk = torch.stack([f(x, k_fusion) for f in self.key], dim=1)
        v = torch.stack([f(x, k_fusion) for f in self.value], dim=1)

        # queries index dim -2 of the score matrix, keys dim -1
        weights = attention_weights(
            q,
            kk.unsqueeze(-3),
            k_fusion,
            tau,
            prior=prior,
            strength=strength,
            mask=torch.eye(count, dtype=torch.bool),
        )

        values = v.unsqueeze(-3).expand(*v.shape[:-2], count, count, v.shape[-1])
        heads = frechet_mean(values, k_fusion, weights, self.frechet)
        merged = frechet_mean(heads.transpose(1, 2), k_fusion, config=self.frechet)
        return self.norm(merged, k_fusion), weights


class CurvatureFusion(nn.Module):
    """Fuse per-modality points into one point on the fusion manifold."""

    def __init__(
        self,
        dim: int,
        layers: int = 2,
        heads: int = 4,
        tau0: float = 1.0,
        lambda_init: float = 0.3,
        prior_eps: float = 1e-6,
        use_prior: bool = True,
        frechet: Optional[FrechetConfig] = None,
    ):
        super(CurvatureFusion, self).__init__()
        self.dim = dim
        self.tau0 = tau0
        self.prior_eps = prior_eps
        self.use_prior = use_prior
        self.frechet = frechet or FrechetConfig()
        # softplus^{-1}(lambda_init)
        self.lambda_raw = nn.Parameter(torch.tensor(math.log(math.expm1(lambda_init)), dtype=DTYPE))
        self.layers = nn.ModuleList([CrossModalAttention(dim, heads, self.frechet) for _ in range(layers)])
        self.output = LorentzLinear(dim, dim)

    @property
    def strength(self) -> torch.Tensor:
        """Prior strength ``lambda = softplus(lambda_raw)``."""
        return F.softplus(self.lambda_raw)

    def forward(self, reps: Sequence[torch.Tensor], curvatures: torch.Tensor, return_attention: bool = False):
        """
        Args:
            reps: One ``(B, n+1)`` tensor per modality, each on its own manifold
            curvatures: ``(M,)`` modality curvatures in the same order

        Returns:
            Fused ``(B, n+1)`` points on the fusion manifold, the fusion
            curvature and, when requested, the per-layer attention tensors
        """
        k_fusion = fusion_curvature(curvatures)
        tokens = torch.stack(
            [project_between_manifolds(rep, curvatures[m], k_fusion) for m, rep in enumerate(reps)],
            dim=-2,
        )

        attention: List[torch.Tensor] = []
        if len(reps) >= 2:
            tau = curvature_temperature(curvatures, self.tau0)
            for index, layer in enumerate(self.layers):
                prior = None
                if index == 0 and self.use_prior:
                    prior = curvature_prior(curvatures, self.prior_eps)
                tokens, weights = layer(tokens, k_fusion, tau, prior, self.strength)
                attention.append(weights)

        pooled = frechet_mean(tokens, k_fusion, config=self.frechet)
        fused = self.output(pooled, k_fusion)
        if return_attention:
            return fused, k_fusion, attention
        return fused, k_fusion

    def fuse(self, modalities: ModalitySet) -> LorentzPoint:
        """Checked single-sample fusion of a ``ModalitySet``."""
        reps = [rep.coords.unsqueeze(0) for rep in modalities.reps]
        with torch.no_grad():
            fused, k_fusion = self.forward(reps, modalities.curvature_tensor())
        k = lorentz.curvature_value(k_fusion)
        return LorentzPoint(lorentz.project(fused[0], k), Curvature(k))


class EuclideanFusion(nn.Module):
    """Dot-product cross-modal attention with mean pooling; the flat control."""

    def __init__(self, dim: int, layers: int = 2, heads: int = 4):
        super(EuclideanFusion, self).__init__()
        self.dim = dim
        self.heads = heads
        self.query = nn.ModuleList([nn.Linear(dim, dim * heads, dtype=DTYPE) for _ in range(layers)])
        self.key = nn.ModuleList([nn.Linear(dim, dim * heads, dtype=DTYPE) for _ in range(layers)])
        self.value = nn.ModuleList([nn.Linear(dim, dim * heads, dtype=DTYPE) for _ in range(layers)])
        self.norms = nn.ModuleList([nn.LayerNorm(dim, dtype=DTYPE) for _ in range(layers)])
        self.output = nn.Linear(dim, dim, dtype=DTYPE)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        # (B, M, H*d) -> (B, H, M, d)
        return x.view(*x.shape[:-1], self.heads, self.dim).transpose(-3, -2)

    def forward(self, reps: Sequence[torch.Tensor], return_attention: bool = False):
        tokens = torch.stack(list(reps), dim=-2)
        count = tokens.shape[-2]
        attention: List[torch.Tensor] = []
        if count >= 2:
            mask = torch.eye(count, dtype=torch.bool)
            for q_proj, k_proj, v_proj, norm in zip(self.query, self.key, self.value, self.norms):
                q, k, v = self._split(q_proj(tokens)), self._split(k_proj(tokens)), self._split(v_proj(tokens))
                scores = q @ k.transpose(-1, -2) / math.sqrt(self.dim)
                weights = torch.softmax(scores.masked_fill(mask, float("-inf")), dim=-1)
                tokens = norm((weights @ v).mean(dim=-3))
                attention.append(weights)
        fused = self.output(tokens.mean(dim=-2))
        if return_attention:
            return fused, attention
        return fused
