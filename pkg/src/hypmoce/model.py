"""
Mixture-of-curvature model: one expert per modality, each on a manifold with
its own learnable curvature, followed by curvature-oriented fusion and a
hyperbolic classifier.

``ModelConfig.hyperbolic_experts`` and ``ModelConfig.hyperbolic_fusion``
swap either stage for a flat counterpart. Flat expert outputs are lifted with
``exp_o`` before hyperbolic fusion; hyperbolic expert outputs are read in the
tangent space at the origin before flat fusion.
"""

import json
import logging
import math
from typing import Any, Dict, List, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from . import lorentz
from .config import CURVATURE_MAX, CURVATURE_MIN, ModelConfig, from_dict, to_dict
from .errors import DataError, DimensionError, GeometryError, VersionError
from .fusion import CurvatureFusion, EuclideanFusion
from .layers import HyperbolicBatchNorm, HyperbolicMLR, LorentzLinear, hyperbolic_concat, lorentz_activation
from .lorentz import DTYPE
from .points import RESIDUAL_TOL

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
RAW_MIN = math.log(-CURVATURE_MAX)
RAW_MAX = math.log(-CURVATURE_MIN)


def check_on_manifold(p: torch.Tensor, k, stage: str) -> None:
    """Raise ``GeometryError`` naming ``stage`` if any point in ``p`` is off its hyperboloid."""
    worst = float(lorentz.residual(p.detach(), lorentz.curvature_value(k)).max())
    if not math.isfinite(worst) or worst > RESIDUAL_TOL:
        raise GeometryError(f"{stage}: manifold residual {worst:.3e} exceeds {RESIDUAL_TOL:.0e}")
    if bool((p.detach()[..., 0] <= 0).any()):
        raise GeometryError(f"{stage}: point on the lower sheet")


class ToyEncoder(nn.Sequential):
    """Two-layer perceptron with a tanh hidden layer."""

    def __init__(self, in_features: int, hidden: int, out_features: int):
        super(ToyEncoder, self).__init__(
            nn.Linear(in_features, hidden, dtype=DTYPE),
            nn.Tanh(),
            nn.Linear(hidden, out_features, dtype=DTYPE),
        )


class _CurvedExpert(nn.Module):
    """Shared curvature handling: ``K = -clamp(exp(raw), 0.1, 10)``."""

    def __init__(self, curvature_init: float, learnable: bool):
        super(_CurvedExpert, self).__init__()
        self.curvature_raw = nn.Parameter(
            torch.tensor(math.log(-curvature_init), dtype=DTYPE), requires_grad=learnable
        )

    def curvature(self) -> torch.Tensor:
        return -torch.clamp(torch.exp(self.curvature_raw), -CURVATURE_MAX, -CURVATURE_MIN)

    def clamp_curvature(self) -> None:
        with torch.no_grad():
            self.curvature_raw.clamp_(RAW_MIN, RAW_MAX)


class CurvatureExpert(_CurvedExpert):
    """
    Hyperbolic expert: encoder, ``exp_o`` lift, batch norm, activation, then
    a single-token concatenation followed by a Lorentz linear map.
    """

    def __init__(
        self,
        in_features: int,
        config: ModelConfig,
        curvature_init: float,
        debug_checks: bool = False,
    ):
        super(CurvatureExpert, self).__init__(curvature_init, config.learnable_curvature)
        self.encoder = ToyEncoder(in_features, config.hidden, config.dim)
        self.hbn = HyperbolicBatchNorm(config.dim, config.hbn, config.frechet)
        self.activation = config.activation
        self.pool = LorentzLinear(config.dim, config.dim)
        self.debug_checks = debug_checks
        self.reference_curvature = float(self.curvature().detach())

    def sync_curvature(self) -> None:
        """Move running statistics to the current curvature if it changed."""
        current = float(self.curvature().detach())
        if current != self.reference_curvature:
            self.hbn.rescale_curvature(self.reference_curvature, current)
            self.reference_curvature = current

    def _stage(self, name: str, p: torch.Tensor, k) -> torch.Tensor:
        if self.debug_checks:
            check_on_manifold(p, k, name)
        return p

    def forward(self, x: torch.Tensor, domain: str):
        k = self.curvature()
        p = self._stage("lift", lorentz.expmap0(self.encoder(x), k), k)
        p = self._stage("batch norm", self.hbn(p, k, domain), k)
        p = self._stage("activation", lorentz_activation(p, k, self.activation), k)
        p = self._stage("pool", self.pool(hyperbolic_concat([p], k), k), k)
        return p, k


class EuclideanExpert(_CurvedExpert):
    """Flat expert: encoder, batch norm, ELU and a linear map."""

    def __init__(self, in_features: int, config: ModelConfig, curvature_init: float):
        super(EuclideanExpert, self).__init__(curvature_init, config.learnable_curvature)
        self.encoder = ToyEncoder(in_features, config.hidden, config.dim)
        self.norm = nn.BatchNorm1d(config.dim, dtype=DTYPE)
        self.output = nn.Linear(config.dim, config.dim, dtype=DTYPE)

    def forward(self, x: torch.Tensor, domain: str):
        return self.output(F.elu(self.norm(self.encoder(x))))


class MoceModel(nn.Module):
    """
    End-to-end classifier over a fixed set of modalities.

    Modalities are processed in sorted id order, so the order of the input
    dictionary never changes the logits.
    """

    def __init__(
        self,
        input_dims: Dict[str, int],
        classes: int,
        config: Optional[ModelConfig] = None,
        debug_checks: bool = False,
    ):
        super(MoceModel, self).__init__()
        self.config = config or ModelConfig()
        self.classes = classes
        self.debug_checks = debug_checks

        names = sorted(self.config.modalities or input_dims)
        unknown = [m for m in names if m not in input_dims]
        if unknown:
            raise DataError(f"model modalities not present in the data: {', '.join(unknown)}")
        self.modalities: List[str] = names
        self.input_dims = {m: int(input_dims[m]) for m in names}

        cfg = self.config
        experts = {}
        for m in names:
            k_init = cfg.initial_curvature(m)
            if cfg.hyperbolic_experts:
                experts[m] = CurvatureExpert(self.input_dims[m], cfg, k_init, debug_checks)
            else:
                experts[m] = EuclideanExpert(self.input_dims[m], cfg, k_init)
        self.experts = nn.ModuleDict(experts)

        if cfg.hyperbolic_fusion:
            self.fusion = CurvatureFusion(
                cfg.dim,
                layers=cfg.layers,
                heads=cfg.heads,
                tau0=cfg.tau0,
                lambda_init=cfg.lambda_init,
                prior_eps=cfg.prior_eps,
                use_prior=cfg.curvature_prior,
                frechet=cfg.frechet,
            )
            self.head = HyperbolicMLR(cfg.dim, classes)
        else:
            self.fusion = EuclideanFusion(cfg.dim, layers=cfg.layers, heads=cfg.heads)
            self.head = nn.Linear(cfg.dim, classes, dtype=DTYPE)

    def curvature_tensor(self) -> torch.Tensor:
        return torch.stack([self.experts[m].curvature() for m in self.modalities])

    def curvatures(self) -> Dict[str, float]:
        """Current per-modality curvatures."""
        return {m: float(self.experts[m].curvature().detach()) for m in self.modalities}

    def prior_strength(self) -> Optional[float]:
        """Current curvature-prior strength lambda, or None when the model has no prior."""
        if self.config.hyperbolic_fusion and self.config.curvature_prior:
            return float(self.fusion.strength.detach())
        return None

    def _expert_outputs(self, inputs: Dict[str, torch.Tensor], domain: str):
        """Raw expert outputs and curvatures, in modality order."""
        reps = []
        curvatures = []
        for m in self.modalities:
            if m not in inputs:
                raise DataError(f"missing modality {m!r}")
            x = torch.as_tensor(inputs[m], dtype=DTYPE)
            if x.shape[-1] != self.input_dims[m]:
                raise DimensionError(f"modality {m!r}: expected {self.input_dims[m]} features, got {x.shape[-1]}")
            expert = self.experts[m]
            if self.config.hyperbolic_experts:
                z, k = expert(x, domain)
            else:
                z, k = expert(x, domain), expert.curvature()
            reps.append(z)
            curvatures.append(k)
        return reps, curvatures

    def encode(self, inputs: Dict[str, torch.Tensor], domain: str) -> Dict[str, torch.Tensor]:
        """
        Expert features per modality as Euclidean vectors.

        Hyperbolic expert outputs are pulled back with ``log_o``; flat experts
        are returned as they are.
        """
        reps, curvatures = self._expert_outputs(inputs, domain)
        if self.config.hyperbolic_experts:
            reps = [lorentz.logmap0(z, k) for z, k in zip(reps, curvatures)]
        return dict(zip(self.modalities, reps))

    def forward(self, inputs: Dict[str, torch.Tensor], domain: str, return_attention: bool = False):
        cfg = self.config
        reps, curvatures = self._expert_outputs(inputs, domain)
        if cfg.hyperbolic_experts and not cfg.hyperbolic_fusion:
            reps = [lorentz.logmap0(z, k) for z, k in zip(reps, curvatures)]
        elif cfg.hyperbolic_fusion and not cfg.hyperbolic_experts:
            reps = [lorentz.expmap0(h, k) for h, k in zip(reps, curvatures)]

        if cfg.hyperbolic_fusion:
            fused, k_fusion, attention = self.fusion(reps, torch.stack(curvatures), return_attention=True)
            if self.debug_checks:
                check_on_manifold(fused, k_fusion, "fusion")
            logits = self.head(fused, k_fusion)
        else:
            fused, attention = self.fusion(reps, return_attention=True)
            logits = self.head(fused)

        if return_attention:
            return logits, attention
        return logits

    def clamp_curvatures(self) -> None:
        for expert in self.experts.values():
            expert.clamp_curvature()

    def sync_curvatures(self) -> None:
        for expert in self.experts.values():
            if isinstance(expert, CurvatureExpert):
                expert.sync_curvature()

    def end_epoch(self) -> None:
        for expert in self.experts.values():
            if isinstance(expert, CurvatureExpert):
                expert.hbn.end_epoch()

    def hbn_states(self) -> Dict[str, Dict[str, Any]]:
        return {
            m: expert.hbn.state()
            for m, expert in self.experts.items()
            if isinstance(expert, CurvatureExpert)
        }


def model_loss(logits: torch.Tensor, labels) -> torch.Tensor:
    """Softmax cross-entropy, averaged over the batch."""
    labels = torch.as_tensor(labels, dtype=torch.long)
    if logits.dim() == 1:
        logits = logits.unsqueeze(0)
        labels = labels.reshape(1)
    return F.cross_entropy(logits, labels)


def checkpoint_document(model: MoceModel, metadata: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    JSON-ready checkpoint of ``model``.

    Parameters are stored as nested lists; python's float repr round-trips
    float64 exactly, so loading reproduces the model bit for bit.
    """
    return {
        "format_version": FORMAT_VERSION,
        "config": to_dict(model.config),
        "input_dims": dict(model.input_dims),
        "classes": model.classes,
        "parameters": {name: tensor.tolist() for name, tensor in model.state_dict().items()},
        "curvature_raw": {m: float(model.experts[m].curvature_raw) for m in model.modalities},
        "curvatures": model.curvatures(),
        "lambda": model.prior_strength(),
        "hbn": model.hbn_states(),
        "metadata": metadata or {},
    }


def save_checkpoint(model: MoceModel, path: str, metadata: Optional[Dict[str, Any]] = None) -> None:
    document = checkpoint_document(model, metadata)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(json.dumps(document, indent=2, sort_keys=True))
        f.write("\n")


def model_from_document(document: Dict[str, Any], debug_checks: bool = False) -> MoceModel:
    version = document.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported checkpoint format version {version!r} (expected {FORMAT_VERSION})")
    try:
        config = from_dict(ModelConfig, document["config"], "config")
        model = MoceModel(document["input_dims"], int(document["classes"]), config, debug_checks)
        reference = model.state_dict()
        state = {
            name: torch.tensor(values, dtype=reference[name].dtype)
            for name, values in document["parameters"].items()
        }
        model.load_state_dict(state)
        for m, hbn_state in document.get("hbn", {}).items():
            expert = model.experts[m]
            expert.hbn.load_state(hbn_state)
            expert.reference_curvature = float(expert.curvature())
    except (KeyError, TypeError, RuntimeError) as e:
        raise DataError(f"malformed checkpoint: {e}")
    return model


def load_checkpoint(path: str, debug_checks: bool = False):
    """
    Load a checkpoint written by ``save_checkpoint``.

    Returns:
        Tuple of the model (in eval mode) and the checkpoint metadata

    Raises:
        VersionError: If the format version is not supported
        DataError: If the file is missing or malformed
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            document = json.load(f)
    except FileNotFoundError:
        raise DataError(f"{path}: checkpoint not found")
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON ({e})")
    model = model_from_document(document, debug_checks)
    model.eval()
    return model, document.get("metadata", {})
