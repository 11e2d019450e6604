"""
Multi-seed ablation runs and the statistics read off them.
"""

import copy
import logging
import math
from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import torch
from scipy.stats import spearmanr, ttest_rel

from .config import RunConfig
from .errors import ConfigError, DataError, DeltaError
from .hyperbolicity import MetricCloud, delta_rel_sampled
from .model import MoceModel
from .pipeline import CrossValidationResult, run_cross_validation
from .synth import MultimodalDataset

logger = logging.getLogger(__name__)

VARIANTS: Dict[str, Dict[str, bool]] = {
    "full": {},
    "hyperbolic_experts_only": {"hyperbolic_fusion": False},
    "hyperbolic_fusion_only": {"hyperbolic_experts": False},
    "euclidean": {"hyperbolic_experts": False, "hyperbolic_fusion": False},
    "fixed_curvature": {"learnable_curvature": False},
    "no_prior": {"curvature_prior": False},
}
ARCHITECTURES = ("full", "hyperbolic_experts_only", "hyperbolic_fusion_only", "euclidean")
CONTROL = "euclidean"
# δ_rel of feature clouds is estimated on batches of this size
DELTA_BATCH_SIZE = 100
DELTA_BATCHES = 5


def variant_config(config: RunConfig, variant: str, seed: int) -> RunConfig:
    """``config`` with the model switches of ``variant`` and a new run seed."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")
    return replace(config, seed=seed, model=replace(config.model, **VARIANTS[variant]))


def modality_contributions(model: MoceModel, dataset: MultimodalDataset, indices: np.ndarray) -> Dict[str, float]:
    """
    Share of first-layer attention each modality receives from the others.

    Attention is averaged over samples and heads and the shares are given in
    percent, summing to 100.
    """
    indices = np.asarray(indices)
    if indices.size == 0:
        raise DataError("no samples to measure contributions on")
    if len(model.modalities) < 2:
        return {m: 100.0 for m in model.modalities}

    runner = copy.deepcopy(model)
    runner.eval()
    received = torch.zeros(len(model.modalities), dtype=torch.float64)
    with torch.no_grad():
        for domain in np.unique(dataset.groups[indices]):
            batch = indices[dataset.groups[indices] == domain]
            _, attention = runner(dataset.inputs(batch), f"subject-{int(domain)}", return_attention=True)
            if not attention:
                raise DataError("model has no attention layers")
            # [b, h, m, j]: weight query m puts on key j; the diagonal is masked
            received += attention[0].sum(dim=-2).sum(dim=(0, 1))
    shares = received / received.sum() * 100.0
    return {m: float(s) for m, s in zip(model.modalities, shares)}


def encoded_features(model: MoceModel, dataset: MultimodalDataset, indices: np.ndarray) -> Dict[str, np.ndarray]:
    """Expert features of the samples at ``indices``, one forward pass per subject on a copy in eval mode."""
    indices = np.asarray(indices)
    if indices.size == 0:
        raise DataError("no samples to encode")
    runner = copy.deepcopy(model)
    runner.eval()
    features = {m: np.empty((len(indices), model.config.dim)) for m in model.modalities}
    with torch.no_grad():
        for domain in np.unique(dataset.groups[indices]):
            positions = np.flatnonzero(dataset.groups[indices] == domain)
            encoded = runner.encode(dataset.inputs(indices[positions]), f"subject-{int(domain)}")
            for m, z in encoded.items():
                features[m][positions] = z.numpy()
    return features


def modality_deltas(
    features: Dict[str, np.ndarray],
    batch_size: int = DELTA_BATCH_SIZE,
    n_batches: int = DELTA_BATCHES,
    seed: Optional[int] = 0,
) -> Dict[str, Optional[float]]:
    """Sampled δ_rel of every modality's feature cloud; None where it is undefined."""
    deltas: Dict[str, Optional[float]] = {}
    for m in sorted(features):
        try:
            deltas[m] = delta_rel_sampled(MetricCloud(features[m]), batch_size, n_batches, seed).delta_rel
        except (DataError, DeltaError) as e:
            logger.warning(f"δ_rel of modality {m!r} is undefined: {e}")
            deltas[m] = None
    return deltas


def modality_depths(dataset: MultimodalDataset) -> Dict[str, int]:
    """Tree depth per modality, when the dataset came from a synthetic spec."""
    spec = dataset.metadata.get("spec") or {}
    return {m["name"]: int(m["depth"]) for m in spec.get("modalities", [])}


def depth_curvature_correlation(depths: Dict[str, int], curvatures: Dict[str, float]) -> float:
    """Spearman correlation between tree depth and ``|K|``; NaN when either side is constant."""
    names = sorted(set(depths) & set(curvatures))
    if len(names) < 2:
        return float("nan")
    x = [depths[m] for m in names]
    y = [abs(curvatures[m]) for m in names]
    if len(set(x)) < 2 or len(set(y)) < 2:
        return float("nan")
    return float(spearmanr(x, y)[0])


def paired_test(treatment: Sequence[float], control: Sequence[float]) -> Dict[str, float]:
    """One-sided paired t-test that ``treatment`` exceeds ``control``."""
    treatment = np.asarray(treatment, dtype=np.float64)
    control = np.asarray(control, dtype=np.float64)
    difference = float(np.mean(treatment - control))
    if len(treatment) < 2 or np.all(treatment - control == (treatment - control)[0]):
        # constant differences leave the t statistic undefined
        return {"mean_difference": difference, "statistic": float("nan"), "p_value": float("nan")}
    result = ttest_rel(treatment, control, alternative="greater")
    return {"mean_difference": difference, "statistic": float(result.statistic), "p_value": float(result.pvalue)}


def _mean_curvatures(result: CrossValidationResult) -> Dict[str, float]:
    names = result.folds[0].metrics.curvatures.keys()
    return {m: float(np.mean([f.metrics.curvatures[m] for f in result.folds])) for m in names}


def _mean_lambda(result: CrossValidationResult) -> Optional[float]:
    values = [f.metrics.lambda_ for f in result.folds if f.metrics.lambda_ is not None]
    return float(np.mean(values)) if values else None


def _mean_contributions(dataset: MultimodalDataset, result: CrossValidationResult) -> Dict[str, float]:
    shares = [
        modality_contributions(f.model, dataset, dataset.indices_for(f.test_groups))
        for f in result.folds
    ]
    return {m: float(np.mean([s[m] for s in shares])) for m in shares[0]}


def _mean_or_none(values: Sequence[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def _mean_encoded_deltas(dataset: MultimodalDataset, result: CrossValidationResult) -> Dict[str, Optional[float]]:
    per_fold = [
        modality_deltas(encoded_features(f.model, dataset, dataset.indices_for(f.test_groups)), seed=f.seed)
        for f in result.folds
    ]
    return {m: _mean_or_none([d[m] for d in per_fold]) for m in per_fold[0]}


def _finite(value: float) -> Optional[float]:
    return value if value is not None and math.isfinite(value) else None


def run_ablation(
    dataset: MultimodalDataset,
    config: RunConfig,
    seeds: Sequence[int],
    variants: Sequence[str] = ARCHITECTURES,
    debug_checks: bool = False,
) -> Dict[str, Any]:
    """
    Cross-validate every variant under every seed.

    Returns:
        Report with mean balanced accuracy per variant and seed, the paired
        test of ``full`` against the flat control, and for the ``full``
        variant the depth and curvature correlation, the prior strength
        growth, the modality contributions and the δ_rel of the
        encoded features per seed. δ_rel of the raw features sits next to
        the encoded values
    """
    for variant in variants:
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")
    if not seeds:
        raise ConfigError("ablation needs at least one seed")

    depths = modality_depths(dataset)
    raw_deltas = modality_deltas(dataset.features)
    scores: Dict[str, List[float]] = {v: [] for v in variants}
    per_seed: List[Dict[str, Any]] = []

    for seed in seeds:
        record: Dict[str, Any] = {"seed": int(seed), "balanced_accuracy": {}}
        for variant in variants:
            logger.info(f"Variant {variant}, seed {seed}")
            result = run_cross_validation(dataset, variant_config(config, variant, int(seed)), debug_checks)
            score = result.summary()["balanced_accuracy"]["mean"]
            scores[variant].append(score)
            record["balanced_accuracy"][variant] = score

            if variant == "full":
                curvatures = _mean_curvatures(result)
                strength = _mean_lambda(result)
                record["curvatures"] = curvatures
                record["depth_curvature_spearman"] = _finite(depth_curvature_correlation(depths, curvatures))
                record["lambda"] = strength
                record["lambda_increased"] = None if strength is None else strength > config.model.lambda_init
                record["contributions"] = _mean_contributions(dataset, result)
                record["encoded_delta_rel"] = _mean_encoded_deltas(dataset, result)
        per_seed.append(record)

    report: Dict[str, Any] = {
        "seeds": [int(s) for s in seeds],
        "variants": {
            v: {"mean": float(np.mean(s)), "std": float(np.std(s)), "per_seed": s}
            for v, s in scores.items()
        },
        "per_seed": per_seed,
        "depths": depths,
        "raw_delta_rel": raw_deltas,
    }
    if "full" in scores and CONTROL in scores:
        test = paired_test(scores["full"], scores[CONTROL])
        report["full_vs_euclidean"] = {k: _finite(v) for k, v in test.items()}
    if "full" in scores:
        correlations = [r["depth_curvature_spearman"] for r in per_seed]
        report["positive_correlation_seeds"] = sum(1 for c in correlations if c is not None and c > 0)
        report["lambda_growth_seeds"] = sum(1 for r in per_seed if r.get("lambda_increased"))
        report["encoded_delta_rel"] = {
            m: _mean_or_none([r["encoded_delta_rel"].get(m) for r in per_seed]) for m in raw_deltas
        }
    return report
