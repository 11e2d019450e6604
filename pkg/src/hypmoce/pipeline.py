"""
Grouped cross-validation runs for hypmoce.
"""

import csv
import json
import logging
import os
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional

import numpy as np
import torch

from .config import RunConfig, to_dict
from .errors import DataError
from .model import MoceModel, save_checkpoint
from .synth import MultimodalDataset, grouped_folds
from .training import MetricsReport, evaluate, train

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"
FOLDS_FILE = "folds.csv"


def fold_seed(run_seed: int, fold: int) -> int:
    """Sub-seed of one fold, derived from the run seed."""
    return int(np.random.SeedSequence([run_seed, fold]).generate_state(1)[0])


def validation_groups(train_groups: np.ndarray, count: int, seed: int) -> np.ndarray:
    """Pick ``count`` of the training subjects for early stopping."""
    if count >= len(train_groups):
        raise DataError(
            f"cannot hold out {count} validation subjects from {len(train_groups)} training subjects"
        )
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(train_groups, size=count, replace=False))


@dataclass
class FoldResult:
    fold: int
    seed: int
    train_groups: List[int]
    val_groups: List[int]
    test_groups: List[int]
    best_epoch: int
    metrics: MetricsReport
    history: List[Dict[str, Any]]
    model: MoceModel

    def to_dict(self) -> Dict[str, Any]:
        record = {
            "fold": self.fold,
            "seed": self.seed,
            "train_groups": self.train_groups,
            "val_groups": self.val_groups,
            "test_groups": self.test_groups,
            "best_epoch": self.best_epoch,
            "history": self.history,
        }
        record.update(self.metrics.to_dict())
        return record


@dataclass
class CrossValidationResult:
    folds: List[FoldResult]
    config: RunConfig

    def summary(self) -> Dict[str, Any]:
        """Mean and standard deviation over folds, plus the per-fold records without history."""
        balanced = [f.metrics.balanced_accuracy for f in self.folds]
        f1 = [f.metrics.macro_f1 for f in self.folds]
        return {
            "seed": self.config.seed,
            "folds": [
                {k: v for k, v in fold.to_dict().items() if k not in ("history", "train_groups")}
                for fold in self.folds
            ],
            "balanced_accuracy": {"mean": float(np.mean(balanced)), "std": float(np.std(balanced))},
            "macro_f1": {"mean": float(np.mean(f1)), "std": float(np.std(f1))},
        }


def run_fold(
    dataset: MultimodalDataset,
    config: RunConfig,
    fold: int,
    train_groups: np.ndarray,
    test_groups: np.ndarray,
    debug_checks: bool = False,
) -> FoldResult:
    """Train on one fold and score the best model on its held-out subjects."""
    seed = fold_seed(config.seed, fold)
    val = validation_groups(train_groups, config.eval.val_groups, seed)
    fit = np.setdiff1d(train_groups, val)

    torch.manual_seed(seed)
    model = MoceModel(dataset.input_dims, dataset.classes, config.model, debug_checks)
    result = train(model, dataset, replace(config.train, seed=seed), fit, val)
    metrics = evaluate(result.model, dataset, dataset.indices_for(test_groups))

    return FoldResult(
        fold=fold,
        seed=seed,
        train_groups=[int(g) for g in fit],
        val_groups=[int(g) for g in val],
        test_groups=[int(g) for g in test_groups],
        best_epoch=result.best_epoch,
        metrics=metrics,
        history=result.history,
        model=result.model,
    )


def run_cross_validation(
    dataset: MultimodalDataset,
    config: RunConfig,
    debug_checks: bool = False,
) -> CrossValidationResult:
    """
    Grouped cross-validation of the model described by ``config``.

    Every fold holds out whole subjects; ``config.eval.val_groups`` of the
    remaining subjects drive early stopping.

    Args:
        dataset: Dataset to cross-validate on
        config: Run configuration
        debug_checks: Check manifold membership after every model stage

    Returns:
        CrossValidationResult with one FoldResult per fold
    """
    folds = grouped_folds(dataset.groups, config.eval.folds)
    logger.info(f"Starting {len(folds)}-fold grouped cross-validation on {len(dataset)} samples")

    results = []
    for fold, (train_groups, test_groups) in enumerate(folds):
        logger.info(f"Fold {fold}: testing on subjects {[int(g) for g in test_groups]}")
        try:
            result = run_fold(dataset, config, fold, train_groups, test_groups, debug_checks)
        except Exception as e:
            logger.error(f"Fold {fold} failed: {e}")
            raise
        logger.info(
            f"Fold {fold} finished: balanced accuracy {result.metrics.balanced_accuracy:.4f}, "
            f"macro F1 {result.metrics.macro_f1:.4f}"
        )
        results.append(result)
    return CrossValidationResult(results, config)


def _write_json(path: str, document: Any) -> None:
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(json.dumps(document, indent=2, sort_keys=True))
        f.write("\n")


def write_outputs(result: CrossValidationResult, out_dir: str, summary: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    Write per-fold checkpoints and metrics, the fold table and the summary.

    Layout::

        out_dir/fold-<i>/checkpoint.json
        out_dir/fold-<i>/metrics.json
        out_dir/folds.csv
        out_dir/summary.json

    Returns:
        The summary document
    """
    from .formatters import format_folds_csv

    os.makedirs(out_dir, exist_ok=True)
    for fold in result.folds:
        fold_dir = os.path.join(out_dir, f"fold-{fold.fold}")
        os.makedirs(fold_dir, exist_ok=True)
        record = fold.to_dict()
        save_checkpoint(fold.model, os.path.join(fold_dir, "checkpoint.json"), metadata={
            "fold": fold.fold,
            "seed": fold.seed,
            "train_groups": fold.train_groups,
            "val_groups": fold.val_groups,
            "test_groups": fold.test_groups,
            "best_epoch": fold.best_epoch,
            "history": fold.history,
        })
        _write_json(os.path.join(fold_dir, "metrics.json"), record)

    summary = summary or result.summary()
    with open(os.path.join(out_dir, FOLDS_FILE), 'w', encoding='utf-8', newline='') as f:
        f.write(format_folds_csv(summary))
    _write_json(os.path.join(out_dir, SUMMARY_FILE), dict(summary, config=to_dict(result.config)))
    logger.info(f"Wrote {len(result.folds)} fold(s) to {out_dir}")
    return summary
