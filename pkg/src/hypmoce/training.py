"""
Training loop, gradient contract and classification metrics.

Gradients come from reverse-mode autograd; ``finite_difference_gradient`` is
the central-difference oracle used to check them. Mini-batches never mix
subjects, so every batch-norm update sees a single domain.
"""

import copy
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from sklearn.metrics import confusion_matrix

from .config import TrainConfig
from .errors import DataError, DimensionError, TrainingError
from .model import MoceModel, model_loss
from .synth import MultimodalDataset

logger = logging.getLogger(__name__)

FD_STEP = 1e-5
MIN_BATCH = 2


@dataclass(frozen=True)
class MetricsReport:
    """Balanced accuracy and macro F1 with the confusion matrix they come from."""

    balanced_accuracy: float
    macro_f1: float
    recalls: Tuple[float, ...]
    confusion: Tuple[Tuple[int, ...], ...]
    curvatures: Dict[str, float] = field(default_factory=dict)
    lambda_: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "balanced_accuracy": self.balanced_accuracy,
            "macro_f1": self.macro_f1,
            "recalls": list(self.recalls),
            "confusion": [list(row) for row in self.confusion],
            "curvatures": dict(self.curvatures),
            "lambda": self.lambda_,
        }


def compute_metrics(
    predictions: Sequence[int],
    labels: Sequence[int],
    classes: int,
    curvatures: Optional[Dict[str, float]] = None,
    lambda_: Optional[float] = None,
) -> MetricsReport:
    """
    Balanced accuracy and macro F1 over ``classes`` classes.

    A class with no true samples has recall 0 and a class with no true or
    predicted samples has F1 0; both still count in the class average.

    Raises:
        DataError: On empty input or labels outside ``[0, classes)``
        DimensionError: If predictions and labels differ in length
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise DimensionError(f"{len(predictions)} predictions for {len(labels)} labels")
    if labels.size == 0:
        raise DataError("cannot compute metrics on an empty set")
    for name, values in (("labels", labels), ("predictions", predictions)):
        if values.min() < 0 or values.max() >= classes:
            raise DataError(f"{name} must lie in [0, {classes})")

    matrix = confusion_matrix(labels, predictions, labels=list(range(classes)))
    tp = np.diag(matrix).astype(np.float64)
    support = matrix.sum(axis=1).astype(np.float64)
    predicted = matrix.sum(axis=0).astype(np.float64)

    recalls = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    denominator = support + predicted
    f1 = np.divide(2 * tp, denominator, out=np.zeros_like(tp), where=denominator > 0)

    return MetricsReport(
        balanced_accuracy=float(recalls.mean()),
        macro_f1=float(f1.mean()),
        recalls=tuple(float(r) for r in recalls),
        confusion=tuple(tuple(int(c) for c in row) for row in matrix),
        curvatures=dict(curvatures or {}),
        lambda_=lambda_,
    )


def trainable_parameters(model: torch.nn.Module) -> Dict[str, torch.nn.Parameter]:
    return {name: p for name, p in model.named_parameters() if p.requires_grad}


def gradient(
    loss_fn: Callable[[], torch.Tensor],
    parameters: Dict[str, torch.Tensor],
) -> Dict[str, torch.Tensor]:
    """
    Reverse-mode gradient of a scalar loss.

    Args:
        loss_fn: Evaluates the loss from the current parameter values
        parameters: Named tensors to differentiate with respect to

    Returns:
        Gradient per parameter name; parameters the loss does not reach get zeros

    Raises:
        TrainingError: If the loss or any gradient entry is not finite
    """
    loss = loss_fn()
    if not torch.isfinite(loss).all():
        raise TrainingError(f"non-finite loss {float(loss.detach())}", parameter="loss")
    names = list(parameters)
    if not loss.requires_grad:
        return {name: torch.zeros_like(parameters[name]) for name in names}

    grads = torch.autograd.grad(loss, [parameters[name] for name in names], allow_unused=True)
    result = {}
    for name, grad in zip(names, grads):
        if grad is None:
            grad = torch.zeros_like(parameters[name])
        if not torch.isfinite(grad).all():
            raise TrainingError(f"non-finite gradient for parameter {name!r}", parameter=name)
        result[name] = grad
    return result


def finite_difference_gradient(
    loss_fn: Callable[[], torch.Tensor],
    parameters: Dict[str, torch.Tensor],
    h: float = FD_STEP,
) -> Dict[str, torch.Tensor]:
    """Central differences ``(f(θ + h e_i) - f(θ - h e_i)) / 2h``, one coordinate at a time."""
    result = {}
    with torch.no_grad():
        for name, param in parameters.items():
            flat = param.view(-1)
            grad = torch.zeros_like(flat)
            for i in range(flat.numel()):
                original = flat[i].item()
                flat[i] = original + h
                upper = float(loss_fn())
                flat[i] = original - h
                lower = float(loss_fn())
                flat[i] = original
                grad[i] = (upper - lower) / (2 * h)
            result[name] = grad.view_as(param)
    return result


def relative_error(first: Dict[str, torch.Tensor], second: Dict[str, torch.Tensor]) -> float:
    """Largest entrywise difference, relative to the largest gradient entry of either side."""
    if set(first) != set(second):
        raise DimensionError("gradient collections name different parameters")
    diff = max((float((first[n] - second[n]).abs().max()) for n in first), default=0.0)
    scale = max(
        max((float(first[n].abs().max()) for n in first), default=0.0),
        max((float(second[n].abs().max()) for n in second), default=0.0),
    )
    if scale == 0:
        return diff
    return diff / scale


def domain_batches(
    indices: np.ndarray,
    groups: np.ndarray,
    batch_size: int,
    rng: Optional[np.random.Generator] = None,
) -> List[Tuple[int, np.ndarray]]:
    """
    Split ``indices`` into single-domain mini-batches.

    Each domain's samples are shuffled (when ``rng`` is given) and chunked;
    a trailing chunk smaller than two samples joins the one before it. The
    order of all batches is shuffled too.

    Returns:
        List of ``(domain, sample_indices)``
    """
    indices = np.asarray(indices)
    batches = []
    for domain in np.unique(groups[indices]):
        members = indices[groups[indices] == domain]
        if rng is not None:
            members = members[rng.permutation(len(members))]
        chunks = [members[i:i + batch_size] for i in range(0, len(members), batch_size)]
        if len(chunks) > 1 and len(chunks[-1]) < MIN_BATCH:
            tail = chunks.pop()
            chunks[-1] = np.concatenate([chunks[-1], tail])
        batches.extend((int(domain), chunk) for chunk in chunks)
    if rng is not None:
        batches = [batches[i] for i in rng.permutation(len(batches))]
    return batches


def _domain(group: int) -> str:
    return f"subject-{group}"


def predict(model: MoceModel, dataset: MultimodalDataset, indices: np.ndarray) -> np.ndarray:
    """
    Class predictions for ``indices``, one forward pass per subject.

    Runs on a copy of ``model`` in eval mode, so the test-time statistics
    updates of batch norm never leak back into ``model``.
    """
    indices = np.asarray(indices)
    if indices.size == 0:
        raise DataError("nothing to predict")
    runner = copy.deepcopy(model)
    runner.eval()
    predictions = np.empty(len(indices), dtype=np.int64)
    with torch.no_grad():
        for domain in np.unique(dataset.groups[indices]):
            positions = np.flatnonzero(dataset.groups[indices] == domain)
            logits = runner(dataset.inputs(indices[positions]), _domain(int(domain)))
            predictions[positions] = torch.argmax(logits, dim=-1).numpy()
    return predictions


def evaluate(model: MoceModel, dataset: MultimodalDataset, indices: np.ndarray) -> MetricsReport:
    """Metrics of ``model`` on the samples at ``indices``, with its current curvatures and λ."""
    indices = np.asarray(indices)
    predictions = predict(model, dataset, indices)
    return compute_metrics(
        predictions,
        dataset.labels[indices],
        dataset.classes,
        curvatures=model.curvatures(),
        lambda_=model.prior_strength(),
    )


@dataclass
class TrainResult:
    model: MoceModel
    history: List[Dict[str, Any]]
    best_epoch: int
    best_metrics: MetricsReport


def train(
    model: MoceModel,
    dataset: MultimodalDataset,
    config: TrainConfig,
    train_groups: Sequence[int],
    val_groups: Sequence[int],
) -> TrainResult:
    """
    Fit ``model`` with Adam and early stopping on validation balanced accuracy.

    After every step the curvatures are clamped to their bounds and the batch
    norm statistics are carried over to the new curvatures. Training stops
    once more than ``config.patience`` epochs in a row bring no improvement.

    Args:
        model: Model to train; it is updated in place
        dataset: Full dataset
        config: Optimizer and stopping settings
        train_groups: Subjects to fit on
        val_groups: Subjects for model selection

    Returns:
        ``TrainResult`` whose model is a copy taken at the best epoch

    Raises:
        DataError: If either split is empty
        TrainingError: On a non-finite loss or gradient
    """
    train_idx = dataset.indices_for(train_groups)
    val_idx = dataset.indices_for(val_groups)
    if train_idx.size == 0:
        raise DataError("training split is empty")
    if val_idx.size == 0:
        raise DataError("validation split is empty")

    rng = np.random.default_rng(config.seed)
    parameters = trainable_parameters(model)
    optimizer = torch.optim.Adam(list(parameters.values()), lr=config.lr, betas=config.betas, eps=config.eps)

    history: List[Dict[str, Any]] = []
    best_model = copy.deepcopy(model)
    best_metrics: Optional[MetricsReport] = None
    best_epoch = 0
    bad_epochs = 0

    for epoch in range(1, config.epochs + 1):
        model.train()
        total = 0.0
        seen = 0
        for group, batch in domain_batches(train_idx, dataset.groups, config.batch_size, rng):
            if len(batch) < MIN_BATCH:
                logger.warning(f"Skipping subject {group}: a single sample cannot form a batch")
                continue
            inputs = dataset.inputs(batch)
            labels = dataset.labels[batch]
            losses = []

            def loss_fn():
                losses.append(model_loss(model(inputs, _domain(group)), labels))
                return losses[-1]

            grads = gradient(loss_fn, parameters)
            optimizer.zero_grad()
            for name, param in parameters.items():
                param.grad = grads[name]
            optimizer.step()
            model.clamp_curvatures()
            model.sync_curvatures()

            total += float(losses[-1].detach()) * len(batch)
            seen += len(batch)
        model.end_epoch()

        metrics = evaluate(model, dataset, val_idx)
        loss = total / seen if seen else float("nan")
        history.append({
            "epoch": epoch,
            "loss": loss,
            "balanced_accuracy": metrics.balanced_accuracy,
            "macro_f1": metrics.macro_f1,
            "curvatures": metrics.curvatures,
            "lambda": metrics.lambda_,
        })
        curvatures = ", ".join(f"{m}={k:.3f}" for m, k in metrics.curvatures.items())
        strength = "" if metrics.lambda_ is None else f", lambda={metrics.lambda_:.3f}"
        logger.info(
            f"Epoch {epoch}: loss={loss:.4f}, val balanced accuracy={metrics.balanced_accuracy:.4f}, "
            f"curvatures [{curvatures}]{strength}"
        )

        if best_metrics is None or metrics.balanced_accuracy > best_metrics.balanced_accuracy:
            best_metrics = metrics
            best_epoch = epoch
            best_model = copy.deepcopy(model)
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > config.patience:
                logger.info(f"Early stopping after epoch {epoch} (best epoch {best_epoch})")
                break

    best_model.eval()
    return TrainResult(best_model, history, best_epoch, best_metrics)
