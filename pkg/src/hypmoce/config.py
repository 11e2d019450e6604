"""
Configuration module for hypmoce.

Two layers live here: ``Config`` holds process settings read from the
environment (``.env`` is loaded by the CLI), and the frozen dataclasses below
describe one reproducible run. ``load_run_config`` parses the JSON run
document strictly: unknown keys, wrong types and out-of-range values raise
``ConfigError`` naming the offending path.
"""

import json
import math
import os
from dataclasses import MISSING, asdict, dataclass, field, fields, is_dataclass
from typing import Any, Dict, Optional, Tuple, Union, get_args, get_origin, get_type_hints

from .errors import ConfigError

CURVATURE_MIN = -10.0
CURVATURE_MAX = -0.1
ACTIVATIONS = ("none", "relu", "elu")


class Config:
    """Process-level settings for hypmoce, read from the environment."""

    def __init__(self):
        self.debug = os.getenv('DEBUG', 'False').lower() == 'true'
        self.log_level = os.getenv('HYPMOCE_LOG_LEVEL', 'INFO').upper()
        self.check_manifold = os.getenv('HYPMOCE_CHECK_MANIFOLD', 'False').lower() == 'true'
        self.output_dir = os.getenv('HYPMOCE_OUTPUT_DIR', 'runs')

        threads = os.getenv('HYPMOCE_NUM_THREADS', '1')
        try:
            self.num_threads = int(threads)
        except ValueError:
            raise ConfigError(f"HYPMOCE_NUM_THREADS: expected an integer, got {threads!r}")
        if self.num_threads < 1:
            raise ConfigError("HYPMOCE_NUM_THREADS: must be >= 1")

    def configure_torch(self) -> None:
        """Pin torch's intra-op thread count so runs stay bit-for-bit reproducible."""
        import torch

        torch.set_num_threads(self.num_threads)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


@dataclass(frozen=True)
class FrechetConfig:
    """Stopping rule of the weighted Fréchet mean solver."""

    max_iters: int = 100
    tol: float = 1e-8
    step: float = 1.0

    def __post_init__(self):
        _require(self.max_iters >= 1, "max_iters: must be >= 1")
        _require(self.tol > 0, "tol: must be > 0")
        _require(0 < self.step <= 1, "step: must be in (0, 1]")


@dataclass(frozen=True)
class HBNConfig:
    """Hyperbolic batch norm constants and running-statistics momentum schedule."""

    eps: float = 1e-5
    momentum: float = 0.9
    momentum_decay: float = 0.95
    momentum_test: float = 0.1

    def __post_init__(self):
        _require(self.eps > 0, "eps: must be > 0")
        _require(0 <= self.momentum <= 1, "momentum: must be in [0, 1]")
        _require(0 < self.momentum_decay <= 1, "momentum_decay: must be in (0, 1]")
        _require(0 <= self.momentum_test <= 1, "momentum_test: must be in [0, 1]")


@dataclass(frozen=True)
class ModalitySpec:
    """One synthetic modality: a balanced tree embedded in ``dim`` dimensions."""

    name: str
    depth: int
    branching: int = 2
    dim: int = 8
    noise: Optional[float] = None

    def __post_init__(self):
        _require(bool(self.name), "name: must not be empty")
        _require(self.depth >= 1, "depth: must be >= 1")
        _require(self.branching >= 2, "branching: must be >= 2")
        _require(self.dim >= 2, "dim: must be >= 2")
        _require(self.noise is None or self.noise >= 0, "noise: must be >= 0")


def _default_modalities() -> Tuple[ModalitySpec, ...]:
    return (
        ModalitySpec(name="deep", depth=7),
        ModalitySpec(name="medium", depth=4),
        ModalitySpec(name="shallow", depth=2),
    )


@dataclass(frozen=True)
class SyntheticSpec:
    """Synthetic hierarchical multimodal dataset description."""

    modalities: Tuple[ModalitySpec, ...] = field(default_factory=_default_modalities)
    classes: int = 4
    subjects: int = 12
    samples_per_subject: int = 24
    noise: float = 0.1
    shift: float = 0.2
    seed: int = 0
    edge_length: float = 1.0
    edge_decay: float = 0.7

    def __post_init__(self):
        _require(len(self.modalities) >= 1, "modalities: at least one modality required")
        names = [m.name for m in self.modalities]
        _require(len(set(names)) == len(names), "modalities: names must be unique")
        _require(self.classes >= 2, "classes: must be >= 2")
        for modality in self.modalities:
            leaves = modality.branching ** modality.depth
            _require(
                self.classes <= leaves,
                f"classes: {self.classes} classes exceed the {leaves} leaves of modality {modality.name!r}",
            )
        _require(self.subjects >= 1, "subjects: must be >= 1")
        _require(self.samples_per_subject >= 1, "samples_per_subject: must be >= 1")
        _require(self.noise >= 0, "noise: must be >= 0")
        _require(self.shift >= 0, "shift: must be >= 0")
        _require(self.seed >= 0, "seed: must be >= 0")
        _require(self.edge_length > 0, "edge_length: must be > 0")
        _require(0 < self.edge_decay <= 1, "edge_decay: must be in (0, 1]")


@dataclass(frozen=True)
class DataConfig:
    """Where the run's data comes from: a dataset directory or a synthetic spec."""

    path: Optional[str] = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of the mixture-of-curvature model and its ablation switches."""

    dim: int = 8
    hidden: int = 16
    layers: int = 2
    heads: int = 4
    tau0: float = 1.0
    lambda_init: float = 0.3
    prior_eps: float = 1e-6
    curvature_init: Union[float, Dict[str, float]] = -2.0
    learnable_curvature: bool = True
    curvature_prior: bool = True
    hyperbolic_experts: bool = True
    hyperbolic_fusion: bool = True
    activation: str = "elu"
    modalities: Optional[Tuple[str, ...]] = None
    hbn: HBNConfig = field(default_factory=HBNConfig)
    frechet: FrechetConfig = field(default_factory=FrechetConfig)

    def __post_init__(self):
        _require(self.dim >= 2, "dim: must be >= 2")
        _require(self.hidden >= 1, "hidden: must be >= 1")
        _require(self.layers >= 0, "layers: must be >= 0")
        _require(self.heads >= 1, "heads: must be >= 1")
        _require(self.tau0 > 0, "tau0: must be > 0")
        _require(self.lambda_init > 0, "lambda_init: must be > 0")
        _require(self.prior_eps > 0, "prior_eps: must be > 0")
        _require(self.activation in ACTIVATIONS, f"activation: must be one of {', '.join(ACTIVATIONS)}")
        values = self.curvature_init.values() if isinstance(self.curvature_init, dict) else [self.curvature_init]
        for value in values:
            _require(
                CURVATURE_MIN <= value <= CURVATURE_MAX,
                f"curvature_init: {value} outside [{CURVATURE_MIN}, {CURVATURE_MAX}]",
            )
        if self.modalities is not None:
            _require(len(self.modalities) >= 1, "modalities: must name at least one modality")

    def initial_curvature(self, modality: str) -> float:
        """Initial curvature of one modality's manifold."""
        if isinstance(self.curvature_init, dict):
            if modality not in self.curvature_init:
                raise ConfigError(f"model.curvature_init: no value for modality {modality!r}")
            return float(self.curvature_init[modality])
        return float(self.curvature_init)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and early-stopping settings."""

    epochs: int = 100
    lr: float = 1e-3
    patience: int = 20
    batch_size: int = 32
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        _require(self.epochs >= 1, "epochs: must be >= 1")
        _require(self.lr >= 0, "lr: must be >= 0")
        _require(self.patience >= 0, "patience: must be >= 0")
        _require(self.batch_size >= 2, "batch_size: must be >= 2")
        _require(all(0 <= b < 1 for b in self.betas), "betas: must be in [0, 1)")
        _require(self.eps > 0, "eps: must be > 0")
        _require(self.seed >= 0, "seed: must be >= 0")


@dataclass(frozen=True)
class EvalConfig:
    """Grouped cross-validation layout."""

    folds: int = 4
    val_groups: int = 2

    def __post_init__(self):
        _require(self.folds >= 2, "folds: must be >= 2")
        _require(self.val_groups >= 1, "val_groups: must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    """A complete, reproducible run: one seed drives every random choice."""

    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        _require(self.seed >= 0, "seed: must be >= 0")


def _join(path: str, name: Any) -> str:
    return f"{path}.{name}" if path else str(name)


def _type_error(path: str, expected: str, value: Any) -> ConfigError:
    return ConfigError(f"{path}: expected {expected}, got {type(value).__name__}")


def _coerce(value: Any, hint: Any, path: str) -> Any:
    if is_dataclass(hint):
        if not isinstance(value, dict):
            raise _type_error(path, "an object", value)
        return from_dict(hint, value, path)

    origin = get_origin(hint)
    if origin is Union:
        args = get_args(hint)
        if value is None and type(None) in args:
            return None
        for arg in args:
            if arg is type(None):
                continue
            try:
                return _coerce(value, arg, path)
            except ConfigError:
                continue
        raise ConfigError(f"{path}: unexpected value {value!r}")
    if origin is tuple:
        args = get_args(hint)
        if not isinstance(value, (list, tuple)):
            raise _type_error(path, "a list", value)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(v, args[0], f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"{path}: expected {len(args)} items, got {len(value)}")
        return tuple(_coerce(v, a, f"{path}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    if origin is dict:
        _, value_hint = get_args(hint)
        if not isinstance(value, dict):
            raise _type_error(path, "an object", value)
        return {str(k): _coerce(v, value_hint, _join(path, k)) for k, v in value.items()}

    if hint is bool:
        if not isinstance(value, bool):
            raise _type_error(path, "a boolean", value)
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise _type_error(path, "an integer", value)
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise _type_error(path, "a number", value)
        if not math.isfinite(value):
            raise ConfigError(f"{path}: must be finite")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise _type_error(path, "a string", value)
        return value
    raise ConfigError(f"{path}: unsupported field type {hint!r}")


def from_dict(cls, data: Dict[str, Any], path: str = ""):
    """
    Build a config dataclass from a JSON-decoded dictionary.

    Args:
        cls: Target dataclass type
        data: Decoded JSON object
        path: Dotted location of ``data`` inside the document, used in messages

    Returns:
        Instance of ``cls``

    Raises:
        ConfigError: On unknown keys, wrong types or failed range checks
    """
    where = path or "config"
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    required = {f.name for f in fields(cls) if f.default is MISSING and f.default_factory is MISSING}
    missing = sorted(required - set(data))
    if missing:
        raise ConfigError(f"{where}: missing key(s) {', '.join(missing)}")

    hints = get_type_hints(cls)
    kwargs = {name: _coerce(value, hints[name], _join(path, name)) for name, value in data.items()}
    try:
        return cls(**kwargs)
    except ConfigError as e:
        raise ConfigError(_join(path, str(e)))


def _read_json(path: str) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            document = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})")
    if not isinstance(document, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return document


def load_run_config(path: str) -> RunConfig:
    """Load and validate a run configuration file."""
    return from_dict(RunConfig, _read_json(path))


def load_synthetic_spec(path: str) -> SyntheticSpec:
    """Load and validate a synthetic dataset spec file."""
    return from_dict(SyntheticSpec, _read_json(path))


def to_dict(config) -> Dict[str, Any]:
    """Plain JSON-ready representation of any config dataclass."""
    return asdict(config)
