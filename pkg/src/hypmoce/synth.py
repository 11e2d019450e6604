"""
Synthetic hierarchical multimodal data and grouped cross-validation splits.

Each modality embeds a balanced tree in Euclidean space: children hang off
their parent along mutually orthogonal random directions with edge lengths
shrinking geometrically by level. A class owns a set of subtrees; a sample of
that class is a random leaf of one of them, plus Gaussian noise and a
per-subject offset. Deeper trees give more tree-like (lower δ_rel) clouds.
"""

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, Tuple

import networkx as nx
import numpy as np
import torch
from sklearn.model_selection import GroupKFold

from .config import ModalitySpec, SyntheticSpec, to_dict
from .errors import DataError, VersionError
from .lorentz import DTYPE

logger = logging.getLogger(__name__)

DATASET_VERSION = 1
MANIFEST = "manifest.json"
LABELS_FILE = "labels.csv"


@dataclass
class MultimodalDataset:
    """Aligned per-modality feature matrices with labels and subject groups."""

    features: Dict[str, np.ndarray]
    labels: np.ndarray
    groups: np.ndarray
    classes: int
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.features:
            raise DataError("dataset has no modalities")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.groups = np.asarray(self.groups, dtype=np.int64)
        rows = len(self.labels)
        if len(self.groups) != rows:
            raise DataError(f"{len(self.groups)} group ids for {rows} labels")
        for name, matrix in self.features.items():
            matrix = np.asarray(matrix, dtype=np.float64)
            if matrix.ndim != 2 or matrix.shape[0] != rows:
                raise DataError(f"modality {name!r}: expected {rows} rows, got shape {matrix.shape}")
            self.features[name] = matrix
        if rows and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise DataError(f"labels must lie in [0, {self.classes})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def modalities(self) -> List[str]:
        return list(self.features)

    @property
    def input_dims(self) -> Dict[str, int]:
        return {name: matrix.shape[1] for name, matrix in self.features.items()}

    def group_ids(self) -> np.ndarray:
        return np.unique(self.groups)

    def indices_for(self, groups: Sequence[int]) -> np.ndarray:
        """Sample indices belonging to any of ``groups``, in dataset order."""
        return np.flatnonzero(np.isin(self.groups, np.asarray(groups)))

    def inputs(self, indices: np.ndarray) -> Dict[str, torch.Tensor]:
        return {name: torch.as_tensor(matrix[indices], dtype=DTYPE) for name, matrix in self.features.items()}


def balanced_tree_parents(depth: int, branching: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Parent index and level of every node of a balanced tree, in breadth-first order.

    Node ``j > 0`` has parent ``(j - 1) // branching``; the root has parent -1.
    """
    tree = nx.balanced_tree(branching, depth)
    n = tree.number_of_nodes()
    parents = np.full(n, -1)
    for child, parent in nx.bfs_predecessors(tree, 0):
        parents[child] = parent
    depths = nx.single_source_shortest_path_length(tree, 0)
    levels = np.array([depths[i] for i in range(n)])
    return parents, levels


def tree_distance_matrix(parents: Sequence[int], lengths: Sequence[float]) -> np.ndarray:
    """
    All-pairs path distances of a weighted tree.

    Args:
        parents: Parent of each node (-1 for the root); parents precede children
        lengths: Length of the edge from each node to its parent (ignored at the root)

    Returns:
        ``(n, n)`` distance matrix
    """
    n = len(parents)
    tree = nx.Graph()
    tree.add_nodes_from(range(n))
    for i, parent in enumerate(parents):
        if parent < 0:
            continue
        if parent >= i:
            raise DataError("tree parents must precede their children")
        tree.add_edge(i, int(parent), weight=float(lengths[i]))
    if n and not nx.is_connected(tree):
        raise DataError("tree must have a single root")

    dist = np.zeros((n, n))
    for source, targets in nx.all_pairs_dijkstra_path_length(tree):
        for target, length in targets.items():
            dist[source, target] = length
    return dist


def _child_directions(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    if count <= dim:
        q, _ = np.linalg.qr(rng.standard_normal((dim, count)))
        return q.T
    directions = rng.standard_normal((count, dim))
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


def embed_tree(modality: ModalitySpec, rng: np.random.Generator, edge_length: float, edge_decay: float) -> List[np.ndarray]:
    """Positions of every tree node, one ``(branching**level, dim)`` array per level."""
    b = modality.branching
    levels = [np.zeros((1, modality.dim))]
    for level in range(1, modality.depth + 1):
        length = edge_length * edge_decay ** (level - 1)
        parents = levels[-1]
        children = np.empty((parents.shape[0] * b, modality.dim))
        for j, position in enumerate(parents):
            children[j * b:(j + 1) * b] = position + length * _child_directions(modality.dim, b, rng)
        levels.append(children)
    return levels


def class_level(modality: ModalitySpec, classes: int) -> int:
    """Shallowest level with at least one subtree per class."""
    level = 1
    while modality.branching ** level < classes:
        level += 1
    return level


def generate(spec: SyntheticSpec) -> MultimodalDataset:
    """
    Generate a dataset from ``spec``; identical specs give identical data.

    Returns:
        MultimodalDataset with ``subjects * samples_per_subject`` rows
    """
    rng = np.random.default_rng(spec.seed)
    trees = {m.name: embed_tree(m, rng, spec.edge_length, spec.edge_decay) for m in spec.modalities}

    per_subject = spec.samples_per_subject
    labels = np.concatenate([
        rng.permutation(np.arange(per_subject) % spec.classes) for _ in range(spec.subjects)
    ])
    groups = np.repeat(np.arange(spec.subjects), per_subject)
    n = len(labels)

    features = {}
    for modality in spec.modalities:
        leaves = trees[modality.name][-1]
        level = class_level(modality, spec.classes)
        below = modality.branching ** (modality.depth - level)
        subtrees = modality.branching ** level

        # subtree j belongs to class j % classes
        owned = [np.arange(c, subtrees, spec.classes) for c in range(spec.classes)]
        roots = np.array([rng.choice(owned[c]) for c in labels])
        leaf = roots * below + rng.integers(below, size=n)

        shift = spec.shift * rng.standard_normal((spec.subjects, modality.dim))
        noise = spec.noise if modality.noise is None else modality.noise
        features[modality.name] = leaves[leaf] + shift[groups] + noise * rng.standard_normal((n, modality.dim))

    logger.info(
        f"Generated {n} samples over {len(spec.modalities)} modalities, "
        f"{spec.classes} classes and {spec.subjects} subjects"
    )
    metadata = {"seed": spec.seed, "spec": to_dict(spec)}
    return MultimodalDataset(features, labels, groups, spec.classes, metadata)


def grouped_folds(groups: Sequence[int], k: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Split subject groups into ``k`` disjoint test blocks.

    Args:
        groups: Group id of every sample
        k: Number of folds; ``k`` equal to the number of groups is leave-one-group-out

    Returns:
        List of ``(train_groups, test_groups)`` sorted arrays

    Raises:
        DataError: If ``k`` exceeds the number of groups or is below 2
    """
    groups = np.asarray(groups)
    unique = np.unique(groups)
    if k > len(unique):
        raise DataError(f"cannot make {k} folds from {len(unique)} groups")
    if k < 2:
        raise DataError("need at least 2 folds")

    folds = []
    splitter = GroupKFold(n_splits=k)
    for train_idx, test_idx in splitter.split(np.zeros(len(groups)), groups=groups):
        folds.append((np.unique(groups[train_idx]), np.unique(groups[test_idx])))
    return folds


def _format_float(value: float) -> str:
    return repr(float(value))


def save_dataset(dataset: MultimodalDataset, out_dir: str) -> Dict[str, Any]:
    """
    Write ``dataset`` as a manifest, one CSV per modality and ``labels.csv``.

    Returns:
        The manifest dictionary
    """
    os.makedirs(out_dir, exist_ok=True)
    modalities = []
    for name, matrix in dataset.features.items():
        filename = f"{name}.csv"
        with open(os.path.join(out_dir, filename), 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow([f"f{i}" for i in range(matrix.shape[1])])
            for row in matrix:
                writer.writerow([_format_float(v) for v in row])
        modalities.append({"name": name, "dim": int(matrix.shape[1]), "file": filename})

    with open(os.path.join(out_dir, LABELS_FILE), 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(["label", "group"])
        for label, group in zip(dataset.labels, dataset.groups):
            writer.writerow([int(label), int(group)])

    manifest = {
        "format_version": DATASET_VERSION,
        "modalities": modalities,
        "classes": dataset.classes,
        "groups": int(len(dataset.group_ids())),
        "samples": len(dataset),
        "seed": dataset.metadata.get("seed"),
        "spec": dataset.metadata.get("spec"),
    }
    with open(os.path.join(out_dir, MANIFEST), 'w', encoding='utf-8', newline='\n') as f:
        f.write(json.dumps(manifest, indent=2, sort_keys=True))
        f.write("\n")
    logger.info(f"Saved dataset with {len(dataset)} samples to {out_dir}")
    return manifest


def read_matrix_csv(path: str) -> Tuple[List[str], np.ndarray]:
    """Read a numeric CSV with a header row."""
    try:
        with open(path, 'r', encoding='utf-8', newline='') as f:
            rows = list(csv.reader(f))
    except FileNotFoundError:
        raise DataError(f"{path}: file not found")
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], [r for r in rows[1:] if r]
    try:
        values = np.array([[float(v) for v in r] for r in body], dtype=np.float64)
    except ValueError as e:
        raise DataError(f"{path}: non-numeric value ({e})")
    if body and values.shape[1] != len(header):
        raise DataError(f"{path}: rows do not match the {len(header)}-column header")
    return header, values.reshape(len(body), len(header))


def load_dataset(data_dir: str) -> MultimodalDataset:
    """Load a dataset directory written by ``save_dataset``."""
    manifest_path = os.path.join(data_dir, MANIFEST)
    try:
        with open(manifest_path, 'r', encoding='utf-8') as f:
            manifest = json.load(f)
    except FileNotFoundError:
        raise DataError(f"{manifest_path}: manifest not found")
    except json.JSONDecodeError as e:
        raise DataError(f"{manifest_path}: invalid JSON ({e})")

    version = manifest.get("format_version")
    if version != DATASET_VERSION:
        raise VersionError(f"unsupported dataset format version {version!r} (expected {DATASET_VERSION})")

    try:
        features = {}
        for entry in manifest["modalities"]:
            _, matrix = read_matrix_csv(os.path.join(data_dir, entry["file"]))
            if matrix.shape[1] != entry["dim"]:
                raise DataError(f"modality {entry['name']!r}: manifest says {entry['dim']} columns, file has {matrix.shape[1]}")
            features[entry["name"]] = matrix
        header, table = read_matrix_csv(os.path.join(data_dir, LABELS_FILE))
        if header != ["label", "group"]:
            raise DataError(f"{LABELS_FILE}: expected header label,group")
        classes = int(manifest["classes"])
    except KeyError as e:
        raise DataError(f"{manifest_path}: missing field {e}")

    metadata = {"seed": manifest.get("seed"), "spec": manifest.get("spec")}
    return MultimodalDataset(features, table[:, 0].astype(np.int64), table[:, 1].astype(np.int64), classes, metadata)


def load_data(data_config) -> MultimodalDataset:
    """Dataset named by a ``DataConfig``: read from disk when a path is given, else generated."""
    if data_config.path:
        return load_dataset(data_config.path)
    return generate(data_config.synthetic)
