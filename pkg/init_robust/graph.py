#!/usr/bin/env python3
"""
Graph data model, normalization, walk sums, dataset I/O and generators
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ContractError, EnumerationGuardError, GraphFormatError
from .linalg import as_matrix, matrix_power_apply, spectral_norm


logger = logging.getLogger(__name__)

EDGES_FILE = "edges.tsv"
FEATURES_FILE = "features.csv"
LABELS_FILE = "labels.csv"
SPLITS_FILE = "splits.csv"
# optional; without it the class count is inferred from the labels
CLASSES_FILE = "classes.txt"
SPLIT_NAMES = ("train", "val", "test", "none")

BRUTEFORCE_MAX_NODES = 12
BRUTEFORCE_MAX_LENGTH = 6


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Graph:
    """Undirected node-classification graph (A, X, labels, split masks).

    Arrays are copied and made read-only on construction, so a Graph can be
    shared between experiment workers. Labels are 0-based class indices.
    """

    adjacency: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    num_classes: int = 0

    def __post_init__(self):
        adjacency = as_matrix(self.adjacency, "adjacency")
        features = as_matrix(self.features, "features")
        labels = np.asarray(self.labels, dtype=np.int64)
        n = labels.shape[0]
        if n < 1:
            raise ContractError("graph must have at least one node")
        if adjacency.shape != (n, n):
            raise ContractError(f"adjacency shape {adjacency.shape} != ({n}, {n})")
        if features.shape[0] != n:
            raise ContractError(f"features have {features.shape[0]} rows, expected {n}")
        if not np.array_equal(adjacency, adjacency.T):
            raise ContractError("adjacency must be symmetric")
        if np.any(np.diag(adjacency) != 0):
            raise ContractError("adjacency must have a zero diagonal")
        if not np.all((adjacency == 0) | (adjacency == 1)):
            raise ContractError("adjacency must be binary")

        masks = [np.asarray(m, dtype=bool) for m in (self.train_mask, self.val_mask, self.test_mask)]
        for mask in masks:
            if mask.shape != (n,):
                raise ContractError(f"mask shape {mask.shape} != ({n},)")
        if np.any(masks[0] & masks[1]) or np.any(masks[0] & masks[2]) or np.any(masks[1] & masks[2]):
            raise ContractError("train/val/test masks must be disjoint")

        num_classes = self.num_classes or int(labels.max()) + 1
        if labels.min() < 0 or labels.max() >= num_classes:
            raise ContractError(f"labels must lie in [0, {num_classes})")

        object.__setattr__(self, "adjacency", _frozen(adjacency))
        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "train_mask", _frozen(masks[0]))
        object.__setattr__(self, "val_mask", _frozen(masks[1]))
        object.__setattr__(self, "test_mask", _frozen(masks[2]))
        object.__setattr__(self, "num_classes", num_classes)

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def num_edges(self) -> int:
        """Undirected edge count |E|"""
        return int(np.triu(self.adjacency, k=1).sum())

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(np.int64)

    def mask(self, name: str) -> np.ndarray:
        masks = {"train": self.train_mask, "val": self.val_mask, "test": self.test_mask}
        if name not in masks:
            raise ContractError(f"unknown mask '{name}'")
        return masks[name]

    def with_adjacency(self, adjacency) -> "Graph":
        return replace(self, adjacency=adjacency)

    def with_features(self, features) -> "Graph":
        return replace(self, features=features)


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Symmetric normalization D^-1/2 A D^-1/2 (optionally of A + I)"""

    ahat: np.ndarray
    degrees: np.ndarray
    self_loops: bool = False

    @property
    def n(self) -> int:
        return int(self.ahat.shape[0])


@dataclass(frozen=True)
class WalkSums:
    """Normalized walk sums: per_node = Â^length · 1"""

    length: int
    per_node: np.ndarray = field(repr=False)
    total: float = 0.0


def normalize_dense(adjacency, add_self_loops: bool = False):
    """Normalize a dense (possibly relaxed, non-binary) adjacency.

    Returns ``(ahat, degrees)``. Zero-degree rows stay zero instead of
    dividing by zero.
    """
    a = np.asarray(adjacency, dtype=np.float64)
    if add_self_loops:
        a = a + np.eye(a.shape[0])
    degrees = a.sum(axis=1)
    inv_sqrt = np.zeros_like(degrees)
    positive = degrees > 0
    inv_sqrt[positive] = 1.0 / np.sqrt(degrees[positive])
    ahat = inv_sqrt[:, None] * a * inv_sqrt[None, :]
    return ahat, degrees


def normalize_dense_backward(adjacency, grad_ahat, add_self_loops: bool = False) -> np.ndarray:
    """Chain dL/dÂ back to dL/dA through the degree normalization.

    Degrees are row sums of the (relaxed) adjacency, so the result is exact
    for non-symmetric perturbations as well.
    """
    a = np.asarray(adjacency, dtype=np.float64)
    if add_self_loops:
        a = a + np.eye(a.shape[0])
    g = np.asarray(grad_ahat, dtype=np.float64)
    degrees = a.sum(axis=1)
    s = np.zeros_like(degrees)
    ds = np.zeros_like(degrees)
    positive = degrees > 0
    s[positive] = 1.0 / np.sqrt(degrees[positive])
    ds[positive] = -0.5 * degrees[positive] ** -1.5

    weighted = g * a
    # dL/ds_k collects row k and column k of G ⊙ A, each scaled by the other end
    coeff = weighted @ s + weighted.T @ s
    return g * np.outer(s, s) + (coeff * ds)[:, None]


def normalize_adjacency(g: Graph, add_self_loops: bool = False) -> NormalizedAdjacency:
    ahat, degrees = normalize_dense(g.adjacency, add_self_loops)
    return NormalizedAdjacency(
        ahat=_frozen(ahat),
        degrees=_frozen(np.rint(degrees).astype(np.int64)),
        self_loops=add_self_loops,
    )


def walk_sums(na: NormalizedAdjacency, length: int) -> WalkSums:
    """Sum of normalized walks of the given length starting at each node.

    Entry u is the total weight of all walks of ``length`` steps from u,
    each weighted by the product of traversed Â entries, i.e. (Â^length 1)_u.
    Isolated here so the walk normalization can be swapped in one place.
    """
    if length < 0:
        raise ContractError(f"walk length must be non-negative, got {length}")
    per_node = matrix_power_apply(na.ahat, length, np.ones(na.n))
    return WalkSums(length=length, per_node=_frozen(per_node), total=float(per_node.sum()))


def walk_sums_bruteforce(g: Graph, length: int, add_self_loops: bool = False) -> WalkSums:
    """Independent oracle for walk_sums by explicit walk enumeration"""
    if g.n > BRUTEFORCE_MAX_NODES or length > BRUTEFORCE_MAX_LENGTH:
        raise EnumerationGuardError(
            f"brute force limited to n <= {BRUTEFORCE_MAX_NODES} and "
            f"length <= {BRUTEFORCE_MAX_LENGTH} (got n={g.n}, length={length})"
        )
    if length < 0:
        raise ContractError(f"walk length must be non-negative, got {length}")

    neighbours = []
    for u in range(g.n):
        adj = [int(v) for v in np.flatnonzero(g.adjacency[u])]
        if add_self_loops:
            adj.append(u)
        neighbours.append(sorted(adj))
    degree = [len(adj) for adj in neighbours]

    def walk_weight(u: int, remaining: int) -> float:
        if remaining == 0:
            return 1.0
        total = 0.0
        for v in neighbours[u]:
            step = 1.0 / np.sqrt(degree[u] * degree[v])
            total += step * walk_weight(v, remaining - 1)
        return total

    per_node = np.array([walk_weight(u, length) for u in range(g.n)])
    return WalkSums(length=length, per_node=_frozen(per_node), total=float(per_node.sum()))


def max_degree(g: Graph) -> int:
    return int(g.degrees().max()) if g.n else 0


def feature_norm_bound(g: Graph) -> float:
    """Spectral norm of X, the feature bound B"""
    return spectral_norm(g.features)


# ---------------------------------------------------------------------------
# Dataset directory format
# ---------------------------------------------------------------------------


def _read_lines(path: Path):
    if not path.exists():
        raise GraphFormatError(path, None, "file not found")
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if line:
                yield lineno, line


def _parse_labels(path: Path, num_classes: int | None) -> list:
    labels = []
    for lineno, line in _read_lines(path):
        try:
            label = int(line)
        except ValueError:
            raise GraphFormatError(path, lineno, f"invalid label '{line}'") from None
        if label < 0 or (num_classes is not None and label >= num_classes):
            raise GraphFormatError(path, lineno, f"label {label} out of range")
        labels.append(label)
    if not labels:
        raise GraphFormatError(path, None, "no labels")
    return labels


def _parse_features(path: Path, n: int) -> np.ndarray:
    rows = []
    width = None
    for lineno, line in _read_lines(path):
        try:
            row = [float(value) for value in line.split(",")]
        except ValueError:
            raise GraphFormatError(path, lineno, "non-numeric feature value") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise GraphFormatError(path, lineno, f"ragged row: {len(row)} values, expected {width}")
        if not all(np.isfinite(row)):
            raise GraphFormatError(path, lineno, "non-finite feature value")
        rows.append(row)
    if len(rows) != n:
        raise GraphFormatError(path, None, f"{len(rows)} feature rows, expected {n}")
    return np.array(rows, dtype=np.float64)


def _parse_edges(path: Path, n: int) -> np.ndarray:
    adjacency = np.zeros((n, n))
    for lineno, line in _read_lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise GraphFormatError(path, lineno, "expected two tab-separated node indices")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(path, lineno, "non-integer node index") from None
        if not (0 <= u < n and 0 <= v < n):
            raise GraphFormatError(path, lineno, f"node index out of range for n={n}")
        if u != v:
            adjacency[u, v] = adjacency[v, u] = 1.0
    return adjacency


def _parse_splits(path: Path, n: int):
    splits = []
    for lineno, line in _read_lines(path):
        if line not in SPLIT_NAMES:
            raise GraphFormatError(path, lineno, f"unknown split '{line}'")
        splits.append(line)
    if len(splits) != n:
        raise GraphFormatError(path, None, f"{len(splits)} split entries, expected {n}")
    splits = np.array(splits)
    return splits == "train", splits == "val", splits == "test"


def _parse_classes(path: Path) -> int | None:
    if not path.exists():
        return None
    entries = list(_read_lines(path))
    if len(entries) != 1:
        raise GraphFormatError(path, None, "expected a single class count")
    lineno, line = entries[0]
    try:
        value = int(line)
    except ValueError:
        raise GraphFormatError(path, lineno, f"invalid class count '{line}'") from None
    if value < 1:
        raise GraphFormatError(path, lineno, f"class count must be positive, got {value}")
    return value


def load_graph(dir_path, num_classes: int | None = None) -> Graph:
    """Load a dataset directory (edges.tsv, features.csv, labels.csv, splits.csv).

    Edges are symmetrized and deduplicated, self-loops are dropped. The node
    count is taken from labels.csv. The class count is ``num_classes`` when
    given, else the one in classes.txt, else max label + 1.
    """
    root = Path(dir_path)
    if num_classes is None:
        num_classes = _parse_classes(root / CLASSES_FILE)
    labels = _parse_labels(root / LABELS_FILE, num_classes)
    n = len(labels)
    features = _parse_features(root / FEATURES_FILE, n)
    adjacency = _parse_edges(root / EDGES_FILE, n)
    train, val, test = _parse_splits(root / SPLITS_FILE, n)
    graph = Graph(
        adjacency=adjacency,
        features=features,
        labels=np.array(labels),
        train_mask=train,
        val_mask=val,
        test_mask=test,
        num_classes=num_classes or 0,
    )
    logger.info(
        "loaded %s: n=%d d=%d |E|=%d classes=%d",
        root, graph.n, graph.feature_dim, graph.num_edges, graph.num_classes,
    )
    return graph


def save_graph(g: Graph, dir_path) -> Path:
    """Write g in the dataset directory format (floats round-trip exactly)"""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    rows, cols = np.nonzero(np.triu(g.adjacency, k=1))
    with open(root / EDGES_FILE, "w", encoding="utf-8") as f:
        for u, v in zip(rows, cols):
            f.write(f"{u}\t{v}\n")
    with open(root / FEATURES_FILE, "w", encoding="utf-8") as f:
        for row in g.features:
            f.write(",".join(repr(float(x)) for x in row) + "\n")
    with open(root / LABELS_FILE, "w", encoding="utf-8") as f:
        for label in g.labels:
            f.write(f"{int(label)}\n")
    with open(root / SPLITS_FILE, "w", encoding="utf-8") as f:
        for i in range(g.n):
            if g.train_mask[i]:
                split = "train"
            elif g.val_mask[i]:
                split = "val"
            elif g.test_mask[i]:
                split = "test"
            else:
                split = "none"
            f.write(split + "\n")
    with open(root / CLASSES_FILE, "w", encoding="utf-8") as f:
        f.write(f"{g.num_classes}\n")
    return root


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------


def _per_class_split(labels: np.ndarray, num_classes: int):
    """60/20/20 split by node index within each class"""
    n = labels.shape[0]
    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    for c in range(num_classes):
        members = np.flatnonzero(labels == c)
        n_train = (len(members) * 3) // 5
        n_val = len(members) // 5
        train[members[:n_train]] = True
        val[members[n_train:n_train + n_val]] = True
        test[members[n_train + n_val:]] = True
    return train, val, test


def gen_sbm(
    n: int,
    num_classes: int,
    p_in: float,
    p_out: float,
    feat_dim: int,
    seed: int,
) -> Graph:
    """Stochastic block model with class-conditional Gaussian features.

    Blocks are equal-sized and contiguous by node index. Feature means are
    one-hot class directions with unit-variance noise.
    """
    if not (0.0 <= p_out <= p_in <= 1.0):
        raise ContractError(f"need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if num_classes < 1 or n % num_classes != 0:
        raise ContractError(f"n={n} must be divisible by num_classes={num_classes}")
    if feat_dim < num_classes:
        raise ContractError(f"feat_dim={feat_dim} must be >= num_classes={num_classes}")

    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(num_classes), n // num_classes)
    same = labels[:, None] == labels[None, :]
    probs = np.where(same, p_in, p_out)
    upper = np.triu(rng.random((n, n)) < probs, k=1)
    adjacency = (upper | upper.T).astype(np.float64)

    features = rng.standard_normal((n, feat_dim))
    features[np.arange(n), labels] += 1.0

    train, val, test = _per_class_split(labels, num_classes)
    return Graph(adjacency, features, labels, train, val, test, num_classes)


def gen_erdos_renyi(n: int, p: float, seed: int, feat_dim: int = 2) -> Graph:
    """G(n, p) graph with Gaussian features and a single class"""
    if not 0.0 <= p <= 1.0:
        raise ContractError(f"p must be in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, k=1)
    adjacency = (upper | upper.T).astype(np.float64)
    features = rng.standard_normal((n, feat_dim))
    labels = np.zeros(n, dtype=np.int64)
    train, val, test = _per_class_split(labels, 1)
    return Graph(adjacency, features, labels, train, val, test, 1)


def gen_blobs(
    num_samples: int,
    num_classes: int,
    feat_dim: int,
    seed: int,
    center_scale: float = 3.0,
) -> Graph:
    """Gaussian-blob classification set as an edgeless graph (for MLP runs)"""
    if num_samples % num_classes != 0:
        raise ContractError(
            f"num_samples={num_samples} must be divisible by num_classes={num_classes}"
        )
    rng = np.random.default_rng(seed)
    centers = center_scale * rng.standard_normal((num_classes, feat_dim))
    labels = np.repeat(np.arange(num_classes), num_samples // num_classes)
    features = centers[labels] + rng.standard_normal((num_samples, feat_dim))
    train, val, test = _per_class_split(labels, num_classes)
    adjacency = np.zeros((num_samples, num_samples))
    return Graph(adjacency, features, labels, train, val, test, num_classes)
