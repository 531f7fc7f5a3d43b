"""Second-order multiclass gradient boosting over dense feature matrices.

Newton boosting with the softmax objective: each round fits one regression
tree per class to the per-class gradients/Hessians, then advances the margin
matrix by ``learning_rate`` times the tree outputs. Split finding is exact
greedy — every midpoint between consecutive distinct feature values is a
candidate — with L1/L2-regularized leaf weights:

    w(G, H)    = -soft_threshold(G, alpha_l1) / (H + lambda_l2)
    score(G,H) = -w(G, H) * G / 2
    gain       = score(L) + score(R) - score(L+R) - gamma_min_gain

Determinism: gain ties break to the lowest feature index, then the lowest
threshold, and ``fit`` canonicalizes row order internally, so retraining on a
permuted copy of the data reproduces the same trees bit for bit. Leaf weights
and thresholds are rounded to float32 at construction time — the precision of
the model file — so a save/load round trip is an exact identity.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np

from .errors import (
    BadMagicError,
    FormatError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)

DFGB_MAGIC = b"DFGB"
DFGB_VERSION = 1

# field order is the wire order: learning_rate, lambda_l2, alpha_l1,
# gamma_min_gain, max_depth, n_rounds, min_child_weight, num_classes, seed
_CONFIG_STRUCT = struct.Struct("<ddddIIdIq")

TUNING_RANGE = (0.05, 0.3)


@dataclass(frozen=True)
class GBMConfig:
    learning_rate: float = 0.08
    lambda_l2: float = 1.0
    alpha_l1: float = 0.0
    gamma_min_gain: float = 0.0
    max_depth: int = 6
    n_rounds: int = 200
    min_child_weight: float = 1.0
    num_classes: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        for name in ("lambda_l2", "alpha_l1", "gamma_min_gain", "min_child_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.max_depth < 0:
            raise ValueError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.n_rounds < 0:
            raise ValueError(f"n_rounds must be >= 0, got {self.n_rounds}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")

    def tuning_range_warning(self) -> str | None:
        """Advisory message when the learning rate leaves the tuned range."""
        lo, hi = TUNING_RANGE
        if not lo <= self.learning_rate <= hi:
            return (
                f"learning_rate {self.learning_rate} is outside the tuning range "
                f"[{lo}, {hi}]; proceeding anyway"
            )
        return None


class GradHess(NamedTuple):
    """Per-sample-per-class first and second derivatives of the loss."""

    g: np.ndarray
    h: np.ndarray


@dataclass(frozen=True)
class Leaf:
    weight: float


@dataclass(frozen=True)
class Split:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


def _softmax64(margins: np.ndarray) -> np.ndarray:
    shifted = margins - margins.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_loss(margins: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of the softmax distribution."""
    margins = np.asarray(margins, dtype=np.float64)
    shifted = margins - margins.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-log_probs[np.arange(len(labels)), labels].mean())


def softmax_grad_hess(margins: np.ndarray, labels: np.ndarray) -> GradHess:
    """g = p - onehot(label), h = p * (1 - p), per sample and class."""
    margins = np.asarray(margins, dtype=np.float64)
    if margins.ndim != 2:
        raise ValueError(f"margins must be 2-D, got shape {tuple(margins.shape)}")
    labels = np.asarray(labels)
    n, k = margins.shape
    if labels.shape != (n,):
        raise ValueError(f"labels must have shape ({n},), got {tuple(labels.shape)}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k}), found range "
                         f"[{labels.min()}, {labels.max()}]")
    p = _softmax64(margins)
    g = p.copy()
    g[np.arange(n), labels] -= 1.0
    h = p * (1.0 - p)
    return GradHess(g, h)


def _soft_threshold(g, alpha):
    return np.sign(g) * np.maximum(np.abs(g) - alpha, 0.0)


def leaf_weight(G: float, H: float, config: GBMConfig) -> float:
    """Optimal leaf value -soft_threshold(G, alpha) / (H + lambda)."""
    if H < 0:
        raise ValueError(f"Hessian sum must be >= 0, got {H}")
    denom = H + config.lambda_l2
    if denom == 0.0:
        return 0.0
    return float(-_soft_threshold(G, config.alpha_l1) / denom)


def _half_score(G, H, config):
    # -w*G/2; with alpha_l1 = 0 this is G^2 / (2*(H + lambda))
    denom = H + config.lambda_l2
    st = _soft_threshold(G, config.alpha_l1)
    w = np.where(denom > 0, -st / np.where(denom > 0, denom, 1.0), 0.0)
    return -0.5 * w * G


def split_gain(GL: float, HL: float, GR: float, HR: float, config: GBMConfig) -> float:
    """Objective improvement of a split, minus the gamma_min_gain penalty."""
    if HL < 0 or HR < 0:
        raise ValueError("Hessian sums must be >= 0")
    return float(
        _half_score(GL, HL, config)
        + _half_score(GR, HR, config)
        - _half_score(GL + GR, HL + HR, config)
        - config.gamma_min_gain
    )


class _BestSplit(NamedTuple):
    feature_index: int
    threshold: float
    gain: float


def _find_best_split(X, g, h, config) -> _BestSplit | None:
    """Vectorized exact greedy scan over all features at once.

    Candidates are midpoints between consecutive distinct sorted values;
    candidates leaving either child's Hessian sum below min_child_weight are
    skipped. Ties break to the lowest feature index, then lowest threshold
    (argmax picks the first maximum in each direction of the scan).
    """
    n, d = X.shape
    if n < 2:
        return None
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    cg = np.cumsum(g[order], axis=0)
    ch = np.cumsum(h[order], axis=0)
    G, H = g.sum(), h.sum()

    GL, HL = cg[:-1], ch[:-1]
    GR, HR = G - GL, H - HL
    valid = xs[1:] != xs[:-1]
    if config.min_child_weight > 0:
        valid &= (HL >= config.min_child_weight) & (HR >= config.min_child_weight)
    if not valid.any():
        return None
    parent = _half_score(G, H, config)
    gains = _half_score(GL, HL, config) + _half_score(GR, HR, config) - parent
    gains -= config.gamma_min_gain
    gains[~valid] = -np.inf

    best = gains.max()
    if not best > 0.0:
        return None
    col = int(np.argmax((gains == best).any(axis=0)))
    row = int(np.argmax(gains[:, col] == best))
    lo, hi = xs[row, col], xs[row + 1, col]
    thr = np.float32((float(lo) + float(hi)) / 2.0)
    if thr == lo:
        # float32 rounding collapsed the midpoint onto the lower value; bump
        # so that "feature < threshold" reproduces the scanned partition
        thr = hi
    return _BestSplit(col, float(thr), float(best))


def grow_tree(features: np.ndarray, g: np.ndarray, h: np.ndarray, config: GBMConfig) -> TreeNode:
    """Exact greedy regression tree on one class's gradient statistics."""
    X = np.ascontiguousarray(features, dtype=np.float32)
    if X.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {tuple(X.shape)}")
    if X.shape[0] == 0:
        raise ValueError("cannot grow a tree on an empty sample set")
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    h = np.asarray(h, dtype=np.float64).reshape(-1)
    if g.shape[0] != X.shape[0] or h.shape[0] != X.shape[0]:
        raise ValueError(
            f"gradient vectors (lengths {g.shape[0]}, {h.shape[0]}) are not aligned "
            f"with {X.shape[0]} feature rows"
        )
    if np.any(h < 0):
        raise ValueError("Hessian values must be >= 0")

    def _grow(idx: np.ndarray, depth: int) -> TreeNode:
        if depth < config.max_depth and idx.size >= 2:
            found = _find_best_split(X[idx], g[idx], h[idx], config)
            if found is not None:
                mask = X[idx, found.feature_index] < found.threshold
                return Split(
                    feature_index=found.feature_index,
                    threshold=found.threshold,
                    left=_grow(idx[mask], depth + 1),
                    right=_grow(idx[~mask], depth + 1),
                )
        w = leaf_weight(float(g[idx].sum()), float(h[idx].sum()), config)
        return Leaf(weight=float(np.float32(w)))

    return _grow(np.arange(X.shape[0]), 0)


def predict_tree(node: TreeNode, X: np.ndarray) -> np.ndarray:
    """Leaf value per row, as float32."""
    out = np.empty(X.shape[0], dtype=np.float32)

    def _fill(node, idx):
        if isinstance(node, Leaf):
            out[idx] = node.weight
        else:
            mask = X[idx, node.feature_index] < node.threshold
            _fill(node.left, idx[mask])
            _fill(node.right, idx[~mask])

    _fill(node, np.arange(X.shape[0]))
    return out


def tree_depth(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


@dataclass(eq=False)
class GBMModel:
    """Trained ensemble: trees ordered round-major, then class index."""

    trees: list[TreeNode]
    base_margin: np.ndarray
    config: GBMConfig
    feature_count: int
    train_loss: list[float] = field(default_factory=list)  # per round, not serialized

    @property
    def rounds_completed(self) -> int:
        return len(self.trees) // self.config.num_classes


def _check_features(X, feature_count=None) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float32)
    if X.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {tuple(X.shape)}")
    if feature_count is not None and X.shape[1] != feature_count:
        raise ValueError(
            f"feature count mismatch: model expects {feature_count} columns, "
            f"input has {X.shape[1]}"
        )
    if not np.isfinite(X).all():
        raise ValueError("feature matrix contains NaN or Inf values")
    return X


def fit(features: np.ndarray, labels: np.ndarray, config: GBMConfig | None = None) -> GBMModel:
    """Train the ensemble; deterministic and row-order independent."""
    config = config or GBMConfig()
    X = _check_features(features)
    y = np.asarray(labels).astype(np.int64).reshape(-1)
    n, d = X.shape
    k = config.num_classes
    if n == 0:
        raise ValueError("cannot fit on an empty dataset")
    if y.shape[0] != n:
        raise ValueError(f"labels length {y.shape[0]} != feature rows {n}")
    if n < k:
        raise ValueError(f"need at least num_classes={k} samples, got {n}")
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")

    # canonical row order (full content sort): any permutation of the input
    # re-sorts to the same sequence, making split sums bit-reproducible
    order = np.lexsort(tuple(X[:, j] for j in range(d - 1, -1, -1)) + (y,))
    Xc, yc = X[order], y[order]

    base_margin = np.zeros(k, dtype=np.float64)
    margins = np.tile(base_margin, (n, 1))
    trees: list[TreeNode] = []
    losses = [log_loss(margins, yc)]
    for _ in range(config.n_rounds):
        grad, hess = softmax_grad_hess(margins, yc)
        for cls in range(k):
            tree = grow_tree(Xc, grad[:, cls], hess[:, cls], config)
            trees.append(tree)
            margins[:, cls] += config.learning_rate * predict_tree(tree, Xc).astype(np.float64)
        losses.append(log_loss(margins, yc))
    return GBMModel(
        trees=trees, base_margin=base_margin, config=config,
        feature_count=d, train_loss=losses,
    )


def predict_margin(model: GBMModel, features: np.ndarray, num_rounds: int | None = None) -> np.ndarray:
    """base_margin + learning_rate * sum of per-class tree outputs."""
    X = _check_features(features, model.feature_count)
    k = model.config.num_classes
    margins = np.tile(model.base_margin, (X.shape[0], 1))
    limit = len(model.trees) if num_rounds is None else num_rounds * k
    for i, tree in enumerate(model.trees[:limit]):
        margins[:, i % k] += model.config.learning_rate * predict_tree(tree, X).astype(np.float64)
    return margins


def predict_proba(model: GBMModel, features: np.ndarray) -> np.ndarray:
    return _softmax64(predict_margin(model, features))


def predict_class(model: GBMModel, features: np.ndarray) -> np.ndarray:
    """Argmax per row; the lowest class index wins ties."""
    return np.argmax(predict_margin(model, features), axis=1)


def _write_node(buf, node: TreeNode):
    if isinstance(node, Leaf):
        buf.write(struct.pack("<Bf", 0, node.weight))
    else:
        buf.write(struct.pack("<BIf", 1, node.feature_index, node.threshold))
        _write_node(buf, node.left)
        _write_node(buf, node.right)


def save_model(model: GBMModel) -> bytes:
    """Serialize to DFGB bytes; the on-disk model reproduces margins exactly."""
    buf = io.BytesIO()
    buf.write(DFGB_MAGIC)
    buf.write(struct.pack("<I", DFGB_VERSION))
    cfg = model.config
    buf.write(
        _CONFIG_STRUCT.pack(
            cfg.learning_rate, cfg.lambda_l2, cfg.alpha_l1, cfg.gamma_min_gain,
            cfg.max_depth, cfg.n_rounds, cfg.min_child_weight, cfg.num_classes,
            cfg.seed,
        )
    )
    buf.write(struct.pack("<I", model.feature_count))
    buf.write(struct.pack("<I", len(model.trees)))
    for tree in model.trees:
        _write_node(buf, tree)
    return buf.getvalue()


def load_model(data: bytes) -> GBMModel:
    view = memoryview(data)
    pos = 0

    def take(count: int, what: str) -> memoryview:
        nonlocal pos
        if pos + count > len(view):
            raise TruncatedPayloadError(f"model file truncated while reading {what}")
        chunk = view[pos : pos + count]
        pos += count
        return chunk

    magic = bytes(take(4, "magic"))
    if magic != DFGB_MAGIC:
        raise BadMagicError(f"expected magic {DFGB_MAGIC!r}, found {magic!r}")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != DFGB_VERSION:
        raise UnsupportedVersionError(f"unsupported model version {version}")
    values = _CONFIG_STRUCT.unpack(take(_CONFIG_STRUCT.size, "config"))
    config = GBMConfig(
        learning_rate=values[0], lambda_l2=values[1], alpha_l1=values[2],
        gamma_min_gain=values[3], max_depth=int(values[4]), n_rounds=int(values[5]),
        min_child_weight=values[6], num_classes=int(values[7]), seed=int(values[8]),
    )
    (feature_count,) = struct.unpack("<I", take(4, "feature count"))
    (tree_count,) = struct.unpack("<I", take(4, "tree count"))
    if tree_count % config.num_classes != 0:
        raise FormatError(
            f"tree count {tree_count} is not a multiple of num_classes {config.num_classes}"
        )

    def read_node(index: int) -> TreeNode:
        (kind,) = struct.unpack("<B", take(1, f"node kind in tree {index}"))
        if kind == 0:
            (weight,) = struct.unpack("<f", take(4, f"leaf weight in tree {index}"))
            return Leaf(weight=weight)
        if kind == 1:
            feature_index, threshold = struct.unpack("<If", take(8, f"split in tree {index}"))
            left = read_node(index)
            right = read_node(index)
            return Split(int(feature_index), float(threshold), left, right)
        raise FormatError(f"unknown node kind {kind} in tree {index}")

    trees = [read_node(i) for i in range(tree_count)]
    if pos != len(view):
        raise FormatError(f"{len(view) - pos} trailing bytes after last tree")
    return GBMModel(
        trees=trees,
        base_margin=np.zeros(config.num_classes, dtype=np.float64),
        config=config,
        feature_count=int(feature_count),
    )
