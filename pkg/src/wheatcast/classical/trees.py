"""Greedy CART regression trees and bootstrap-aggregated ensembles.

Each split minimizes the summed child squared error (equivalently the
weighted child variance); leaves predict the mean of their members. The
bagged model keeps one independent ensemble per horizon step and averages
tree outputs, with every bootstrap resample seeded so fits are reproducible
and order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dataset import SupervisedWindows
from ..errors import InvalidInputError
from ..serialize import load_npz, save_npz

__all__ = [
    "TreeNode",
    "BaggedTreesModel",
    "tree_fit",
    "tree_predict",
    "bagged_fit",
    "bagged_predict",
    "save_bagged",
    "load_bagged",
]


@dataclass
class TreeNode:
    """Internal node (feature, threshold, children) or leaf (value)."""

    value: float
    n_samples: int
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Scan every (feature, threshold) pair; return (cost, feature, threshold) or None.

    Cost is sum of child squared errors, computed from prefix sums over each
    feature's sort order. Candidate cuts sit between distinct neighbours with
    at least min_leaf samples on each side.
    """
    n, n_feat = x.shape
    best = None
    total1 = float(y.sum())
    total2 = float(np.dot(y, y))
    for f in range(n_feat):
        xf = x[:, f]
        order = np.argsort(xf, kind="stable")
        xs = xf[order]
        ys = y[order]
        s1 = np.cumsum(ys)
        s2 = np.cumsum(ys * ys)
        k = np.arange(min_leaf, n - min_leaf + 1)  # left sizes
        if k.size == 0:
            continue
        valid = xs[k - 1] < xs[k]
        if not np.any(valid):
            continue
        k = k[valid]
        left1, left2 = s1[k - 1], s2[k - 1]
        cost = (left2 - left1 * left1 / k) + (
            (total2 - left2) - (total1 - left1) ** 2 / (n - k)
        )
        j = int(np.argmin(cost))
        if best is None or cost[j] < best[0]:
            thr = 0.5 * (xs[k[j] - 1] + xs[k[j]])
            best = (float(cost[j]), f, thr)
    return best


def _grow(x: np.ndarray, y: np.ndarray, min_leaf: int, max_depth: int | None, depth: int) -> TreeNode:
    node = TreeNode(value=float(y.mean()), n_samples=int(y.size))
    if y.size < 2 * min_leaf:
        return node
    if max_depth is not None and depth >= max_depth:
        return node
    if np.all(y == y[0]):
        return node
    split = _best_split(x, y, min_leaf)
    if split is None:
        return node
    _, f, thr = split
    mask = x[:, f] <= thr
    node.feature = f
    node.threshold = float(thr)
    node.left = _grow(x[mask], y[mask], min_leaf, max_depth, depth + 1)
    node.right = _grow(x[~mask], y[~mask], min_leaf, max_depth, depth + 1)
    return node


def tree_fit(x, y, min_leaf: int = 5, max_depth: int | None = None) -> TreeNode:
    """Fit one CART regression tree on (rows x features) data."""
    xm = np.asarray(x, dtype=np.float64)
    ym = np.asarray(y, dtype=np.float64).ravel()
    if xm.ndim == 1:
        xm = xm[:, None]
    if xm.ndim != 2 or xm.shape[0] != ym.size or ym.size == 0:
        raise InvalidInputError(f"bad training shapes: x {xm.shape}, y {ym.shape}")
    if ym.size < min_leaf:
        raise InvalidInputError(f"need at least min_leaf={min_leaf} rows, got {ym.size}")
    return _grow(xm, ym, min_leaf, max_depth, 0)


def tree_predict(node: TreeNode, row: np.ndarray) -> float:
    while not node.is_leaf:
        node = node.left if row[node.feature] <= node.threshold else node.right
    return node.value


@dataclass
class BaggedTreesModel:
    """One seeded bootstrap ensemble of CART trees per horizon step."""

    ensembles: list[list[TreeNode]]  # [horizon][n_trees]
    n_trees: int
    min_leaf: int
    max_depth: int | None
    seed: int
    bootstrap: bool
    n_features_flat: int
    input_months: int
    n_features: int

    @property
    def horizon(self) -> int:
        return len(self.ensembles)


def bagged_fit(
    windows: SupervisedWindows,
    n_trees: int = 30,
    seed: int = 0,
    min_leaf: int = 5,
    max_depth: int | None = None,
    bootstrap: bool = True,
) -> BaggedTreesModel:
    """Fit independent ensembles on flattened windows, one per horizon step.

    Each tree sees a with-replacement resample of the full training set,
    drawn from a generator keyed by (seed, step, tree) so results do not
    depend on fitting order. bootstrap=False trains every tree on the full
    sample (an ensemble of one then equals a plain tree fit).
    """
    if windows.n_windows == 0:
        raise InvalidInputError("empty training dataset")
    if n_trees < 1:
        raise InvalidInputError(f"n_trees must be >= 1, got {n_trees}")
    x = windows.inputs.reshape(windows.n_windows, -1)
    n = x.shape[0]
    ensembles: list[list[TreeNode]] = []
    for h in range(windows.horizon):
        y = windows.targets[:, h]
        trees = []
        for j in range(n_trees):
            if bootstrap:
                rng = np.random.default_rng([seed, h, j])
                idx = rng.integers(0, n, size=n)
                trees.append(tree_fit(x[idx], y[idx], min_leaf, max_depth))
            else:
                trees.append(tree_fit(x, y, min_leaf, max_depth))
        ensembles.append(trees)
    return BaggedTreesModel(
        ensembles=ensembles,
        n_trees=n_trees,
        min_leaf=min_leaf,
        max_depth=max_depth,
        seed=seed,
        bootstrap=bootstrap,
        n_features_flat=x.shape[1],
        input_months=windows.input_months,
        n_features=windows.n_features,
    )


def bagged_predict(model: BaggedTreesModel, window: np.ndarray) -> np.ndarray:
    """Average tree outputs per horizon step for one (input_months x n_features) window."""
    row = np.asarray(window, dtype=np.float64).ravel()
    if row.size != model.n_features_flat:
        raise InvalidInputError(
            f"window flattens to {row.size} values, model expects {model.n_features_flat}"
        )
    return np.array(
        [np.mean([tree_predict(t, row) for t in trees]) for trees in model.ensembles]
    )


# ---------------------------------------------------------------------------
# Serialization: every tree flattened into one preorder node table
# ---------------------------------------------------------------------------

_COLS = 7  # step, tree, feature, threshold, value, n_samples, left-child-offset


def _flatten(node: TreeNode, rows: list[list[float]], step: int, tree: int) -> int:
    at = len(rows)
    rows.append([step, tree, node.feature, node.threshold, node.value, node.n_samples, -1])
    if not node.is_leaf:
        left_at = _flatten(node.left, rows, step, tree)
        _flatten(node.right, rows, step, tree)
        rows[at][6] = left_at - at
    return at


def _rebuild(table: np.ndarray, at: int) -> tuple[TreeNode, int]:
    _, _, feature, threshold, value, n_samples, off = table[at]
    node = TreeNode(value=float(value), n_samples=int(n_samples))
    if off < 0:
        return node, at + 1
    node.feature = int(feature)
    node.threshold = float(threshold)
    node.left, nxt = _rebuild(table, at + int(off))
    node.right, nxt = _rebuild(table, nxt)
    return node, nxt


def save_bagged(model: BaggedTreesModel, path: str | Path) -> None:
    rows: list[list[float]] = []
    for h, trees in enumerate(model.ensembles):
        for j, t in enumerate(trees):
            _flatten(t, rows, h, j)
    meta = {
        "kind": "bagged_trees",
        "n_trees": model.n_trees,
        "min_leaf": model.min_leaf,
        "max_depth": model.max_depth,
        "seed": model.seed,
        "bootstrap": model.bootstrap,
        "horizon": model.horizon,
        "n_features_flat": model.n_features_flat,
        "input_months": model.input_months,
        "n_features": model.n_features,
    }
    save_npz(path, meta, {"nodes": np.asarray(rows, dtype=np.float64)})


def load_bagged(path: str | Path) -> BaggedTreesModel:
    meta, data = load_npz(path)
    if meta.get("kind") != "bagged_trees":
        raise InvalidInputError(f"{path}: not a bagged-trees model file")
    table = data["nodes"]
    ensembles: list[list[TreeNode]] = [[] for _ in range(meta["horizon"])]
    at = 0
    while at < table.shape[0]:
        step, tree = int(table[at, 0]), int(table[at, 1])
        node, at = _rebuild(table, at)
        assert len(ensembles[step]) == tree
        ensembles[step].append(node)
    return BaggedTreesModel(
        ensembles=ensembles,
        n_trees=int(meta["n_trees"]),
        min_leaf=int(meta["min_leaf"]),
        max_depth=meta["max_depth"],
        seed=int(meta["seed"]),
        bootstrap=bool(meta["bootstrap"]),
        n_features_flat=int(meta["n_features_flat"]),
        input_months=int(meta["input_months"]),
        n_features=int(meta["n_features"]),
    )
