"""Weighted multiclass decision trees with probabilistic leaves.

Used both as boosting weak learners and as early-exit stopping gates. Leaf
distributions are the weighted class fractions of the training samples that
reach the leaf, clamped away from zero so that their logarithms stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF_EPS = 1e-5


class TreeError(ValueError):
    pass


@dataclass
class DecisionTree:
    """Flat node arrays; ``feature[i] < 0`` marks a leaf whose distribution is
    ``values[leaf_index[i]]``. Node 0 is the root."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_index: np.ndarray
    values: np.ndarray
    max_depth: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_classes(self) -> int:
        return self.values.shape[1]

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.feature[node] >= 0:
                stack.append((self.left[node], d + 1))
                stack.append((self.right[node], d + 1))
        return best

    def validate(self) -> None:
        n = self.n_nodes
        internal = self.feature >= 0
        children = np.concatenate([self.left[internal], self.right[internal]])
        if np.any(children <= 0) or np.any(children >= n):
            raise TreeError("malformed tree: dangling child index")
        if len(np.unique(children)) != len(children) or len(children) != n - 1:
            raise TreeError("malformed tree: node array is not a binary tree")
        leaves = self.leaf_index[~internal]
        if np.any(leaves < 0) or np.any(leaves >= len(self.values)):
            raise TreeError("malformed tree: bad leaf index")

    def _routing(self):
        # leaves point to themselves with an infinite threshold, so a fixed
        # number of steps (the tree depth) routes every sample to its leaf
        if getattr(self, "_route_cache", None) is None:
            nodes = np.arange(self.n_nodes)
            inner = self.feature >= 0
            child = np.empty(2 * self.n_nodes, dtype=np.intp)
            child[0::2] = np.where(inner, self.left, nodes)
            child[1::2] = np.where(inner, self.right, nodes)
            self._route_cache = (
                np.where(inner, self.feature, 0).astype(np.intp),
                np.where(inner, self.threshold, np.inf),
                child,
                self.depth(),
            )
        return self._route_cache

    def apply(self, X) -> np.ndarray:
        """Index of the leaf *node* reached by every row of ``X``."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        feat, thr, child, depth = self._routing()
        n = len(X)
        node = np.zeros(n, dtype=np.intp)
        flat = X.ravel()
        offset = np.arange(n, dtype=np.intp) * X.shape[1]
        for _ in range(depth):
            v = flat[offset + feat[node]]
            node = child[2 * node + (v > thr[node])]
        return node

    def predict_leaf(self, X) -> np.ndarray:
        """Row of ``values`` reached by every sample."""
        return self.leaf_index[self.apply(X)]

    def predict_proba(self, X) -> np.ndarray:
        return self.values[self.predict_leaf(X)]


def leaf_distribution(labels, weights, k: int, eps: float = LEAF_EPS) -> np.ndarray:
    """Weighted class fractions, clamped to [eps, 1] and renormalized."""
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if total <= 0:
        raise TreeError("zero total weight in leaf")
    p = np.bincount(np.asarray(labels), weights=w, minlength=k) / total
    p = np.maximum(p, eps)
    return p / p.sum()


def _best_split(X, y, w, class_totals, min_leaf_weight):
    """Best weighted-Gini split of one node.

    Returns ``(gain, dim, threshold)`` or ``None``. ``gain`` is the decrease of
    weighted impurity ``W*G(parent) - W_L*G(L) - W_R*G(R)`` which equals
    ``sum(L_k^2)/W_L + sum(R_k^2)/W_R - sum(T_k^2)/W``.
    """
    n, d = X.shape
    if n < 2:
        return None
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    ws = w[order]
    ys = y[order]

    # same-class weight preceding each sorted position (exclusive prefix per class)
    by_class = np.argsort(ys, axis=0, kind="stable")
    ws_c = np.take_along_axis(ws, by_class, axis=0)
    ys_c = np.take_along_axis(ys, by_class, axis=0)
    excl = np.cumsum(ws_c, axis=0) - ws_c
    start = np.ones((n, d), dtype=bool)
    start[1:] = ys_c[1:] != ys_c[:-1]
    start_pos = np.maximum.accumulate(np.where(start, np.arange(n)[:, None], 0), axis=0)
    within = excl - np.take_along_axis(excl, start_pos, axis=0)
    prev_same = np.empty_like(within)
    np.put_along_axis(prev_same, by_class, within, axis=0)

    W = class_totals.sum()
    sum_t2 = float(np.dot(class_totals, class_totals))
    wl = np.cumsum(ws, axis=0)[:-1]
    sl2 = np.cumsum(2.0 * prev_same * ws + ws * ws, axis=0)[:-1]
    stl = np.cumsum(class_totals[ys] * ws, axis=0)[:-1]
    wr = W - wl
    sr2 = sum_t2 - 2.0 * stl + sl2

    valid = (xs[1:] > xs[:-1]) & (wl >= min_leaf_weight) & (wr >= min_leaf_weight) & (wl > 0) & (wr > 0)
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where(valid, sl2 / wl + sr2 / wr, -np.inf)
    flat = score.T.ravel()  # dimension-major: ties go to the lowest dim, then lowest threshold
    best = int(np.argmax(flat))
    dim, pos = divmod(best, n - 1)
    gain = flat[best] - sum_t2 / W
    lo, hi = xs[pos, dim], xs[pos + 1, dim]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return gain, dim, thr


def fit_tree(X, y, weights, k: int, max_depth: int = 15, min_leaf_weight: float | None = None,
             eps: float = LEAF_EPS) -> DecisionTree:
    """Greedy weighted-Gini tree whose leaves hold weighted class fractions.

    ``min_leaf_weight`` defaults to 1e-6 of the total weight; a split is only
    taken when both children carry at least that much weight.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise TreeError("empty sample set")
    if not (len(X) == len(y) == len(w)):
        raise TreeError("samples, labels and weights differ in length")
    if np.any(w < 0) or w.sum() <= 0:
        raise TreeError("weights must be nonnegative with positive sum")
    if np.any(y < 0) or np.any(y >= k):
        raise TreeError("label out of range")
    total = w.sum()
    if min_leaf_weight is None:
        min_leaf_weight = 1e-6 * total

    feature, threshold, left, right, leaf_index = [], [], [], [], []
    values = []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        leaf_index.append(-1)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(len(X)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        wn, yn = w[idx], y[idx]
        totals = np.bincount(yn, weights=wn, minlength=k)
        split = None
        if depth < max_depth and np.count_nonzero(totals > 0) > 1 and totals.sum() >= min_leaf_weight:
            split = _best_split(X[idx], yn, wn, totals, min_leaf_weight)
            if split is not None and not split[0] > 1e-12 * totals.sum():
                split = None
        if split is None:
            leaf_index[node] = len(values)
            values.append(leaf_distribution(yn, wn, k, eps))
            continue
        _, dim, thr = split
        go_left = X[idx, dim] <= thr
        feature[node] = dim
        threshold[node] = thr
        left[node] = new_node()
        right[node] = new_node()
        # right pushed first so the left subtree is numbered first
        stack.append((right[node], idx[~go_left], depth + 1))
        stack.append((left[node], idx[go_left], depth + 1))

    return DecisionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        leaf_index=np.array(leaf_index, dtype=np.int64),
        values=np.array(values, dtype=np.float64).reshape(-1, k),
        max_depth=int(max_depth),
    )


def tree_predict_proba(tree: DecisionTree, sample) -> np.ndarray:
    """Leaf distribution for one sample (1-D) or a batch (2-D)."""
    x = np.asarray(sample, dtype=np.float64)
    tree.validate()
    used = tree.feature[tree.feature >= 0]
    if used.size and x.shape[-1] <= used.max():
        raise TreeError("sample dimension does not cover the tree's split dimensions")
    out = tree.predict_proba(x)
    return out[0] if x.ndim == 1 else out
