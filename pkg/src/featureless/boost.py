"""Multiclass real-valued boosting over probabilistic trees.

Label coding, sample-weight updates, quasi-random weighted pool sampling with
trimming, random feature-subset selection, the log-probability score transform
and the softmax strong classifier.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dtree import LEAF_EPS, DecisionTree, fit_tree

log = logging.getLogger(__name__)

TRIM_MASS = 0.01
POOL_FRACTION = 0.1
PROBE_DEPTH = 3
MIN_WEIGHT = 1e-300


class BoostError(ValueError):
    pass


def encode_labels(labels, k: int) -> np.ndarray:
    """One row per label: 1 at the label, -1/(K-1) elsewhere (rows sum to 0)."""
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise BoostError("K must be >= 2")
    if np.any(labels < 0) or np.any(labels >= k):
        raise BoostError("label out of range")
    out = np.full((labels.size, k), -1.0 / (k - 1))
    out[np.arange(labels.size), labels] = 1.0
    return out


def weak_scores(probs, k: int | None = None) -> np.ndarray:
    """s_k = (K-1) * (log p_k - mean_k' log p_k'); works row-wise on batches."""
    p = np.asarray(probs, dtype=np.float64)
    k = p.shape[-1] if k is None else k
    if p.shape[-1] != k:
        raise BoostError("probability vector length does not match K")
    if np.any(p <= 0):
        raise BoostError("zero probability in score transform")
    logp = np.log(p)
    return (k - 1) * (logp - logp.mean(axis=-1, keepdims=True))


def softmax(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    z = np.exp(s - s.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def update_weights(weights, codings, probs, k: int) -> np.ndarray:
    """w_i <- w_i * exp(-(K-1)/K * sum_k y_ik log p_k(x_i)), renormalized.

    Evaluated in the log domain; weights that would underflow are held at a
    tiny positive floor so every sample keeps a nonzero weight.
    """
    w = np.asarray(weights, dtype=np.float64)
    y = np.asarray(codings, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    if not (len(w) == len(y) == len(p)):
        raise BoostError("weights, codings and probabilities differ in length")
    with np.errstate(divide="ignore", invalid="ignore"):
        exponent = -(k - 1) / k * np.einsum("ik,ik->i", y, np.log(p))
        logw = np.log(w) + exponent
    if not np.all(np.isfinite(exponent)) or np.any(np.isnan(logw)):
        raise BoostError("non-finite weight update (unclamped probabilities upstream?)")
    logw -= logw.max()
    new = np.maximum(np.exp(logw), MIN_WEIGHT)
    return new / new.sum()


def qws_trim_sample(weights, pool_fraction: float = POOL_FRACTION, rng=None,
                    trim_mass: float = TRIM_MASS, size: int | None = None) -> np.ndarray:
    """Quasi-random weighted sampling with trimming.

    The lightest samples holding at most ``trim_mass`` of the total weight are
    dropped; each survivor gets ``floor(n * w_i)`` copies and the fractional
    remainders are resolved by systematic resampling so that exactly
    ``n = round(pool_fraction * N)`` indices are returned (sorted). ``size``
    fixes ``n`` directly.
    """
    if not 0 < pool_fraction <= 1:
        raise BoostError("pool_fraction must be in (0, 1]")
    rng = np.random.default_rng(rng)
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if total <= 0:
        raise BoostError("all weights trimmed: degenerate weight collapse")
    order = np.argsort(w, kind="stable")
    cum = np.cumsum(w[order])
    keep = np.ones(len(w), dtype=bool)
    keep[order[cum <= trim_mass * total]] = False
    if not keep.any():
        raise BoostError("all weights trimmed: degenerate weight collapse")
    kept = np.flatnonzero(keep)
    wk = w[kept] / w[kept].sum()

    n = max(1, int(round(pool_fraction * len(w)))) if size is None else int(size)
    expected = n * wk
    copies = np.floor(expected).astype(np.int64)
    residual = expected - copies
    remaining = n - int(copies.sum())
    if remaining > 0:
        step = residual.sum() / remaining
        points = (rng.random() + np.arange(remaining)) * step
        hits = np.searchsorted(np.cumsum(residual), points, side="right")
        hits = np.minimum(hits, len(kept) - 1)
        copies += np.bincount(hits, minlength=len(kept))
    return np.repeat(kept, copies)


def _weighted_accuracy(tree: DecisionTree, X, y, w) -> float:
    pred = tree.predict_proba(X).argmax(axis=1)
    return float(w[pred == y].sum() / w.sum())


def subset_size(d: int) -> int:
    return max(1, int(round(np.sqrt(d))))


def select_feature_subset(X, y, weights, d: int, k: int, rng=None, probe_depth: int = PROBE_DEPTH,
                          max_depth: int = 15, n_draws: int | None = None,
                          size: int | None = None) -> np.ndarray:
    """Best of round(sqrt(D)) random round(sqrt(D))-dimension subsets.

    Each candidate is scored by the weighted training accuracy of a shallow
    probe tree; the earliest draw wins ties.
    """
    if d < 4:
        raise BoostError("feature subset selection needs D >= 4")
    rng = np.random.default_rng(rng)
    X = np.asarray(X, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    size = subset_size(d) if not size else min(int(size), d)
    n_draws = size if n_draws is None else n_draws
    depth = min(probe_depth, max_depth)
    best, best_acc = None, -1.0
    for _ in range(n_draws):
        cand = rng.choice(d, size=size, replace=False)
        probe = fit_tree(X[:, cand], y, w, k, max_depth=depth)
        acc = _weighted_accuracy(probe, X[:, cand], y, w)
        if acc > best_acc:
            best, best_acc = cand, acc
    return best


@dataclass
class WeakClassifier:
    tree: DecisionTree
    feature_subset: np.ndarray
    _leaf_scores: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def leaf_scores(self) -> np.ndarray:
        # the score transform depends only on the leaf, so tabulate it once
        if self._leaf_scores is None:
            self._leaf_scores = weak_scores(self.tree.values)
        return self._leaf_scores

    def node_scores(self, nodes) -> np.ndarray:
        """Scores of samples that landed on tree nodes ``nodes``."""
        return self.leaf_scores[self.tree.leaf_index[nodes]]

    def leaves(self, X) -> np.ndarray:
        return self.tree.predict_leaf(X[:, self.feature_subset])

    def predict_proba(self, X) -> np.ndarray:
        return self.tree.values[self.leaves(X)]

    def scores(self, X) -> np.ndarray:
        return self.node_scores(self.tree.apply(X[:, self.feature_subset]))


@dataclass
class Ensemble:
    weaks: list
    k: int
    d: int
    stopping: list = field(default_factory=list)
    alpha: float = 0.97
    require_agreement: bool = True
    _gate_tables: list | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.stopping and len(self.stopping) != len(self.weaks):
            raise BoostError("stopping stages must be empty or one per weak classifier")

    @property
    def m(self) -> int:
        return len(self.weaks)

    @property
    def gate_tables(self) -> list:
        """Per stopping tree: (max leaf probability, argmax class) for every leaf."""
        if self._gate_tables is None or len(self._gate_tables) != len(self.stopping):
            self._gate_tables = [(t.values.max(axis=1), t.values.argmax(axis=1)) for t in self.stopping]
        return self._gate_tables

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.d:
            raise BoostError(f"sample dimension {X.shape[1]} does not match ensemble D={self.d}")
        return X, single

    def staged_scores(self, X):
        """Yield cumulative strong scores after each stage."""
        X, _ = self._check(X)
        total = np.zeros((len(X), self.k))
        for weak in self.weaks:
            total = total + weak.scores(X)
            yield total


def predict_strong(ensemble: Ensemble, sample):
    """Summed stage scores and their softmax, for one sample or a batch."""
    X, single = ensemble._check(sample)
    scores = np.zeros((len(X), ensemble.k))
    for weak in ensemble.weaks:
        scores += weak.scores(X)
    probs = softmax(scores)
    if single:
        return scores[0], probs[0]
    return scores, probs


def fit_adaboost(samples, labels, k: int, m: int, pool_fraction: float = POOL_FRACTION, seed: int = 0,
                 max_depth: int = 15, probe_depth: int = PROBE_DEPTH, trim_mass: float = TRIM_MASS,
                 eps: float = LEAF_EPS, alpha: float = 0.97, subset: int | None = None,
                 callback=None) -> Ensemble:
    """Train ``m`` boosting stages.

    Each stage draws a weighted pool, picks a feature subset on it, fits a
    tree with the pool's renormalized weights, then updates the weights of
    *all* samples from that tree's predictions.
    """
    X = np.asarray(samples, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise BoostError("K must be >= 2")
    if m < 1:
        raise BoostError("need at least one stage")
    n, d = X.shape
    if n < k:
        raise BoostError(f"need at least K={k} samples, got {n}")
    codings = encode_labels(y, k)
    rng = np.random.default_rng(seed)
    w = np.full(n, 1.0 / n)
    weaks = []
    for stage in range(m):
        pool = qws_trim_sample(w, pool_fraction, rng, trim_mass)
        Xp, yp = X[pool], y[pool]
        wp = w[pool] / w[pool].sum()
        dims = select_feature_subset(Xp, yp, wp, d, k, rng, probe_depth, max_depth, size=subset)
        tree = fit_tree(Xp[:, dims], yp, wp, k, max_depth=max_depth, eps=eps)
        weak = WeakClassifier(tree, np.asarray(dims, dtype=np.int64))
        weaks.append(weak)
        w = update_weights(w, codings, weak.predict_proba(X), k)
        if callback is not None:
            callback(stage, weak, w)
        log.debug("stage %d: %d nodes, max weight %.3g", stage, tree.n_nodes, w.max())
    return Ensemble(weaks, k, d, [], alpha)
