"""One-vs-rest linear SVM and average-precision evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ClassifyError(ValueError):
    pass


@dataclass
class LinearModel:
    weights: np.ndarray  # (C, dim)
    biases: np.ndarray   # (C,)
    lam: float = 1e-4
    epochs: int = 50
    seed: int = 0

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def fit_linear_ovr(representations, labels, n_classes: int | None = None, lam: float = 1e-4,
                   epochs: int = 50, seed: int = 0) -> LinearModel:
    """Hinge loss + L2, trained per class by stochastic subgradient steps 1/(lam*t).

    All classes share the sample order, so the per-class problems run as one
    vectorized pass. The bias is an extra constant input and is regularized
    with the weights.
    """
    X = np.asarray(representations, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ClassifyError("representations and labels have inconsistent shapes")
    c = int(y.max()) + 1 if n_classes is None else n_classes
    if len(np.unique(y)) < 2 or c < 2:
        raise ClassifyError("need at least two classes")
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    Y = np.where(y[:, None] == np.arange(c)[None, :], 1.0, -1.0)  # (n, C)
    W = np.zeros((c, d + 1))
    rng = np.random.default_rng(seed)
    radius = 1.0 / np.sqrt(lam)
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            x = Xa[i]
            yi = Y[i]
            viol = yi * (W @ x) < 1.0
            W *= 1.0 - eta * lam
            if viol.any():
                W[viol] += eta * yi[viol, None] * x[None, :]
            norms = np.linalg.norm(W, axis=1)
            over = norms > radius
            if over.any():
                W[over] *= (radius / norms[over])[:, None]
    return LinearModel(W[:, :-1].copy(), W[:, -1].copy(), lam, epochs, seed)


def predict_margin(model: LinearModel, representation) -> np.ndarray:
    x = np.asarray(representation, dtype=np.float64)
    if x.shape[-1] != model.dim:
        raise ClassifyError(f"representation dimension {x.shape[-1]} != model dimension {model.dim}")
    return x @ model.weights.T + model.biases


def predict_class(model: LinearModel, representations) -> np.ndarray:
    return predict_margin(model, representations).argmax(axis=-1)


def average_precision(scores, positives) -> float:
    """Mean of precision@rank over the positive items, ranking by descending score.

    Equal scores keep their input order.
    """
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positives, dtype=bool)
    if not pos.any():
        raise ClassifyError("average precision undefined without positives")
    order = np.argsort(-s, kind="stable")
    hits = pos[order]
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, len(ranks) + 1) / ranks))


def ranked_average_precision(ranked) -> float:
    """AP of an already ranked list of positive/negative flags."""
    flags = np.asarray(ranked, dtype=bool)
    return average_precision(-np.arange(len(flags), dtype=np.float64), flags)


def mean_average_precision(per_class_ap) -> float:
    aps = np.asarray(per_class_ap, dtype=np.float64)
    if aps.size == 0:
        raise ClassifyError("no per-class APs")
    return float(aps.mean())


def evaluate_ovr(margins, labels, n_classes: int | None = None) -> dict:
    """Per-class AP of one-vs-rest rankings, their mean, and top-1 accuracy.

    Classes with no positive example among ``labels`` are skipped.
    """
    M = np.asarray(margins, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    c = M.shape[1] if n_classes is None else n_classes
    aps = {}
    for k in range(c):
        if np.any(y == k):
            aps[k] = average_precision(M[:, k], y == k)
    return {
        "per_class_ap": aps,
        "map": mean_average_precision(list(aps.values())),
        "accuracy": float(np.mean(M.argmax(axis=1) == y)),
    }
