"""Early-exit stopping gates on top of a boosted ensemble.

One stopping tree per stage is trained on the cumulative strong scores of a
held-out validation set. At prediction time evaluation halts after stage m as
soon as the m-th gate's largest class probability reaches ``alpha``. With
``require_agreement`` the gate must also be confident in the class the strong
scores currently favour. The returned class is always the argmax of the
cumulative strong scores.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .boost import BoostError, Ensemble, predict_strong
from .dtree import fit_tree


@dataclass
class EarlyExitResult:
    predicted_class: int
    stages_evaluated: int
    stop_confidence: float


@dataclass
class EarlyExitBatch:
    predicted_class: np.ndarray
    stages_evaluated: np.ndarray
    stop_confidence: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return len(self.predicted_class)

    def __getitem__(self, i) -> EarlyExitResult:
        return EarlyExitResult(int(self.predicted_class[i]), int(self.stages_evaluated[i]),
                               float(self.stop_confidence[i]))


def fit_stopping_trees(ensemble: Ensemble, validation_samples, validation_labels, max_depth: int = 15,
                       min_leaf_fraction: float | None = None, survivors_only: bool = True,
                       require_agreement: bool | None = None, alpha: float | None = None) -> Ensemble:
    """Return a copy of ``ensemble`` with one stopping tree per stage.

    Each gate maps the cumulative strong scores of the validation samples to
    their true labels. With ``survivors_only`` the gate of stage m only sees
    validation samples that no earlier gate (at ``alpha``) would have stopped,
    the way cascade stages are trained. ``min_leaf_fraction`` is the smallest
    share of the whole validation set a gate leaf may hold (default: the tree
    default of 1e-6).
    """
    if ensemble.stopping:
        raise BoostError("ensemble already has stopping stages")
    Xv = np.asarray(validation_samples, dtype=np.float64)
    yv = np.asarray(validation_labels, dtype=np.int64)
    if Xv.ndim != 2 or len(Xv) == 0:
        raise BoostError("empty validation set")
    if len(Xv) != len(yv):
        raise BoostError("validation samples and labels differ in length")
    agree = ensemble.require_agreement if require_agreement is None else require_agreement
    alpha = ensemble.alpha if alpha is None else alpha
    _check_alpha(alpha)
    n = len(Xv)
    w = np.full(n, 1.0 / n)
    alive = np.ones(n, dtype=bool)
    stopping = []
    for cum in ensemble.staged_scores(Xv):
        idx = np.flatnonzero(alive) if survivors_only else np.arange(n)
        if not idx.size:
            # nothing left to learn from; a constant gate over all samples
            idx = np.arange(n)
        gate = fit_tree(cum[idx], yv[idx], w[idx], ensemble.k, max_depth=max_depth,
                        min_leaf_weight=min_leaf_fraction)
        stopping.append(gate)
        if survivors_only:
            live = np.flatnonzero(alive)
            alive[live[_fires(gate, cum[live], alpha, agree)]] = False
    return replace(ensemble, stopping=stopping, require_agreement=agree, alpha=alpha)


def _fires(gate, cum, alpha, agree) -> np.ndarray:
    leaf = gate.predict_leaf(cum)
    done = gate.values.max(axis=1)[leaf] >= alpha
    if agree:
        done &= gate.values.argmax(axis=1)[leaf] == cum.argmax(axis=1)
    return done


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise BoostError(f"alpha must lie in [0, 1], got {alpha}")


def predict_early_exit_batch(ensemble: Ensemble, X, alpha: float | None = None,
                             require_agreement: bool | None = None) -> EarlyExitBatch:
    if not ensemble.stopping:
        raise BoostError("ensemble has no stopping stages")
    alpha = ensemble.alpha if alpha is None else alpha
    agree = ensemble.require_agreement if require_agreement is None else require_agreement
    _check_alpha(alpha)
    X, _ = ensemble._check(X)
    n = len(X)
    k = ensemble.k
    scores = np.zeros((n, k))
    stages = np.full(n, ensemble.m, dtype=np.int64)
    conf = np.zeros(n)
    ids = np.arange(n)  # original index of every still-active sample
    Xc = X              # compacted rows; active samples sit at rows ``pos``
    pos = ids
    cum = np.zeros((n, k))
    for m, (weak, gate) in enumerate(zip(ensemble.weaks, ensemble.stopping), 1):
        if len(pos) <= len(Xc) // 2:
            Xc, pos = Xc[pos], np.arange(len(pos))
        Xs = Xc[:, weak.feature_subset]
        if len(pos) != len(Xc):
            Xs = Xs[pos]
        cum += weak.node_scores(weak.tree.apply(Xs))
        leaf_max, leaf_arg = ensemble.gate_tables[m - 1]
        if m < ensemble.m and leaf_max.max() < alpha:
            continue  # no leaf of this gate can stop anything
        leaf = gate.leaf_index[gate.apply(cum)]
        g = leaf_max[leaf]
        done = g >= alpha
        if agree:
            done &= leaf_arg[leaf] == cum.argmax(axis=1)
        if done.any():
            fin = ids[done]
            stages[fin] = m
            conf[fin] = g[done]
            scores[fin] = cum[done]
            keep = ~done
            ids, pos, cum = ids[keep], pos[keep], cum[keep]
            if not ids.size:
                break
        if m == ensemble.m:
            conf[ids] = g[~done]
    scores[ids] = cum
    return EarlyExitBatch(scores.argmax(axis=1), stages, conf, scores)


def predict_early_exit(ensemble: Ensemble, sample, alpha: float | None = None,
                       require_agreement: bool | None = None) -> EarlyExitResult:
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim != 1:
        raise BoostError("predict_early_exit takes a single sample; use predict_early_exit_batch")
    return predict_early_exit_batch(ensemble, x[None, :], alpha, require_agreement)[0]


def stopping_probabilities(ensemble: Ensemble, X) -> np.ndarray:
    """Max gate probability at every stage for every sample, shape (n, M)."""
    out = []
    for cum, gate in zip(ensemble.staged_scores(X), ensemble.stopping):
        out.append(gate.predict_proba(cum).max(axis=1))
    return np.stack(out, axis=1)


def _best_time(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def evaluation_stats(ensemble: Ensemble, samples, alpha: float | None = None, repeats: int = 3,
                     require_agreement: bool | None = None) -> dict:
    """Early-exit stage statistics and wall-clock cost against the full ensemble."""
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise BoostError("empty sample set")
    alpha = ensemble.alpha if alpha is None else alpha
    result = predict_early_exit_batch(ensemble, X, alpha, require_agreement)
    t_early = _best_time(lambda: predict_early_exit_batch(ensemble, X, alpha, require_agreement), repeats)
    t_full = _best_time(lambda: predict_strong(ensemble, X), repeats)
    hist = np.bincount(result.stages_evaluated, minlength=ensemble.m + 1)[1:]
    return {
        "alpha": float(alpha),
        "mean_stages": float(result.stages_evaluated.mean()),
        "stage_histogram": hist.tolist(),
        "wall_time_per_sample": t_early / len(X),
        "full_time_per_sample": t_full / len(X),
        "speedup_vs_full": t_full / t_early if t_early > 0 else float("inf"),
    }
