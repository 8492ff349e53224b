"""k-means codebooks for label generation, plus identity (codebookless) labels."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class CodebookError(ValueError):
    pass


@dataclass
class Codebook:
    centers: np.ndarray  # (K, dim)
    kind: str = "hog"
    distortions: list = field(default_factory=list, compare=False)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        if self.centers.ndim != 2 or self.centers.shape[0] < 2:
            raise CodebookError("codebook needs at least 2 centers")
        if not np.all(np.isfinite(self.centers)):
            raise CodebookError("non-finite codebook center")

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


def _sq_dists(points: np.ndarray, centers: np.ndarray, chunk: int = 2048) -> np.ndarray:
    out = np.empty((len(points), len(centers)))
    for start in range(0, len(points), chunk):
        block = points[start:start + chunk]
        out[start:start + chunk] = ((block[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return out


def _kmeanspp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            raise CodebookError("not enough distinct points for k-means++ seeding")
        idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
        idx = min(idx, n - 1)
        while closest[idx] == 0:  # guard against landing on an existing center
            idx = (idx + 1) % n
        centers[c] = points[idx]
        closest = np.minimum(closest, ((points - centers[c]) ** 2).sum(axis=1))
    return centers


def kmeans_fit(descriptors, k: int, max_iters: int = 100, seed: int = 0, kind: str = "hog") -> Codebook:
    """Lloyd's k-means from k-means++ seeding.

    ``Codebook.distortions`` records the within-cluster sum of squares after
    every assignment step; it never increases.
    """
    points = np.asarray(descriptors, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise CodebookError("expected a non-empty 2-D descriptor array")
    if k < 2:
        raise CodebookError("k must be >= 2")
    if max_iters < 1:
        raise CodebookError("max_iters must be >= 1")
    n_distinct = len(np.unique(points, axis=0))
    if k > n_distinct:
        raise CodebookError(f"k={k} exceeds the number of distinct points ({n_distinct})")

    rng = np.random.default_rng(seed)
    centers = _kmeanspp(points, k, rng)
    assign = None
    distortions = []
    for it in range(max_iters):
        d = _sq_dists(points, centers)
        new_assign = d.argmin(axis=1)
        distortion = float(d[np.arange(len(points)), new_assign].sum())
        if distortions and distortion > distortions[-1] * (1 + 1e-12) + 1e-12:
            raise AssertionError(f"k-means distortion increased at iteration {it}")
        distortions.append(distortion)
        if assign is not None and np.array_equal(assign, new_assign):
            break
        assign = new_assign

        counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, assign, points)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not nonempty.all():
            # move each empty center onto the point farthest from its own center
            own = ((points - centers[assign]) ** 2).sum(axis=1)
            taken = set()
            for c in np.flatnonzero(~nonempty):
                order = np.argsort(-own, kind="stable")
                pick = next(int(i) for i in order if int(i) not in taken)
                taken.add(pick)
                centers[c] = points[pick]
                own[pick] = 0.0
            log.debug("re-seeded %d empty clusters at iteration %d", (~nonempty).sum(), it)
    return Codebook(centers, kind, distortions)


def assign_codeword(codebook: Codebook, d) -> int:
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (codebook.dim,):
        raise CodebookError(f"descriptor dimension {d.shape} does not match codebook ({codebook.dim})")
    dist = ((codebook.centers - d) ** 2).sum(axis=1)
    return int(np.argmin(dist))  # argmin returns the lowest index on ties


def assign_codewords(codebook: Codebook, descriptors) -> np.ndarray:
    points = np.asarray(descriptors, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != codebook.dim:
        raise CodebookError("descriptor dimension does not match codebook")
    return _sq_dists(points, codebook.centers).argmin(axis=1)


def codebookless_labels(samples) -> np.ndarray:
    """Each sample is its own cluster: label i for sample i."""
    n = len(samples)
    if n == 0:
        raise CodebookError("empty sample list")
    if n < 2:
        raise CodebookError("codebookless labelling needs at least 2 samples")
    return np.arange(n, dtype=np.int64)
