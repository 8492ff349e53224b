"""Bag-of-words histograms from per-patch codeword assignments."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class EncodeError(ValueError):
    pass


@dataclass
class BowHistogram:
    counts: np.ndarray
    video_id: str = ""
    normalized: bool = False

    @property
    def k(self) -> int:
        return len(self.counts)


def bow_aggregate(assignments, k: int, video_id: str = "", normalize: bool = True) -> BowHistogram:
    a = np.asarray(assignments, dtype=np.int64)
    if a.size == 0:
        raise EncodeError("empty assignment list")
    if np.any(a < 0) or np.any(a >= k):
        raise EncodeError("codeword index out of range")
    counts = np.bincount(a, minlength=k).astype(np.float64)
    if normalize:
        counts = counts / counts.sum()
    return BowHistogram(counts, video_id, normalize)


def concat_representations(a: BowHistogram, b: BowHistogram) -> np.ndarray:
    if a.video_id != b.video_id:
        raise EncodeError(f"video id mismatch: {a.video_id!r} vs {b.video_id!r}")
    if not (a.normalized and b.normalized):
        raise EncodeError("both histograms must be normalized before concatenation")
    return np.concatenate([a.counts, b.counts])


def write_histograms(path, video_ids, labels, matrix) -> None:
    """Rows of ``video_id,label,v1,...,vK``."""
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for vid, lab, row in zip(video_ids, labels, matrix):
            w.writerow([vid, int(lab), *(repr(float(v)) for v in row)])


def read_histograms(path):
    """Inverse of :func:`write_histograms`: ``(video_ids, labels, matrix)``."""
    ids, labels, rows = [], [], []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        for rec in csv.reader(fh):
            if not rec:
                continue
            ids.append(rec[0])
            labels.append(int(rec[1]))
            rows.append([float(v) for v in rec[2:]])
    if not rows:
        raise EncodeError(f"no histogram rows in {path}")
    return ids, np.array(labels, dtype=np.int64), np.array(rows, dtype=np.float64)
