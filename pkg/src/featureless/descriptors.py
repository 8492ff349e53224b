"""Train-time appearance and motion descriptors: HOG, HOF and 3D HOF.

Only used to produce codebook labels; nothing here runs at test time.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import uniform_filter

HOG_BINS = 9
HOG_CELLS = 2
HOF_DIRECTIONS = 8
HOF_MOTION_THRESHOLD = 0.25
LK_WINDOW = 5
LK_SINGULAR_DET = 1e-9
HOF3D_FRAMES = 9

DESCRIPTOR_KINDS = ("hog", "hof", "hof3d")


def _normalize(hist: np.ndarray) -> np.ndarray:
    total = hist.sum()
    if total <= 0:
        return np.full(hist.shape, 1.0 / hist.size)
    return hist / total


def hog_descriptor(patch, patch_size: int = 24) -> np.ndarray:
    """36-dim HOG: 2x2 cells, 9 unsigned orientation bins, L1-normalized.

    Gradients are central differences on interior pixels (border pixels
    contribute nothing). A gradient-free patch gives the uniform vector.
    """
    img = np.asarray(patch, dtype=np.float64)
    if img.ndim == 1:
        if img.size != patch_size * patch_size:
            raise ValueError(f"expected {patch_size * patch_size} values, got {img.size}")
        img = img.reshape(patch_size, patch_size)
    if img.shape != (patch_size, patch_size) or patch_size % HOG_CELLS:
        raise ValueError(f"expected a {patch_size}x{patch_size} patch, got {img.shape}")
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, 1:-1] = img[:, 2:] - img[:, :-2]
    gy[1:-1, :] = img[2:, :] - img[:-2, :]
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), np.pi)
    bins = np.minimum((theta / (np.pi / HOG_BINS)).astype(np.int64), HOG_BINS - 1)

    cell = patch_size // HOG_CELLS
    hist = np.zeros((HOG_CELLS, HOG_CELLS, HOG_BINS))
    for cy in range(HOG_CELLS):
        for cx in range(HOG_CELLS):
            sl = (slice(cy * cell, (cy + 1) * cell), slice(cx * cell, (cx + 1) * cell))
            hist[cy, cx] = np.bincount(bins[sl].ravel(), weights=mag[sl].ravel(), minlength=HOG_BINS)
    return _normalize(hist.ravel())


def lucas_kanade_flow(prev, nxt, window: int = LK_WINDOW) -> np.ndarray:
    """Dense Lucas-Kanade flow, one least-squares solve per window position.

    Returns an array ``(H - window + 1, W - window + 1, 2)`` of ``(u, v)``.
    Spatial gradients come from the mean of both frames so a quadratic image
    under pure translation is recovered exactly.
    """
    a = np.asarray(prev, dtype=np.float64)
    b = np.asarray(nxt, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch between frames")
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    if min(a.shape) < window:
        raise ValueError("frame smaller than flow window")
    mean = 0.5 * (a + b)
    iy, ix = np.gradient(mean)
    it = b - a

    r = window // 2

    def wsum(x):
        # box sum over each fully contained window
        return uniform_filter(x, size=window, mode="constant")[r:-r, r:-r] * window * window

    sxx, sxy, syy = wsum(ix * ix), wsum(ix * iy), wsum(iy * iy)
    sxt, syt = wsum(ix * it), wsum(iy * it)
    det = sxx * syy - sxy * sxy
    ok = np.abs(det) >= LK_SINGULAR_DET
    safe = np.where(ok, det, 1.0)
    u = np.where(ok, (-syy * sxt + sxy * syt) / safe, 0.0)
    v = np.where(ok, (sxy * sxt - sxx * syt) / safe, 0.0)
    return np.stack([u, v], axis=-1)


def _hof_counts(flow: np.ndarray) -> np.ndarray:
    flow = np.asarray(flow, dtype=np.float64)
    if flow.size == 0:
        raise ValueError("empty flow field")
    u = flow[..., 0].ravel()
    v = flow[..., 1].ravel()
    mag = np.hypot(u, v)
    moving = mag >= HOF_MOTION_THRESHOLD
    # bins are centred on multiples of 2*pi/8, so a pure rightward flow sits mid-bin 0
    width = 2 * np.pi / HOF_DIRECTIONS
    angle = np.mod(np.arctan2(v[moving], u[moving]) + width / 2, 2 * np.pi)
    bins = np.minimum((angle / width).astype(np.int64), HOF_DIRECTIONS - 1)
    hist = np.zeros(HOF_DIRECTIONS + 1)
    hist[:HOF_DIRECTIONS] = np.bincount(bins, weights=mag[moving], minlength=HOF_DIRECTIONS)
    hist[HOF_DIRECTIONS] = np.count_nonzero(~moving)
    return hist


def hof_descriptor(flow) -> np.ndarray:
    """9 bins: 8 magnitude-weighted directions plus a count of near-static pixels."""
    return _normalize(_hof_counts(flow))


def hof3d_descriptor(frames, window: int = LK_WINDOW) -> np.ndarray:
    """Sum of the per-pair HOF descriptors over 9 consecutive frames, renormalized."""
    frames = [np.asarray(f, dtype=np.float64) for f in frames]
    if len(frames) != HOF3D_FRAMES:
        raise ValueError(f"expected {HOF3D_FRAMES} frames, got {len(frames)}")
    total = np.zeros(HOF_DIRECTIONS + 1)
    for a, b in zip(frames[:-1], frames[1:]):
        total += hof_descriptor(lucas_kanade_flow(a, b, window))
    return _normalize(total)


def descriptor_length(kind: str) -> int:
    return {"hog": HOG_CELLS * HOG_CELLS * HOG_BINS, "hof": HOF_DIRECTIONS + 1,
            "hof3d": HOF_DIRECTIONS + 1}[kind]
