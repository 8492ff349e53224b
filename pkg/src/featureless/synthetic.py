"""Synthetic drifting-grating videos, one texture class per orientation/velocity."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .patchio import ManifestEntry, save_frame, write_manifest


@dataclass
class SyntheticSpec:
    n_classes: int = 5
    train_per_class: int = 100
    test_per_class: int = 30
    n_frames: int = 3
    width: int = 48
    height: int = 48
    noise: float = 12.0
    orientation_jitter: float = 0.25  # radians
    seed: int = 0


def class_params(c: int, n_classes: int):
    """Orientation, spatial period (px) and drift speed (px/frame) of class ``c``."""
    theta = np.pi * c / n_classes
    period = (6.0, 9.0, 12.0)[c % 3]
    speed = (0.5, 1.0, 1.5, 2.0)[c % 4]
    return theta, period, speed


def render_video(c: int, spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    theta, period, speed = class_params(c, spec.n_classes)
    theta = theta + rng.normal(0.0, spec.orientation_jitter)
    phase = rng.uniform(0, 2 * np.pi)
    contrast = rng.uniform(40.0, 100.0)
    mean = rng.uniform(90.0, 160.0)
    yy, xx = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    along = xx * np.cos(theta) + yy * np.sin(theta)
    frames = []
    for t in range(spec.n_frames):
        g = mean + contrast * np.sin(2 * np.pi * (along - speed * t) / period + phase)
        g += rng.normal(0.0, spec.noise, g.shape)
        frames.append(np.clip(g, 0, 255))
    return np.rint(np.stack(frames)).astype(np.uint8)


def generate_videos(spec: SyntheticSpec):
    """Yield ``(video_id, class_index, split, frames)`` in a fixed order."""
    rng = np.random.default_rng(spec.seed)
    for c in range(spec.n_classes):
        for split, count in (("train", spec.train_per_class), ("test", spec.test_per_class)):
            for i in range(count):
                yield f"c{c}_{split}_{i:03d}", c, split, render_video(c, spec, rng)


def write_dataset(out_dir, spec: SyntheticSpec) -> Path:
    """Write PGM frames plus ``manifest.tsv`` under ``out_dir``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for video_id, c, split, frames in generate_videos(spec):
        vdir = out_dir / "frames" / video_id
        vdir.mkdir(parents=True, exist_ok=True)
        for t, f in enumerate(frames):
            save_frame(vdir / f"{t:05d}.pgm", f)
        entries.append(ManifestEntry(video_id, Path("frames") / video_id, f"class{c}", split))
    manifest = out_dir / "manifest.tsv"
    write_manifest(manifest, entries)
    return manifest
