"""Dataset manifests, PGM frame loading and dense patch extraction."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SPLITS = ("train", "test")


class ManifestError(ValueError):
    pass


class FrameFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    video_id: str
    frame_dir: Path
    class_name: str
    split: str


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    label_map: dict[str, int] = field(default_factory=dict)

    def label_of(self, entry: ManifestEntry) -> int:
        return self.label_map[entry.class_name]

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    @property
    def n_classes(self) -> int:
        return len(self.label_map)


def load_manifest(path, check_frames: bool = True) -> DatasetManifest:
    """Parse a tab-separated manifest; relative frame dirs resolve against the manifest's folder."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    base = path.parent
    entries = []
    seen = set()
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ManifestError(f"line {lineno}: expected 4 tab-separated fields, got {len(parts)}")
        video_id, frame_dir, class_name, split = (p.strip() for p in parts)
        if split not in SPLITS:
            raise ManifestError(f"line {lineno}: unknown split {split!r}")
        if video_id in seen:
            raise ManifestError(f"line {lineno}: duplicate video id {video_id!r}")
        seen.add(video_id)
        frame_path = Path(frame_dir)
        if not frame_path.is_absolute():
            frame_path = base / frame_path
        if check_frames and not list_frames(frame_path):
            raise ManifestError(f"line {lineno}: no frames in {frame_path}")
        entries.append(ManifestEntry(video_id, frame_path, class_name, split))
    if not entries:
        raise ManifestError("empty manifest")
    classes = sorted({e.class_name for e in entries})
    return DatasetManifest(entries, {c: i for i, c in enumerate(classes)})


def write_manifest(path, entries) -> None:
    lines = ["# video_id\tframe_dir\tclass_name\tsplit"]
    for e in entries:
        lines.append(f"{e.video_id}\t{e.frame_dir}\t{e.class_name}\t{e.split}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class Frame:
    width: int
    height: int
    pixels: np.ndarray  # (height, width) uint8, row-major

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width):
            raise ValueError("pixel array does not match frame dimensions")


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FrameFormatError("truncated header")
    return data[start:pos], pos


def parse_pgm(data: bytes) -> Frame:
    if data[:2] != b"P5":
        raise FrameFormatError(f"unsupported format {data[:2]!r}: only binary PGM (P5)")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise FrameFormatError(f"bad header field {tok!r}") from None
    width, height, maxval = fields
    if maxval != 255:
        raise FrameFormatError(f"unsupported maxval {maxval}")
    if width <= 0 or height <= 0:
        raise FrameFormatError("non-positive frame dimensions")
    pos += 1  # single whitespace byte ends the header
    payload = data[pos:pos + width * height]
    if len(payload) < width * height:
        raise FrameFormatError(f"truncated payload: {len(payload)} of {width * height} bytes")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()
    return Frame(width, height, pixels)


def load_frame(path) -> Frame:
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def save_frame(path, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise ValueError("expected a 2-D grayscale array")
    arr = np.clip(np.rint(pixels), 0, 255).astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(arr.tobytes())


def list_frames(frame_dir) -> list[Path]:
    frame_dir = Path(frame_dir)
    if not frame_dir.is_dir():
        return []
    return sorted((frame_dir / n for n in os.listdir(frame_dir) if n.lower().endswith(".pgm")),
                  key=lambda p: p.name)


def load_video(frame_dir) -> list[Frame]:
    return [load_frame(p) for p in list_frames(frame_dir)]


def patch_positions(width: int, height: int, patch_size: int, stride: int) -> list[tuple[int, int]]:
    xs = range(0, width - patch_size + 1, stride)
    ys = range(0, height - patch_size + 1, stride)
    return [(x, y) for y in ys for x in xs]


def extract_patch_grid(frames, patch_size: int, stride: int, temporal_depth: int = 1):
    """Dense grid of raw patches.

    Returns ``(patches, origins)``: ``patches`` has shape ``(n, temporal_depth*P*P)``
    as float64 in frame-major layout, ``origins`` is an ``(n, 3)`` int array of
    ``(start_frame, x, y)``. Ordering is start frame, then row, then column.
    """
    if temporal_depth < 1:
        raise ValueError("temporal_depth must be >= 1")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if not frames:
        raise ValueError("no frames")
    arrays = [f.pixels if isinstance(f, Frame) else np.asarray(f) for f in frames]
    h, w = arrays[0].shape
    if any(a.shape != (h, w) for a in arrays):
        raise ValueError("mismatched frame sizes")
    if w < patch_size or h < patch_size:
        raise ValueError(f"frame {w}x{h} smaller than patch {patch_size}")
    if len(arrays) < temporal_depth:
        raise ValueError(f"need at least {temporal_depth} frames, got {len(arrays)}")
    stack = np.stack(arrays).astype(np.float64)
    positions = patch_positions(w, h, patch_size, stride)
    patches, origins = [], []
    for t in range(len(arrays) - temporal_depth + 1):
        block = stack[t:t + temporal_depth]
        for x, y in positions:
            patches.append(block[:, y:y + patch_size, x:x + patch_size].reshape(-1))
            origins.append((t, x, y))
    return np.array(patches), np.array(origins, dtype=np.int64).reshape(-1, 3)


def expected_patch_count(width, height, patch_size, stride, n_frames, temporal_depth) -> int:
    nx = (width - patch_size) // stride + 1
    ny = (height - patch_size) // stride + 1
    return nx * ny * (n_frames - temporal_depth + 1)


def l1_normalize(patch) -> np.ndarray:
    """L1-normalize nonnegative values; an all-zero patch becomes uniform.

    Works on a single patch or row-wise on a 2-D batch.
    """
    p = np.asarray(patch, dtype=np.float64)
    if p.size == 0 or p.shape[-1] == 0:
        raise ValueError("empty patch")
    if np.any(p < 0):
        raise ValueError("patch values must be nonnegative")
    total = p.sum(axis=-1, keepdims=True)
    zero = total == 0
    out = np.divide(p, np.where(zero, 1.0, total))
    if np.any(zero):
        out = np.where(zero, 1.0 / p.shape[-1], out)
    return out
