"""Versioned binary model container.

Layout (little endian)::

    b"MCWB" | u16 version | u16 n_sections
    per section: u16 name length | name | u64 payload length | u32 crc32 | payload

A payload is a sequence of named arrays, each stored as name, dtype string,
shape and raw bytes. JSON metadata rides along as a uint8 array called
``__meta__``. No timestamps are written, so equal models give equal bytes.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boost import Ensemble, WeakClassifier
from .classify import LinearModel
from .codebook import Codebook
from .dtree import DecisionTree

MAGIC = b"MCWB"
VERSION = 1
_META = "__meta__"


class ContainerError(ValueError):
    pass


# ---------------------------------------------------------------- raw arrays

def pack_arrays(arrays: dict, meta: dict | None = None) -> bytes:
    items = dict(arrays)
    if meta is not None:
        items[_META] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    out = [struct.pack("<I", len(items))]
    for name, arr in items.items():
        a = np.ascontiguousarray(arr)
        if a.dtype.byteorder == ">":
            a = a.astype(a.dtype.newbyteorder("<"))
        dt = a.dtype.str.encode()
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", len(dt)) + dt)
        out.append(struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape))
        raw = a.tobytes()
        out.append(struct.pack("<Q", len(raw)) + raw)
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes, what: str):
        self.buf, self.pos, self.what = buf, 0, what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ContainerError(f"truncated {self.what}")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def unpack_arrays(payload: bytes):
    r = _Reader(payload, "section payload")
    (n,) = r.unpack("<I")
    arrays, meta = {}, None
    for _ in range(n):
        (ln,) = r.unpack("<H")
        name = r.take(ln).decode()
        (ld,) = r.unpack("<B")
        dtype = np.dtype(r.take(ld).decode())
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        (nbytes,) = r.unpack("<Q")
        arr = np.frombuffer(r.take(nbytes), dtype=dtype).reshape(shape).copy()
        if name == _META:
            meta = json.loads(arr.tobytes().decode())
        else:
            arrays[name] = arr
    return arrays, meta


# ---------------------------------------------------------------- trees

def pack_trees(trees) -> dict:
    """Concatenate a list of trees into flat arrays with offsets."""
    node_off = np.cumsum([0] + [t.n_nodes for t in trees]).astype(np.int64)
    leaf_off = np.cumsum([0] + [len(t.values) for t in trees]).astype(np.int64)
    k = trees[0].n_classes if trees else 0
    cat = lambda attr, dt: (np.concatenate([getattr(t, attr) for t in trees]).astype(dt)
                            if trees else np.zeros(0, dt))
    return {
        "node_offsets": node_off,
        "leaf_offsets": leaf_off,
        "feature": cat("feature", np.int64),
        "threshold": cat("threshold", np.float64),
        "left": cat("left", np.int64),
        "right": cat("right", np.int64),
        "leaf_index": cat("leaf_index", np.int64),
        "values": np.concatenate([t.values for t in trees]) if trees else np.zeros((0, k)),
        "max_depth": np.array([t.max_depth for t in trees], dtype=np.int64),
    }


def unpack_trees(a: dict, prefix: str = "") -> list:
    g = lambda key: a[prefix + key]
    no, lo = g("node_offsets"), g("leaf_offsets")
    trees = []
    for i in range(len(no) - 1):
        s, e = no[i], no[i + 1]
        tree = DecisionTree(g("feature")[s:e].copy(), g("threshold")[s:e].copy(), g("left")[s:e].copy(),
                            g("right")[s:e].copy(), g("leaf_index")[s:e].copy(),
                            g("values")[lo[i]:lo[i + 1]].copy(), int(g("max_depth")[i]))
        try:
            tree.validate()
        except ValueError as exc:
            raise ContainerError(f"corrupt tree {i}: {exc}") from None
        trees.append(tree)
    return trees


def _prefixed(d: dict, prefix: str) -> dict:
    return {prefix + k: v for k, v in d.items()}


def ensemble_arrays(ens: Ensemble):
    arrays = _prefixed(pack_trees([w.tree for w in ens.weaks]), "weak.")
    arrays["subsets"] = (np.stack([w.feature_subset for w in ens.weaks]).astype(np.int64)
                         if ens.weaks else np.zeros((0, 0), np.int64))
    if ens.stopping:
        arrays.update(_prefixed(pack_trees(ens.stopping), "gate."))
    meta = {"k": ens.k, "d": ens.d, "alpha": ens.alpha, "require_agreement": ens.require_agreement,
            "has_stopping": bool(ens.stopping)}
    return arrays, meta


def ensemble_from_arrays(arrays: dict, meta: dict) -> Ensemble:
    trees = unpack_trees(arrays, "weak.")
    subsets = arrays["subsets"]
    if len(subsets) != len(trees):
        raise ContainerError("feature subsets do not match the number of stages")
    weaks = [WeakClassifier(t, s.copy()) for t, s in zip(trees, subsets)]
    stopping = unpack_trees(arrays, "gate.") if meta.get("has_stopping") else []
    return Ensemble(weaks, int(meta["k"]), int(meta["d"]), stopping, float(meta["alpha"]),
                    bool(meta["require_agreement"]))


# ---------------------------------------------------------------- container

@dataclass
class ModelBundle:
    """Whatever subset of pipeline models one file holds, plus free-form metadata."""

    meta: dict = field(default_factory=dict)
    codebook: Codebook | None = None
    ensemble: Ensemble | None = None
    linear: LinearModel | None = None
    arrays: dict = field(default_factory=dict)  # extra named arrays (e.g. a linear mapper)


def _sections(bundle: ModelBundle):
    yield "meta", pack_arrays({}, bundle.meta)
    if bundle.codebook is not None:
        cb = bundle.codebook
        yield "codebook", pack_arrays({"centers": cb.centers, "distortions": np.asarray(cb.distortions)},
                                      {"kind": cb.kind})
    if bundle.ensemble is not None:
        arrays, meta = ensemble_arrays(bundle.ensemble)
        yield "ensemble", pack_arrays(arrays, meta)
    if bundle.linear is not None:
        lm = bundle.linear
        yield "linear", pack_arrays({"weights": lm.weights, "biases": lm.biases},
                                    {"lam": lm.lam, "epochs": lm.epochs, "seed": lm.seed})
    if bundle.arrays:
        yield "arrays", pack_arrays(bundle.arrays)


def dump_model(bundle: ModelBundle) -> bytes:
    parts = []
    secs = list(_sections(bundle))
    parts.append(MAGIC + struct.pack("<HH", VERSION, len(secs)))
    for name, payload in secs:
        nb = name.encode()
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack("<QI", len(payload), zlib.crc32(payload)))
        parts.append(payload)
    return b"".join(parts)


def save_model(bundle: ModelBundle, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dump_model(bundle))
    tmp.replace(path)
    return path


def parse_model(buf: bytes) -> ModelBundle:
    r = _Reader(buf, "model file")
    if r.take(4) != MAGIC:
        raise ContainerError("not a model container (bad magic)")
    version, n = r.unpack("<HH")
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version} (expected {VERSION})")
    bundle = ModelBundle()
    for _ in range(n):
        (ln,) = r.unpack("<H")
        name = r.take(ln).decode(errors="replace")
        size, crc = r.unpack("<QI")
        payload = r.take(size)
        if zlib.crc32(payload) != crc:
            raise ContainerError(f"checksum mismatch in section {name!r}")
        try:
            arrays, meta = unpack_arrays(payload)
        except (ValueError, TypeError, struct.error) as exc:
            raise ContainerError(f"malformed section {name!r}: {exc}") from None
        if name == "meta":
            bundle.meta = meta or {}
        elif name == "codebook":
            bundle.codebook = Codebook(arrays["centers"], meta["kind"], arrays["distortions"].tolist())
        elif name == "ensemble":
            bundle.ensemble = ensemble_from_arrays(arrays, meta)
        elif name == "linear":
            bundle.linear = LinearModel(arrays["weights"], arrays["biases"], meta["lam"], meta["epochs"],
                                        meta["seed"])
        elif name == "arrays":
            bundle.arrays = arrays
        else:
            raise ContainerError(f"unknown section {name!r}")
    if r.pos != len(buf):
        raise ContainerError("trailing bytes after last section")
    return bundle


def load_model(path) -> ModelBundle:
    path = Path(path)
    if not path.exists():
        raise ContainerError(f"model file not found: {path}")
    return parse_model(path.read_bytes())
