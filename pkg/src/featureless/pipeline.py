"""End-to-end stages: descriptors, codebook, mapper, encoding, video SVM, evaluation, benchmark."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import container
from .boost import fit_adaboost, predict_strong
from .classify import LinearModel, evaluate_ovr, fit_linear_ovr, predict_class, predict_margin
from .codebook import Codebook, assign_codewords, codebookless_labels, kmeans_fit
from .config import PipelineConfig
from .container import ModelBundle
from .descriptors import hof3d_descriptor, hof_descriptor, hog_descriptor, lucas_kanade_flow
from .encode import bow_aggregate, concat_representations
from .patchio import DatasetManifest, extract_patch_grid, l1_normalize, load_video
from .wald import fit_stopping_trees, predict_early_exit_batch

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    pass


# ---------------------------------------------------------------- data

@dataclass
class VideoData:
    video_id: str
    label: int
    samples: np.ndarray            # (n, sample_dim), L1-normalized raw patches
    descriptors: np.ndarray | None  # (n, descriptor dim), train-time only
    n_frames: int                  # distinct start frames contributing windows


def window_descriptor(window: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    p = cfg.patch_size
    frames = window.reshape(-1, p, p)
    if cfg.descriptor == "hog":
        return hog_descriptor(frames[0], p)
    if cfg.descriptor == "hof":
        return hof_descriptor(lucas_kanade_flow(frames[0], frames[1]))
    return hof3d_descriptor(frames[:9])


def load_videos(manifest: DatasetManifest, cfg: PipelineConfig, split: str,
                descriptors: bool = False) -> list[VideoData]:
    """Cut every video of ``split`` into extraction windows.

    A window spans enough frames for both the boosting sample (the first
    ``temporal_depth`` frames) and the descriptor (HOF needs a frame pair).
    """
    entries = manifest.split(split)
    if not entries:
        raise PipelineError(f"manifest has no {split!r} videos")
    p = cfg.patch_size
    n_sample = cfg.sample_dim
    out = []
    for e in entries:
        frames = load_video(e.frame_dir)
        if len(frames) < cfg.window_depth:
            raise PipelineError(f"video {e.video_id} has {len(frames)} frames; "
                                f"{cfg.descriptor} with temporal_depth={cfg.temporal_depth} needs {cfg.window_depth}")
        windows, origins = extract_patch_grid(frames, p, cfg.effective_stride, cfg.window_depth)
        desc = np.array([window_descriptor(w, cfg) for w in windows]) if descriptors else None
        out.append(VideoData(e.video_id, manifest.label_of(e), l1_normalize(windows[:, :n_sample]), desc,
                             len(np.unique(origins[:, 0]))))
    return out


def stack_samples(videos) -> np.ndarray:
    return np.concatenate([v.samples for v in videos])


def stack_descriptors(videos) -> np.ndarray:
    if any(v.descriptors is None for v in videos):
        raise PipelineError("descriptors were not computed")
    return np.concatenate([v.descriptors for v in videos])


def _subsample(n: int, limit: int, rng: np.random.Generator) -> np.ndarray:
    if limit <= 0 or limit >= n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=limit, replace=False))


def stratified_split(labels, fraction: float, rng: np.random.Generator):
    """Hold out ``round(fraction * n_c)`` random samples of every class ``c``."""
    labels = np.asarray(labels)
    held = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        n = int(round(fraction * len(idx)))
        if n:
            held.append(rng.choice(idx, size=n, replace=False))
    val = np.sort(np.concatenate(held)) if held else np.zeros(0, np.int64)
    mask = np.ones(len(labels), dtype=bool)
    mask[val] = False
    return np.flatnonzero(mask), val


# ---------------------------------------------------------------- codebook & mapper

def build_codebook(cfg: PipelineConfig, train_videos) -> Codebook:
    desc = stack_descriptors(train_videos)
    rng = np.random.default_rng(cfg.seed)
    pick = _subsample(len(desc), cfg.codebook_descriptors, rng)
    k = min(cfg.codebook_k, len(np.unique(desc[pick], axis=0)))
    if k != cfg.codebook_k:
        log.warning("only %d distinct descriptors; codebook K lowered from %d", k, cfg.codebook_k)
    cb = kmeans_fit(desc[pick], k, cfg.kmeans_iters, cfg.seed, cfg.descriptor)
    log.info("codebook: K=%d over %d %s descriptors, final distortion %.6g", cb.k, len(pick), cb.kind,
             cb.distortions[-1] if cb.distortions else float("nan"))
    return cb


def _fit_boosted(cfg: PipelineConfig, X, y, k, Xv, yv):
    ens = fit_adaboost(X, y, k, cfg.stages, cfg.pool_fraction, cfg.seed, cfg.max_depth, cfg.probe_depth,
                       cfg.trim_mass, alpha=cfg.alpha, subset=cfg.subset_size or None)
    ens.require_agreement = cfg.gate_rule == "agree"
    if len(Xv):
        ens = fit_stopping_trees(ens, Xv, yv, cfg.max_depth, cfg.stop_min_leaf or None, cfg.stop_survivors)
    return ens


def linear_mapper_inputs(X: np.ndarray) -> np.ndarray:
    # L1-normalized patches have entries ~1/D; rescale to unit mean for the SGD step schedule
    return X * X.shape[1]


def train_mapper(cfg: PipelineConfig, train_videos, codebook: Codebook) -> ModelBundle:
    """Learn raw patch -> codeword assignment."""
    X = stack_samples(train_videos)
    y = assign_codewords(codebook, stack_descriptors(train_videos))
    rng = np.random.default_rng(cfg.seed)
    pick = _subsample(len(X), cfg.max_train_patches, rng)
    X, y = X[pick], y[pick]
    meta = {"kind": "featureless", "mapper": cfg.mapper, "k": codebook.k, "config": cfg.to_dict()}
    if cfg.mapper == "linear":
        lm = fit_linear_ovr(linear_mapper_inputs(X), y, codebook.k, cfg.svm_lambda, cfg.svm_epochs, cfg.seed)
        log.info("linear mapper: %d patches, K=%d", len(X), codebook.k)
        return ModelBundle(meta, linear=lm)
    tr, va = stratified_split(y, cfg.validation_fraction, rng)
    ens = _fit_boosted(cfg, X[tr], y[tr], codebook.k, X[va], y[va])
    log.info("boosted mapper: %d stages, K=%d, %d train / %d validation patches", ens.m, ens.k, len(tr), len(va))
    return ModelBundle(meta, ensemble=ens)


def train_codebookless_mapper(cfg: PipelineConfig, train_videos) -> ModelBundle:
    """Every sampled training patch is its own class.

    Held-out validation patches cannot share an ID with a training patch, so
    for the stopping gates they take the ID of their nearest training patch in
    descriptor space, the same rule a codebook made of those patches applies.
    """
    X = stack_samples(train_videos)
    D = stack_descriptors(train_videos)
    rng = np.random.default_rng(cfg.seed)
    n_ids = min(cfg.codebookless_patches, len(X))
    n_val = int(round(cfg.validation_fraction * n_ids))
    if n_ids + n_val > len(X):
        n_val = len(X) - n_ids
    pick = rng.choice(len(X), size=n_ids + n_val, replace=False)
    ids, val = np.sort(pick[:n_ids]), np.sort(pick[n_ids:])
    y = codebookless_labels(X[ids])
    yv = assign_codewords(Codebook(D[ids], cfg.descriptor), D[val]) if len(val) else np.zeros(0, np.int64)
    if cfg.mapper == "linear":
        raise PipelineError("codebookless mode needs a boosted mapper")
    ens = _fit_boosted(cfg, X[ids], y, len(ids), X[val], yv)
    log.info("codebookless mapper: %d stages, %d patch IDs, %d validation patches", ens.m, len(ids), len(val))
    meta = {"kind": "codebookless", "mapper": cfg.mapper, "k": int(len(ids)), "config": cfg.to_dict()}
    return ModelBundle(meta, ensemble=ens)


def mapper_k(bundle: ModelBundle) -> int:
    return int(bundle.meta["k"])


def predict_assignments(bundle: ModelBundle, X, alpha: float | None = None):
    """Codeword predictions and stages evaluated per patch."""
    X = np.asarray(X, dtype=np.float64)
    if bundle.linear is not None:
        return predict_class(bundle.linear, linear_mapper_inputs(X)), np.zeros(len(X), np.int64)
    ens = bundle.ensemble
    if ens is None:
        raise PipelineError("mapper model required")
    if bundle.meta.get("mapper") == "adaboost" or not ens.stopping:
        return predict_strong(ens, X)[0].argmax(axis=1), np.full(len(X), ens.m, np.int64)
    r = predict_early_exit_batch(ens, X, alpha)
    return r.predicted_class, r.stages_evaluated


# ---------------------------------------------------------------- encoding

@dataclass
class Encoded:
    video_ids: list
    labels: np.ndarray
    matrix: np.ndarray
    stats: dict = field(default_factory=dict)


def encode_videos(videos, mode: str, codebook: Codebook | None = None, mapper: ModelBundle | None = None,
                  alpha: float | None = None) -> Encoded:
    """One L1-normalized histogram per video.

    ``bow`` quantizes descriptors with the codebook, ``featureless`` and
    ``codebookless`` use the mapper's predictions on raw patches, ``combined``
    concatenates ``bow`` and ``featureless``.
    """
    if mode in ("bow", "combined") and codebook is None:
        raise PipelineError("codebook model required")
    if mode in ("featureless", "codebookless", "combined") and mapper is None:
        raise PipelineError("mapper model required")
    if mapper is not None and mode != "bow":
        want = "codebookless" if mode == "codebookless" else "featureless"
        if mapper.meta.get("kind") != want:
            raise PipelineError(f"mode {mode} needs a {want} mapper, got {mapper.meta.get('kind')}")
    rows, stages, used = [], [], set()
    for v in videos:
        parts = []
        if mode in ("bow", "combined"):
            parts.append(bow_aggregate(assign_codewords(codebook, v.descriptors), codebook.k, v.video_id))
        if mode != "bow":
            pred, st = predict_assignments(mapper, v.samples, alpha)
            stages.append(st)
            used.update(np.unique(pred).tolist())
            parts.append(bow_aggregate(pred, mapper_k(mapper), v.video_id))
        rows.append(concat_representations(*parts) if len(parts) == 2 else parts[0].counts)
    stats = {}
    if stages:
        st = np.concatenate(stages)
        stats = {"mean_stages": float(st.mean()), "distinct_predicted": len(used),
                 "distinct_fraction": len(used) / mapper_k(mapper)}
    return Encoded([v.video_id for v in videos], np.array([v.label for v in videos], np.int64),
                   np.array(rows), stats)


# ---------------------------------------------------------------- video classifier

def train_svm(cfg: PipelineConfig, enc: Encoded, n_classes: int) -> LinearModel:
    return fit_linear_ovr(enc.matrix, enc.labels, n_classes, cfg.svm_lambda, cfg.svm_epochs, cfg.seed)


def evaluate_svm(model: LinearModel, enc: Encoded) -> dict:
    return evaluate_ovr(predict_margin(model, enc.matrix), enc.labels, model.n_classes)


def format_report(mode: str, result: dict, class_names=None, extra: dict | None = None) -> str:
    lines = [f"mode: {mode}", f"map: {result['map']:.6f}", f"accuracy: {result['accuracy']:.6f}"]
    for k, ap in sorted(result["per_class_ap"].items()):
        name = class_names[k] if class_names else str(k)
        lines.append(f"ap[{name}]: {ap:.6f}")
    for k, v in (extra or {}).items():
        lines.append(f"{k}: {v:.6f}" if isinstance(v, float) else f"{k}: {v}")
    return "\n".join(lines) + "\n"


def run_mode(cfg: PipelineConfig, mode: str, train_videos, test_videos, n_classes: int,
             codebook=None, mapper=None, alpha=None) -> dict:
    """Encode both splits, fit the video SVM on train and score test."""
    tr = encode_videos(train_videos, mode, codebook, mapper, alpha)
    te = encode_videos(test_videos, mode, codebook, mapper, alpha)
    model = train_svm(cfg, tr, n_classes)
    res = evaluate_svm(model, te)
    res.update(train=tr, test=te, model=model)
    return res


# ---------------------------------------------------------------- benchmark

BENCH_COLUMNS = ("alpha", "mean_stages", "time_per_frame_s", "speedup", "map")


def _best_time(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_bench(cfg: PipelineConfig, mapper: ModelBundle, train_videos, test_videos, n_classes: int,
              alphas, repeats: int = 3) -> list[dict]:
    """Per-alpha cost of the early-exit mapper on the test patches and the resulting MAP."""
    ens = mapper.ensemble
    if ens is None or not ens.stopping:
        raise PipelineError("benchmark needs a mapper with stopping stages")
    X = stack_samples(test_videos)
    n_frames = sum(v.n_frames for v in test_videos)
    t_full = _best_time(lambda: predict_strong(ens, X), repeats)
    rows = []
    for a in sorted(alphas):
        t = _best_time(lambda: predict_early_exit_batch(ens, X, a), repeats)
        stages = predict_early_exit_batch(ens, X, a).stages_evaluated
        res = run_mode(cfg, mapper.meta["kind"], train_videos, test_videos, n_classes, mapper=mapper, alpha=a)
        rows.append({"alpha": float(a), "mean_stages": float(stages.mean()), "time_per_frame_s": t / n_frames,
                     "speedup": t_full / t, "map": res["map"]})
    return rows


def format_bench(rows) -> str:
    head = "".join(f"{c:>18}" for c in BENCH_COLUMNS)
    out = [head]
    for r in rows:
        out.append(f"{r['alpha']:>18.4f}{r['mean_stages']:>18.2f}{r['time_per_frame_s']:>18.3e}"
                   f"{r['speedup']:>18.3f}{r['map']:>18.4f}")
    return "\n".join(out) + "\n"


def bench_csv(rows) -> str:
    lines = [",".join(BENCH_COLUMNS)]
    lines += [",".join(repr(float(r[c])) for c in BENCH_COLUMNS) for r in rows]
    return "\n".join(lines) + "\n"


# re-exported for the CLI
save_model = container.save_model
load_model = container.load_model
