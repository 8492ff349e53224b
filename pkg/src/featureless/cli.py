"""Command-line entry point: ``featureless <command> [flags]``."""

from __future__ import annotations

import argparse
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

from . import pipeline as P
from .config import MODES, ConfigError, PipelineConfig, make_config
from .container import ContainerError, ModelBundle, load_model, save_model
from .encode import read_histograms, write_histograms
from .patchio import ManifestError, load_manifest
from .synthetic import SyntheticSpec, write_dataset

log = logging.getLogger("featureless")

# settings that must match between a stored model and the current run
_SHAPE_KEYS = ("patch_size", "stride", "temporal_depth", "descriptor")
DEFAULT_ALPHAS = (0.5, 0.9, 0.97, 0.999, 1.0)


class CliError(RuntimeError):
    pass


# ---------------------------------------------------------------- helpers

@contextmanager
def command_log(out: Path, name: str):
    """Mirror the package log into ``<out>/<name>.log`` (no timestamps, so reruns match)."""
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / f"{name}.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    try:
        yield
    finally:
        log.removeHandler(handler)
        handler.close()


def _config(args) -> PipelineConfig:
    overrides = {"seed": args.seed, "alpha": args.alpha}
    if getattr(args, "mode", None) and args.command == "run-all":
        overrides["modes"] = args.mode
    return make_config(args.config, overrides)


def _manifest(args):
    if not args.manifest:
        raise CliError("--manifest is required for this command")
    return load_manifest(args.manifest)


def _check_shape(bundle: ModelBundle, cfg: PipelineConfig, what: str) -> None:
    stored = bundle.meta.get("config", {})
    for key in _SHAPE_KEYS:
        if key in stored and stored[key] != getattr(cfg, key):
            raise CliError(f"{what} was trained with {key}={stored[key]!r} but the config says "
                           f"{getattr(cfg, key)!r}")


def _load(path: Path, what: str, cfg: PipelineConfig | None = None) -> ModelBundle:
    if not path.exists():
        raise CliError(f"{what} model required (missing {path})")
    bundle = load_model(path)
    if cfg is not None:
        _check_shape(bundle, cfg, what)
    return bundle


def _paths(out: Path) -> dict:
    return {
        "codebook": out / "codebook.mcwb",
        "featureless": out / "mapper.mcwb",
        "codebookless": out / "mapper_codebookless.mcwb",
    }


def _mapper_path(args, out: Path, mode: str) -> Path:
    if args.model:
        return Path(args.model)
    return _paths(out)["codebookless" if mode == "codebookless" else "featureless"]


def _hist_path(out: Path, mode: str, split: str) -> Path:
    return out / f"hist_{mode}_{split}.csv"


# ---------------------------------------------------------------- commands

def cmd_gen_synthetic(args, cfg):
    """Write a drifting-grating dataset and its manifest."""
    spec = SyntheticSpec(n_classes=args.classes, train_per_class=args.train_per_class,
                         test_per_class=args.test_per_class, n_frames=args.frames, width=args.size,
                         height=args.size, seed=cfg.seed)
    manifest = write_dataset(args.out, spec)
    print(manifest)


def cmd_build_codebook(args, cfg):
    """Cluster training descriptors into a k-means codebook."""
    out = Path(args.out)
    ds = _manifest(args)
    with command_log(out, "build-codebook"):
        train = P.load_videos(ds, cfg, "train", descriptors=True)
        cb = P.build_codebook(cfg, train)
        save_model(ModelBundle({"kind": "codebook", "config": cfg.to_dict()}, codebook=cb), _paths(out)["codebook"])


def cmd_train_mapper(args, cfg):
    """Train the raw-patch mapper (featureless or codebookless)."""
    out = Path(args.out)
    ds = _manifest(args)
    mode = args.mode or "featureless"
    if mode not in ("featureless", "codebookless"):
        raise CliError("train-mapper takes --mode featureless or codebookless")
    with command_log(out, f"train-mapper-{mode}"):
        train = P.load_videos(ds, cfg, "train", descriptors=True)
        if mode == "codebookless":
            bundle = P.train_codebookless_mapper(cfg, train)
        else:
            cb = _load(_paths(out)["codebook"], "codebook", cfg).codebook
            bundle = P.train_mapper(cfg, train, cb)
        save_model(bundle, _paths(out)[mode] if not args.model else Path(args.model))


def _encode_mode(args, cfg, ds, mode, out, cache=None):
    codebook = mapper = None
    if mode in ("bow", "combined"):
        codebook = _load(_paths(out)["codebook"], "codebook", cfg).codebook
    if mode != "bow":
        mapper = _load(_mapper_path(args, out, mode), "mapper", cfg)
    need_desc = mode in ("bow", "combined")
    for split in ("train", "test"):
        key = (split, need_desc)
        if cache is not None and key not in cache:
            cache[key] = P.load_videos(ds, cfg, split, descriptors=need_desc)
        videos = cache[key] if cache is not None else P.load_videos(ds, cfg, split, descriptors=need_desc)
        enc = P.encode_videos(videos, mode, codebook, mapper, cfg.alpha)
        write_histograms(_hist_path(out, mode, split), enc.video_ids, enc.labels, enc.matrix)
        log.info("encoded %d %s videos (%s, dim %d)", len(videos), split, mode, enc.matrix.shape[1])
        for k, v in enc.stats.items():
            log.info("  %s %s: %s", split, k, v)


def _modes(args, cfg) -> list[str]:
    return [args.mode] if args.mode else cfg.mode_list


def cmd_encode(args, cfg):
    """Write per-video histograms for each mode."""
    out = Path(args.out)
    ds = _manifest(args)
    cache = {}
    for mode in _modes(args, cfg):
        with command_log(out, f"encode-{mode}"):
            _encode_mode(args, cfg, ds, mode, out, cache)


def _n_classes(args, labels) -> int:
    if args.manifest:
        return load_manifest(args.manifest, check_frames=False).n_classes
    return int(labels.max()) + 1


def cmd_train_svm(args, cfg):
    """Fit the one-vs-rest linear video classifier."""
    out = Path(args.out)
    for mode in _modes(args, cfg):
        path = _hist_path(out, mode, "train")
        if not path.exists():
            raise CliError(f"histograms required (missing {path}); run encode first")
        with command_log(out, f"train-svm-{mode}"):
            ids, labels, matrix = read_histograms(path)
            enc = P.Encoded(ids, labels, matrix)
            model = P.train_svm(cfg, enc, _n_classes(args, labels))
            save_model(ModelBundle({"kind": "svm", "mode": mode, "config": cfg.to_dict()}, linear=model),
                       out / f"svm_{mode}.mcwb")
            log.info("svm: %d classes over %d-dim %s histograms", model.n_classes, model.dim, mode)


def cmd_evaluate(args, cfg):
    """Score test histograms and write a MAP report."""
    out = Path(args.out)
    names = None
    if args.manifest:
        lm = load_manifest(args.manifest, check_frames=False).label_map
        names = sorted(lm, key=lm.get)
    for mode in _modes(args, cfg):
        svm_path = Path(args.model) if (args.model and args.mode) else out / f"svm_{mode}.mcwb"
        model = _load(svm_path, "svm").linear
        path = _hist_path(out, mode, "test")
        if not path.exists():
            raise CliError(f"histograms required (missing {path}); run encode first")
        ids, labels, matrix = read_histograms(path)
        res = P.evaluate_svm(model, P.Encoded(ids, labels, matrix))
        report = P.format_report(mode, res, names, {"test_videos": len(ids)})
        (out / f"report_{mode}.txt").write_text(report, encoding="utf-8")
        print(report, end="")


def cmd_run_bench(args, cfg):
    """Time early exit against the full ensemble over several alphas."""
    out = Path(args.out)
    ds = _manifest(args)
    mode = args.mode or "featureless"
    mapper = _load(_mapper_path(args, out, mode), "mapper", cfg)
    alphas = [float(a) for a in args.alphas.split(",")] if args.alphas else list(DEFAULT_ALPHAS)
    train = P.load_videos(ds, cfg, "train")
    test = P.load_videos(ds, cfg, "test")
    rows = P.run_bench(cfg, mapper, train, test, ds.n_classes, alphas)
    table = P.format_bench(rows)
    (out / "bench.txt").write_text(table, encoding="utf-8")
    (out / "bench.csv").write_text(P.bench_csv(rows), encoding="utf-8")
    print(table, end="")


def cmd_run_all(args, cfg):
    """Run the whole pipeline for every configured mode."""
    out = Path(args.out)
    modes = cfg.mode_list
    sub = argparse.Namespace(**{**vars(args), "mode": None, "model": None})
    if any(m in ("bow", "featureless", "combined") for m in modes):
        cmd_build_codebook(sub, cfg)
    if any(m in ("featureless", "combined") for m in modes):
        cmd_train_mapper(argparse.Namespace(**{**vars(sub), "mode": "featureless"}), cfg)
    if "codebookless" in modes:
        cmd_train_mapper(argparse.Namespace(**{**vars(sub), "mode": "codebookless"}), cfg)
    for step in (cmd_encode, cmd_train_svm, cmd_evaluate):
        step(sub, cfg)


COMMANDS = {
    "gen-synthetic": cmd_gen_synthetic,
    "build-codebook": cmd_build_codebook,
    "train-mapper": cmd_train_mapper,
    "encode": cmd_encode,
    "train-svm": cmd_train_svm,
    "evaluate": cmd_evaluate,
    "run-bench": cmd_run_bench,
    "run-all": cmd_run_all,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="featureless",
                                     description="Boosted raw-patch to codeword mapping for video classification.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    subs = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = subs.add_parser(name, help=(COMMANDS[name].__doc__ or "").strip().split("\n")[0] or None)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--manifest", help="dataset manifest (tab-separated)")
        p.add_argument("--model", help="model file to read or write (overrides the default in --out)")
        p.add_argument("--mode", choices=MODES)
        p.add_argument("--alpha", type=float, help="early-exit threshold")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default="artifacts", help="output directory (default: artifacts)")
        if name == "gen-synthetic":
            p.add_argument("--classes", type=int, default=5)
            p.add_argument("--train-per-class", type=int, default=100)
            p.add_argument("--test-per-class", type=int, default=30)
            p.add_argument("--frames", type=int, default=3)
            p.add_argument("--size", type=int, default=48, help="frame width and height in pixels")
        if name == "run-bench":
            p.add_argument("--alphas", help="comma-separated thresholds (default: 0.5,0.9,0.97,0.999,1.0)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    log.setLevel(logging.INFO)
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except (CliError, ConfigError, ContainerError, ManifestError, P.PipelineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
