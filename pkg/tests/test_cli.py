import filecmp
import os

import numpy as np
import pytest

from featureless.cli import main
from featureless.pipeline import BENCH_COLUMNS

TINY = "codebook_k = 6\nstages = 12\ncodebookless_patches = 150\nsvm_epochs = 10\n" \
       "modes = bow,featureless,codebookless,combined\n"


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main(["gen-synthetic", "--out", str(data), "--classes", "3", "--train-per-class", "8",
                 "--test-per-class", "4", "--frames", "2", "--size", "48"]) == 0
    cfg = root / "tiny.cfg"
    cfg.write_text(TINY)
    return root, data / "manifest.tsv", cfg


def _run_all(dataset, out):
    root, manifest, cfg = dataset
    assert main(["run-all", "--config", str(cfg), "--manifest", str(manifest), "--out", str(out)]) == 0


def _artifacts(d):
    return sorted(p for p in os.listdir(d) if not p.endswith(".tmp"))


class TestRunAll:
    def test_deterministic(self, dataset, tmp_path, capsys):
        _run_all(dataset, tmp_path / "a")
        _run_all(dataset, tmp_path / "b")
        names = _artifacts(tmp_path / "a")
        assert names == _artifacts(tmp_path / "b")
        for mode in ("bow", "featureless", "codebookless", "combined"):
            assert f"report_{mode}.txt" in names
            assert f"svm_{mode}.mcwb" in names
        _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
        assert mismatch == [] and errors == []
        assert "map:" in capsys.readouterr().out

    def test_composed_matches(self, dataset, tmp_path):
        root, manifest, cfg = dataset
        _run_all(dataset, tmp_path / "mono")
        out = tmp_path / "step"
        common = ["--config", str(cfg), "--manifest", str(manifest), "--out", str(out)]
        steps = [["build-codebook"], ["train-mapper", "--mode", "featureless"],
                 ["train-mapper", "--mode", "codebookless"], ["encode"], ["train-svm"], ["evaluate"]]
        for s in steps:
            assert main(s + common) == 0
        names = _artifacts(tmp_path / "mono")
        assert names == _artifacts(out)
        _, mismatch, _ = filecmp.cmpfiles(tmp_path / "mono", out, names, shallow=False)
        assert mismatch == []


class TestErrors:
    def test_missing_mapper(self, dataset, tmp_path, capsys):
        root, manifest, cfg = dataset
        out = tmp_path / "o"
        main(["build-codebook", "--config", str(cfg), "--manifest", str(manifest), "--out", str(out)])
        code = main(["encode", "--mode", "featureless", "--config", str(cfg), "--manifest", str(manifest),
                     "--out", str(out)])
        assert code == 2
        assert "mapper model required" in capsys.readouterr().err

    def test_config_mismatch(self, dataset, tmp_path, capsys):
        root, manifest, cfg = dataset
        out = tmp_path / "o"
        main(["build-codebook", "--config", str(cfg), "--manifest", str(manifest), "--out", str(out)])
        other = tmp_path / "other.cfg"
        other.write_text(TINY + "patch_size = 16\n")
        code = main(["train-mapper", "--config", str(other), "--manifest", str(manifest), "--out", str(out)])
        assert code == 2
        assert "patch_size" in capsys.readouterr().err

    def test_bad_manifest(self, tmp_path, capsys):
        (tmp_path / "m.tsv").write_text("no tabs here\n")
        assert main(["build-codebook", "--manifest", str(tmp_path / "m.tsv"), "--out", str(tmp_path)]) == 2
        assert capsys.readouterr().err.startswith("error:")

    def test_manifest_required(self, tmp_path, capsys):
        assert main(["build-codebook", "--out", str(tmp_path)]) == 2
        assert "--manifest" in capsys.readouterr().err


def test_run_bench(dataset, tmp_path, capsys):
    root, manifest, cfg = dataset
    out = tmp_path / "b"
    common = ["--config", str(cfg), "--manifest", str(manifest), "--out", str(out)]
    assert main(["build-codebook"] + common) == 0
    assert main(["train-mapper"] + common) == 0
    assert main(["run-bench", "--alphas", "0.5,1.0"] + common) == 0
    lines = (out / "bench.csv").read_text().splitlines()
    assert lines[0].split(",") == list(BENCH_COLUMNS)
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    assert rows.shape == (2, len(BENCH_COLUMNS))
    assert rows[0, 1] <= rows[1, 1] == 12  # alpha 1.0 never exits early
    assert "mean_stages" in capsys.readouterr().out
