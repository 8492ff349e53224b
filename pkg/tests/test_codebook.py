import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from featureless.codebook import (Codebook, CodebookError, assign_codeword, assign_codewords, codebookless_labels,
                                  kmeans_fit)


class TestKmeans:
    def test_k_equals_n(self):
        pts = np.array([[0.0, 0], [1, 0], [0, 1], [5, 5]])
        cb = kmeans_fit(pts, 4, seed=0)
        assert sorted(map(tuple, cb.centers)) == sorted(map(tuple, pts))
        assert cb.distortions[-1] == 0

    def test_two_blobs_against_exhaustive(self, rng):
        pts = np.concatenate([rng.normal(0, 0.3, (6, 2)), rng.normal(10, 0.3, (6, 2))])
        best = None
        for mask in itertools.product([0, 1], repeat=len(pts)):
            m = np.array(mask, bool)
            if m.all() or not m.any():
                continue
            cost = ((pts[m] - pts[m].mean(0)) ** 2).sum() + ((pts[~m] - pts[~m].mean(0)) ** 2).sum()
            if best is None or cost < best[0]:
                best = (cost, pts[m].mean(0), pts[~m].mean(0))
        cb = kmeans_fit(pts, 2, seed=3)
        got = sorted(map(tuple, cb.centers))
        want = sorted([tuple(best[1]), tuple(best[2])])
        assert_allclose(got, want, atol=0.5)
        assert_allclose(cb.distortions[-1], best[0], rtol=1e-9)

    def test_too_few_points(self):
        pts = np.array([[0.0], [1.0], [2.0], [1.0]])
        with pytest.raises(CodebookError, match="exceeds"):
            kmeans_fit(pts, 5)
        with pytest.raises(CodebookError):
            kmeans_fit(pts, 1)

    def test_determinism(self, rng):
        pts = rng.normal(size=(300, 5))
        a, b = kmeans_fit(pts, 7, seed=11), kmeans_fit(pts, 7, seed=11)
        assert a.centers.tobytes() == b.centers.tobytes()

    def test_duplicates_and_empty_clusters(self, rng):
        pts = np.repeat(rng.normal(size=(6, 3)), 20, axis=0)
        cb = kmeans_fit(pts, 6, seed=0)
        assert len(np.unique(assign_codewords(cb, pts))) == 6


class TestAssign:
    def test_exact_match(self, rng):
        cb = Codebook(rng.normal(size=(5, 4)))
        assert assign_codeword(cb, cb.centers[3]) == 3

    def test_tie_lowest_index(self):
        cb = Codebook(np.array([[10.0, 10], [0, 1], [0, -1]]))
        assert assign_codeword(cb, [0.0, 0.0]) == 1

    def test_brute_force(self, rng):
        cb = Codebook(rng.normal(size=(9, 6)))
        pts = rng.normal(size=(200, 6))
        ref = [min(range(9), key=lambda c: ((p - cb.centers[c]) ** 2).sum()) for p in pts]
        assert_array_equal(assign_codewords(cb, pts), ref)
        assert [assign_codeword(cb, p) for p in pts] == ref

    def test_dimension_mismatch(self, rng):
        cb = Codebook(rng.normal(size=(3, 4)))
        with pytest.raises(CodebookError):
            assign_codeword(cb, np.zeros(5))

    def test_codebook_invariants(self):
        with pytest.raises(CodebookError):
            Codebook(np.zeros((1, 3)))
        with pytest.raises(CodebookError):
            Codebook(np.array([[0.0, np.nan], [1, 1]]))


class TestCodebookless:
    def test_identity(self):
        assert_array_equal(codebookless_labels(np.zeros((5, 3))), np.arange(5))
        assert len(set(codebookless_labels(np.zeros((100, 2))))) == 100

    def test_degenerate(self):
        with pytest.raises(CodebookError):
            codebookless_labels(np.zeros((1, 3)))
        with pytest.raises(CodebookError):
            codebookless_labels([])
