"""Exact top-k retrieval against a brute-force full-scan oracle."""

import numpy as np
import pytest

from embalign.retrieval import build_index, top_k


def _unit_rows(rng, n, d):
    m = rng.standard_normal((n, d))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def brute_force_top_k(index, query, k):
    """Independent oracle: full-scan sort by (-score, id) over the same
    score vector the index computes, so selection and tie-breaks are what
    get verified (not BLAS accumulation order)."""
    ids = index.candidate_ids
    scores = index.scores(query)
    ranked = sorted(zip(ids, (float(s) for s in scores)), key=lambda pair: (-pair[1], pair[0]))
    return ranked[: min(k, len(ids))]


class TestBuildIndex:
    def test_empty_index_disallowed(self):
        with pytest.raises(ValueError, match="empty"):
            build_index([], np.zeros((0, 4)))

    def test_duplicate_ids(self, rng):
        emb = _unit_rows(rng, 2, 4)
        with pytest.raises(ValueError, match="duplicate"):
            build_index(["a", "a"], emb)

    def test_non_unit_rows(self, rng):
        emb = rng.standard_normal((3, 4))
        with pytest.raises(ValueError, match="unit-norm"):
            build_index(["a", "b", "c"], emb)

    def test_single_candidate(self, rng):
        emb = _unit_rows(rng, 1, 4)
        index = build_index(["only"], emb)
        q = _unit_rows(rng, 1, 4)[0]
        ranked = top_k(index, q, 1)
        assert ranked.ids() == ["only"]
        assert ranked.entries[0][1] == pytest.approx(float(np.dot(emb[0], q)), abs=1e-15)

    def test_index_is_immutable(self, rng):
        emb = _unit_rows(rng, 3, 4)
        index = build_index(["a", "b", "c"], emb)
        with pytest.raises(ValueError):
            index._emb[0, 0] = 2.0


class TestTopK:
    def test_query_equal_to_stored(self, rng):
        emb = _unit_rows(rng, 20, 6)
        ids = [f"c{i:02d}" for i in range(20)]
        index = build_index(ids, emb)
        ranked = top_k(index, emb[7], 5)
        assert ranked.ids()[0] == "c07"
        assert ranked.entries[0][1] == pytest.approx(1.0, abs=1e-12)

    def test_k_larger_than_n(self, rng):
        emb = _unit_rows(rng, 5, 4)
        index = build_index([f"c{i}" for i in range(5)], emb)
        assert len(top_k(index, _unit_rows(rng, 1, 4)[0], 50)) == 5

    def test_k_must_be_positive(self, rng):
        emb = _unit_rows(rng, 5, 4)
        index = build_index([f"c{i}" for i in range(5)], emb)
        with pytest.raises(ValueError, match="k"):
            top_k(index, emb[0], 0)

    def test_scores_non_increasing(self, rng):
        emb = _unit_rows(rng, 100, 8)
        index = build_index([f"c{i:03d}" for i in range(100)], emb)
        ranked = top_k(index, _unit_rows(rng, 1, 8)[0], 30)
        scores = [s for _, s in ranked.entries]
        assert all(a >= b for a, b in zip(scores, scores[1:]))

    def test_tie_break_by_ascending_id(self, rng):
        # Identical rows force exact score ties.
        row = _unit_rows(rng, 1, 4)[0]
        emb = np.stack([row, row, row])
        index = build_index(["zz", "aa", "mm"], emb)
        ranked = top_k(index, row, 3)
        assert ranked.ids() == ["aa", "mm", "zz"]

    def test_oracle_equivalence_random(self, rng):
        for trial in range(20):
            n = int(rng.integers(5, 60))
            d = int(rng.integers(2, 10))
            emb = _unit_rows(rng, n, d)
            ids = [f"c{i:03d}" for i in range(n)]
            index = build_index(ids, emb)
            q = _unit_rows(rng, 1, d)[0]
            k = int(rng.integers(1, n + 3))
            got = top_k(index, q, k)
            expected = brute_force_top_k(index, q, k)
            assert got.ids() == [cid for cid, _ in expected]
            for (gc, gs), (ec, es) in zip(got.entries, expected):
                assert gs == es

    def test_oracle_equivalence_with_planted_ties(self, rng):
        base = _unit_rows(rng, 10, 6)
        rows = np.concatenate([base, base[:4]])  # duplicated rows = exact ties
        ids = [f"c{i:02d}" for i in range(len(rows))]
        index = build_index(ids, rows)
        q = _unit_rows(rng, 1, 6)[0]
        for k in (1, 3, 7, 14):
            got = top_k(index, q, k)
            expected = brute_force_top_k(index, q, k)
            assert got.ids() == [cid for cid, _ in expected]
