"""Item/Corpus validation, persistence, and seed derivation stability."""

import numpy as np
import pytest

from embalign.corpus import Corpus, Item, derive_rng, derive_seed, load_corpus, save_corpus


def _item(i, modality="candidate_text", dim=4):
    return Item(f"c{i}", modality, np.full(dim, float(i)))


class TestItem:
    def test_rejects_unknown_modality(self):
        with pytest.raises(ValueError, match="modality"):
            Item("x", "video", np.ones(3))

    def test_rejects_non_finite_features(self):
        with pytest.raises(ValueError, match="non-finite"):
            Item("x", "query_text", np.array([1.0, np.nan]))

    def test_rejects_matrix_features(self):
        with pytest.raises(ValueError, match="1-d"):
            Item("x", "query_text", np.ones((2, 2)))


class TestCorpus:
    def test_duplicate_item_id(self):
        with pytest.raises(ValueError, match="duplicate"):
            Corpus(items=[_item(1), _item(1)], queries=[], candidates=["c1"])

    def test_query_target_must_be_candidate(self):
        q = Item("q1", "query_text", np.ones(4))
        with pytest.raises(ValueError, match="not a candidate"):
            Corpus(items=[q, _item(1)], queries=[("q1", "nope")], candidates=["c1"])

    def test_unknown_query_item(self):
        with pytest.raises(ValueError, match="references no item"):
            Corpus(items=[_item(1)], queries=[("ghost", "c1")], candidates=["c1"])

    def test_lookup_and_target(self):
        q = Item("q1", "query_text", np.ones(4))
        corpus = Corpus(items=[q, _item(1)], queries=[("q1", "c1")], candidates=["c1"])
        assert corpus.item("c1").id == "c1"
        assert corpus.target_of("q1") == "c1"
        with pytest.raises(KeyError):
            corpus.item("zzz")


class TestPersistence:
    def test_round_trip(self, tmp_path, small_corpus):
        corpus, _ = small_corpus
        path = tmp_path / "corpus.jsonl"
        save_corpus(path, corpus)
        loaded = load_corpus(path, corpus.queries)
        assert [it.id for it in loaded.items] == [it.id for it in corpus.items]
        for a, b in zip(corpus.items, loaded.items):
            assert a.modality == b.modality
            np.testing.assert_array_equal(a.features, b.features)

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "a", "modality": "query_text", "features": [1.0]}\nnot json\n')
        with pytest.raises(ValueError, match="line 2"):
            load_corpus(path, [])


class TestSeedDerivation:
    def test_stable_across_calls(self):
        assert derive_seed(42, "mine", "q1") == derive_seed(42, "mine", "q1")

    def test_distinct_streams(self):
        assert derive_seed(42, "mine", "q1") != derive_seed(42, "mine", "q2")
        assert derive_seed(42, "mine") != derive_seed(43, "mine")

    def test_frozen_value(self):
        # sha256-based, so this value is stable across platforms and runs.
        assert derive_seed(42, "probe") == 8823704182012296390

    def test_rng_reproducible(self):
        a = derive_rng(7, "x").standard_normal(5)
        b = derive_rng(7, "x").standard_normal(5)
        np.testing.assert_array_equal(a, b)
