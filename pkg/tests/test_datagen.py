"""Synthetic corpus generation and its ground-truth relevance oracle."""

import numpy as np
import pytest

from embalign.datagen import LatentCorpusSpec, generate, load_ground_truth, save_ground_truth

NOISE_FREE = LatentCorpusSpec(
    n_concepts=6, n_queries=24, n_candidates=120, latent_dim=12, raw_dim=16,
    view_noise_sigma=0.0, distractor_ratio=0.3, seed=5,
    near_dup_ratio=0.05, concept_spread=0.2,
)


@pytest.fixture(scope="module")
def noise_free():
    return generate(NOISE_FREE)


class TestSpecValidation:
    def test_rejects_more_queries_than_candidates(self):
        with pytest.raises(ValueError):
            LatentCorpusSpec(n_concepts=2, n_queries=10, n_candidates=5, latent_dim=4,
                             raw_dim=4, view_noise_sigma=0.0, distractor_ratio=0.0, seed=1)

    def test_rejects_negative_sigma(self):
        with pytest.raises(ValueError):
            LatentCorpusSpec(n_concepts=2, n_queries=2, n_candidates=10, latent_dim=4,
                             raw_dim=4, view_noise_sigma=-0.1, distractor_ratio=0.0, seed=1)

    def test_rejects_overfull_mix(self):
        with pytest.raises(ValueError, match="exceed"):
            LatentCorpusSpec(n_concepts=2, n_queries=8, n_candidates=10, latent_dim=4,
                             raw_dim=4, view_noise_sigma=0.0, distractor_ratio=0.5,
                             seed=1, near_dup_ratio=0.5)


class TestGenerate:
    def test_noise_free_target_relevance_is_one(self, noise_free):
        corpus, gt = noise_free
        for qid, tid in corpus.queries:
            assert gt.relevance(qid, tid) == pytest.approx(1.0, abs=1e-12)

    def test_same_seed_identical_corpora(self):
        c1, g1 = generate(NOISE_FREE)
        c2, g2 = generate(NOISE_FREE)
        for a, b in zip(c1.items, c2.items):
            assert a.id == b.id and a.modality == b.modality
            np.testing.assert_array_equal(a.features, b.features)
        for key in g1.latents:
            np.testing.assert_array_equal(g1.latents[key], g2.latents[key])

    def test_different_seed_differs(self):
        import dataclasses

        c1, _ = generate(NOISE_FREE)
        c2, _ = generate(dataclasses.replace(NOISE_FREE, seed=6))
        assert not np.array_equal(c1.items[0].features, c2.items[0].features)

    def test_target_is_unique_argmax_when_noise_free(self, noise_free):
        corpus, gt = noise_free
        for qid, tid in corpus.queries:
            rels = gt.relevance_many(qid, corpus.candidates)
            best = corpus.candidates[int(np.argmax(rels))]
            assert best == tid
            order = np.sort(rels)
            assert order[-1] > order[-2]  # unique maximum

    def test_distractor_fraction_detached(self, noise_free):
        corpus, gt = noise_free
        # At least ~distractor_ratio of candidates have relevance < 0.5 to
        # every query (statistical assertion on the generated instance).
        detached = 0
        for cid in corpus.candidates:
            best = max(gt.relevance(qid, cid) for qid, _ in corpus.queries)
            if best < 0.5:
                detached += 1
        assert detached >= 0.9 * NOISE_FREE.distractor_ratio * len(corpus.candidates)

    def test_unrelated_pairs_score_low(self, noise_free):
        corpus, gt = noise_free
        rng = np.random.default_rng(0)
        rels = []
        for _ in range(300):
            qid, _ = corpus.queries[rng.integers(len(corpus.queries))]
            cid = corpus.candidates[rng.integers(len(corpus.candidates))]
            rels.append(gt.relevance(qid, cid))
        assert np.median(rels) < 0.1

    def test_query_modalities(self, noise_free):
        corpus, _ = noise_free
        for qid, _ in corpus.queries:
            assert corpus.item(qid).modality == "query_text"
        mods = {corpus.item(c).modality for c in corpus.candidates}
        assert mods == {"candidate_text", "candidate_image"}


class TestRelevance:
    def test_unknown_ids(self, noise_free):
        _, gt = noise_free
        with pytest.raises(KeyError):
            gt.relevance("ghost", "c00000")
        with pytest.raises(KeyError):
            gt.relevance("q00000", "ghost")

    def test_pure_function(self, noise_free):
        _, gt = noise_free
        a = gt.relevance("q00001", "c00005")
        b = gt.relevance("q00001", "c00005")
        assert a == b

    def test_batch_matches_single(self, noise_free):
        corpus, gt = noise_free
        cids = corpus.candidates[:17]
        batch = gt.relevance_many("q00002", cids)
        singles = [gt.relevance("q00002", c) for c in cids]
        np.testing.assert_array_equal(batch, singles)

    def test_range(self, noise_free):
        corpus, gt = noise_free
        rels = gt.relevance_many("q00000", corpus.candidates)
        assert np.all(rels >= 0.0) and np.all(rels <= 1.0)


class TestGroundTruthPersistence:
    def test_round_trip_bitwise(self, tmp_path, noise_free):
        _, gt = noise_free
        path = tmp_path / "gt.json"
        save_ground_truth(path, gt)
        loaded = load_ground_truth(path)
        assert loaded.targets == gt.targets
        assert loaded.relevance_exponent == gt.relevance_exponent
        for key in gt.latents:
            np.testing.assert_array_equal(loaded.latents[key], gt.latents[key])

    def test_version_check(self, tmp_path):
        path = tmp_path / "gt.json"
        path.write_text('{"format_version": 99, "targets": {}, "latents": {}, "relevance_exponent": 4}')
        with pytest.raises(ValueError, match="format_version"):
            load_ground_truth(path)
