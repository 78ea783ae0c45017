"""Shared fixtures: a small deterministic corpus and encoder parameters."""

import numpy as np
import pytest

from embalign.corpus import Item, derive_seed
from embalign.datagen import LatentCorpusSpec, generate
from embalign.encoder import EncoderDims, init_encoder_params

SMALL_SPEC = LatentCorpusSpec(
    n_concepts=6,
    n_queries=30,
    n_candidates=120,
    latent_dim=12,
    raw_dim=16,
    view_noise_sigma=0.05,
    distractor_ratio=0.25,
    seed=11,
    near_dup_ratio=0.05,
    concept_spread=0.2,
)


@pytest.fixture(scope="session")
def small_corpus():
    return generate(SMALL_SPEC)


@pytest.fixture(scope="session")
def small_dims():
    return EncoderDims(raw_dim=16, hidden_dim=20, embed_dim=12)


@pytest.fixture(scope="session")
def small_params(small_dims):
    return init_encoder_params(small_dims, derive_seed(11, "test-encoder"))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def random_item(rng, raw_dim=16, modality="candidate_text", item_id="it"):
    return Item(item_id, modality, rng.standard_normal(raw_dim))
