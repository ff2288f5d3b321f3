"""Shared desk-scale fixtures for the acceptance suite.

The canonical corpus is title-like (short documents), where per-document
evidence is weak enough that latent geometry matters; embeddings are
trained once per corpus and shared across model seeds.
"""

import numpy as np
import pytest
import torch

from vmftopics import corpus as cp
from vmftopics import synthetic as syn
from vmftopics.embeddings import train_spherical

torch.set_num_threads(4)

SHORT_GEN = dict(
    num_classes=4, num_docs=2000, vocab_size=520, background_words=160,
    doc_len_mean=8.0, doc_len_min=3, background_frac=0.25, zipf=0.55, seed=0,
)
SHORT_PREP = dict(min_count=5)

BASE_GEN = dict(num_classes=4, num_docs=2000, vocab_size=560, seed=0)
BASE_PREP = {}


def _prepare(gen_kwargs, prep_kwargs, emb_epochs=5):
    docs, dists, words = syn.generate_corpus(**gen_kwargs)
    vocab = cp.build_vocabulary(docs, **prep_kwargs)
    bow = cp.to_bow(docs, vocab)
    streams = cp.token_streams(docs, vocab)
    emb, _ = train_spherical(
        streams, vocab, dim=50, window=10, negatives=5, epochs=emb_epochs, seed=0
    )
    return {
        "docs": docs,
        "dists": dists,
        "vocab": vocab,
        "bow": bow,
        "streams": streams,
        "emb": emb,
        "labels": np.array(bow.labels),
    }


@pytest.fixture(scope="session")
def short_corpus():
    """2000 title-length docs, 4 classes, vocab ~500."""
    data = _prepare(SHORT_GEN, SHORT_PREP)
    assert 400 <= len(data["vocab"]) <= 620
    return data


@pytest.fixture(scope="session")
def base_corpus():
    """2000 medium-length docs, 4 classes, vocab ~500."""
    data = _prepare(BASE_GEN, BASE_PREP, emb_epochs=4)
    assert 400 <= len(data["vocab"]) <= 620
    return data


ABLATION_GEN = dict(
    num_classes=4, num_docs=2000, vocab_size=560,
    doc_len_mean=40.0, doc_len_min=12, background_frac=0.40, seed=0,
)


@pytest.fixture(scope="session")
def ablation_corpus():
    """Weaker per-document signal: low temperature underfits here, so the
    radius sweep has room to move both clusterability and diversity."""
    data = _prepare(ABLATION_GEN, {}, emb_epochs=4)
    assert 400 <= len(data["vocab"]) <= 620
    return data


@pytest.fixture(scope="session")
def derived_groups(short_corpus):
    """3 tf-idf keywords per class from a 20% split of the short corpus."""
    return cp.derive_keywords(
        short_corpus["docs"], short_corpus["vocab"], k=3, train_frac=0.2, seed=0
    )
