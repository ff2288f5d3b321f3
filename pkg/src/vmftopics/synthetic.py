"""Synthetic labeled corpora with known topic-word distributions.

Each class draws tokens from a Zipf-weighted block of class words mixed
with a shared background block, so the generating distributions are known
exactly and clusterability has a ground truth.  Words are letter-only
strings, which keeps them stable under tokenization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Document

__all__ = ["SyntheticSpec", "generate_corpus"]


def _word(i: int) -> str:
    letters = "abcdefghijklmnopqrstuvwxyz"
    out = []
    i += 1
    while i > 0:
        i, r = divmod(i - 1, 26)
        out.append(letters[r])
    return "w" + "".join(reversed(out))


@dataclass
class SyntheticSpec:
    num_classes: int = 4
    num_docs: int = 2000
    vocab_size: int = 560
    background_frac: float = 0.30   # share of tokens drawn from the shared block
    background_words: int = 160
    doc_len_mean: float = 60.0
    doc_len_min: int = 20
    zipf: float = 0.8
    class_overlap: float = 0.0      # mass each class spends on its sibling's block
    mixture_alpha: float = 0.0      # >0: docs mix classes ~ Dirichlet(alpha), label = argmax
    seed: int = 0


def _zipf_probs(n: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, n + 1, dtype=np.float64)
    p = ranks ** (-exponent)
    return p / p.sum()


def generate_corpus(spec: SyntheticSpec | None = None, **kwargs):
    """Returns (documents, class_word_dists, vocabulary words).

    ``class_word_dists`` is the (classes, vocab) matrix of generating token
    distributions, usable as an oracle for matching and purity checks.
    """
    spec = spec or SyntheticSpec(**kwargs)
    rng = np.random.default_rng(spec.seed)
    c = spec.num_classes
    v = spec.vocab_size
    words = [_word(i) for i in range(v)]

    n_bg = spec.background_words
    per_class = (v - n_bg) // c
    if per_class < 5:
        raise ValueError("vocab too small for the class count")

    dists = np.zeros((c, v))
    bg = _zipf_probs(n_bg, spec.zipf)
    block = _zipf_probs(per_class, spec.zipf)
    for cls in range(c):
        lo = n_bg + cls * per_class
        own = (1.0 - spec.background_frac) * (1.0 - spec.class_overlap)
        dists[cls, :n_bg] = spec.background_frac * bg
        dists[cls, lo : lo + per_class] = own * block
        if spec.class_overlap > 0:
            # siblings are adjacent pairs (0,1), (2,3), ...; odd tail loops back
            sib = cls + 1 if cls % 2 == 0 else cls - 1
            sib = sib % c
            slo = n_bg + sib * per_class
            shared = (1.0 - spec.background_frac) * spec.class_overlap
            dists[cls, slo : slo + per_class] += shared * block
    # leftover words (rounding) are spread thinly over all classes
    leftover = v - n_bg - per_class * c
    if leftover:
        dists[:, v - leftover :] = 1e-4
        dists /= dists.sum(axis=1, keepdims=True)

    docs = []
    for i in range(spec.num_docs):
        if spec.mixture_alpha > 0:
            theta = rng.dirichlet(np.full(c, spec.mixture_alpha))
            cls = int(np.argmax(theta))
            word_dist = theta @ dists
        else:
            cls = int(rng.integers(0, c))
            word_dist = dists[cls]
        length = max(spec.doc_len_min, int(rng.poisson(spec.doc_len_mean)))
        tokens = rng.choice(v, size=length, p=word_dist)
        text = " ".join(words[t] for t in tokens)
        docs.append(Document(id=f"doc{i:05d}", text=text, label=cls))
    return docs, dists, words
