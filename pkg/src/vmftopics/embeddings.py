"""Unit-norm word embeddings: file loading and on-corpus training.

The trainer is a skip-gram with negative sampling where every update is
followed by projecting the touched vectors back onto the unit sphere, so
all vectors stay unit norm throughout.  It is a deliberately small stand-in
for full spherical embedding training; externally trained vectors in
word2vec text format load through the same type.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary

__all__ = [
    "EmbeddingMatrix",
    "TopicEmbeddings",
    "load_embeddings",
    "save_embeddings",
    "train_spherical",
    "init_topic_embeddings",
]

UNIT_TOL = 1e-6


@dataclass
class EmbeddingMatrix:
    """V x D matrix, one unit-norm row per vocabulary word."""

    vectors: np.ndarray
    coverage: float = 1.0  # fraction of rows that came from data rather than random init

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        object.__setattr__(self, "vectors", v)
        norms = np.linalg.norm(v, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            raise ValueError("all embedding rows must have unit norm")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class TopicEmbeddings:
    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        object.__setattr__(self, "vectors", v)
        if not np.all(np.isfinite(v)):
            raise ValueError("topic embeddings must be finite")


def _normalize_rows(v: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero vector cannot be normalized")
    return v / norms


def load_embeddings(path, vocab: Vocabulary, seed: int = 0) -> EmbeddingMatrix:
    """Read word2vec text format and align rows to the vocabulary.

    Rows are renormalized to unit length; vocabulary words missing from the
    file get random unit vectors drawn with the given seed.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("first line must be '<count> <dim>'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise ValueError("first line must be '<count> <dim>'") from exc
        found: dict[str, np.ndarray] = {}
        for ln, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise ValueError(
                    f"line {ln}: expected {dim} values for {parts[0]!r}, got {len(parts) - 1}"
                )
            found[parts[0]] = np.array([float(x) for x in parts[1:]])
    if len(found) != count:
        raise ValueError(f"header declared {count} vectors, file has {len(found)}")

    rng = np.random.default_rng(seed)
    rows = np.empty((len(vocab), dim))
    hits = 0
    for i, word in enumerate(vocab.tokens):
        if word in found:
            rows[i] = found[word]
            hits += 1
        else:
            rows[i] = rng.standard_normal(dim)
    return EmbeddingMatrix(
        vectors=_normalize_rows(rows),
        coverage=hits / len(vocab) if len(vocab) else 0.0,
    )


def save_embeddings(emb: EmbeddingMatrix, vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(vocab)} {emb.dim}\n")
        for word, vec in zip(vocab.tokens, emb.vectors):
            fh.write(word + " " + " ".join(f"{x:.8f}" for x in vec) + "\n")


def train_spherical(
    streams: list[list[str]],
    vocab: Vocabulary,
    dim: int = 100,
    window: int = 10,
    negatives: int = 5,
    epochs: int = 5,
    lr: float = 0.003,
    seed: int = 0,
    batch_pairs: int = 8192,
    subsample: float = 1e-3,
    score_scale: float = 8.0,
) -> tuple[EmbeddingMatrix, list[float]]:
    """Skip-gram with negative sampling, re-projected to the sphere.

    ``streams`` are in-vocabulary token sequences.  Negatives are drawn
    from the unigram distribution raised to 3/4; frequent tokens are
    subsampled at threshold ``subsample`` so shared high-frequency words
    do not drag every vector into one cone.  Pair scores are
    ``score_scale * cosine``: the factorized objective targets shifted
    PMI values well outside [-1, 1], and without the scale the bounded
    cosine makes the spherical objective effectively linear, whose
    optimum is a degenerate rank-1 (all-aligned) embedding.  Returns the
    trained matrix and the mean loss per epoch.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if len(vocab) < 2:
        raise ValueError("spherical training needs at least two words")
    seqs = [[vocab.index[t] for t in s] for s in streams if len(s) >= 2]
    if not seqs or max(len(s) for s in seqs) < 2:
        raise ValueError("corpus too short to form any context window")

    rng = np.random.default_rng(seed)
    v = len(vocab)
    # torch tensors for the scatter-heavy inner loop; randomness stays numpy
    import torch

    center = torch.from_numpy(_normalize_rows(rng.standard_normal((v, dim))))
    context = torch.from_numpy(_normalize_rows(rng.standard_normal((v, dim))))

    freq = vocab.total_count.astype(np.float64) ** 0.75
    neg_p = freq / freq.sum()

    rel_freq = vocab.total_count / vocab.total_count.sum()
    keep_p = np.minimum(1.0, np.sqrt(subsample / np.maximum(rel_freq, 1e-12)))

    # dynamic window: each center draws its effective window size, which
    # downweights distant context like the usual skip-gram schedule
    pairs = []
    for seq in seqs:
        arr = np.array(seq)
        arr = arr[rng.uniform(size=arr.size) < keep_p[arr]]
        n = len(arr)
        if n < 2:
            continue
        spans = rng.integers(1, window + 1, size=n)
        for i, c in enumerate(arr):
            lo = max(0, i - int(spans[i]))
            hi = min(n, i + int(spans[i]) + 1)
            for j in range(lo, hi):
                if j != i:
                    pairs.append((c, arr[j]))
    if not pairs:
        raise ValueError("corpus too short to form any context window")
    pairs = np.array(pairs, dtype=np.int64)

    # summed in-batch updates are stable while per-word multiplicity stays
    # modest; cap the batch so tiny vocabularies do not blow up the step
    batch_pairs = max(256, min(batch_pairs, 16 * v))
    epoch_losses = []
    total_batches = max(1, epochs * (len(pairs) // batch_pairs + 1))
    batch_no = 0
    for _ in range(epochs):
        order = rng.permutation(len(pairs))
        losses = []
        for start in range(0, len(pairs), batch_pairs):
            step_lr = lr * max(0.1, 1.0 - batch_no / total_batches)
            batch_no += 1
            batch = pairs[order[start : start + batch_pairs]]
            n_idx_np = rng.choice(v, size=(len(batch), negatives), p=neg_p)
            c_idx = torch.from_numpy(batch[:, 0])
            o_idx = torch.from_numpy(batch[:, 1])
            n_idx = torch.from_numpy(n_idx_np)
            cv = center[c_idx]                      # (B, D)
            ov = context[o_idx]                     # (B, D)
            nv = context[n_idx]                     # (B, K, D)

            pos_score = score_scale * (cv * ov).sum(dim=1)
            neg_score = score_scale * torch.einsum("bd,bkd->bk", cv, nv)
            loss = -(
                torch.nn.functional.logsigmoid(pos_score).sum()
                + torch.nn.functional.logsigmoid(-neg_score).sum()
            )
            losses.append(float(loss) / len(batch))

            g_pos = score_scale * (torch.sigmoid(pos_score) - 1.0)
            g_neg = score_scale * torch.sigmoid(neg_score)
            grad_c = g_pos[:, None] * ov + torch.einsum("bk,bkd->bd", g_neg, nv)
            grad_o = g_pos[:, None] * cv
            grad_n = g_neg[:, :, None] * cv[:, None, :]

            center.index_add_(0, c_idx, -step_lr * grad_c)
            context.index_add_(0, o_idx, -step_lr * grad_o)
            context.index_add_(0, n_idx.reshape(-1), -step_lr * grad_n.reshape(-1, dim))

            center /= torch.linalg.vector_norm(center, dim=1, keepdim=True)
            context /= torch.linalg.vector_norm(context, dim=1, keepdim=True)
        epoch_losses.append(float(np.mean(losses)))
    return EmbeddingMatrix(vectors=center.numpy()), epoch_losses


def init_topic_embeddings(num_topics: int, dim: int, seed: int = 0) -> TopicEmbeddings:
    """Rows drawn uniformly on the unit sphere."""
    if num_topics < 2:
        raise ValueError("need at least two topics")
    rng = np.random.default_rng(seed)
    return TopicEmbeddings(vectors=_normalize_rows(rng.standard_normal((num_topics, dim))))
