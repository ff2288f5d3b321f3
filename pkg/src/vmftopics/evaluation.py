"""Metrics: diversity, coherence, clusterability, classification.

Coherence statistics come from boolean sliding windows over in-vocabulary
token streams (width 10 for the pairwise score, 110 for the context-vector
score).  Clustering quality uses an internal Lloyd/k-means++ implementation
so runs are reproducible from an explicit seed.  Deterministic inference
(latent set to the mean direction) backs all Top-* metrics.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, asdict

import numpy as np
import torch

from .corpus import BowMatrix, Vocabulary
from .model import TopicModel, topic_proportions

__all__ = [
    "TopicSummary",
    "MetricsReport",
    "topic_summaries",
    "diversity",
    "npmi",
    "c_v",
    "top_assignments",
    "infer_proportions",
    "kmeans",
    "purity",
    "nmi",
    "classify",
    "accuracy",
    "micro_f1",
    "metrics_report",
]

NPMI_WINDOW = 10
CV_WINDOW = 110
TOP_K = 10
NPMI_EPS = 1e-12


@dataclass
class TopicSummary:
    topic: int
    words: list[str]
    probs: list[float]


@dataclass
class MetricsReport:
    diversity: float | None = None
    npmi: float | None = None
    c_v: float | None = None
    top_purity: float | None = None
    top_nmi: float | None = None
    km_purity: float | None = None
    km_nmi: float | None = None
    accuracy: float | None = None
    micro_f1: float | None = None

    def to_json(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def topic_summaries(model: TopicModel, vocab: Vocabulary, k: int = TOP_K) -> list[TopicSummary]:
    """Top-k words per topic by probability; ties break to the lower index."""
    e = model.topic_word_matrix().detach().cpu().numpy()
    out = []
    for t in range(e.shape[0]):
        order = np.lexsort((np.arange(e.shape[1]), -e[t]))[:k]
        out.append(
            TopicSummary(
                topic=t,
                words=[vocab.tokens[j] for j in order],
                probs=[float(e[t, j]) for j in order],
            )
        )
    return out


def diversity(summaries, k: int = 25) -> float:
    """Unique fraction of all topics' top-k words."""
    lists = [s.words if isinstance(s, TopicSummary) else list(s) for s in summaries]
    for lst in lists:
        if len(lst) < k:
            raise ValueError(f"every topic needs at least {k} ranked words")
    tops = [lst[:k] for lst in lists]
    unique = set().union(*[set(t) for t in tops])
    return len(unique) / (len(tops) * k)


# ---------------------------------------------------------------------------
# Sliding-window co-occurrence coherence
# ---------------------------------------------------------------------------


def _window_stats(streams: list[list[str]], words: set[str], window: int):
    """Boolean window occurrence counts for the given words and their pairs."""
    occur: Counter[str] = Counter()
    pair: Counter[tuple[str, str]] = Counter()
    total = 0
    for stream in streams:
        n = len(stream)
        spans = range(max(1, n - window + 1))
        for start in spans:
            present = sorted({t for t in stream[start : start + window] if t in words})
            total += 1
            occur.update(present)
            for i in range(len(present)):
                for j in range(i + 1, len(present)):
                    pair[(present[i], present[j])] += 1
    return occur, pair, total


def _pair_npmi(p_i: float, p_j: float, p_ij: float) -> float:
    if p_ij >= 1.0:
        return 1.0  # certain co-occurrence; the smoothed ratio is 0/0 here
    num = math.log((p_ij + NPMI_EPS) / (p_i * p_j))
    den = -math.log(p_ij + NPMI_EPS)
    return num / den


def npmi(
    summaries,
    streams: list[list[str]],
    window: int = NPMI_WINDOW,
    top_k: int = TOP_K,
) -> tuple[float, float]:
    """Mean pairwise NPMI of each topic's top-k words; returns (score, coverage).

    Pairs whose words never occur in any window are skipped; coverage is the
    fraction of pairs that were scored.
    """
    lists = [
        (s.words if isinstance(s, TopicSummary) else list(s))[:top_k] for s in summaries
    ]
    vocab_needed = set().union(*[set(lst) for lst in lists])
    occur, pair, total = _window_stats(streams, vocab_needed, window)
    scored = 0
    skipped = 0
    topic_scores = []
    for lst in lists:
        vals = []
        for i in range(len(lst)):
            for j in range(i + 1, len(lst)):
                wi, wj = lst[i], lst[j]
                if occur[wi] == 0 or occur[wj] == 0:
                    skipped += 1
                    continue
                key = (wi, wj) if wi <= wj else (wj, wi)
                vals.append(
                    _pair_npmi(occur[wi] / total, occur[wj] / total, pair[key] / total)
                )
                scored += 1
        if vals:
            topic_scores.append(float(np.mean(vals)))
    coverage = scored / max(scored + skipped, 1)
    return (float(np.mean(topic_scores)) if topic_scores else 0.0), coverage


def c_v(
    summaries,
    streams: list[list[str]],
    window: int = CV_WINDOW,
    top_k: int = TOP_K,
) -> float:
    """One-set segmentation coherence over NPMI context vectors.

    Each top word's context vector holds its NPMI against every word of the
    set; the topic score is the mean cosine between the word vectors and
    the summed set vector.
    """
    lists = [
        (s.words if isinstance(s, TopicSummary) else list(s))[:top_k] for s in summaries
    ]
    vocab_needed = set().union(*[set(lst) for lst in lists])
    occur, pair, total = _window_stats(streams, vocab_needed, window)
    topic_scores = []
    for lst in lists:
        present = [w for w in lst if occur[w] > 0]
        if len(present) < 2:
            continue
        k = len(present)
        vectors = np.zeros((k, k))
        for i, wi in enumerate(present):
            for j, wj in enumerate(present):
                key = (wi, wj) if wi <= wj else (wj, wi)
                p_ij = (pair[key] if i != j else occur[wi]) / total
                vectors[i, j] = _pair_npmi(occur[wi] / total, occur[wj] / total, p_ij)
        total_vec = vectors.sum(axis=0)
        sims = []
        for i in range(k):
            nv = np.linalg.norm(vectors[i])
            nt = np.linalg.norm(total_vec)
            if nv == 0 or nt == 0:
                continue
            sims.append(float(vectors[i] @ total_vec / (nv * nt)))
        if sims:
            topic_scores.append(float(np.mean(sims)))
    return float(np.mean(topic_scores)) if topic_scores else 0.0


# ---------------------------------------------------------------------------
# Clusterability
# ---------------------------------------------------------------------------


def infer_proportions(model: TopicModel, bow: BowMatrix) -> np.ndarray:
    """Per-document topic proportions with sampling disabled (eta = mu)."""
    x = torch.from_numpy(bow.rows.astype(np.float64))
    with torch.no_grad():
        fwd = model(x, train_mode=False)
    return fwd.z.cpu().numpy()


def top_assignments(model: TopicModel, bow: BowMatrix) -> np.ndarray:
    """argmax topic per document; ties break to the lowest topic index."""
    return np.argmax(infer_proportions(model, bow), axis=1)


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int = 0,
    restarts: int = 10,
    max_iter: int = 300,
    tol: float = 1e-10,
) -> np.ndarray:
    """Lloyd iterations with k-means++ seeding, best of ``restarts`` by inertia."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points {n}")
    if np.unique(pts, axis=0).shape[0] < k:
        raise ValueError(f"fewer than k={k} distinct points")
    rng = np.random.default_rng(seed)
    best_labels = None
    best_inertia = np.inf
    for _ in range(restarts):
        centers = _kmeanspp(pts, k, rng)
        labels = None
        for _ in range(max_iter):
            d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            labels = np.argmin(d2, axis=1)
            new_centers = centers.copy()
            for c in range(k):
                mask = labels == c
                if mask.any():
                    new_centers[c] = pts[mask].mean(axis=0)
            shift = float(np.abs(new_centers - centers).max())
            centers = new_centers
            if shift < tol:
                break
        inertia = float(((pts - centers[labels]) ** 2).sum())
        if inertia < best_inertia - 1e-12:
            best_inertia = inertia
            best_labels = labels
    return best_labels


def _kmeanspp(pts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = pts.shape[0]
    centers = [pts[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(
            ((pts[:, None, :] - np.array(centers)[None, :, :]) ** 2).sum(axis=2), axis=1
        )
        total = d2.sum()
        if total <= 0:
            centers.append(pts[rng.integers(n)])
            continue
        centers.append(pts[rng.choice(n, p=d2 / total)])
    return np.array(centers)


def purity(pred, true) -> float:
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.size == 0 or pred.shape != true.shape:
        raise ValueError("label arrays must be equal-length and non-empty")
    total = 0
    for c in np.unique(pred):
        members = true[pred == c]
        total += Counter(members.tolist()).most_common(1)[0][1]
    return total / pred.size


def _entropy(labels: np.ndarray) -> float:
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(pred, true) -> float:
    """Mutual information normalized by the arithmetic mean of entropies."""
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.size == 0 or pred.shape != true.shape:
        raise ValueError("label arrays must be equal-length and non-empty")
    n = pred.size
    mi = 0.0
    for c in np.unique(pred):
        for t in np.unique(true):
            joint = np.sum((pred == c) & (true == t)) / n
            if joint == 0:
                continue
            mi += joint * math.log(joint / ((np.sum(pred == c) / n) * (np.sum(true == t) / n)))
    h_mean = 0.5 * (_entropy(pred) + _entropy(true))
    if h_mean == 0:
        return 1.0 if mi == 0 else 0.0  # identical trivial labelings
    return mi / h_mean


def classify(model: TopicModel, bow: BowMatrix, matching: list[int]) -> np.ndarray:
    """Predicted class per document: the group matched to the argmax topic."""
    tops = top_assignments(model, bow)
    mapping = np.asarray(matching)
    return mapping[tops]


def accuracy(pred, true) -> float:
    pred = np.asarray(pred)
    true = np.asarray(true)
    return float(np.mean(pred == true))


def micro_f1(pred, true) -> float:
    """Micro-averaged F1: TP/FP/FN aggregated over classes."""
    pred = np.asarray(pred)
    true = np.asarray(true)
    classes = np.unique(np.concatenate([pred, true]))
    tp = fp = fn = 0
    for c in classes:
        tp += int(np.sum((pred == c) & (true == c)))
        fp += int(np.sum((pred == c) & (true != c)))
        fn += int(np.sum((pred != c) & (true == c)))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def metrics_report(
    model: TopicModel,
    bow: BowMatrix,
    vocab: Vocabulary,
    streams: list[list[str]] | None = None,
    matching: list[int] | None = None,
    which: set[str] | None = None,
    seed: int = 0,
) -> MetricsReport:
    """Assemble the requested metrics (all applicable ones by default)."""
    want = which or {
        "diversity", "npmi", "c_v", "top_purity", "top_nmi",
        "km_purity", "km_nmi", "accuracy", "micro_f1",
    }
    report = MetricsReport()
    summaries = topic_summaries(model, vocab, k=max(25, TOP_K))
    if "diversity" in want:
        report.diversity = diversity(summaries, k=min(25, len(vocab)))
    if streams is not None:
        if "npmi" in want:
            report.npmi = npmi(summaries, streams)[0]
        if "c_v" in want:
            report.c_v = c_v(summaries, streams)
    labels = np.array([l if l is not None else -1 for l in bow.labels])
    has_labels = np.all(labels >= 0) and bow.num_docs > 0
    if has_labels:
        tops = top_assignments(model, bow)
        if "top_purity" in want:
            report.top_purity = purity(tops, labels)
        if "top_nmi" in want:
            report.top_nmi = nmi(tops, labels)
        if "km_purity" in want or "km_nmi" in want:
            z = infer_proportions(model, bow)
            km = kmeans(z, k=model.config.num_topics, seed=seed)
            if "km_purity" in want:
                report.km_purity = purity(km, labels)
            if "km_nmi" in want:
                report.km_nmi = nmi(km, labels)
        if matching is not None:
            pred = classify(model, bow, matching)
            if "accuracy" in want:
                report.accuracy = accuracy(pred, labels)
            if "micro_f1" in want:
                report.micro_f1 = micro_f1(pred, labels)
    return report
