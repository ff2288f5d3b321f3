"""Corpus ingestion: tokenization, vocabulary filtering, bag-of-words.

Tokens are lowercase ASCII letter runs (text is NFC-normalized first, then
anything that is not a-z acts as a separator).  Vocabulary filtering drops
stop words, words present in more than ``max_doc_frac`` of documents, and
words with corpus count below ``min_count``; both thresholds are applied
after stop-word removal.  Documents left without in-vocabulary tokens are
dropped rather than zero-padded, and their ids are reported.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

__all__ = [
    "Document",
    "Vocabulary",
    "BowMatrix",
    "KeywordGroups",
    "EmptyVocabularyError",
    "tokenize",
    "default_stopwords",
    "load_stopwords",
    "build_vocabulary",
    "to_bow",
    "token_streams",
    "derive_keywords",
    "read_jsonl",
    "read_csv",
    "write_jsonl",
]

DEFAULT_MAX_DOC_FRAC = 0.15
DEFAULT_MIN_COUNT = 20

_TOKEN_RE = re.compile(r"[a-z]+")


class EmptyVocabularyError(ValueError):
    """Raised when filtering removes every candidate word."""


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    label: int | None = None

    def __post_init__(self):
        if not str(self.id):
            raise ValueError("document id must be non-empty")
        if not self.text.strip():
            raise ValueError(f"document {self.id!r} has empty text")


@dataclass
class Vocabulary:
    tokens: list[str]
    index: dict[str, int]
    doc_freq: np.ndarray
    total_count: np.ndarray

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    @property
    def hash(self) -> str:
        h = hashlib.sha256("\n".join(self.tokens).encode("utf-8"))
        return h.hexdigest()[:16]

    def to_json(self) -> dict:
        return {
            "tokens": self.tokens,
            "doc_freq": self.doc_freq.tolist(),
            "total_count": self.total_count.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        tokens = list(obj["tokens"])
        return cls(
            tokens=tokens,
            index={w: i for i, w in enumerate(tokens)},
            doc_freq=np.asarray(obj["doc_freq"], dtype=np.int64),
            total_count=np.asarray(obj["total_count"], dtype=np.int64),
        )


@dataclass
class BowMatrix:
    rows: np.ndarray  # (docs, vocab) int64 counts
    doc_ids: list[str]
    labels: list[int | None]
    dropped_ids: list[str] = field(default_factory=list)

    @property
    def num_docs(self) -> int:
        return self.rows.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.rows.shape[1]


@dataclass
class KeywordGroups:
    groups: list[list[str]]
    names: list[str] | None = None
    overlap_warning: str | None = None

    def __post_init__(self):
        if not self.groups or any(not g for g in self.groups):
            raise ValueError("keyword groups must be non-empty")
        if self.names is None:
            self.names = [f"group{i}" for i in range(len(self.groups))]
        if len(self.names) != len(self.groups):
            raise ValueError("one name per group required")
        seen: dict[str, int] = {}
        overlaps = []
        for gi, words in enumerate(self.groups):
            for w in words:
                if w in seen and seen[w] != gi:
                    overlaps.append(w)
                seen.setdefault(w, gi)
        if overlaps:
            self.overlap_warning = (
                "keywords shared between groups: " + ", ".join(sorted(set(overlaps)))
            )

    def __len__(self) -> int:
        return len(self.groups)

    def validate(self, vocab: Vocabulary) -> None:
        for gi, words in enumerate(self.groups):
            for w in words:
                if w not in vocab:
                    raise KeyError(
                        f"keyword {w!r} (group {self.names[gi]!r}) is not in the vocabulary"
                    )

    def to_json(self) -> list[dict]:
        return [
            {"name": n, "keywords": list(g)} for n, g in zip(self.names, self.groups)
        ]

    @classmethod
    def from_json(cls, obj) -> "KeywordGroups":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(
            groups=[list(item["keywords"]) for item in obj],
            names=[str(item.get("name", f"group{i}")) for i, item in enumerate(obj)],
        )


def tokenize(text: str) -> list[str]:
    """Lowercase letter-run tokens; digits and punctuation are separators."""
    normalized = unicodedata.normalize("NFC", text).lower()
    return _TOKEN_RE.findall(normalized)


def default_stopwords() -> frozenset[str]:
    data = resources.files("vmftopics").joinpath("data/stopwords_en.txt").read_text("utf-8")
    return frozenset(w.strip() for w in data.splitlines() if w.strip())


def load_stopwords(path) -> frozenset[str]:
    with open(path, encoding="utf-8") as fh:
        return frozenset(line.strip().lower() for line in fh if line.strip())


def build_vocabulary(
    docs: list[Document],
    stopwords: frozenset[str] | None = None,
    max_doc_frac: float = DEFAULT_MAX_DOC_FRAC,
    min_count: int = DEFAULT_MIN_COUNT,
) -> Vocabulary:
    """Filtered vocabulary ordered by (count desc, word asc) for determinism."""
    if not 0.0 < max_doc_frac <= 1.0:
        raise ValueError("max_doc_frac must be in (0, 1]")
    if min_count < 0:
        raise ValueError("min_count must be >= 0")
    if stopwords is None:
        stopwords = default_stopwords()

    doc_freq: Counter[str] = Counter()
    total: Counter[str] = Counter()
    for doc in docs:
        toks = [t for t in tokenize(doc.text) if t not in stopwords]
        total.update(toks)
        doc_freq.update(set(toks))

    if not docs:
        raise EmptyVocabularyError("no documents supplied")
    max_df = max_doc_frac * len(docs)
    kept = [
        w
        for w in total
        if doc_freq[w] <= max_df and total[w] >= min_count
    ]
    if not kept:
        raise EmptyVocabularyError(
            f"all {len(total)} candidate words removed by filtering "
            f"(max_doc_frac={max_doc_frac}, min_count={min_count})"
        )
    kept.sort(key=lambda w: (-total[w], w))
    return Vocabulary(
        tokens=kept,
        index={w: i for i, w in enumerate(kept)},
        doc_freq=np.array([doc_freq[w] for w in kept], dtype=np.int64),
        total_count=np.array([total[w] for w in kept], dtype=np.int64),
    )


def to_bow(docs: list[Document], vocab: Vocabulary) -> BowMatrix:
    """Count matrix over the vocabulary; all-zero documents are dropped."""
    if len(vocab) == 0:
        raise ValueError("vocabulary is empty")
    ids = {doc.id for doc in docs}
    if len(ids) != len(docs):
        raise ValueError("document ids must be unique")
    rows = []
    doc_ids = []
    labels = []
    dropped = []
    for doc in docs:
        row = np.zeros(len(vocab), dtype=np.int64)
        for tok in tokenize(doc.text):
            j = vocab.index.get(tok)
            if j is not None:
                row[j] += 1
        if row.sum() == 0:
            dropped.append(doc.id)
        else:
            rows.append(row)
            doc_ids.append(doc.id)
            labels.append(doc.label)
    matrix = np.stack(rows) if rows else np.zeros((0, len(vocab)), dtype=np.int64)
    return BowMatrix(rows=matrix, doc_ids=doc_ids, labels=labels, dropped_ids=dropped)


def token_streams(docs: list[Document], vocab: Vocabulary) -> list[list[str]]:
    """Per-document in-vocabulary token sequences (for co-occurrence stats)."""
    return [[t for t in tokenize(doc.text) if t in vocab.index] for doc in docs]


def derive_keywords(
    docs: list[Document],
    vocab: Vocabulary,
    k: int = 3,
    train_frac: float = 0.2,
    seed: int = 0,
) -> KeywordGroups:
    """Top-k tf-idf words per class, computed on a seeded train split.

    tf is the class-aggregated term frequency on the split; idf is
    log(C / df_class) with df_class the number of classes whose split
    documents contain the word.  Higher scores win; ties break toward the
    earlier vocabulary position.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(vocab):
        raise ValueError(f"k={k} exceeds vocabulary size {len(vocab)}")
    labeled = [d for d in docs if d.label is not None]
    if not labeled:
        raise ValueError("derive_keywords requires labeled documents")
    classes = sorted({d.label for d in labeled})

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(labeled))
    n_train = max(1, int(round(train_frac * len(labeled))))
    train = [labeled[i] for i in order[:n_train]]
    # guarantee at least one split document per class
    present = {d.label for d in train}
    for cls in classes:
        if cls not in present:
            pick = next(i for i in order[n_train:] if labeled[i].label == cls)
            train.append(labeled[pick])

    v = len(vocab)
    tf = {cls: np.zeros(v, dtype=np.float64) for cls in classes}
    df_class = np.zeros(v, dtype=np.float64)
    for cls in classes:
        seen = np.zeros(v, dtype=bool)
        for doc in train:
            if doc.label != cls:
                continue
            for tok in tokenize(doc.text):
                j = vocab.index.get(tok)
                if j is not None:
                    tf[cls][j] += 1
                    seen[j] = True
        df_class += seen
    groups = []
    for cls in classes:
        if tf[cls].sum() == 0:
            raise ValueError(f"class {cls} has no in-vocabulary words in the split")
        with np.errstate(divide="ignore"):
            idf = np.log(len(classes) / np.maximum(df_class, 1.0))
        scores = tf[cls] * idf
        top = np.argsort(-scores, kind="stable")[:k]
        groups.append([vocab.tokens[j] for j in top])
    return KeywordGroups(groups=groups, names=[f"class{cls}" for cls in classes])


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def read_jsonl(source) -> list[Document]:
    """Documents from JSONL with fields id, text and optional label."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    docs = []
    for ln, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {ln}: invalid JSON ({exc})") from exc
        if "id" not in obj or "text" not in obj:
            raise ValueError(f"line {ln}: required fields are 'id' and 'text'")
        label = obj.get("label")
        docs.append(Document(id=str(obj["id"]), text=str(obj["text"]),
                             label=None if label is None else int(label)))
    return docs


def read_csv(source) -> list[Document]:
    """Documents from two-column CSV (text, label); ids are row numbers."""
    if hasattr(source, "read"):
        fh = io.StringIO(source.read())
    else:
        fh = open(source, encoding="utf-8", newline="")
    with fh:
        docs = []
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if len(row) < 1:
                raise ValueError(f"row {i}: expected text[,label]")
            label = int(row[1]) if len(row) > 1 and row[1] != "" else None
            docs.append(Document(id=f"doc{i}", text=row[0], label=label))
    return docs


def write_jsonl(docs: list[Document], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            obj = {"id": doc.id, "text": doc.text}
            if doc.label is not None:
                obj["label"] = doc.label
            fh.write(json.dumps(obj) + "\n")
