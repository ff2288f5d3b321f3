"""On-disk project layout and background-job bookkeeping.

One directory per corpus (content-addressed) and per model; no database.
Checkpoints carry the vocabulary hash they were trained with and refuse to
load against a different one.  At most one mutating job runs per model at
a time; readers always see the latest completed checkpoint.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
import uuid
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .corpus import BowMatrix, Document, KeywordGroups, Vocabulary
from .embeddings import EmbeddingMatrix, save_embeddings, load_embeddings, train_spherical
from .model import ModelConfig, TopicModel, load_checkpoint, save_checkpoint
from .training import TrainConfig

__all__ = ["ProjectStore", "JobManager", "JobRecord", "ModelBusy", "PreparedCorpus"]

SCHEMA_VERSION = 1


class ModelBusy(RuntimeError):
    """A mutating job already holds this model."""


@dataclass
class PreparedCorpus:
    corpus_id: str
    docs: list[Document]
    vocab: Vocabulary
    bow: BowMatrix
    params: dict


@dataclass
class JobRecord:
    id: str
    kind: str
    state: str = "queued"  # queued -> running -> done | failed | cancelled
    progress: float = 0.0
    result: dict | None = None
    error: str | None = None
    model_id: str | None = None

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **asdict(self)}


class ProjectStore:
    def __init__(self, root):
        self.root = Path(root)
        (self.root / "corpora").mkdir(parents=True, exist_ok=True)
        (self.root / "models").mkdir(parents=True, exist_ok=True)

    # -- corpora -------------------------------------------------------------

    def add_corpus(
        self,
        docs: list[Document],
        stopwords=None,
        max_doc_frac: float = corpus_mod.DEFAULT_MAX_DOC_FRAC,
        min_count: int = corpus_mod.DEFAULT_MIN_COUNT,
        name: str | None = None,
    ) -> PreparedCorpus:
        vocab = corpus_mod.build_vocabulary(
            docs, stopwords=stopwords, max_doc_frac=max_doc_frac, min_count=min_count
        )
        bow = corpus_mod.to_bow(docs, vocab)
        params = {"max_doc_frac": max_doc_frac, "min_count": min_count}
        payload = hashlib.sha256()
        for doc in docs:
            payload.update(doc.id.encode())
            payload.update(doc.text.encode())
        payload.update(json.dumps(params, sort_keys=True).encode())
        corpus_id = payload.hexdigest()[:12]

        cdir = self.root / "corpora" / corpus_id
        cdir.mkdir(parents=True, exist_ok=True)
        corpus_mod.write_jsonl(docs, cdir / "corpus.jsonl")
        (cdir / "vocab.json").write_text(json.dumps(vocab.to_json()))
        np.savez_compressed(
            cdir / "bow.npz",
            rows=bow.rows,
            doc_ids=np.array(bow.doc_ids),
            labels=np.array([-1 if l is None else l for l in bow.labels]),
            dropped=np.array(bow.dropped_ids),
        )
        meta = {
            "schema_version": SCHEMA_VERSION,
            "name": name or corpus_id,
            "params": params,
            "num_docs": bow.num_docs,
            "vocab_size": len(vocab),
            "vocab_hash": vocab.hash,
            "dropped_ids": bow.dropped_ids,
        }
        (cdir / "meta.json").write_text(json.dumps(meta))
        return PreparedCorpus(corpus_id=corpus_id, docs=docs, vocab=vocab, bow=bow, params=params)

    def corpus_meta(self, corpus_id: str) -> dict:
        path = self.root / "corpora" / corpus_id / "meta.json"
        if not path.exists():
            raise KeyError(f"unknown corpus {corpus_id!r}")
        return json.loads(path.read_text())

    def load_corpus(self, corpus_id: str) -> PreparedCorpus:
        cdir = self.root / "corpora" / corpus_id
        if not cdir.exists():
            raise KeyError(f"unknown corpus {corpus_id!r}")
        docs = corpus_mod.read_jsonl(cdir / "corpus.jsonl")
        vocab = Vocabulary.from_json(json.loads((cdir / "vocab.json").read_text()))
        data = np.load(cdir / "bow.npz", allow_pickle=False)
        labels = [None if l < 0 else int(l) for l in data["labels"]]
        bow = BowMatrix(
            rows=data["rows"],
            doc_ids=[str(d) for d in data["doc_ids"]],
            labels=labels,
            dropped_ids=[str(d) for d in data["dropped"]],
        )
        meta = json.loads((cdir / "meta.json").read_text())
        return PreparedCorpus(
            corpus_id=corpus_id, docs=docs, vocab=vocab, bow=bow, params=meta["params"]
        )

    # -- embeddings ------------------------------------------------------------

    def embeddings_for(
        self,
        prepared: PreparedCorpus,
        dim: int = 50,
        window: int = 10,
        epochs: int = 2,
        seed: int = 0,
        path=None,
    ) -> EmbeddingMatrix:
        """Load external vectors if a path is given, else train-and-cache."""
        if path is not None:
            return load_embeddings(path, prepared.vocab, seed=seed)
        cdir = self.root / "corpora" / prepared.corpus_id
        cache = cdir / f"embeddings_d{dim}_w{window}_e{epochs}_s{seed}.w2v"
        if cache.exists():
            return load_embeddings(cache, prepared.vocab, seed=seed)
        streams = corpus_mod.token_streams(prepared.docs, prepared.vocab)
        emb, _ = train_spherical(
            streams, prepared.vocab, dim=dim, window=window, epochs=epochs, seed=seed
        )
        save_embeddings(emb, prepared.vocab, cache)
        # round-trip through the cache so cached and fresh runs see identical values
        return load_embeddings(cache, prepared.vocab, seed=seed)

    # -- models ----------------------------------------------------------------

    def new_model_id(self) -> str:
        return uuid.uuid4().hex[:12]

    def model_dir(self, model_id: str) -> Path:
        return self.root / "models" / model_id

    def save_model(
        self,
        model_id: str,
        model: TopicModel,
        vocab_hash: str,
        corpus_id: str,
        train_config: TrainConfig,
        report=None,
        keywords: KeywordGroups | None = None,
        matching: list[int] | None = None,
    ) -> None:
        mdir = self.model_dir(model_id)
        mdir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(model, vocab_hash, mdir / "checkpoint.bin")
        meta = {
            "schema_version": SCHEMA_VERSION,
            "model_id": model_id,
            "corpus_id": corpus_id,
            "vocab_hash": vocab_hash,
            "model_config": model.config.to_json(),
            "train_config": train_config.to_json(),
            "matching": matching,
        }
        (mdir / "config.json").write_text(json.dumps(meta, indent=2))
        if report is not None:
            (mdir / "report.json").write_text(json.dumps(report.to_json(), indent=2))
        if keywords is not None:
            (mdir / "keywords.json").write_text(json.dumps(keywords.to_json(), indent=2))

    def model_meta(self, model_id: str) -> dict:
        path = self.model_dir(model_id) / "config.json"
        if not path.exists():
            raise KeyError(f"unknown model {model_id!r}")
        return json.loads(path.read_text())

    def load_model(self, model_id: str) -> tuple[TopicModel, dict]:
        meta = self.model_meta(model_id)
        model, _ = load_checkpoint(
            self.model_dir(model_id) / "checkpoint.bin",
            expected_vocab_hash=meta["vocab_hash"],
        )
        return model, meta

    def model_keywords(self, model_id: str) -> KeywordGroups | None:
        path = self.model_dir(model_id) / "keywords.json"
        if not path.exists():
            return None
        return KeywordGroups.from_json(json.loads(path.read_text()))

    def set_model_keywords(self, model_id: str, groups: KeywordGroups) -> None:
        mdir = self.model_dir(model_id)
        if not mdir.exists():
            raise KeyError(f"unknown model {model_id!r}")
        (mdir / "keywords.json").write_text(json.dumps(groups.to_json(), indent=2))

    def list_models(self) -> list[dict]:
        out = []
        for mdir in sorted((self.root / "models").iterdir()):
            cfg = mdir / "config.json"
            if cfg.exists():
                out.append(json.loads(cfg.read_text()))
        return out


class JobManager:
    """Threaded background jobs with per-model exclusivity."""

    def __init__(self):
        self._jobs: dict[str, JobRecord] = {}
        self._threads: dict[str, threading.Thread] = {}
        self._cancel: dict[str, threading.Event] = {}
        self._busy: set[str] = set()
        self._lock = threading.Lock()

    def submit(self, kind: str, fn, model_id: str | None = None) -> JobRecord:
        """Run ``fn(progress_cb, cancel_cb)`` in a thread.

        The model lock is taken synchronously, so a second mutating request
        observes the conflict immediately.
        """
        with self._lock:
            if model_id is not None and model_id in self._busy:
                raise ModelBusy(f"a job is already running for model {model_id!r}")
            job = JobRecord(id=uuid.uuid4().hex[:12], kind=kind, model_id=model_id)
            self._jobs[job.id] = job
            cancel_ev = threading.Event()
            self._cancel[job.id] = cancel_ev
            if model_id is not None:
                self._busy.add(model_id)

        def progress(frac: float) -> None:
            job.progress = min(max(float(frac), 0.0), 1.0)

        def runner():
            job.state = "running"
            try:
                result = fn(progress, cancel_ev.is_set)
                if cancel_ev.is_set():
                    job.state = "cancelled"
                else:
                    job.result = result
                    job.progress = 1.0
                    job.state = "done"
            except Exception as exc:  # noqa: BLE001 - job boundary
                job.error = str(exc)
                job.state = "failed"
            finally:
                with self._lock:
                    self._busy.discard(model_id)

        thread = threading.Thread(target=runner, daemon=True)
        self._threads[job.id] = thread
        thread.start()
        return job

    def get(self, job_id: str) -> JobRecord:
        if job_id not in self._jobs:
            raise KeyError(f"unknown job {job_id!r}")
        return self._jobs[job_id]

    def cancel(self, job_id: str) -> JobRecord:
        job = self.get(job_id)
        if job.state in ("queued", "running"):
            self._cancel[job_id].set()
        return job

    def wait(self, job_id: str, timeout: float = 600.0) -> JobRecord:
        thread = self._threads.get(job_id)
        if thread is not None:
            deadline = time.monotonic() + timeout
            while thread.is_alive() and time.monotonic() < deadline:
                thread.join(timeout=0.05)
        return self.get(job_id)
