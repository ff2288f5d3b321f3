"""HTTP service for the interactive keyword-refinement loop.

JSON over HTTP; every response carries a schema version.  Training and
fine-tuning run as cancellable background jobs polled via /jobs/{id}; at
most one mutating job holds a model at a time (409 otherwise), and reads
always serve the latest completed checkpoint.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import evaluation
from .corpus import Document, KeywordGroups, token_streams
from .model import ModelConfig
from .store import SCHEMA_VERSION, JobManager, ModelBusy, ProjectStore
from .training import (
    TrainConfig,
    default_num_topics,
    finetune_keywords,
    train_semisupervised,
    train_unsupervised,
)

__all__ = ["create_app"]


class DocumentIn(BaseModel):
    id: str
    text: str
    label: int | None = None


class CorpusIn(BaseModel):
    name: str | None = None
    documents: list[DocumentIn]
    max_doc_frac: float = 0.15
    min_count: int = 20


class KeywordGroupIn(BaseModel):
    name: str
    keywords: list[str]


class TrainIn(BaseModel):
    corpus_id: str
    model: dict = Field(default_factory=dict)
    train: dict = Field(default_factory=dict)
    keywords: list[KeywordGroupIn] | None = None
    embedding: dict = Field(default_factory=dict)


def _versioned(payload: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, **payload}


def create_app(store_root) -> FastAPI:
    app = FastAPI(title="vmftopics", version="0.1.0")
    store = ProjectStore(store_root)
    jobs = JobManager()
    app.state.store = store
    app.state.jobs = jobs

    @app.exception_handler(RequestValidationError)
    async def _schema_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content=_versioned({"error": {"kind": "schema", "detail": exc.errors()}}),
        )

    def _error(status: int, message: str):
        raise HTTPException(status_code=status, detail=_versioned({"error": message}))

    # -- corpora -------------------------------------------------------------

    @app.post("/corpora")
    def upload_corpus(body: CorpusIn):
        try:
            docs = [Document(id=d.id, text=d.text, label=d.label) for d in body.documents]
            prepared = store.add_corpus(
                docs,
                max_doc_frac=body.max_doc_frac,
                min_count=body.min_count,
                name=body.name,
            )
        except ValueError as exc:
            _error(400, str(exc))
        return _versioned(
            {
                "corpus_id": prepared.corpus_id,
                "num_docs": prepared.bow.num_docs,
                "vocab_size": len(prepared.vocab),
                "vocab_hash": prepared.vocab.hash,
                "dropped_ids": prepared.bow.dropped_ids,
            }
        )

    # -- models ----------------------------------------------------------------

    def _train_job(body: TrainIn, model_id: str):
        prepared = store.load_corpus(body.corpus_id)
        groups = None
        if body.keywords:
            groups = KeywordGroups(
                groups=[g.keywords for g in body.keywords],
                names=[g.name for g in body.keywords],
            )
            groups.validate(prepared.vocab)

        model_kwargs = dict(body.model)
        if "num_topics" not in model_kwargs:
            if groups is not None:
                model_kwargs["num_topics"] = len(groups)
            else:
                model_kwargs["num_topics"] = default_num_topics(
                    prepared.bow.labels, semisupervised=False
                )
        emb_kwargs = {"dim": 50, "epochs": 2, **body.embedding}
        model_kwargs.setdefault("embedding_dim", emb_kwargs["dim"])
        model_kwargs.setdefault("vocab_size", len(prepared.vocab))
        mconfig = ModelConfig(**model_kwargs)
        tconfig = TrainConfig(**body.train)

        def run(progress, cancelled):
            emb = store.embeddings_for(prepared, seed=tconfig.seed, **emb_kwargs)
            if groups is None:
                model, report = train_unsupervised(
                    prepared.bow, emb, mconfig, tconfig,
                    progress=progress, cancel=cancelled,
                )
            else:
                model, report = train_semisupervised(
                    prepared.bow, emb, groups, prepared.vocab, mconfig, tconfig,
                    progress=progress, cancel=cancelled,
                )
            if cancelled() or report.error:
                return {"model_id": model_id, "error": report.error}
            store.save_model(
                model_id,
                model,
                prepared.vocab.hash,
                body.corpus_id,
                tconfig,
                report=report,
                keywords=groups,
                matching=report.matching,
            )
            return {"model_id": model_id, "matching": report.matching}

        return run

    @app.post("/models")
    def train_model(body: TrainIn):
        try:
            store.corpus_meta(body.corpus_id)
        except KeyError:
            _error(404, f"unknown corpus {body.corpus_id!r}")
        model_id = store.new_model_id()
        try:
            run = _train_job(body, model_id)
        except (ValueError, KeyError, TypeError) as exc:
            _error(400, str(exc))
        job = jobs.submit("train", run, model_id=model_id)
        return _versioned({"job": job.to_json(), "model_id": model_id})

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        try:
            job = jobs.get(job_id)
        except KeyError:
            _error(404, f"unknown job {job_id!r}")
        return _versioned({"job": job.to_json()})

    @app.delete("/jobs/{job_id}")
    def cancel_job(job_id: str):
        try:
            job = jobs.cancel(job_id)
        except KeyError:
            _error(404, f"unknown job {job_id!r}")
        return _versioned({"job": job.to_json()})

    def _load_model_or_404(model_id: str):
        try:
            return store.load_model(model_id)
        except KeyError:
            _error(404, f"unknown model {model_id!r}")

    @app.get("/models/{model_id}/topics")
    def topics(model_id: str, k: int = 10):
        model, meta = _load_model_or_404(model_id)
        prepared = store.load_corpus(meta["corpus_id"])
        summaries = evaluation.topic_summaries(model, prepared.vocab, k=k)
        groups = store.model_keywords(model_id)
        matching = meta.get("matching")
        word_owner: dict[str, int] = {}
        shared: dict[int, set] = {s.topic: set() for s in summaries}
        for s in summaries:
            for w in s.words:
                if w in word_owner and word_owner[w] != s.topic:
                    shared[s.topic].add(w)
                    shared[word_owner[w]].add(w)
                word_owner.setdefault(w, s.topic)
        payload = []
        for s in summaries:
            matched = None
            if matching is not None and groups is not None:
                matched = groups.names[matching[s.topic]]
            payload.append(
                {
                    "topic": s.topic,
                    "words": [
                        {"word": w, "prob": p} for w, p in zip(s.words, s.probs)
                    ],
                    "matched_group": matched,
                    "shared_words": sorted(shared[s.topic]),
                }
            )
        return _versioned(
            {
                "model_id": model_id,
                "topics": payload,
                "matching": matching,
                "keywords": groups.to_json() if groups else None,
            }
        )

    @app.get("/models/{model_id}/documents")
    def documents(model_id: str, topic: int, limit: int = 10):
        model, meta = _load_model_or_404(model_id)
        if not 0 <= topic < model.config.num_topics:
            _error(400, f"topic must be in [0, {model.config.num_topics})")
        prepared = store.load_corpus(meta["corpus_id"])
        z = evaluation.infer_proportions(model, prepared.bow)
        order = np.argsort(-z[:, topic], kind="stable")[:limit]
        by_id = {d.id: d for d in prepared.docs}
        out = []
        for i in order:
            doc_id = prepared.bow.doc_ids[int(i)]
            out.append(
                {
                    "id": doc_id,
                    "score": float(z[int(i), topic]),
                    "text": by_id[doc_id].text[:400],
                    "label": prepared.bow.labels[int(i)],
                }
            )
        return _versioned({"model_id": model_id, "topic": topic, "documents": out})

    @app.put("/models/{model_id}/keywords")
    def put_keywords(model_id: str, body: list[KeywordGroupIn]):
        model, meta = _load_model_or_404(model_id)
        if not body:
            _error(400, "at least one keyword group is required")
        prepared = store.load_corpus(meta["corpus_id"])
        groups = KeywordGroups(
            groups=[g.keywords for g in body], names=[g.name for g in body]
        )
        try:
            groups.validate(prepared.vocab)
        except KeyError as exc:
            _error(400, str(exc))
        if len(groups) != model.config.num_topics:
            _error(400, f"expected {model.config.num_topics} groups, got {len(groups)}")
        if jobs._busy and model_id in jobs._busy:
            _error(409, f"a job is running for model {model_id!r}")
        store.set_model_keywords(model_id, groups)
        return _versioned(
            {
                "model_id": model_id,
                "keywords": groups.to_json(),
                "overlap_warning": groups.overlap_warning,
            }
        )

    @app.post("/models/{model_id}/finetune")
    def finetune(model_id: str, body: dict | None = None):
        model, meta = _load_model_or_404(model_id)
        groups = store.model_keywords(model_id)
        if groups is None:
            _error(400, "model has no keyword groups; PUT keywords first")
        prepared = store.load_corpus(meta["corpus_id"])
        tconfig = TrainConfig(**{**meta["train_config"], **(body or {})})

        def run(progress, cancelled):
            report = finetune_keywords(
                model, prepared.bow, groups, prepared.vocab, tconfig,
                progress=progress, cancel=cancelled,
            )
            if cancelled() or report.error:
                return {"model_id": model_id, "error": report.error}
            store.save_model(
                model_id,
                model,
                prepared.vocab.hash,
                meta["corpus_id"],
                tconfig,
                report=report,
                keywords=groups,
                matching=report.matching,
            )
            return {"model_id": model_id, "matching": report.matching}

        try:
            job = jobs.submit("finetune", run, model_id=model_id)
        except ModelBusy as exc:
            _error(409, str(exc))
        return _versioned({"job": job.to_json(), "model_id": model_id})

    @app.get("/models/{model_id}/metrics")
    def metrics(model_id: str, which: str | None = None, seed: int = 0):
        model, meta = _load_model_or_404(model_id)
        prepared = store.load_corpus(meta["corpus_id"])
        streams = token_streams(prepared.docs, prepared.vocab)
        want = set(which.split(",")) if which else None
        report = evaluation.metrics_report(
            model,
            prepared.bow,
            prepared.vocab,
            streams=streams,
            matching=meta.get("matching"),
            which=want,
            seed=seed,
        )
        return _versioned({"model_id": model_id, "metrics": report.to_json()})

    @app.get("/models/{model_id}/vocab")
    def vocab(model_id: str):
        _, meta = _load_model_or_404(model_id)
        prepared = store.load_corpus(meta["corpus_id"])
        return _versioned({"model_id": model_id, "tokens": prepared.vocab.tokens})

    @app.get("/models")
    def list_models():
        return _versioned({"models": store.list_models()})

    return app
