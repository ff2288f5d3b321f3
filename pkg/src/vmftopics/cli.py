"""Command-line interface.

Every command accepts --seed and --config (a JSON file or inline JSON
object merged into the train settings).  Reports and tables are written as
JSON/CSV with rendered figures alongside.  Failures print a machine
readable error JSON on stderr and exit nonzero.
"""

from __future__ import annotations

import csv
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import evaluation, plots
from .corpus import (
    KeywordGroups,
    load_stopwords,
    read_csv,
    read_jsonl,
    token_streams,
)
from .model import ModelConfig
from .store import ProjectStore
from .synthetic import generate_corpus
from .training import (
    TrainConfig,
    cross_entropy_variant,
    default_num_topics,
    finetune_keywords,
    train_semisupervised,
    train_unsupervised,
)

DEFAULT_ROOT = "vmftopics-store"


class CliError(click.ClickException):
    def __init__(self, message: str, kind: str = "error", code: int = 1):
        super().__init__(message)
        self.kind = kind
        self.exit_code = code

    def show(self, file=None):
        print(
            json.dumps({"error": {"kind": self.kind, "message": self.format_message()}}),
            file=sys.stderr,
        )


def _load_config(config: str | None) -> dict:
    if not config:
        return {}
    text = config
    if Path(config).exists():
        text = Path(config).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"--config is not valid JSON: {exc}", kind="usage", code=2)
    if not isinstance(obj, dict):
        raise CliError("--config must be a JSON object", kind="usage", code=2)
    return obj


def _read_docs(path: str):
    p = Path(path)
    if not p.exists():
        raise CliError(f"no such file: {path}", kind="usage", code=2)
    if p.suffix == ".csv":
        return read_csv(p)
    return read_jsonl(p)


def _store(root: str) -> ProjectStore:
    return ProjectStore(root)


def _split_config(cfg: dict) -> tuple[dict, dict, dict]:
    model_keys = {f for f in ModelConfig.__dataclass_fields__}
    train_keys = {f for f in TrainConfig.__dataclass_fields__}
    model_part = {k: v for k, v in cfg.items() if k in model_keys}
    train_part = {k: v for k, v in cfg.items() if k in train_keys and k != "seed"}
    extra = {k: v for k, v in cfg.items() if k not in model_keys | train_keys}
    return model_part, train_part, extra


@click.group()
def cli():
    """Spherical-latent topic modeling with keyword-group matching."""


@cli.command()
@click.argument("corpus_file")
@click.option("--root", default=DEFAULT_ROOT, show_default=True)
@click.option("--stopwords", "stopwords_file", default=None, help="One word per line.")
@click.option("--max-doc-frac", default=0.15, show_default=True)
@click.option("--min-count", default=20, show_default=True)
@click.option("--name", default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--config", default=None)
def prepare(corpus_file, root, stopwords_file, max_doc_frac, min_count, name, seed, config):
    """Build vocabulary and bag-of-words from a JSONL or CSV corpus."""
    cfg = _load_config(config)
    docs = _read_docs(corpus_file)
    stop = load_stopwords(stopwords_file) if stopwords_file else None
    try:
        prepared = _store(root).add_corpus(
            docs,
            stopwords=stop,
            max_doc_frac=cfg.get("max_doc_frac", max_doc_frac),
            min_count=cfg.get("min_count", min_count),
            name=name,
        )
    except ValueError as exc:
        raise CliError(str(exc))
    click.echo(
        json.dumps(
            {
                "corpus_id": prepared.corpus_id,
                "num_docs": prepared.bow.num_docs,
                "vocab_size": len(prepared.vocab),
                "vocab_hash": prepared.vocab.hash,
                "dropped_ids": prepared.bow.dropped_ids,
            }
        )
    )


@cli.command()
@click.option("--root", default=DEFAULT_ROOT, show_default=True)
@click.option("--corpus", "corpus_id", required=True)
@click.option("--dim", default=50, show_default=True)
@click.option("--window", default=10, show_default=True)
@click.option("--epochs", default=2, show_default=True)
@click.option("--from-file", "from_file", default=None,
              help="Load word2vec text vectors instead of training.")
@click.option("--seed", default=0, show_default=True)
@click.option("--config", default=None)
def embed(root, corpus_id, dim, window, epochs, from_file, seed, config):
    """Train (or load) unit-norm word embeddings for a prepared corpus."""
    _load_config(config)
    store = _store(root)
    try:
        prepared = store.load_corpus(corpus_id)
        emb = store.embeddings_for(
            prepared, dim=dim, window=window, epochs=epochs, seed=seed, path=from_file
        )
    except (KeyError, ValueError) as exc:
        raise CliError(str(exc))
    click.echo(json.dumps({"corpus_id": corpus_id, "dim": emb.dim, "coverage": emb.coverage}))


def _train_common(root, corpus_id, keywords_file, seed, config, out_dir):
    cfg = _load_config(config)
    store = _store(root)
    try:
        prepared = store.load_corpus(corpus_id)
    except KeyError as exc:
        raise CliError(str(exc), kind="usage", code=2)
    groups = None
    if keywords_file:
        path = Path(keywords_file)
        if not path.exists():
            raise CliError(f"no such file: {keywords_file}", kind="usage", code=2)
        groups = KeywordGroups.from_json(json.loads(path.read_text()))
        try:
            groups.validate(prepared.vocab)
        except KeyError as exc:
            raise CliError(str(exc))
    model_part, train_part, extra = _split_config(cfg)
    emb_cfg = {"dim": 50, "epochs": 2, **extra.get("embedding", {})}
    if "num_topics" not in model_part:
        if groups is not None:
            model_part["num_topics"] = len(groups)
        else:
            try:
                model_part["num_topics"] = default_num_topics(
                    prepared.bow.labels, semisupervised=False
                )
            except ValueError as exc:
                raise CliError(f"{exc}; pass num_topics in --config")
    model_part.setdefault("vocab_size", len(prepared.vocab))
    model_part.setdefault("embedding_dim", emb_cfg["dim"])
    model_part.setdefault("seed", seed)
    mconfig = ModelConfig(**model_part)
    tconfig = TrainConfig(seed=seed, **train_part)
    emb = store.embeddings_for(prepared, seed=seed, **emb_cfg)
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    return store, prepared, groups, mconfig, tconfig, emb, out


@cli.command()
@click.option("--root", default=DEFAULT_ROOT, show_default=True)
@click.option("--corpus", "corpus_id", required=True)
@click.option("--keywords", "keywords_file", default=None,
              help="JSON list of {name, keywords}; enables the matching stage.")
@click.option("--out", "out_dir", default=None, help="Report/figure directory.")
@click.option("--seed", default=0, show_default=True)
@click.option("--config", default=None)
def train(root, corpus_id, keywords_file, out_dir, seed, config):
    """Train a model; with --keywords runs the keyword-matching stage too."""
    store, prepared, groups, mconfig, tconfig, emb, out = _train_common(
        root, corpus_id, keywords_file, seed, config, out_dir
    )
    if groups is None:
        model, report = train_unsupervised(prepared.bow, emb, mconfig, tconfig)
    else:
        model, report = train_semisupervised(
            prepared.bow, emb, groups, prepared.vocab, mconfig, tconfig
        )
    if report.error:
        raise CliError(report.error)
    model_id = store.new_model_id()
    store.save_model(
        model_id, model, prepared.vocab.hash, corpus_id, tconfig,
        report=report, keywords=groups, matching=report.matching,
    )
    if out:
        (out / "report.json").write_text(json.dumps(report.to_json(), indent=2))
        plots.save_loss_curves(report, out / "loss_curves.png")
        z = evaluation.infer_proportions(model, prepared.bow)
        labels = prepared.bow.labels if all(l is not None for l in prepared.bow.labels) else None
        plots.save_latent_scatter(z, labels, out / "latent_scatter.png")
    click.echo(json.dumps({
        "model_id": model_id,
        "epochs": len(report.epochs),
        "wall_clock": report.wall_clock,
        "matching": report.matching,
    }))


@cli.command()
@click.option("--root", default=DEFAULT_ROOT, show_default=True)
@click.option("--model", "model_id", required=True)
@click.option("--keywords", "keywords_file", required=True)
@click.option("--out", "out_dir", default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--config", default=None)
def finetune(root, model_id, keywords_file, out_dir, seed, config):
    """Re-run the matching stage of an existing model with new keywords."""
    cfg = _load_config(config)
    store = _store(root)
    try:
        model, meta = store.load_model(model_id)
        prepared = store.load_corpus(meta["corpus_id"])
    except KeyError as exc:
        raise CliError(str(exc), kind="usage", code=2)
    path = Path(keywords_file)
    if not path.exists():
        raise CliError(f"no such file: {keywords_file}", kind="usage", code=2)
    groups = KeywordGroups.from_json(json.loads(path.read_text()))
    try:
        groups.validate(prepared.vocab)
    except KeyError as exc:
        raise CliError(str(exc))
    _, train_part, _ = _split_config(cfg)
    tconfig = TrainConfig(**{**meta["train_config"], **train_part, "seed": seed})
    report = finetune_keywords(model, prepared.bow, groups, prepared.vocab, tconfig)
    if report.error:
        raise CliError(report.error)
    store.save_model(
        model_id, model, prepared.vocab.hash, meta["corpus_id"], tconfig,
        report=report, keywords=groups, matching=report.matching,
    )
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report.to_json(), indent=2))
        plots.save_loss_curves(report, out / "loss_curves.png")
    click.echo(json.dumps({
        "model_id": model_id,
        "matching": report.matching,
        "wall_clock": report.wall_clock,
    }))


@cli.command(name="eval")
@click.option("--root", default=DEFAULT_ROOT, show_default=True)
@click.option("--model", "model_id", required=True)
@click.option("--metrics", "which", default=None,
              help="Comma-separated subset, e.g. diversity,npmi,top_purity.")
@click.option("--out", "out_dir", default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--config", default=None)
def eval_cmd(root, model_id, which, out_dir, seed, config):
    """Compute metrics for a trained model."""
    _load_config(config)
    store = _store(root)
    try:
        model, meta = store.load_model(model_id)
        prepared = store.load_corpus(meta["corpus_id"])
    except KeyError as exc:
        raise CliError(str(exc), kind="usage", code=2)
    streams = token_streams(prepared.docs, prepared.vocab)
    report = evaluation.metrics_report(
        model, prepared.bow, prepared.vocab,
        streams=streams,
        matching=meta.get("matching"),
        which=set(which.split(",")) if which else None,
        seed=seed,
    )
    payload = report.to_json()
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(json.dumps(payload, indent=2))
        with open(out / "metrics.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(payload.keys())
            writer.writerow(payload.values())
        summaries = evaluation.topic_summaries(model, prepared.vocab)
        plots.save_topic_bars(summaries, out / "topic_bars.png")
    click.echo(json.dumps(payload))


@cli.command()
@click.option("--root", default=DEFAULT_ROOT, show_default=True)
@click.option("--model", "model_id", required=True)
@click.option("--k", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--config", default=None)
def topics(root, model_id, k, seed, config):
    """Print each topic's top-k words (and the matched group, if any)."""
    _load_config(config)
    store = _store(root)
    try:
        model, meta = store.load_model(model_id)
        prepared = store.load_corpus(meta["corpus_id"])
    except KeyError as exc:
        raise CliError(str(exc), kind="usage", code=2)
    groups = store.model_keywords(model_id)
    matching = meta.get("matching")
    out = []
    for s in evaluation.topic_summaries(model, prepared.vocab, k=k):
        entry = {"topic": s.topic, "words": s.words, "probs": s.probs}
        if matching is not None and groups is not None:
            entry["matched_group"] = groups.names[matching[s.topic]]
        out.append(entry)
    click.echo(json.dumps(out, indent=2))


@cli.command()
@click.option("--root", default=DEFAULT_ROOT, show_default=True)
@click.option("--corpus", "corpus_id", required=True)
@click.option("--kind", type=click.Choice(["radius", "kappa"]), required=True)
@click.option("--grid", default=None, help="Comma-separated values; 'varied' allowed for kappa.")
@click.option("--seeds", default="0,1,2", show_default=True)
@click.option("--out", "out_dir", default="ablation", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--config", default=None)
def ablate(root, corpus_id, kind, grid, seeds, out_dir, seed, config):
    """Sweep radius or concentration and tabulate the metrics."""
    cfg = _load_config(config)
    store = _store(root)
    try:
        prepared = store.load_corpus(corpus_id)
    except KeyError as exc:
        raise CliError(str(exc), kind="usage", code=2)
    if grid is None:
        grid = "1,5,10,15,19" if kind == "radius" else "10,50,100,500,1000,varied"
    points = [g.strip() for g in grid.split(",") if g.strip()]
    seed_list = [int(s) for s in seeds.split(",")]
    model_part, train_part, extra = _split_config(cfg)
    emb_cfg = {"dim": 50, "epochs": 2, **extra.get("embedding", {})}
    if "num_topics" not in model_part:
        model_part["num_topics"] = default_num_topics(prepared.bow.labels, semisupervised=False)
    model_part.setdefault("vocab_size", len(prepared.vocab))
    model_part.setdefault("embedding_dim", emb_cfg["dim"])
    emb = store.embeddings_for(prepared, seed=seed, **emb_cfg)
    streams = token_streams(prepared.docs, prepared.vocab)

    rows = []
    for point in points:
        per_seed = []
        for s in seed_list:
            mp = dict(model_part)
            if kind == "radius":
                mp["radius"] = float(point)
            else:
                if point == "varied":
                    mp["kappa_mode"] = "learnable"
                else:
                    mp["kappa_mode"] = "fixed"
                    mp["kappa_fixed"] = float(point)
            mconfig = ModelConfig(seed=s, **mp)
            tconfig = TrainConfig(seed=s, **train_part)
            model, _ = train_unsupervised(prepared.bow, emb, mconfig, tconfig)
            rep = evaluation.metrics_report(
                model, prepared.bow, prepared.vocab, streams=streams, seed=s,
            )
            per_seed.append(rep)
        def _mean(attr):
            vals = [getattr(r, attr) for r in per_seed if getattr(r, attr) is not None]
            return float(np.mean(vals)) if vals else None
        if kind == "radius":
            rows.append({
                "temperature": point,
                "Top-Purity": _mean("top_purity"), "Top-NMI": _mean("top_nmi"),
                "KM-purity": _mean("km_purity"), "KM-NMI": _mean("km_nmi"),
                "NPMI": _mean("npmi"), "C_v": _mean("c_v"),
            })
        else:
            rows.append({
                "kappa": point, "diversity": _mean("diversity"),
                "Top-Purity": _mean("top_purity"), "Top-Nmi": _mean("top_nmi"),
                "Km-Purity": _mean("km_purity"), "Km-Nmi": _mean("km_nmi"),
                "NPMI": _mean("npmi"), "C_v": _mean("c_v"),
            })
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    key = "temperature" if kind == "radius" else "kappa"
    with open(out / f"ablation_{kind}.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    plots.save_ablation_curves(rows, key, out / f"ablation_{kind}.png")
    click.echo(json.dumps(rows, indent=2))


@cli.command()
@click.option("--out", "out_file", default="synthetic.jsonl", show_default=True)
@click.option("--classes", default=4, show_default=True)
@click.option("--docs", default=2000, show_default=True)
@click.option("--vocab", default=560, show_default=True)
@click.option("--doc-len", default=60.0, show_default=True)
@click.option("--background", default=0.30, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--config", default=None)
def synth(out_file, classes, docs, vocab, doc_len, background, seed, config):
    """Generate a labeled synthetic corpus with known topic-word structure."""
    _load_config(config)
    documents, dists, words = generate_corpus(
        num_classes=classes, num_docs=docs, vocab_size=vocab,
        doc_len_mean=doc_len, background_frac=background,
        background_words=min(160, int(vocab * 0.3)), seed=seed,
    )
    from .corpus import write_jsonl

    write_jsonl(documents, out_file)
    click.echo(json.dumps({"file": out_file, "docs": len(documents), "classes": classes}))


@cli.command()
@click.option("--quick/--full", default=False, show_default=True,
              help="Smaller sample sizes for a fast sanity pass.")
@click.option("--seed", default=0, show_default=True)
@click.option("--config", default=None)
def verify(quick, seed, config):
    """Run the numerical oracle suites (latent math + transport matching)."""
    _load_config(config)
    from .verification import run_all

    results = run_all(quick=quick, seed=seed)
    failed = [r for r in results if not r["passed"]]
    for r in results:
        status = "PASS" if r["passed"] else "FAIL"
        click.echo(f"[{status}] {r['name']}: {r['detail']}")
    if failed:
        raise CliError(f"{len(failed)} verification checks failed")


@cli.command()
@click.option("--root", default=DEFAULT_ROOT, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8764, show_default=True)
@click.option("--frontend", "frontend_dir", default=None,
              help="Directory of built UI assets to serve at /.")
@click.option("--seed", default=0, show_default=True)
@click.option("--config", default=None)
def serve(root, host, port, frontend_dir, seed, config):
    """Start the HTTP service."""
    _load_config(config)
    import uvicorn

    from .service import create_app

    app = create_app(root)
    if frontend_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")
    uvicorn.run(app, host=host, port=port)


def main():
    try:
        cli(standalone_mode=False)
    except CliError as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        print(
            json.dumps({"error": {"kind": "usage", "message": exc.format_message()}}),
            file=sys.stderr,
        )
        sys.exit(2)
    except click.ClickException as exc:
        print(
            json.dumps({"error": {"kind": "error", "message": exc.format_message()}}),
            file=sys.stderr,
        )
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        sys.exit(130)


if __name__ == "__main__":
    main()
