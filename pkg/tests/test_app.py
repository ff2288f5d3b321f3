"""CLI contract and HTTP service behavior on a tiny corpus.

A module-scoped store is trained once; read endpoints and mutation
lifecycles are exercised against it.
"""

import json
import time

import numpy as np
import pytest
import torch
from click.testing import CliRunner
from fastapi.testclient import TestClient

from vmftopics import synthetic as syn
from vmftopics.cli import cli, main
from vmftopics.corpus import write_jsonl
from vmftopics.service import create_app

torch.set_num_threads(2)

SMALL = dict(num_classes=3, num_docs=240, vocab_size=150, background_words=30,
             doc_len_mean=30, doc_len_min=10, seed=2)
PREP = {"max_doc_frac": 0.5, "min_count": 5}
FAST_TRAIN = {
    "hidden_sizes": [32, 16], "max_epochs": 8, "batch_size": 64,
    "converge_rel_tol": 0.0, "stage2_epochs": 2,
    "embedding": {"dim": 16, "epochs": 1},
}


def _docs_payload():
    docs, _, _ = syn.generate_corpus(**SMALL)
    return [
        {"id": d.id, "text": d.text, "label": d.label} for d in docs
    ]


@pytest.fixture(scope="module")
def corpus_file(tmp_path_factory):
    docs, _, _ = syn.generate_corpus(**SMALL)
    path = tmp_path_factory.mktemp("corpus") / "docs.jsonl"
    write_jsonl(docs, path)
    return path


class TestCli:
    def test_prepare_deterministic_hash(self, corpus_file, tmp_path):
        runner = CliRunner()
        args = ["prepare", str(corpus_file), "--root", str(tmp_path / "store"),
                "--max-doc-frac", "0.5", "--min-count", "5"]
        r1 = runner.invoke(cli, args, catch_exceptions=False)
        r2 = runner.invoke(cli, args, catch_exceptions=False)
        assert r1.exit_code == 0
        h1 = json.loads(r1.output)
        h2 = json.loads(r2.output)
        assert h1["vocab_hash"] == h2["vocab_hash"]
        assert h1["corpus_id"] == h2["corpus_id"]

    def test_full_flow_train_eval_topics(self, corpus_file, tmp_path):
        runner = CliRunner()
        root = str(tmp_path / "store")
        prep = runner.invoke(cli, ["prepare", str(corpus_file), "--root", root,
                                   "--max-doc-frac", "0.5", "--min-count", "5"],
                             catch_exceptions=False)
        corpus_id = json.loads(prep.output)["corpus_id"]

        out_dir = tmp_path / "report"
        train = runner.invoke(cli, [
            "train", "--root", root, "--corpus", corpus_id,
            "--out", str(out_dir), "--seed", "0",
            "--config", json.dumps(FAST_TRAIN),
        ], catch_exceptions=False)
        assert train.exit_code == 0, train.output
        model_id = json.loads(train.output)["model_id"]
        assert (out_dir / "report.json").exists()
        assert (out_dir / "loss_curves.png").exists()
        assert (out_dir / "latent_scatter.png").exists()

        ev_out = tmp_path / "metrics"
        evr = runner.invoke(cli, [
            "eval", "--root", root, "--model", model_id,
            "--metrics", "diversity,top_purity", "--out", str(ev_out),
        ], catch_exceptions=False)
        assert evr.exit_code == 0, evr.output
        metrics = json.loads(evr.output)
        assert set(metrics) == {"diversity", "top_purity"}
        assert (ev_out / "metrics.csv").exists()
        assert (ev_out / "topic_bars.png").exists()

        topics = runner.invoke(cli, ["topics", "--root", root, "--model", model_id],
                               catch_exceptions=False)
        parsed = json.loads(topics.output)
        assert len(parsed) == 4  # 3 classes + 1
        assert all(len(t["words"]) == 10 for t in parsed)

    def test_semisupervised_flow_and_finetune(self, corpus_file, tmp_path):
        runner = CliRunner()
        root = str(tmp_path / "store")
        prep = runner.invoke(cli, ["prepare", str(corpus_file), "--root", root,
                                   "--max-doc-frac", "0.5", "--min-count", "5"],
                             catch_exceptions=False)
        info = json.loads(prep.output)
        corpus_id = info["corpus_id"]

        from vmftopics.store import ProjectStore
        from vmftopics.corpus import derive_keywords
        prepared = ProjectStore(root).load_corpus(corpus_id)
        groups = derive_keywords(prepared.docs, prepared.vocab, k=3, seed=0)
        kw_file = tmp_path / "groups.json"
        kw_file.write_text(json.dumps(groups.to_json()))

        train = runner.invoke(cli, [
            "train", "--root", root, "--corpus", corpus_id,
            "--keywords", str(kw_file), "--seed", "0",
            "--config", json.dumps(FAST_TRAIN),
        ], catch_exceptions=False)
        assert train.exit_code == 0, train.output
        result = json.loads(train.output)
        assert sorted(result["matching"]) == [0, 1, 2]

        ft = runner.invoke(cli, [
            "finetune", "--root", root, "--model", result["model_id"],
            "--keywords", str(kw_file), "--seed", "0",
        ], catch_exceptions=False)
        assert ft.exit_code == 0, ft.output
        assert sorted(json.loads(ft.output)["matching"]) == [0, 1, 2]

    def test_out_of_vocab_keyword_fails_with_json_error(self, corpus_file, tmp_path, capsys, monkeypatch):
        runner = CliRunner()
        root = str(tmp_path / "store")
        prep = runner.invoke(cli, ["prepare", str(corpus_file), "--root", root,
                                   "--max-doc-frac", "0.5", "--min-count", "5"],
                             catch_exceptions=False)
        corpus_id = json.loads(prep.output)["corpus_id"]
        kw_file = tmp_path / "bad.json"
        kw_file.write_text(json.dumps([
            {"name": "g0", "keywords": ["notarealword"]},
            {"name": "g1", "keywords": ["alsofake"]},
            {"name": "g2", "keywords": ["nope"]},
        ]))
        import sys
        monkeypatch.setattr(
            sys, "argv",
            ["vmftopics", "train", "--root", root, "--corpus", corpus_id,
             "--keywords", str(kw_file)],
        )
        with pytest.raises(SystemExit) as exc:
            main()
        assert exc.value.code != 0
        err = capsys.readouterr().err
        payload = json.loads(err.strip().splitlines()[-1])
        assert "notarealword" in payload["error"]["message"]

    def test_unknown_flag_usage_error(self, monkeypatch, capsys):
        import sys
        monkeypatch.setattr(sys, "argv", ["vmftopics", "train", "--bogus-flag", "1"])
        with pytest.raises(SystemExit) as exc:
            main()
        assert exc.value.code == 2
        err = capsys.readouterr().err
        assert json.loads(err.strip().splitlines()[-1])["error"]["kind"] == "usage"

    def test_synth_writes_corpus(self, tmp_path):
        runner = CliRunner()
        out = tmp_path / "synth.jsonl"
        r = runner.invoke(cli, ["synth", "--out", str(out), "--docs", "50",
                                "--classes", "3", "--vocab", "120"],
                          catch_exceptions=False)
        assert r.exit_code == 0
        assert len(out.read_text().splitlines()) == 50


@pytest.fixture(scope="module")
def service(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc-store")
    app = create_app(root)
    client = TestClient(app)
    up = client.post("/corpora", json={
        "documents": _docs_payload(), **PREP, "name": "synthetic",
    })
    assert up.status_code == 200, up.text
    corpus_id = up.json()["corpus_id"]

    from vmftopics.store import ProjectStore
    from vmftopics.corpus import derive_keywords
    prepared = ProjectStore(root).load_corpus(corpus_id)
    groups = derive_keywords(prepared.docs, prepared.vocab, k=3, seed=0)
    keywords = [{"name": n, "keywords": g} for n, g in zip(groups.names, groups.groups)]

    body = {"corpus_id": corpus_id,
            "model": {"hidden_sizes": [32, 16]},
            "train": {"max_epochs": 8, "batch_size": 64, "converge_rel_tol": 0.0,
                      "stage2_epochs": 2},
            "keywords": keywords,
            "embedding": {"dim": 16, "epochs": 1}}
    resp = client.post("/models", json=body)
    assert resp.status_code == 200, resp.text
    model_id = resp.json()["model_id"]
    job_id = resp.json()["job"]["id"]
    _wait_job(client, job_id)
    return client, corpus_id, model_id, keywords


def _wait_job(client, job_id, timeout=300.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        job = client.get(f"/jobs/{job_id}").json()["job"]
        if job["state"] in ("done", "failed", "cancelled"):
            return job
        time.sleep(0.05)
    raise TimeoutError(job_id)


class TestService:
    def test_job_reaches_done_with_full_progress(self, service):
        client, _, model_id, _ = service
        models = client.get("/models").json()["models"]
        assert any(m["model_id"] == model_id for m in models)

    def test_topics_carry_matching_and_version(self, service):
        client, _, model_id, _ = service
        resp = client.get(f"/models/{model_id}/topics")
        assert resp.status_code == 200
        body = resp.json()
        assert body["schema_version"] == 1
        assert len(body["topics"]) == 3
        matched = {t["matched_group"] for t in body["topics"]}
        assert len(matched) == 3

    def test_documents_sorted_by_topic_score(self, service):
        client, _, model_id, _ = service
        resp = client.get(f"/models/{model_id}/documents", params={"topic": 0, "limit": 5})
        docs = resp.json()["documents"]
        assert len(docs) == 5
        scores = [d["score"] for d in docs]
        assert scores == sorted(scores, reverse=True)

    def test_documents_bad_topic_400(self, service):
        client, _, model_id, _ = service
        assert client.get(f"/models/{model_id}/documents",
                          params={"topic": 99}).status_code == 400

    def test_metrics_subset(self, service):
        client, _, model_id, _ = service
        resp = client.get(f"/models/{model_id}/metrics",
                          params={"which": "accuracy,diversity"})
        metrics = resp.json()["metrics"]
        assert set(metrics) == {"accuracy", "diversity"}

    def test_vocab_endpoint(self, service):
        client, _, model_id, _ = service
        tokens = client.get(f"/models/{model_id}/vocab").json()["tokens"]
        assert len(tokens) > 50

    def test_unknown_ids_404(self, service):
        client, _, _, _ = service
        assert client.get("/models/nope/topics").status_code == 404
        assert client.get("/jobs/nope").status_code == 404

    def test_schema_violation_400(self, service):
        client, _, _, _ = service
        assert client.post("/corpora", json={"documents": "not-a-list"}).status_code == 400

    def test_keywords_validation_and_finetune_roundtrip(self, service):
        client, _, model_id, keywords = service
        bad = [dict(keywords[0], keywords=["missingword"])] + keywords[1:]
        resp = client.put(f"/models/{model_id}/keywords", json=bad)
        assert resp.status_code == 400
        assert "missingword" in json.dumps(resp.json())

        before = client.get(f"/models/{model_id}/topics").json()
        resp = client.put(f"/models/{model_id}/keywords", json=keywords)
        assert resp.status_code == 200
        ft = client.post(f"/models/{model_id}/finetune")
        assert ft.status_code == 200
        job = _wait_job(client, ft.json()["job"]["id"])
        assert job["state"] == "done"
        assert job["progress"] == 1.0
        after = client.get(f"/models/{model_id}/topics").json()
        assert after["matching"] == before["matching"]

    def test_concurrent_finetune_409(self, service):
        client, _, model_id, _ = service
        first = client.post(f"/models/{model_id}/finetune",
                            json={"stage2_epochs": 5})
        assert first.status_code == 200
        second = client.post(f"/models/{model_id}/finetune")
        assert second.status_code == 409
        job = _wait_job(client, first.json()["job"]["id"])
        assert job["state"] == "done"

    def test_cancel_leaves_checkpoint_intact(self, service, tmp_path):
        client, _, model_id, _ = service
        app_store = client.app.state.store
        ckpt = app_store.model_dir(model_id) / "checkpoint.bin"
        before = ckpt.read_bytes()
        resp = client.post(f"/models/{model_id}/finetune",
                           json={"stage2_epochs": 40})
        job_id = resp.json()["job"]["id"]
        cancel = client.delete(f"/jobs/{job_id}")
        assert cancel.status_code == 200
        job = _wait_job(client, job_id)
        assert job["state"] == "cancelled"
        assert ckpt.read_bytes() == before

    def test_unknown_corpus_404(self, service):
        client, _, _, _ = service
        resp = client.post("/models", json={"corpus_id": "missing"})
        assert resp.status_code == 404
