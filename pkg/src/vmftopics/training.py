"""Two-stage optimization.

Stage 1 minimizes the unsupervised objective (reconstruction + KL minus the
weighted topic-word entropy) with Adam under a one-cycle schedule until the
relative improvement stalls or the epoch cap is hit.  Stage 2 adds the
keyword-matching transport loss for a few epochs, recomputing the cost
matrix and Sinkhorn plan at every step, and rounds the final plan to a hard
topic-to-group matching.  Keyword edits re-run stage 2 only, which is what
keeps the interactive loop fast.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np
import torch

from . import transport
from .corpus import BowMatrix, KeywordGroups, Vocabulary
from .embeddings import EmbeddingMatrix
from .model import (
    DTYPE,
    ForwardResult,
    ModelConfig,
    ModelDivergence,
    TopicModel,
    elbo_loss,
    topic_word_entropy,
)

__all__ = [
    "TrainConfig",
    "TrainReport",
    "TrainingDiverged",
    "default_num_topics",
    "train_unsupervised",
    "train_semisupervised",
    "finetune_keywords",
    "cross_entropy_variant",
]


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, report: "TrainReport"):
        super().__init__(message)
        self.report = report


@dataclass
class TrainConfig:
    lr: float = 0.002
    max_lr: float = 0.01
    batch_size: int = 256
    max_epochs: int = 50
    alpha: float = 1.0
    delta: float = 1.0
    stage2_epochs: int = 5
    stage2_lr: float = 0.002
    sinkhorn_epsilon: float = 0.01
    converge_rel_tol: float = 1e-4
    converge_window: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("lr", "max_lr", "batch_size", "max_epochs", "stage2_epochs",
                     "stage2_lr", "sinkhorn_epsilon"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        return cls(**obj)


@dataclass
class TrainReport:
    stage: str
    seed: int
    epochs: list[dict] = field(default_factory=list)
    wall_clock: float = 0.0
    converged_epoch: int | None = None
    matching: list[int] | None = None
    matching_names: list[str] | None = None
    plan_gap: float | None = None
    error: str | None = None

    def to_json(self) -> dict:
        return asdict(self)


def default_num_topics(labels, semisupervised: bool) -> int:
    """Classes + 1 for unsupervised runs, exactly the classes otherwise."""
    classes = {l for l in labels if l is not None}
    if not classes:
        raise ValueError("no labels available to derive a topic count")
    return len(classes) if semisupervised else len(classes) + 1


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _step_loss(model: TopicModel, fwd: ForwardResult, x: torch.Tensor,
               alpha: float, entropy_sign: float) -> tuple[torch.Tensor, dict]:
    """Batch objective: summed per-document ELBO plus the entropy term.

    Sum (not mean) reduction keeps the single per-batch entropy term at the
    weak-regularizer scale the alpha = 1 default assumes.
    """
    parts = elbo_loss(x, fwd)
    h = fwd.losses["entropy_reg"]
    n = x.shape[0]
    loss = n * parts["total"] + entropy_sign * alpha * h
    record = {
        "recon": float(parts["recon"].detach()),
        "kl": float(parts["kl"].detach()),
        "entropy_reg": float(h.detach()),
    }
    return loss, record


def _check_finite(model: TopicModel, loss: torch.Tensor, report: TrainReport):
    if not torch.isfinite(loss):
        report.error = "training diverged: non-finite loss"
        raise TrainingDiverged(report.error, report)
    for name, p in model.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            report.error = f"training diverged: non-finite gradient in {name}"
            raise TrainingDiverged(report.error, report)


def _run_stage(
    model: TopicModel,
    bow: BowMatrix,
    config: TrainConfig,
    *,
    stage: str,
    epochs: int,
    use_onecycle: bool,
    lr: float,
    ot_context: dict | None = None,
    progress=None,
    cancel=None,
) -> TrainReport:
    report = TrainReport(stage=stage, seed=config.seed)
    t0 = time.perf_counter()
    x_all = torch.from_numpy(bow.rows.astype(np.float64))
    n = x_all.shape[0]
    if n == 0:
        raise ValueError("empty corpus")
    batch_rng = np.random.default_rng(config.seed + 1000)

    opt = torch.optim.Adam((p for p in model.parameters() if p.requires_grad), lr=lr)
    steps_per_epoch = math.ceil(n / config.batch_size)
    sched = None
    if use_onecycle:
        sched = torch.optim.lr_scheduler.OneCycleLR(
            opt, max_lr=config.max_lr, total_steps=epochs * steps_per_epoch
        )

    history: list[float] = []
    for epoch in range(epochs):
        if cancel is not None and cancel():
            report.error = "cancelled"
            break
        sums: dict[str, float] = {}
        count = 0
        for idx in _batches(n, config.batch_size, batch_rng):
            xb = x_all[idx]
            fwd = model(xb, train_mode=True)
            loss, record = _step_loss(
                model, fwd, xb, config.alpha, model.config.entropy_sign
            )
            if ot_context is not None:
                ot_term, ot_record = _ot_loss_term(model, ot_context, config)
                loss = loss + config.delta * ot_term
                record.update(ot_record)
            opt.zero_grad()
            loss.backward()
            _check_finite(model, loss, report)
            opt.step()
            if sched is not None:
                sched.step()
            record["total"] = float(loss)
            for k, v in record.items():
                sums[k] = sums.get(k, 0.0) + v
            count += 1
        epoch_means = {k: v / count for k, v in sums.items()}
        epoch_means["epoch"] = epoch
        report.epochs.append(epoch_means)
        history.append(epoch_means["total"])
        if progress is not None:
            progress((epoch + 1) / epochs)
        if _has_converged(history, config):
            report.converged_epoch = epoch
            break
    report.wall_clock = time.perf_counter() - t0
    return report


def _has_converged(history: list[float], config: TrainConfig) -> bool:
    """Stop once the running best has improved less than rel_tol over the window.

    A non-positive tolerance disables early stopping.
    """
    if config.converge_rel_tol <= 0:
        return False
    w = config.converge_window
    if len(history) <= w:
        return False
    prev_best = min(history[:-w])
    now_best = min(history)
    scale = max(abs(prev_best), 1e-12)
    return (prev_best - now_best) / scale < config.converge_rel_tol


def _ot_loss_term(model: TopicModel, ctx: dict, config: TrainConfig):
    """delta-weighted Sinkhorn matching loss, plan held constant per step."""
    e = model.topic_word_matrix()
    log_e = torch.log(torch.clamp(e, min=1e-300))
    cost_rows = [
        -log_e[:, idx].mean(dim=1) for idx in ctx["group_indices"]
    ]
    cost_t = torch.stack(cost_rows, dim=1)  # (topics, groups)
    plan = transport.sinkhorn(
        cost_t.detach().cpu().numpy(), epsilon=config.sinkhorn_epsilon
    )
    p_const = torch.from_numpy(plan.plan).to(DTYPE)
    ent = transport.plan_entropy(plan.plan)
    ot = (p_const * cost_t).sum() - config.sinkhorn_epsilon * ent
    ctx["last_plan"] = plan
    ctx["last_cost"] = cost_t.detach().cpu().numpy()
    return ot, {"ot": float(ot)}


def _ce_loss_term(model: TopicModel, ctx: dict):
    """Cross-entropy against the fixed greedy matching."""
    e = model.topic_word_matrix()
    log_e = torch.log(torch.clamp(e, min=1e-300))
    total = 0.0
    for topic, idx in zip(ctx["assignment_topics"], ctx["group_indices"]):
        total = total - log_e[topic, idx].mean()
    return total, {"ce": float(total)}


def _group_indices(groups: KeywordGroups, vocab: Vocabulary) -> list[list[int]]:
    groups.validate(vocab)
    return [[vocab.index[w] for w in g] for g in groups.groups]


def train_unsupervised(
    bow: BowMatrix,
    embeddings: EmbeddingMatrix,
    model_config: ModelConfig,
    config: TrainConfig | None = None,
    progress=None,
    cancel=None,
) -> tuple[TopicModel, TrainReport]:
    """Stage 1: fit the topic model with no keyword information."""
    config = config or TrainConfig()
    model = TopicModel(model_config, embeddings)
    model.reseed(config.seed)
    report = _run_stage(
        model,
        bow,
        config,
        stage="unsupervised",
        epochs=config.max_epochs,
        use_onecycle=True,
        lr=config.lr,
        progress=progress,
        cancel=cancel,
    )
    return model, report


def train_semisupervised(
    bow: BowMatrix,
    embeddings: EmbeddingMatrix,
    groups: KeywordGroups,
    vocab: Vocabulary,
    model_config: ModelConfig,
    config: TrainConfig | None = None,
    progress=None,
    cancel=None,
) -> tuple[TopicModel, TrainReport]:
    """Stage 1 then the transport-matched stage 2."""
    config = config or TrainConfig()
    if len(groups) != model_config.num_topics:
        raise ValueError(
            f"{len(groups)} keyword groups for {model_config.num_topics} topics; "
            "matching requires one group per topic"
        )
    _group_indices(groups, vocab)  # pre-flight vocabulary check before any training
    stage1_frac = 0.7

    def p1(frac):
        if progress:
            progress(stage1_frac * frac)

    model, rep1 = train_unsupervised(
        bow, embeddings, model_config, config, progress=p1, cancel=cancel
    )
    if rep1.error:
        return model, rep1

    def p2(frac):
        if progress:
            progress(stage1_frac + (1 - stage1_frac) * frac)

    rep2 = finetune_keywords(model, bow, groups, vocab, config, progress=p2, cancel=cancel)
    rep2.stage = "semisupervised"
    rep2.epochs = rep1.epochs + rep2.epochs
    rep2.wall_clock += rep1.wall_clock
    rep2.converged_epoch = rep1.converged_epoch
    return model, rep2


def finetune_keywords(
    model: TopicModel,
    bow: BowMatrix,
    groups: KeywordGroups,
    vocab: Vocabulary,
    config: TrainConfig | None = None,
    progress=None,
    cancel=None,
) -> TrainReport:
    """Re-run stage 2 from the current state with (possibly new) groups."""
    config = config or TrainConfig()
    if len(groups) != model.config.num_topics:
        raise ValueError(
            f"{len(groups)} keyword groups for {model.config.num_topics} topics"
        )
    ctx = {"group_indices": _group_indices(groups, vocab)}
    report = _run_stage(
        model,
        bow,
        config,
        stage="finetune",
        epochs=config.stage2_epochs,
        use_onecycle=False,
        lr=config.stage2_lr,
        ot_context=ctx,
        progress=progress,
        cancel=cancel,
    )
    if report.error:
        return report
    # final matching from a fresh plan on the trained state
    e = model.topic_word_matrix().detach().cpu().numpy()
    cost = transport.cost_matrix(e, groups, vocab)
    plan = transport.sinkhorn(cost, epsilon=config.sinkhorn_epsilon)
    matching = transport.round_to_matching(plan)
    report.matching = list(matching.assignment)
    report.matching_names = [groups.names[s] for s in matching.assignment]
    report.plan_gap = matching.plan_gap
    return report


def cross_entropy_variant(
    model: TopicModel,
    bow: BowMatrix,
    groups: KeywordGroups,
    vocab: Vocabulary,
    config: TrainConfig | None = None,
) -> TrainReport:
    """Stage 2 with plain cross-entropy and a fixed greedy matching.

    The matching pairs groups to topics by highest mean log probability,
    greedily with elimination, before any stage-2 step; it exists to
    reproduce the variance comparison against the transport objective.
    """
    config = config or TrainConfig()
    if len(groups) != model.config.num_topics:
        raise ValueError(
            f"{len(groups)} keyword groups for {model.config.num_topics} topics"
        )
    indices = _group_indices(groups, vocab)
    e = model.topic_word_matrix().detach().cpu().numpy()
    cost = transport.cost_matrix_values(np.log(np.clip(e, 1e-300, None)), indices)
    n = len(groups)
    assignment_topics = [-1] * n  # group -> topic
    work = cost.copy()
    for _ in range(n):
        t, s = np.unravel_index(np.argmin(work), work.shape)
        assignment_topics[int(s)] = int(t)
        work[t, :] = np.inf
        work[:, s] = np.inf
    ctx = {"group_indices": indices, "assignment_topics": assignment_topics}

    report = TrainReport(stage="cross_entropy", seed=config.seed)
    t0 = time.perf_counter()
    x_all = torch.from_numpy(bow.rows.astype(np.float64))
    batch_rng = np.random.default_rng(config.seed + 1000)
    opt = torch.optim.Adam(
        (p for p in model.parameters() if p.requires_grad), lr=config.stage2_lr
    )
    for epoch in range(config.stage2_epochs):
        sums: dict[str, float] = {}
        count = 0
        for idx in _batches(x_all.shape[0], config.batch_size, batch_rng):
            xb = x_all[idx]
            fwd = model(xb, train_mode=True)
            loss, record = _step_loss(
                model, fwd, xb, config.alpha, model.config.entropy_sign
            )
            ce, ce_rec = _ce_loss_term(model, ctx)
            loss = loss + config.delta * ce
            record.update(ce_rec)
            opt.zero_grad()
            loss.backward()
            _check_finite(model, loss, report)
            opt.step()
            record["total"] = float(loss)
            for k, v in record.items():
                sums[k] = sums.get(k, 0.0) + v
            count += 1
        means = {k: v / count for k, v in sums.items()}
        means["epoch"] = epoch
        report.epochs.append(means)
    report.wall_clock = time.perf_counter() - t0
    # topic -> group view of the fixed greedy matching
    assignment = [0] * n
    for s, t in enumerate(assignment_topics):
        assignment[t] = s
    report.matching = assignment
    report.matching_names = [groups.names[s] for s in assignment]
    return report
