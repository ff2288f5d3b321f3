"""The spherical topic network.

Encoder: two-hidden-layer MLP over bag-of-words counts producing either
vMF parameters (unit mean direction plus softplus concentration) or
diagonal Gaussian parameters.  A latent draw is scaled by the radius
(temperature) and pushed through softmax to give topic proportions; the
decoder mixes a row-stochastic topic-word matrix softmax(e_T e_V^T) built
from trainable topic embeddings against frozen unit-norm word embeddings.

Everything runs in float64 on CPU.  Gradients flow through the latent draw
by recomputing the rejection-sampled marginal coordinate from the accepted
proposal values (held fixed) as a function of kappa, and through the
Householder reflection as a function of mu; the accept/reject score
correction is deliberately omitted, which the training-side checks bound
stochastically.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import struct
from dataclasses import dataclass, field, asdict

import numpy as np
import torch

from . import geometry
from .embeddings import EmbeddingMatrix, TopicEmbeddings, init_topic_embeddings

__all__ = [
    "ModelConfig",
    "ForwardResult",
    "TopicModel",
    "ModelDivergence",
    "topic_proportions",
    "topic_word_entropy",
    "reconstruct_log_probs",
    "elbo_loss",
    "save_checkpoint",
    "load_checkpoint",
]

DTYPE = torch.float64

SNAPSHOT_MAGIC = b"VTM1"


class ModelDivergence(RuntimeError):
    """Raised when a forward or backward pass produces non-finite numbers."""


@dataclass
class ModelConfig:
    num_topics: int
    vocab_size: int
    embedding_dim: int
    hidden_sizes: tuple[int, ...] = (256, 64)
    dropout: float = 0.5
    latent_kind: str = "vmf"            # "vmf" | "gaussian"
    radius: float = 10.0
    radius_mode: str = "fixed"          # "fixed" | "scalar" | "vector"
    kappa_mode: str = "learnable"       # "learnable" | "fixed"
    kappa_fixed: float = 10.0
    kappa_init: float = 10.0
    entropy_weight: float = 1.0         # alpha
    entropy_sign: float = -1.0          # loss += sign * alpha * H(E)
    seed: int = 0

    def __post_init__(self):
        if self.num_topics < 2:
            raise ValueError("num_topics must be >= 2")
        if self.latent_kind not in ("vmf", "gaussian"):
            raise ValueError(f"unknown latent_kind {self.latent_kind!r}")
        if self.radius_mode not in ("fixed", "scalar", "vector"):
            raise ValueError(f"unknown radius_mode {self.radius_mode!r}")
        if self.radius_mode == "fixed" and self.radius <= 0:
            raise ValueError("fixed radius must be > 0")
        if self.kappa_mode not in ("learnable", "fixed"):
            raise ValueError(f"unknown kappa_mode {self.kappa_mode!r}")
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        obj = dict(obj)
        obj["hidden_sizes"] = tuple(obj.get("hidden_sizes", (256, 64)))
        return cls(**obj)


@dataclass
class ForwardResult:
    params: object                      # VmfParams-like tensors (mu, kappa) or (mu, log_sigma)
    eta: torch.Tensor                   # (B, M) latent draw
    z: torch.Tensor                     # (B, M) topic proportions
    recon_log_probs: torch.Tensor       # (B, V)
    losses: dict = field(default_factory=dict)


def _init_linear(fan_in: int, fan_out: int, gen: torch.Generator) -> tuple[torch.Tensor, torch.Tensor]:
    bound = 1.0 / math.sqrt(fan_in)
    w = (torch.rand((fan_out, fan_in), generator=gen, dtype=DTYPE) * 2 - 1) * bound
    b = (torch.rand((fan_out,), generator=gen, dtype=DTYPE) * 2 - 1) * bound
    return w, b


class _VmfKl(torch.autograd.Function):
    """KL(vMF(. , kappa) || uniform) with the closed-form kappa gradient."""

    @staticmethod
    def forward(ctx, kappa: torch.Tensor, m: int):
        k = kappa.detach().cpu().numpy()
        ctx.save_for_backward(kappa)
        ctx.m = m
        return torch.from_numpy(np.atleast_1d(geometry.vmf_kl(m, k))).to(kappa.dtype)

    @staticmethod
    def backward(ctx, grad_out):
        (kappa,) = ctx.saved_tensors
        k = kappa.detach().cpu().numpy()
        g = np.atleast_1d(geometry.vmf_kl_grad_kappa(ctx.m, k))
        return grad_out * torch.from_numpy(g).to(grad_out.dtype), None


def vmf_kl_torch(kappa: torch.Tensor, m: int) -> torch.Tensor:
    return _VmfKl.apply(kappa, m)


def topic_proportions(eta: torch.Tensor, radius) -> torch.Tensor:
    """z = softmax(radius * eta); radius is a scalar or per-topic vector."""
    if not isinstance(radius, torch.Tensor):
        radius = torch.as_tensor(radius, dtype=eta.dtype)
    return torch.softmax(radius * eta, dim=-1)


def reconstruct_log_probs(z: torch.Tensor, e: torch.Tensor) -> torch.Tensor:
    """log(z E): log word distribution of the mixed topics."""
    mix = z @ e
    return torch.log(torch.clamp(mix, min=1e-300))


def topic_word_entropy(e: torch.Tensor) -> torch.Tensor:
    """H = -sum_t sum_j E_tj log E_tj over the whole matrix."""
    return -(e * torch.log(torch.clamp(e, min=1e-300))).sum()


def elbo_loss(x: torch.Tensor, result: ForwardResult) -> dict:
    """Per-batch reconstruction and KL terms (means over documents)."""
    recon = -(x * result.recon_log_probs).sum(dim=1)
    kl = result.losses["kl_per_doc"]
    return {
        "recon": recon.mean(),
        "kl": kl.mean(),
        "total": recon.mean() + kl.mean(),
    }


class TopicModel(torch.nn.Module):
    def __init__(self, config: ModelConfig, word_embeddings: EmbeddingMatrix,
                 topic_embeddings: TopicEmbeddings | None = None):
        super().__init__()
        if word_embeddings.vectors.shape != (config.vocab_size, config.embedding_dim):
            raise ValueError("word embedding shape does not match the config")
        self.config = config
        gen = torch.Generator().manual_seed(config.seed)

        sizes = [config.vocab_size, *config.hidden_sizes]
        weights, biases = [], []
        for i in range(len(sizes) - 1):
            w, b = _init_linear(sizes[i], sizes[i + 1], gen)
            weights.append(torch.nn.Parameter(w))
            biases.append(torch.nn.Parameter(b))
        self.enc_w = torch.nn.ParameterList(weights)
        self.enc_b = torch.nn.ParameterList(biases)

        h_last = config.hidden_sizes[-1]
        m = config.num_topics
        w, b = _init_linear(h_last, m, gen)
        self.mu_w = torch.nn.Parameter(w)
        self.mu_b = torch.nn.Parameter(b)
        if config.latent_kind == "vmf":
            if config.kappa_mode == "learnable":
                # single learnable concentration, stored unconstrained
                self.kappa_raw = torch.nn.Parameter(
                    torch.tensor(_softplus_inv(config.kappa_init), dtype=DTYPE)
                )
        else:
            w, b = _init_linear(h_last, m, gen)
            self.logsig_w = torch.nn.Parameter(w)
            self.logsig_b = torch.nn.Parameter(b)

        if topic_embeddings is None:
            topic_embeddings = init_topic_embeddings(m, config.embedding_dim, config.seed)
        self.topic_emb = torch.nn.Parameter(
            torch.from_numpy(np.array(topic_embeddings.vectors, dtype=np.float64))
        )
        # frozen word embeddings: a buffer, never a parameter
        self.register_buffer(
            "word_emb", torch.from_numpy(np.array(word_embeddings.vectors, dtype=np.float64))
        )

        if config.radius_mode == "fixed":
            self.register_buffer("radius_param", torch.tensor(float(config.radius), dtype=DTYPE))
        elif config.radius_mode == "scalar":
            self.radius_param = torch.nn.Parameter(torch.tensor(float(config.radius), dtype=DTYPE))
        else:
            self.radius_param = torch.nn.Parameter(
                torch.full((m,), float(config.radius), dtype=DTYPE)
            )

        self._dropout_gen = torch.Generator().manual_seed(config.seed + 1)
        self._sample_rng = np.random.default_rng(config.seed + 2)

    # -- randomness ---------------------------------------------------------

    def reseed(self, seed: int) -> None:
        """Reset the per-run sampling streams (training determinism)."""
        self._dropout_gen = torch.Generator().manual_seed(seed + 1)
        self._sample_rng = np.random.default_rng(seed + 2)

    # -- components ---------------------------------------------------------

    @property
    def radius(self) -> torch.Tensor:
        return self.radius_param

    def encode(self, x: torch.Tensor, train_mode: bool = False):
        """VmF (mu, kappa) or Gaussian (mu, log_sigma) tensors for a batch."""
        if x.dim() == 1:
            x = x.unsqueeze(0)
        h = x.to(DTYPE)
        for w, b in zip(self.enc_w, self.enc_b):
            h = torch.relu(h @ w.T + b)
            if train_mode and self.config.dropout > 0:
                keep = 1.0 - self.config.dropout
                mask = torch.bernoulli(
                    torch.full_like(h, keep), generator=self._dropout_gen
                )
                h = h * mask / keep
            if not torch.isfinite(h).all():
                raise ModelDivergence(self._dump("encoder activations"))
        raw = h @ self.mu_w.T + self.mu_b
        if not torch.isfinite(raw).all():
            raise ModelDivergence(self._dump("mu head"))
        if self.config.latent_kind == "vmf":
            mu = _safe_normalize(raw)
            if self.config.kappa_mode == "fixed":
                kappa = torch.full(
                    (x.shape[0],), float(self.config.kappa_fixed), dtype=DTYPE
                )
            else:
                kappa = torch.nn.functional.softplus(self.kappa_raw).expand(x.shape[0])
            return mu, kappa
        log_sigma = h @ self.logsig_w.T + self.logsig_b
        return raw, log_sigma

    def sample_latent(self, params, train_mode: bool):
        """Reparameterized draw; in eval mode the mean direction is used."""
        if self.config.latent_kind == "vmf":
            mu, kappa = params
            if not train_mode:
                return mu
            m = self.config.num_topics
            omega_np, eps_np, _ = geometry.sample_omega(
                m, kappa.detach().cpu().numpy(), self._sample_rng
            )
            tangent = geometry.sample_uniform_sphere(mu.shape[0], m - 1, self._sample_rng)
            eps = torch.from_numpy(eps_np).to(DTYPE)
            v = torch.from_numpy(tangent).to(DTYPE)
            disc = torch.sqrt(4.0 * kappa * kappa + (m - 1.0) ** 2)
            b = (-2.0 * kappa + disc) / (m - 1.0)
            omega = (1.0 - (1.0 + b) * eps) / (1.0 - (1.0 - b) * eps)
            local = torch.cat(
                [
                    omega.unsqueeze(1),
                    torch.sqrt(torch.clamp(1.0 - omega * omega, min=0.0)).unsqueeze(1) * v,
                ],
                dim=1,
            )
            return _householder_rotate_torch(mu, local)
        mu, log_sigma = params
        if not train_mode:
            return mu
        eps = torch.from_numpy(
            self._sample_rng.standard_normal(tuple(mu.shape))
        ).to(DTYPE)
        return mu + torch.exp(log_sigma) * eps

    def topic_word_matrix(self) -> torch.Tensor:
        """Row-stochastic M x V matrix softmax(e_T e_V^T)."""
        return torch.softmax(self.topic_emb @ self.word_emb.T, dim=-1)

    def forward(self, x: torch.Tensor, train_mode: bool = False) -> ForwardResult:
        if x.dim() == 1:
            x = x.unsqueeze(0)
        x = x.to(DTYPE)
        params = self.encode(x, train_mode=train_mode)
        eta = self.sample_latent(params, train_mode=train_mode)
        z = topic_proportions(eta, self.radius)
        e = self.topic_word_matrix()
        log_probs = reconstruct_log_probs(z, e)
        if self.config.latent_kind == "vmf":
            kl = vmf_kl_torch(params[1], self.config.num_topics)
        else:
            mu, log_sigma = params
            kl = -0.5 * (1.0 + 2.0 * log_sigma - mu * mu - torch.exp(2.0 * log_sigma)).sum(dim=1)
        entropy = topic_word_entropy(e)
        return ForwardResult(
            params=params,
            eta=eta,
            z=z,
            recon_log_probs=log_probs,
            losses={"kl_per_doc": kl, "entropy_reg": entropy},
        )

    def _dump(self, where: str) -> str:
        stats = {
            name: [float(p.min()), float(p.max())]
            for name, p in self.named_parameters()
        }
        return f"non-finite values in {where}; parameter ranges: {json.dumps(stats)}"


def _softplus_inv(y: float) -> float:
    return float(y + math.log(-math.expm1(-y)))


def _safe_normalize(v: torch.Tensor) -> torch.Tensor:
    norm = torch.linalg.vector_norm(v, dim=-1, keepdim=True)
    fallback = torch.zeros_like(v)
    fallback[..., 0] = 1.0
    use_fallback = norm < 1e-12
    v = torch.where(use_fallback, fallback, v)
    norm = torch.where(use_fallback, torch.ones_like(norm), norm)
    return v / norm


def _householder_rotate_torch(mu: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    e1 = torch.zeros_like(mu)
    e1[:, 0] = 1.0
    u = e1 - mu
    norm = torch.linalg.vector_norm(u, dim=1, keepdim=True)
    mask = norm < 1e-12
    u = torch.where(mask, torch.zeros_like(u), u / torch.where(mask, torch.ones_like(norm), norm))
    return x - 2.0 * (u * x).sum(dim=1, keepdim=True) * u


# ---------------------------------------------------------------------------
# Snapshot format: magic, header length, JSON header, float32 blocks
# ---------------------------------------------------------------------------


def save_checkpoint(model: TopicModel, vocab_hash: str, path=None) -> bytes:
    """Serialize to the versioned binary container; returns the bytes."""
    names = sorted(
        [n for n, _ in model.named_parameters()] + [n for n, _ in model.named_buffers()]
    )
    tensors = dict(model.named_parameters())
    tensors.update(dict(model.named_buffers()))
    header = {
        "format_version": 1,
        "config": model.config.to_json(),
        "vocab_hash": vocab_hash,
        "blocks": [{"name": n, "shape": list(tensors[n].shape)} for n in names],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(SNAPSHOT_MAGIC)
    buf.write(struct.pack("<I", len(head)))
    buf.write(head)
    for n in names:
        arr = tensors[n].detach().cpu().numpy().astype("<f4")
        buf.write(arr.tobytes(order="C"))
    data = buf.getvalue()
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data


def load_checkpoint(source, word_embeddings: EmbeddingMatrix | None = None,
                    expected_vocab_hash: str | None = None) -> tuple[TopicModel, str]:
    """Rebuild a model from the container; checks the vocabulary hash."""
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    if data[:4] != SNAPSHOT_MAGIC:
        raise ValueError("not a model snapshot (bad magic)")
    (head_len,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8 : 8 + head_len].decode("utf-8"))
    if header.get("format_version") != 1:
        raise ValueError(f"unsupported snapshot version {header.get('format_version')!r}")
    vocab_hash = header["vocab_hash"]
    if expected_vocab_hash is not None and vocab_hash != expected_vocab_hash:
        raise ValueError(
            f"checkpoint was trained against vocabulary {vocab_hash}, "
            f"got {expected_vocab_hash}"
        )
    config = ModelConfig.from_json(header["config"])

    offset = 8 + head_len
    blocks = {}
    for block in header["blocks"]:
        shape = tuple(block["shape"])
        n_items = int(np.prod(shape)) if shape else 1
        raw = np.frombuffer(data, dtype="<f4", count=n_items, offset=offset)
        offset += n_items * 4
        blocks[block["name"]] = raw.reshape(shape).astype(np.float64)

    if word_embeddings is None:
        vecs = blocks["word_emb"]
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
        word_embeddings = EmbeddingMatrix(vectors=vecs / norms)
    model = TopicModel(config, word_embeddings)
    state = {k: torch.from_numpy(np.array(v)) for k, v in blocks.items()}
    model.load_state_dict(state)
    return model, vocab_hash
