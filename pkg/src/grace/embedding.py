"""Contrastive program embeddings.

An MLP encoder maps z-scored static features to embeddings; a projection head
maps embeddings to the space where the contrastive loss is computed. Positive
pairs are a program and a variant obtained by running a random pass sequence
on it; every other sample in the batch is a negative. Similarities are a
Gaussian kernel on squared distances and the per-sample loss is a softmax
cross-entropy over those similarities with the self term masked out.

Everything is plain numpy with hand-written backprop.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .backend import Backend, BackendError, ProgramHandle

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class EncoderParams:
    """Encoder and projection-head weights plus the feature normalization."""

    encoder: list[tuple[np.ndarray, np.ndarray]]
    projection: list[tuple[np.ndarray, np.ndarray]]
    mean: np.ndarray
    scale: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.encoder[0][0].shape[0]

    @property
    def embed_dim(self) -> int:
        return self.encoder[-1][0].shape[1]

    def arrays(self) -> list[np.ndarray]:
        """Trainable arrays in a fixed order (views, not copies)."""
        return [a for layer in self.encoder + self.projection for a in layer]

    def copy(self) -> "EncoderParams":
        cp = lambda layers: [(w.copy(), b.copy()) for w, b in layers]  # noqa: E731
        return EncoderParams(cp(self.encoder), cp(self.projection), self.mean.copy(), self.scale.copy())

    def to_dict(self) -> dict:
        def layers(ls):
            return [{"in": int(w.shape[0]), "out": int(w.shape[1]),
                     "weight": w.tolist(), "bias": b.tolist()} for w, b in ls]
        return {"encoder": layers(self.encoder), "projection": layers(self.projection),
                "mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderParams":
        def layers(ls):
            out = []
            for layer in ls:
                w = np.array(layer["weight"], dtype=float).reshape(layer["in"], layer["out"])
                out.append((w, np.array(layer["bias"], dtype=float).reshape(layer["out"])))
            return out
        return cls(layers(d["encoder"]), layers(d["projection"]),
                   np.array(d["mean"], dtype=float), np.array(d["scale"], dtype=float))


def init_params(dims_encoder: Sequence[int], dims_projection: Sequence[int],
                rng: np.random.Generator, mean=None, scale=None,
                proj_scale: float = 1.0) -> EncoderParams:
    """He-uniform initialization; ``dims_projection[0]`` must equal ``dims_encoder[-1]``.

    ``proj_scale`` shrinks the projection head so that initial pairwise
    distances sit near the kernel temperature instead of saturating it.
    """
    if dims_projection[0] != dims_encoder[-1]:
        raise ValueError("projection input must match encoder output")

    def make(dims, gain=1.0):
        layers = []
        for a, b in zip(dims[:-1], dims[1:]):
            lim = gain * np.sqrt(6.0 / a)
            layers.append((rng.uniform(-lim, lim, size=(a, b)), np.zeros(b)))
        return layers

    d = dims_encoder[0]
    mean = np.zeros(d) if mean is None else np.asarray(mean, dtype=float)
    scale = np.ones(d) if scale is None else np.asarray(scale, dtype=float)
    return EncoderParams(make(dims_encoder), make(dims_projection, proj_scale), mean, scale)


def fit_normalization(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    return mean, np.where(std > 0, std, 1.0)


def _mlp_forward(layers, x):
    """Forward pass with ReLU between layers (none after the last). Returns output and cache."""
    cache = []
    h = x
    for i, (w, b) in enumerate(layers):
        pre = h @ w + b
        cache.append((h, pre))
        h = pre if i == len(layers) - 1 else np.maximum(pre, 0.0)
    return h, cache


def _mlp_backward(layers, cache, grad_out):
    grads = []
    g = grad_out
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        h_in, pre = cache[i]
        if i != len(layers) - 1:
            g = g * (pre > 0)
        grads.append((h_in.T @ g, g.sum(axis=0)))
        g = g @ w.T
    grads.reverse()
    return grads, g


def normalize(params: EncoderParams, x: np.ndarray) -> np.ndarray:
    return (np.asarray(x, dtype=float) - params.mean) / params.scale


def embed(params: EncoderParams, x: np.ndarray) -> np.ndarray:
    """Encoder-only forward pass on raw features (one vector or a batch)."""
    h, _ = _mlp_forward(params.encoder, normalize(params, x))
    return h


def similarity(z_a: np.ndarray, z_b: np.ndarray, tau: float) -> float:
    if tau <= 0:
        raise ValueError("tau must be positive")
    d = np.asarray(z_a, dtype=float) - np.asarray(z_b, dtype=float)
    return float(np.exp(-(d @ d) / tau))


def similarity_matrix(z: np.ndarray, tau: float) -> np.ndarray:
    sq = (z * z).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * z @ z.T, 0.0)
    np.fill_diagonal(d2, 0.0)
    return np.exp(-d2 / tau)


def _check_pairing(pos: np.ndarray, m: int) -> np.ndarray:
    pos = np.asarray(pos, dtype=int)
    if pos.shape != (m,):
        raise ValueError("pairing map must give one partner per vector")
    idx = np.arange(m)
    if np.any(pos < 0) or np.any(pos >= m) or np.any(pos == idx) or np.any(pos[pos] != idx):
        raise ValueError("every vector needs exactly one positive partner")
    return pos


def contrastive_loss(z: np.ndarray, pos: Sequence[int], tau: float) -> tuple[float, np.ndarray]:
    """Mean contrastive loss over all 2N vectors and its gradient w.r.t. ``z``.

    ``pos[a]`` is the index of the positive partner of vector ``a``. Only the
    self term S_aa is dropped from each softmax denominator.
    """
    z = np.asarray(z, dtype=float)
    m = z.shape[0]
    pos = _check_pairing(pos, m)
    s = similarity_matrix(z, tau)
    logits = s.copy()
    np.fill_diagonal(logits, -np.inf)
    row_max = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - row_max)
    denom = e.sum(axis=1, keepdims=True)
    lse = (np.log(denom) + row_max)[:, 0]
    idx = np.arange(m)
    per_sample = lse - s[idx, pos]
    loss = float(per_sample.mean())

    # dL/dS, then through the Gaussian kernel
    g = e / denom
    g[idx, pos] -= 1.0
    g /= m
    c = g * s
    a = c + c.T
    np.fill_diagonal(a, 0.0)
    dz = (-2.0 / tau) * (a.sum(axis=1)[:, None] * z - a @ z)
    return loss, dz


def per_sample_losses(z: np.ndarray, pos: Sequence[int], tau: float) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    pos = _check_pairing(pos, z.shape[0])
    s = similarity_matrix(z, tau)
    logits = s.copy()
    np.fill_diagonal(logits, -np.inf)
    mx = logits.max(axis=1, keepdims=True)
    lse = (np.log(np.exp(logits - mx).sum(axis=1, keepdims=True)) + mx)[:, 0]
    return lse - s[np.arange(len(pos)), pos]


def loss_and_grads(params: EncoderParams, x: np.ndarray, pos: Sequence[int],
                   tau: float) -> tuple[float, list[np.ndarray]]:
    """Loss on a batch of raw features and gradients in ``params.arrays()`` order."""
    xn = normalize(params, x)
    h, enc_cache = _mlp_forward(params.encoder, xn)
    z, proj_cache = _mlp_forward(params.projection, h)
    loss, dz = contrastive_loss(z, pos, tau)
    proj_grads, dh = _mlp_backward(params.projection, proj_cache, dz)
    enc_grads, _ = _mlp_backward(params.encoder, enc_cache, dh)
    return loss, [a for layer in enc_grads + proj_grads for a in layer]


def random_sequence(universe: Sequence[str], rng: np.random.Generator,
                    min_len: int = 1, max_len: int = 20) -> tuple[str, ...]:
    n = int(rng.integers(min_len, max_len + 1))
    return tuple(universe[i] for i in rng.integers(len(universe), size=n))


def augment(backend: Backend, p: ProgramHandle, n_variants: int, rng: np.random.Generator,
            retries: int = 5) -> list[np.ndarray]:
    """Feature vectors of ``p`` after random pass sequences (falls back to ``p`` itself)."""
    if n_variants < 1:
        raise ValueError("n_variants must be >= 1")
    universe = backend.pass_universe()
    out = []
    for _ in range(n_variants):
        for _attempt in range(retries):
            seq = random_sequence(universe, rng)
            try:
                out.append(backend.extract_features(p, seq))
                break
            except BackendError as exc:
                log.debug("augmentation of %s failed: %s", p.id, exc)
        else:
            out.append(backend.extract_features(p))
    return out


@dataclass
class TrainConfig:
    hidden: int = 64
    embed_dim: int = 32
    proj_dim: int = 16
    lr: float = 1e-2
    momentum: float = 0.9
    batch_size: int = 16
    epochs: int = 100
    tau: float = 1.0
    variants: int = 1
    proj_init_scale: float = 0.1
    seed: int = 7


@dataclass
class TrainResult:
    params: EncoderParams
    epoch_losses: list[float] = field(default_factory=list)


def train(backend: Backend, corpus: Sequence[ProgramHandle], cfg: TrainConfig) -> TrainResult:
    """Mini-batch SGD with momentum; each batch is N anchors plus N fresh variants."""
    n = cfg.batch_size
    if n < 1 or len(corpus) < 2 * n:
        raise ValueError(f"need at least {2 * n} programs for batch size {n}, got {len(corpus)}")
    rng = np.random.default_rng(cfg.seed)
    anchors = np.stack([backend.extract_features(p) for p in corpus])
    mean, scale = fit_normalization(anchors)
    params = init_params([anchors.shape[1], cfg.hidden, cfg.embed_dim],
                         [cfg.embed_dim, cfg.proj_dim], rng, mean, scale, cfg.proj_init_scale)
    velocity = [np.zeros_like(a) for a in params.arrays()]
    losses: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(corpus))
        batch_losses = []
        for start in range(0, len(order), n):
            idx = order[start:start + n]
            if len(idx) < 2:
                continue
            views = [[] for _ in range(cfg.variants)]
            for i in idx:
                for v, feats in enumerate(augment(backend, corpus[i], cfg.variants, rng)):
                    views[v].append(feats)
            for view in views:
                x = np.concatenate([anchors[idx], np.stack(view)])
                m = len(idx)
                pos = np.concatenate([np.arange(m, 2 * m), np.arange(m)])
                loss, grads = loss_and_grads(params, x, pos, cfg.tau)
                if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
                for arr, vel, g in zip(params.arrays(), velocity, grads):
                    vel *= cfg.momentum
                    vel -= cfg.lr * g
                    arr += vel
                batch_losses.append(loss)
        losses.append(float(np.mean(batch_losses)))
        log.debug("epoch %d loss %.6f", epoch, losses[-1])
    return TrainResult(params, losses)
