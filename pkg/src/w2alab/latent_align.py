"""Shared-latent-space similarities and the contrastive objective family.

The core objective is a bidirectional InfoNCE over batches of paired
video/action latent trajectories, with similarity defined as the mean cosine
over temporally aligned chunks. Three ablation variants are provided: the
unidirectional (video->action) InfoNCE, a hinge loss against the hardest
in-batch negative, and the bidirectional InfoNCE on a single whole-trajectory
cosine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateLatentError, DimensionError
from .numerics import Graph, Node, Tensor
from .numerics import ops

LATENT_DIM = 32

VARIANTS = ("bi_infonce_chunk", "uni_infonce_chunk", "marginal_chunk",
            "bi_infonce_global")


@dataclass(frozen=True)
class LatentEmbedding:
    """One chunk's point in the shared D-dimensional space."""

    values: Tensor

    def __post_init__(self):
        if len(self.values.shape) != 1:
            raise DimensionError(f"embedding must be a vector, got {self.values.shape}")


@dataclass(frozen=True)
class LatentTrajectory:
    chunks: tuple[LatentEmbedding, ...]

    def __post_init__(self):
        if not self.chunks:
            raise ContractError("trajectory needs at least one chunk")
        dims = {c.values.shape[0] for c in self.chunks}
        if len(dims) != 1:
            raise DimensionError(f"chunks disagree on dimension: {sorted(dims)}")

    @property
    def length(self) -> int:
        return len(self.chunks)

    @property
    def dim(self) -> int:
        return self.chunks[0].values.shape[0]

    def as_matrix(self) -> np.ndarray:
        return np.stack([c.values.array for c in self.chunks])

    @staticmethod
    def from_matrix(mat) -> "LatentTrajectory":
        mat = np.asarray(mat, dtype=np.float64)
        return LatentTrajectory(tuple(LatentEmbedding(Tensor(row)) for row in mat))


@dataclass(frozen=True)
class ContrastiveConfig:
    temperature: float = 0.1
    variant: str = "bi_infonce_chunk"
    margin: float = 0.2

    def __post_init__(self):
        if self.temperature <= 0:
            raise ContractError(f"temperature must be positive, got {self.temperature}")
        if self.variant not in VARIANTS:
            raise ContractError(f"unknown variant {self.variant!r}; one of {VARIANTS}")


def _check_pair(a: LatentTrajectory, b: LatentTrajectory) -> None:
    if a.length != b.length:
        raise DimensionError(f"trajectory lengths differ: {a.length} vs {b.length}")
    if a.dim != b.dim:
        raise DimensionError(f"latent dimensions differ: {a.dim} vs {b.dim}")


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateLatentError("zero-norm latent: cosine similarity undefined")
    return mat / norms


def chunk_similarity(a: LatentTrajectory, b: LatentTrajectory) -> float:
    """Mean cosine over temporally aligned chunks; symmetric, in [-1, 1]."""
    _check_pair(a, b)
    an = _unit_rows(a.as_matrix())
    bn = _unit_rows(b.as_matrix())
    return float(np.mean(np.sum(an * bn, axis=1)))


def global_similarity(a: LatentTrajectory, b: LatentTrajectory) -> float:
    """Cosine of the flattened whole trajectories."""
    _check_pair(a, b)
    av = a.as_matrix().reshape(-1)
    bv = b.as_matrix().reshape(-1)
    na, nb = np.linalg.norm(av), np.linalg.norm(bv)
    if na == 0.0 or nb == 0.0:
        raise DegenerateLatentError("zero-norm trajectory: cosine undefined")
    return float(av @ bv / (na * nb))


def _similarity_matrix_nodes(zv: Node, za: Node, variant: str) -> Node:
    """[B, T, D] x [B, T, D] -> [B, B] similarity node per the variant family."""
    b, t, d = zv.shape
    if variant == "bi_infonce_global":
        vn = ops.normalize_lastdim(ops.reshape(zv, (b, t * d)))
        an = ops.normalize_lastdim(ops.reshape(za, (b, t * d)))
        return ops.matmul(vn, ops.transpose(an, (1, 0)))
    vn = ops.normalize_lastdim(zv)
    an = ops.normalize_lastdim(za)
    per_chunk = ops.bmm(ops.transpose(vn, (1, 0, 2)), ops.transpose(an, (1, 2, 0)))
    return ops.mean_axis(per_chunk, 0)


def _infonce_direction(logits: Node, eye: np.ndarray) -> Node:
    """Mean over anchors of -log softmax at the positive entry."""
    b = logits.shape[0]
    ls = ops.log_softmax_rows(logits)
    picked = ops.sum_all(ops.mul(ls, logits.graph.constant(eye)))
    return ops.scale(picked, -1.0 / b)


def contrastive_loss_nodes(zv: Node, za: Node, cfg: ContrastiveConfig) -> Node:
    """Scalar loss node over index-aligned batches shaped [B, T, D]."""
    if len(zv.shape) != 3 or zv.shape != za.shape:
        raise DimensionError(f"batch shapes differ: {zv.shape} vs {za.shape}")
    b = zv.shape[0]
    if b < 1:
        raise ContractError("empty batch")
    g = zv.graph
    sims = _similarity_matrix_nodes(zv, za, cfg.variant)
    eye = np.eye(b)

    if cfg.variant == "marginal_chunk":
        pos = ops.sum_axis(ops.mul(sims, g.constant(eye)), 1)
        if b == 1:
            # no negatives: loss is exactly zero (kept differentiable)
            return ops.scale(ops.mean_all(pos), 0.0)
        hardest = ops.masked_rowmax(sims, ~eye.astype(bool))
        hinge = ops.relu(ops.shift(ops.sub(hardest, pos), cfg.margin))
        return ops.mean_all(hinge)

    inv_tau = 1.0 / cfg.temperature
    logits = ops.scale(sims, inv_tau)
    loss = _infonce_direction(logits, eye)
    if cfg.variant in ("bi_infonce_chunk", "bi_infonce_global"):
        loss = ops.add(loss, _infonce_direction(ops.transpose(logits, (1, 0)), eye))
    return loss


def _stack_batch(graph: Graph, trajs: list[LatentTrajectory]) -> Node:
    if not trajs:
        raise ContractError("empty batch")
    t0, d0 = trajs[0].length, trajs[0].dim
    for tr in trajs[1:]:
        if tr.length != t0 or tr.dim != d0:
            raise DimensionError("mixed trajectory shapes across batch")
    return graph.constant(np.stack([tr.as_matrix() for tr in trajs]))


def contrastive_loss(video: list[LatentTrajectory], action: list[LatentTrajectory],
                     cfg: ContrastiveConfig, graph: Graph | None = None) -> Node:
    """Loss node for index-aligned trajectory lists (pair i is the positive)."""
    if len(video) != len(action):
        raise ContractError(f"batch sizes differ: {len(video)} vs {len(action)}")
    g = graph or Graph()
    return contrastive_loss_nodes(_stack_batch(g, video), _stack_batch(g, action), cfg)


def positive_pair_similarity(zv: np.ndarray, za: np.ndarray) -> float:
    """Mean chunk similarity of the aligned pairs; arrays shaped [B, T, D]."""
    vn = _unit_rows(zv)
    an = _unit_rows(za)
    return float(np.mean(np.sum(vn * an, axis=2)))
