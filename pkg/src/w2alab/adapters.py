"""Video--action bridge: adapters, decoder, and the Stage-1 trainer.

Stage 1 learns a shared D-dimensional space over paired (video-latent,
action-chunk) trajectories with two objectives: action-chunk reconstruction
through the decoder (mean squared error over the raw decoder output) and the
contrastive alignment loss. Minibatches mix hard negatives (same task, other
demo) with easy negatives (other tasks) at a configured ratio. After training
the bundle is frozen; Stage 2 only reads it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .chunkworld import ACTION_BOUND_W, ACTION_BOUND_XY
from .errors import (AlignmentError, ChunkingError, ConfigurationError,
                     ContractError, DimensionError)
from .latent_align import (ContrastiveConfig, LatentTrajectory,
                           contrastive_loss_nodes, positive_pair_similarity)
from .layers import init_conv, init_linear, linear
from .numerics import (AdamState, Graph, ParameterRecord, Rng, Tensor,
                       adam_step, backward, merge_records)
from .numerics import ops
from .worldmodel import LATENT_SHAPE

log = logging.getLogger(__name__)

ACTION_DIM = 3
CHUNK_SIZE = 4
CHUNK_FLAT = ACTION_DIM * CHUNK_SIZE
LATENT_DIM = 32
_GN_GROUPS = 8


@dataclass(frozen=True)
class VideoLatentChunk:
    grid: Tensor

    def __post_init__(self):
        if self.grid.shape != LATENT_SHAPE:
            raise DimensionError(f"latent grid must be {LATENT_SHAPE}, got {self.grid.shape}")


@dataclass(frozen=True)
class ActionChunk:
    actions: Tensor

    def __post_init__(self):
        if self.actions.shape != (CHUNK_SIZE, ACTION_DIM):
            raise DimensionError(f"action chunk must be {(CHUNK_SIZE, ACTION_DIM)}, "
                                 f"got {self.actions.shape}")


@dataclass
class AdapterBundle:
    video_adapter: ParameterRecord
    action_adapter: ParameterRecord
    action_decoder: ParameterRecord
    latent_dim: int = LATENT_DIM
    chunk_size: int = CHUNK_SIZE

    @property
    def frozen(self) -> bool:
        return (self.video_adapter.frozen and self.action_adapter.frozen
                and self.action_decoder.frozen)

    def freeze(self) -> "AdapterBundle":
        self.video_adapter.freeze()
        self.action_adapter.freeze()
        self.action_decoder.freeze()
        return self

    def merged(self) -> ParameterRecord:
        return merge_records([self.video_adapter, self.action_adapter,
                              self.action_decoder])


def init_adapter_bundle(rng: Rng) -> AdapterBundle:
    va = ParameterRecord()
    r = rng.split("video_adapter")
    init_conv(va, r, "bv.conv1", 64, LATENT_SHAPE[0], 3)
    init_conv(va, r, "bv.conv2", 128, 64, 3)
    init_linear(va, r, "bv.fc", 128, LATENT_DIM)

    aa = ParameterRecord()
    r = rng.split("action_adapter")
    init_linear(aa, r, "ba.fc1", CHUNK_FLAT, 128)
    init_linear(aa, r, "ba.fc2", 128, 64)
    init_linear(aa, r, "ba.fc3", 64, LATENT_DIM)

    da = ParameterRecord()
    r = rng.split("action_decoder")
    init_linear(da, r, "da.fc1", LATENT_DIM, 64)
    init_linear(da, r, "da.fc2", 64, 128)
    init_linear(da, r, "da.fc3", 128, CHUNK_FLAT)
    return AdapterBundle(va, aa, da)


# ---------------------------------------------------------------------------
# network applications (graph nodes)
# ---------------------------------------------------------------------------

def video_adapter_apply(nodes, x):
    """x [N, C, H, W] -> [N, D]."""
    h = ops.conv2d(x, nodes["bv.conv1.w"], nodes["bv.conv1.b"], stride=2, pad=1)
    h = ops.gelu(ops.groupnorm(h, _GN_GROUPS))
    h = ops.conv2d(h, nodes["bv.conv2.w"], nodes["bv.conv2.b"], stride=2, pad=1)
    h = ops.gelu(ops.groupnorm(h, _GN_GROUPS))
    h = ops.avgpool_hw(h)
    return linear(nodes, "bv.fc", h)


def action_adapter_apply(nodes, x):
    """x [N, M*A] -> [N, D]."""
    h = ops.gelu(linear(nodes, "ba.fc1", x))
    h = ops.gelu(linear(nodes, "ba.fc2", h))
    return linear(nodes, "ba.fc3", h)


def action_decoder_apply(nodes, z):
    """z [N, D] -> raw chunk rows [N, M*A] (no clipping)."""
    h = ops.gelu(linear(nodes, "da.fc1", z))
    h = ops.gelu(linear(nodes, "da.fc2", h))
    return linear(nodes, "da.fc3", h)


def _value_apply(record: ParameterRecord, apply_fn, x: np.ndarray) -> np.ndarray:
    g = Graph()
    nodes = g.bind(record, trainable=False)
    return apply_fn(nodes, g.constant(x)).value


def encode_video_arrays(bundle: AdapterBundle, grids: np.ndarray) -> np.ndarray:
    """grids [N, C, H, W] -> embeddings [N, D]."""
    if grids.ndim != 4 or grids.shape[1:] != LATENT_SHAPE:
        raise ConfigurationError(f"expected [N, {LATENT_SHAPE}] grids, got {grids.shape}")
    return _value_apply(bundle.video_adapter, video_adapter_apply, grids)


def encode_action_arrays(bundle: AdapterBundle, chunks: np.ndarray) -> np.ndarray:
    """chunks [N, M*A] -> embeddings [N, D]."""
    return _value_apply(bundle.action_adapter, action_adapter_apply, chunks)


def decode_latent_arrays(bundle: AdapterBundle, z: np.ndarray) -> np.ndarray:
    """z [N, D] -> raw decoded chunk rows [N, M*A]."""
    return _value_apply(bundle.action_decoder, action_decoder_apply, z)


def clip_action_rows(rows: np.ndarray) -> np.ndarray:
    """Clip [N, 3] action rows to the world's action bounds."""
    out = rows.copy()
    out[:, 0] = np.clip(out[:, 0], -ACTION_BOUND_XY, ACTION_BOUND_XY)
    out[:, 1] = np.clip(out[:, 1], -ACTION_BOUND_XY, ACTION_BOUND_XY)
    out[:, 2] = np.clip(out[:, 2], -ACTION_BOUND_W, ACTION_BOUND_W)
    return out


# ---------------------------------------------------------------------------
# public encode/decode surface
# ---------------------------------------------------------------------------

def encode_video(bundle: AdapterBundle, chunks) -> LatentTrajectory:
    """Order-preserving per-chunk embedding of video latent chunks."""
    if len(chunks) == 0:
        raise ContractError("empty chunk sequence")
    grids = np.stack([c.grid.array if isinstance(c, VideoLatentChunk) else np.asarray(c)
                      for c in chunks])
    return LatentTrajectory.from_matrix(encode_video_arrays(bundle, grids))


def chunk_action_sequence(actions: np.ndarray, chunk_size: int = CHUNK_SIZE) -> np.ndarray:
    """[N, A] -> [T, M*A]; N must divide into whole chunks."""
    actions = np.asarray(actions, dtype=np.float64)
    if actions.ndim != 2 or actions.shape[1] != ACTION_DIM:
        raise DimensionError(f"expected [N, {ACTION_DIM}] actions, got {actions.shape}")
    if len(actions) == 0 or len(actions) % chunk_size:
        raise ChunkingError(f"length {len(actions)} not divisible by chunk size {chunk_size}")
    return actions.reshape(-1, chunk_size * ACTION_DIM)


def encode_actions(bundle: AdapterBundle, actions: np.ndarray) -> LatentTrajectory:
    """Chunk a low-level action sequence and embed each chunk."""
    flat = chunk_action_sequence(actions, bundle.chunk_size)
    return LatentTrajectory.from_matrix(encode_action_arrays(bundle, flat))


def decode_actions(bundle: AdapterBundle, z: LatentTrajectory) -> np.ndarray:
    """Unroll latents back to [T*M, A] low-level actions, clipped to bounds."""
    if z.dim != bundle.latent_dim:
        raise DimensionError(f"latent dim {z.dim} != bundle dim {bundle.latent_dim}")
    raw = decode_latent_arrays(bundle, z.as_matrix())
    return clip_action_rows(raw.reshape(-1, ACTION_DIM))


# ---------------------------------------------------------------------------
# Stage-1 training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Stage1Demo:
    """One demonstration prepared for Stage 1: per-chunk video latents plus
    the aligned low-level action sequence."""
    video_latents: np.ndarray   # [T, C, H, W]
    actions: np.ndarray         # [T*M, A]
    task: str

    def __post_init__(self):
        t = len(self.video_latents)
        if self.actions.shape != (t * CHUNK_SIZE, ACTION_DIM):
            raise AlignmentError(
                f"demo has {t} video chunks but {self.actions.shape} actions")

    @property
    def chunk_count(self) -> int:
        return len(self.video_latents)

    @property
    def action_chunks(self) -> np.ndarray:
        return self.actions.reshape(-1, CHUNK_FLAT)


@dataclass
class Stage1Config:
    batch_size: int = 16
    hard_negative_ratio: float = 0.25
    steps: int = 3000
    lr: float = 1e-3
    seed: int = 0
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    holdout_fraction: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.hard_negative_ratio <= 1.0:
            raise ConfigurationError("hard_negative_ratio must be in [0, 1]")
        if self.batch_size < 2:
            raise ConfigurationError("batch size must be >= 2 for negatives")


@dataclass
class Stage1Result:
    bundle: AdapterBundle
    metrics: list[tuple]          # (step, l_recon, l_contrastive, pos_sim)
    train_indices: list[int]
    holdout_indices: list[int]


def holdout_split(n: int, fraction: float, rng: Rng) -> tuple[list[int], list[int]]:
    perm = rng.permutation(n)
    n_hold = max(1, int(round(fraction * n))) if fraction > 0 else 0
    hold = sorted(int(i) for i in perm[:n_hold])
    train = sorted(int(i) for i in perm[n_hold:])
    return train, hold


def _compose_batch(demos, train_idx, by_task, cfg, rng) -> list[int]:
    b = cfg.batch_size
    anchor = train_idx[rng.integers(0, len(train_idx))]
    task = demos[anchor].task
    n_hard = math.ceil(cfg.hard_negative_ratio * (b - 1))
    same = [i for i in by_task[task] if i != anchor]
    other = [i for i in train_idx if demos[i].task != task]
    if not other and cfg.hard_negative_ratio < 1.0:
        other = same
    picks = [anchor]
    if n_hard and same:
        sel = rng.choice(len(same), size=n_hard, replace=len(same) < n_hard)
        picks += [same[int(i)] for i in sel]
    fill = b - len(picks)
    pool = other or same
    sel = rng.choice(len(pool), size=fill, replace=len(pool) < fill)
    picks += [pool[int(i)] for i in sel]
    return picks


def recon_loss_nodes(decoded, target_node):
    diff = ops.sub(decoded, target_node)
    return ops.mean_all(ops.mul(diff, diff))


def stage1_train(demos: list[Stage1Demo], cfg: Stage1Config) -> Stage1Result:
    """Train the bundle on paired trajectories; returns it frozen."""
    if not demos:
        raise ContractError("empty demo dataset")
    t0 = demos[0].chunk_count
    for d in demos:
        if d.chunk_count != t0:
            raise AlignmentError("demos disagree on chunk count")
    tasks = sorted({d.task for d in demos})
    if len(tasks) < 2 and cfg.hard_negative_ratio < 1.0:
        log.warning("single-task dataset: all negatives are hard negatives")

    rng = Rng(cfg.seed, ("stage1",))
    bundle = init_adapter_bundle(rng.split("init"))
    train_idx, hold_idx = holdout_split(len(demos), cfg.holdout_fraction,
                                        rng.split("holdout"))
    if len(tasks) >= 2 and len({demos[i].task for i in train_idx}) < 2:
        raise ConfigurationError("train split lost task diversity; add demos")
    by_task = {t: [i for i in train_idx if demos[i].task == t] for t in tasks}

    params = bundle.merged()
    state = AdamState.init(params, lr=cfg.lr)
    batch_rng = rng.split("batches")
    metrics: list[tuple] = []

    for step_i in range(1, cfg.steps + 1):
        picks = _compose_batch(demos, train_idx, by_task, cfg, batch_rng)
        grids = np.concatenate([demos[i].video_latents for i in picks])
        chunks = np.concatenate([demos[i].action_chunks for i in picks])

        g = Graph()
        nodes = g.bind(params)
        zv = video_adapter_apply(nodes, g.constant(grids))
        za = action_adapter_apply(nodes, g.constant(chunks))
        decoded = action_decoder_apply(nodes, za)
        l_recon = recon_loss_nodes(decoded, g.constant(chunks))
        b, t = len(picks), t0
        zv3 = ops.reshape(zv, (b, t, LATENT_DIM))
        za3 = ops.reshape(za, (b, t, LATENT_DIM))
        l_con = contrastive_loss_nodes(zv3, za3, cfg.contrastive)
        total = ops.add(l_recon, l_con)
        grads = backward(g, total)
        adam_step(params, grads, state)

        pos = positive_pair_similarity(zv3.value, za3.value)
        metrics.append((step_i, float(l_recon.value[0]), float(l_con.value[0]), pos))

    bundle.freeze()
    return Stage1Result(bundle, metrics, train_idx, hold_idx)


def heldout_metrics(bundle: AdapterBundle, demos: list[Stage1Demo]) -> tuple[float, float]:
    """(reconstruction MSE, mean positive-pair chunk similarity) on demos."""
    if not demos:
        raise ContractError("no held-out demos")
    grids = np.concatenate([d.video_latents for d in demos])
    chunks = np.concatenate([d.action_chunks for d in demos])
    zv = encode_video_arrays(bundle, grids)
    za = encode_action_arrays(bundle, chunks)
    decoded = decode_latent_arrays(bundle, za)
    mse = float(np.mean((decoded - chunks) ** 2))
    t = demos[0].chunk_count
    pos = positive_pair_similarity(zv.reshape(-1, t, LATENT_DIM),
                                   za.reshape(-1, t, LATENT_DIM))
    return mse, pos
