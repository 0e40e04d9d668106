"""Frozen toy imagination engine.

Given an initial state and instruction it rolls its internal scripted expert,
summarizes each chunk of the rollout, and projects the summaries through a
fixed random feature map into spatial latent grids. The same feature pathway
encodes ground-truth rollouts (``encode_render``), so imagined and rendered
latents live in one space. Controllable corruptions emulate world-model
hallucination failure modes: entrywise latent noise (post-encoding) and
object dropout (pre-encoding, the summary "forgets" the object).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .chunkworld import EpisodeSpec, Instruction, SimState, expert_rollout
from .errors import ContractError, DimensionError
from .numerics import ParameterRecord, Rng, Tensor

FEATURE_SEED = 7
FEATURE_HIDDEN = 64
SUMMARY_DIM = 9
LATENT_SHAPE = (4, 6, 6)
LATENT_SIZE = 144

ARTIFACT_MODES = ("none", "latent_noise", "object_dropout")


@dataclass(frozen=True)
class ArtifactConfig:
    mode: str = "none"
    noise_sigma: float = 0.0
    dropout_prob: float = 0.0

    def __post_init__(self):
        if self.mode not in ARTIFACT_MODES:
            raise ContractError(f"unknown artifact mode {self.mode!r}")
        if self.noise_sigma < 0 or not 0.0 <= self.dropout_prob <= 1.0:
            raise ContractError("invalid artifact parameters")


@dataclass(frozen=True)
class ImaginedRollout:
    latents: np.ndarray                 # [T, C, H, W]
    internal_states: tuple[SimState, ...]   # oracle-only: hidden expert rollout
    internal_actions: np.ndarray        # oracle-only: [T*M, 3]


def _init_feature_map() -> ParameterRecord:
    # wide first layer + zero output bias keep chunk latents well spread in
    # cosine space (a shared additive offset would push all cosines toward 1)
    rng = Rng(FEATURE_SEED, ("feature_map",))
    params = ParameterRecord()
    params.add("fm.fc1.w", Tensor(rng.normal((SUMMARY_DIM, FEATURE_HIDDEN),
                                             scale=2.0 / math.sqrt(SUMMARY_DIM))))
    params.add("fm.fc1.b", Tensor(rng.normal((FEATURE_HIDDEN,), scale=0.5)))
    params.add("fm.fc2.w", Tensor(rng.normal((FEATURE_HIDDEN, LATENT_SIZE),
                                             scale=1.0 / math.sqrt(FEATURE_HIDDEN))))
    params.add("fm.fc2.b", Tensor(np.zeros(LATENT_SIZE)))
    return params.freeze()


class ImaginationEngine:
    """Frozen planner+encoder standing in for a generative world model."""

    def __init__(self, spec: EpisodeSpec | None = None,
                 artifact: ArtifactConfig | None = None, noise_seed: int = 0):
        self.spec = spec or EpisodeSpec()
        self.artifact = artifact or ArtifactConfig()
        self.noise_seed = noise_seed
        self.feature_map = _init_feature_map()
        self._artifact_rng = Rng(noise_seed, ("wm-artifact",))

    def with_artifact(self, artifact: ArtifactConfig) -> "ImaginationEngine":
        out = ImaginationEngine(self.spec, artifact, self.noise_seed)
        return out

    def _project(self, summaries: np.ndarray) -> np.ndarray:
        p = self.feature_map
        h = np.tanh(summaries @ p["fm.fc1.w"].array + p["fm.fc1.b"].array)
        flat = h @ p["fm.fc2.w"].array + p["fm.fc2.b"].array
        return flat.reshape(len(summaries), *LATENT_SHAPE)


def chunk_summary(states_chunk: list[SimState]) -> np.ndarray:
    """Summary of one chunk's M states: final pose fields plus the mean
    within-chunk state delta (the effective action)."""
    final = states_chunk[-1]
    deltas = np.zeros(3)
    if len(states_chunk) > 1:
        arr = np.array([[s.gripper_pos[0], s.gripper_pos[1], s.aperture]
                        for s in states_chunk])
        deltas = np.diff(arr, axis=0).mean(axis=0)
    return np.array([final.gripper_pos[0], final.gripper_pos[1], final.aperture,
                     final.object_pos[0], final.object_pos[1],
                     1.0 if final.attached else 0.0,
                     deltas[0], deltas[1], deltas[2]])


def rollout_summaries(states: list[SimState], chunk_size: int) -> np.ndarray:
    """Per-chunk summaries of a rollout with states[0] the initial state."""
    t = (len(states) - 1) // chunk_size
    return np.stack([chunk_summary(states[1 + k * chunk_size: 1 + (k + 1) * chunk_size])
                     for k in range(t)])


def encode_render(engine: ImaginationEngine, states_chunk: list[SimState]) -> np.ndarray:
    """Latent grid for one ground-truth chunk of exactly M states."""
    if len(states_chunk) != engine.spec.chunk_size:
        raise DimensionError(f"chunk must have {engine.spec.chunk_size} states, "
                             f"got {len(states_chunk)}")
    return engine._project(chunk_summary(states_chunk)[None, :])[0]


def encode_render_rollout(engine: ImaginationEngine, states: list[SimState]) -> np.ndarray:
    """All chunk latents of a ground-truth rollout, [T, C, H, W]."""
    return engine._project(rollout_summaries(states, engine.spec.chunk_size))


def imagine(engine: ImaginationEngine, s1: SimState, instr: Instruction,
            chunk_count: int | None = None, rng: Rng | None = None) -> ImaginedRollout:
    """Imagined latent trajectory from (s1, instruction).

    With artifact mode "none" this is a pure function of its arguments; the
    corruption modes draw from ``rng`` (or the engine's own stream).
    """
    t = chunk_count if chunk_count is not None else engine.spec.chunk_count
    if t < 1:
        raise ContractError("need at least one chunk")
    spec = replace(engine.spec, chunk_count=t)
    planner_rng = Rng(engine.noise_seed, ("wm-planner",))
    states, actions, _ = expert_rollout(instr, spec, planner_rng, sigma=0.0,
                                        initial_state=s1)
    summaries = rollout_summaries(states, spec.chunk_size)

    art = engine.artifact
    draw = rng or engine._artifact_rng
    if art.mode == "object_dropout" and art.dropout_prob > 0.0:
        dropped = draw.uniform(0.0, 1.0, (t,)) < art.dropout_prob
        summaries = summaries.copy()
        summaries[dropped, 3:5] = 0.0
    latents = engine._project(summaries)
    if art.mode == "latent_noise" and art.noise_sigma > 0.0:
        latents = latents + draw.normal(latents.shape, scale=art.noise_sigma)
    return ImaginedRollout(latents, tuple(states), actions)
