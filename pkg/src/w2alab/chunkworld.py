"""ChunkWorld: a deterministic 2D manipulation environment.

A gripper moves in the unit square with a bounded per-step displacement and
aperture change. Closing near the object attaches it; opening releases it.
A scripted proportional-controller expert solves the four tasks and produces
the demonstration data for the rest of the pipeline.

The expert signals completion of non-grasping skill steps with a brief
aperture "squeeze" (down to ~0.05, above the attach threshold), so each
atomic skill leaves exactly one closure excursion on the width trace. This is
what makes downstream gripper-trace segmentation line up one contact run per
schema step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import PlannerError
from .numerics import Rng

W_OPEN = 0.08
ACTION_BOUND_XY = 0.05
ACTION_BOUND_W = 0.02

TASKS = ("reach", "pick", "place", "pick_and_place")

# sampling margins keep every instruction solvable inside the step budget
POS_MARGIN = (0.2, 0.8)
MIN_SEPARATION = 0.1

# expert constants
_ARRIVE_TOL = 0.012
_SQUEEZE_W = 0.05
_SQUEEZE_HOLD = 4
_RETREAT_DIST = 0.06
_GRASP_W = 0.02


@dataclass(frozen=True)
class EpisodeSpec:
    chunk_count: int = 12
    chunk_size: int = 4
    grasp_radius: float = 0.03
    goal_radius: float = 0.05
    grasp_aperture_threshold: float = 0.04

    @property
    def horizon(self) -> int:
        return self.chunk_count * self.chunk_size


@dataclass(frozen=True)
class SimState:
    gripper_pos: tuple[float, float]
    aperture: float
    object_pos: tuple[float, float]
    attached: bool
    step_index: int


@dataclass(frozen=True)
class ActionVec:
    dgx: float
    dgy: float
    dw: float


@dataclass(frozen=True)
class Instruction:
    task: str
    object_start: tuple[float, float]
    goal: tuple[float, float]

    def __post_init__(self):
        if self.task not in TASKS:
            raise PlannerError(f"unknown task {self.task!r}")

    @property
    def encoded(self) -> np.ndarray:
        """One-hot task ++ object_start ++ goal, length 8."""
        vec = np.zeros(8)
        vec[TASKS.index(self.task)] = 1.0
        vec[4:6] = self.object_start
        vec[6:8] = self.goal
        return vec


@dataclass(frozen=True)
class GripperTrace:
    w0: float
    widths: tuple[float, ...]


def _clip(x: float, bound: float) -> float:
    return -bound if x < -bound else (bound if x > bound else x)


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


def _dist(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def step(s: SimState, a: ActionVec, spec: EpisodeSpec = EpisodeSpec()) -> SimState:
    """Advance one low-level step; total on valid states."""
    gx = _clamp01(s.gripper_pos[0] + _clip(a.dgx, ACTION_BOUND_XY))
    gy = _clamp01(s.gripper_pos[1] + _clip(a.dgy, ACTION_BOUND_XY))
    w = s.aperture + _clip(a.dw, ACTION_BOUND_W)
    w = 0.0 if w < 0.0 else (W_OPEN if w > W_OPEN else w)

    attached = s.attached
    obj = s.object_pos
    if attached and w >= spec.grasp_aperture_threshold:
        attached = False
    elif (not attached and w < spec.grasp_aperture_threshold
          and _dist((gx, gy), obj) <= spec.grasp_radius):
        attached = True
    if attached:
        obj = (gx, gy)
    return SimState((gx, gy), w, obj, attached, s.step_index + 1)


def success(s: SimState, instr: Instruction, spec: EpisodeSpec = EpisodeSpec()) -> bool:
    if instr.task == "reach":
        return _dist(s.gripper_pos, instr.goal) <= spec.goal_radius
    if instr.task == "pick":
        return s.attached
    # place and pick_and_place
    return (not s.attached) and _dist(s.object_pos, instr.goal) <= spec.goal_radius


def state_vector(s: SimState, spec: EpisodeSpec) -> np.ndarray:
    """Policy observation: positions, aperture, attachment, episode phase."""
    p = s.step_index / spec.horizon
    return np.array([s.gripper_pos[0], s.gripper_pos[1], s.aperture,
                     s.object_pos[0], s.object_pos[1],
                     1.0 if s.attached else 0.0, p, 1.0 - p])


def initial_state_for(instr: Instruction, gripper_pos: tuple[float, float] | None = None) -> SimState:
    """Canonical episode start; place tasks begin holding the object."""
    if instr.task == "place":
        pos = instr.object_start
        return SimState(pos, _GRASP_W, pos, True, 0)
    pos = gripper_pos if gripper_pos is not None else (0.5, 0.5)
    return SimState(pos, W_OPEN, instr.object_start, False, 0)


def sample_episode(task: str, rng: Rng,
                   spec: EpisodeSpec = EpisodeSpec()) -> tuple[SimState, Instruction]:
    """Random solvable instruction plus its initial state."""
    lo, hi = POS_MARGIN
    gripper = (rng.uniform(lo, hi), rng.uniform(lo, hi))
    obj = (rng.uniform(lo, hi), rng.uniform(lo, hi))
    while True:
        goal = (rng.uniform(lo, hi), rng.uniform(lo, hi))
        if _dist(obj, goal) >= MIN_SEPARATION:
            break
    instr = Instruction(task, obj, goal)
    return initial_state_for(instr, gripper), instr


def _toward(src: tuple[float, float], dst: tuple[float, float]) -> tuple[float, float]:
    return (_clip(dst[0] - src[0], ACTION_BOUND_XY),
            _clip(dst[1] - src[1], ACTION_BOUND_XY))


def _open_toward(w: float, target: float) -> float:
    return _clip(target - w, ACTION_BOUND_W)


class _Expert:
    """Stage machine for one rollout. Every stage emits proportional control
    toward a position target and an aperture target, so the controller
    station-keeps against action jitter instead of drifting on zero actions."""

    def __init__(self, instr: Instruction, spec: EpisodeSpec):
        self.instr = instr
        self.spec = spec
        self.stage = "approach" if instr.task != "place" else "transport"
        self.hold_left = _SQUEEZE_HOLD
        self.hold_pos: tuple[float, float] | None = None

    def act(self, s: SimState) -> tuple[float, float, float]:
        task = self.instr.task
        goal = self.instr.goal
        if self.stage == "approach":
            target = goal if task == "reach" else s.object_pos
            if _dist(s.gripper_pos, target) <= _ARRIVE_TOL:
                if task == "reach":
                    self.stage = "squeeze"
                    self.hold_pos = goal
                else:
                    self.stage = "close"
            else:
                dx, dy = _toward(s.gripper_pos, target)
                return dx, dy, _open_toward(s.aperture, W_OPEN)
        if self.stage == "close":
            if s.attached and s.aperture <= _GRASP_W:
                self.stage = "hold" if task == "pick" else "transport"
            else:
                dx, dy = _toward(s.gripper_pos, s.object_pos)
                return dx, dy, _open_toward(s.aperture, _GRASP_W)
        if self.stage == "hold":
            dx, dy = _toward(s.gripper_pos, s.object_pos)
            return dx, dy, _open_toward(s.aperture, _GRASP_W)
        if self.stage == "transport":
            if _dist(s.gripper_pos, goal) <= _ARRIVE_TOL:
                self.stage = "release"
            else:
                dx, dy = _toward(s.gripper_pos, goal)
                return dx, dy, _open_toward(s.aperture, _GRASP_W)
        if self.stage == "release":
            if s.aperture < W_OPEN:
                dx, dy = _toward(s.gripper_pos, goal)
                return dx, dy, _open_toward(s.aperture, W_OPEN)
            if task == "place":
                self.stage = "idle"
                self.hold_pos = s.gripper_pos
            else:
                self.stage = "retreat"
                away_y = 0.12 if s.gripper_pos[1] <= 0.5 else -0.12
                self.hold_pos = (s.gripper_pos[0], _clamp01(s.gripper_pos[1] + away_y))
        if self.stage == "retreat":
            if (_dist(s.gripper_pos, self.hold_pos) <= _ARRIVE_TOL
                    and _dist(s.gripper_pos, s.object_pos) >= _RETREAT_DIST):
                self.stage = "squeeze"
            else:
                dx, dy = _toward(s.gripper_pos, self.hold_pos)
                return dx, dy, _open_toward(s.aperture, W_OPEN)
        if self.stage == "squeeze":
            dx, dy = _toward(s.gripper_pos, self.hold_pos)
            if s.aperture > _SQUEEZE_W:
                return dx, dy, _open_toward(s.aperture, _SQUEEZE_W)
            if self.hold_left > 0:
                self.hold_left -= 1
                return dx, dy, _open_toward(s.aperture, _SQUEEZE_W)
            self.stage = "reopen"
        if self.stage == "reopen":
            dx, dy = _toward(s.gripper_pos, self.hold_pos)
            if s.aperture < W_OPEN:
                return dx, dy, _open_toward(s.aperture, W_OPEN)
            self.stage = "idle"
        dx, dy = _toward(s.gripper_pos, self.hold_pos) if self.hold_pos else (0.0, 0.0)
        wt = _GRASP_W if task == "pick" else W_OPEN
        return dx, dy, _open_toward(s.aperture, wt)


def expert_rollout(instr: Instruction, spec: EpisodeSpec, rng: Rng,
                   sigma: float = 0.0,
                   initial_state: SimState | None = None,
                   ) -> tuple[list[SimState], np.ndarray, GripperTrace]:
    """Scripted expert episode of exactly ``spec.horizon`` actions.

    Returns the visited states (horizon + 1 of them), the executed action
    sequence [horizon, 3] (post-jitter, pre-clip values as commanded), and the
    aperture trace for segmentation.
    """
    for value in (*instr.object_start, *instr.goal):
        if not 0.05 <= value <= 0.95:
            raise PlannerError(f"instruction geometry {value} outside solvable margins")
    s = initial_state if initial_state is not None else initial_state_for(instr)
    expert = _Expert(instr, spec)
    states = [s]
    actions = np.zeros((spec.horizon, 3))
    for k in range(spec.horizon):
        dx, dy, dw = expert.act(s)
        if sigma > 0.0:
            noise = rng.normal((3,), scale=sigma)
            dx, dy, dw = dx + noise[0], dy + noise[1], dw + noise[2]
        dx = _clip(dx, ACTION_BOUND_XY)
        dy = _clip(dy, ACTION_BOUND_XY)
        dw = _clip(dw, ACTION_BOUND_W)
        actions[k] = (dx, dy, dw)
        s = step(s, ActionVec(dx, dy, dw), spec)
        states.append(s)
    trace = GripperTrace(W_OPEN, tuple(st.aperture for st in states))
    return states, actions, trace
