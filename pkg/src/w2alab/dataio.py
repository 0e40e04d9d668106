"""Demonstration records, JSONL persistence, and metric CSV files.

DemoRecord lines are serialized with a fixed key order and compact
separators, so identical data always produces identical bytes. Floats go
through json's repr (shortest round-trip), which makes replaying stored
actions bit-exact.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chunkworld import (EpisodeSpec, GripperTrace, Instruction, SimState,
                         W_OPEN)
from .errors import FormatError

log = logging.getLogger(__name__)

_DEMO_KEYS = ("demo_id", "task", "object_start", "goal", "states", "actions",
              "widths", "w0")


@dataclass
class DemoRecord:
    demo_id: int
    task: str
    object_start: tuple[float, float]
    goal: tuple[float, float]
    states: list[list[float]]    # [gx, gy, w, ox, oy, attached]
    actions: list[list[float]]   # [dgx, dgy, dw]
    widths: list[float]
    w0: float

    def validate(self) -> None:
        n = len(self.actions)
        if len(self.states) != n + 1 or len(self.widths) != n + 1:
            raise FormatError(
                f"demo {self.demo_id}: {n} actions need {n + 1} states/widths, "
                f"got {len(self.states)}/{len(self.widths)}")

    @property
    def instruction(self) -> Instruction:
        return Instruction(self.task, tuple(self.object_start), tuple(self.goal))

    def sim_states(self) -> list[SimState]:
        out = []
        for i, row in enumerate(self.states):
            out.append(SimState((row[0], row[1]), row[2], (row[3], row[4]),
                                row[5] >= 0.5, i))
        return out

    def trace(self) -> GripperTrace:
        return GripperTrace(self.w0, tuple(self.widths))


def demo_from_rollout(demo_id: int, instr: Instruction, states: list[SimState],
                      actions: np.ndarray, trace: GripperTrace) -> DemoRecord:
    rows = [[s.gripper_pos[0], s.gripper_pos[1], s.aperture,
             s.object_pos[0], s.object_pos[1], 1.0 if s.attached else 0.0]
            for s in states]
    return DemoRecord(demo_id, instr.task, tuple(instr.object_start),
                      tuple(instr.goal), rows,
                      [list(map(float, a)) for a in actions],
                      list(trace.widths), trace.w0)


def demo_to_json_line(rec: DemoRecord) -> str:
    payload = {
        "demo_id": rec.demo_id,
        "task": rec.task,
        "object_start": list(rec.object_start),
        "goal": list(rec.goal),
        "states": rec.states,
        "actions": rec.actions,
        "widths": rec.widths,
        "w0": rec.w0,
    }
    return json.dumps(payload, separators=(",", ":"))


def demo_from_json_line(line: str) -> DemoRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad demo JSONL line: {exc}") from exc
    missing = [k for k in _DEMO_KEYS if k not in obj]
    if missing:
        raise FormatError(f"demo record missing keys {missing}")
    rec = DemoRecord(int(obj["demo_id"]), obj["task"],
                     tuple(obj["object_start"]), tuple(obj["goal"]),
                     obj["states"], obj["actions"], obj["widths"],
                     float(obj["w0"]))
    rec.validate()
    return rec


def write_demos_jsonl(path, records: list[DemoRecord]) -> None:
    text = "".join(demo_to_json_line(r) + "\n" for r in records)
    Path(path).write_text(text, encoding="utf-8")


def truncate_to_chunks(rec: DemoRecord, chunk_size: int) -> int:
    """Trim a record's step count down to a whole number of chunks in place;
    returns the number of dropped low-level steps."""
    n = len(rec.actions)
    keep = (n // chunk_size) * chunk_size
    dropped = n - keep
    if dropped:
        rec.actions = rec.actions[:keep]
        rec.states = rec.states[:keep + 1]
        rec.widths = rec.widths[:keep + 1]
    return dropped


def read_demos_jsonl(path, chunk_size: int | None = None) -> list[DemoRecord]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    records = []
    dropped = 0
    for line in p.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = demo_from_json_line(line)
        if chunk_size:
            dropped += truncate_to_chunks(rec, chunk_size)
        records.append(rec)
    if dropped:
        log.info("truncated %d low-level steps to align demos to chunks", dropped)
    return records


# ---------------------------------------------------------------------------
# metric CSV files
# ---------------------------------------------------------------------------

def _format_cell(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_metrics_csv(path, header: list[str], rows: list[tuple]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_format_cell(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_metrics_csv(path) -> tuple[list[str], list[list[str]]]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    lines = [ln for ln in p.read_text(encoding="utf-8").splitlines() if ln != ""]
    if not lines:
        raise FormatError("empty CSV file")
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]
