"""Objective per-task metrics: completion time, interaction time, outcome.

In scene-interaction (HSI) mode the arm works autonomously after the last
user input, so interaction time is shorter than completion time; in
direct end-effector (EE) mode the two intervals coincide by definition.
Records append to an NDJSON log.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

HSI = "hsi"
EE = "ee"

INTERACTION_EVENTS = {"ghost_grab", "ghost_move", "ghost_release", "execute_click"}


class MetricsError(Exception):
    pass


@dataclass
class MetricsRecord:
    task: str
    mode: str                 # HSI or EE
    completion_time: float    # s
    interaction_time: float   # s
    outcome: str              # "success" | "failure"

    def __post_init__(self):
        if self.mode == HSI and self.interaction_time > self.completion_time + 1e-9:
            raise MetricsError("HSI interaction time exceeds completion time")
        if self.mode == EE and abs(self.interaction_time - self.completion_time) > 1e-9:
            raise MetricsError("EE interaction and completion times must match")


def record_metrics(task: str, mode: str, events, outcome: str) -> MetricsRecord:
    """Reduce a timestamped event list to a MetricsRecord.

    events: iterable of (name, time). HSI timing runs from the first user
    interaction to the execute request (interaction) and to the executor
    finish (completion). EE timing runs from the first streamed target
    pose to the task-complete marker, and both durations are equal.
    """
    events = list(events)

    def first(*names):
        for name, t in events:
            if name in names:
                return t
        raise MetricsError(f"missing event {names} in session")

    def last(*names):
        found = None
        for name, t in events:
            if name in names:
                found = t
        if found is None:
            raise MetricsError(f"missing event {names} in session")
        return found

    if mode == HSI:
        start = first(*INTERACTION_EVENTS)
        interaction = last("execute_request") - start
        completion = last("task_finished") - start
    elif mode == EE:
        start = first("target_pose")
        completion = last("task_complete") - start
        interaction = completion
    else:
        raise MetricsError(f"unknown mode {mode!r}")
    return MetricsRecord(task=task, mode=mode, completion_time=completion,
                         interaction_time=interaction, outcome=outcome)


class SessionTracker:
    """Accumulates one task session's events as they arrive at the server."""

    def __init__(self, task: str, mode: str):
        self.task = task
        self.mode = mode
        self.events = []
        self.failed = False

    def note(self, name: str, t: float) -> None:
        self.events.append((name, t))
        if name in ("collision", "task_failed"):
            self.failed = True

    def finish(self, outcome: str | None = None) -> MetricsRecord:
        if outcome is None:
            outcome = "failure" if self.failed else "success"
        return record_metrics(self.task, self.mode, self.events, outcome)


def append_record(path, record: MetricsRecord) -> None:
    with Path(path).open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(asdict(record), sort_keys=True) + "\n")


def read_records(path):
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            out.append(MetricsRecord(**json.loads(line)))
    return out
