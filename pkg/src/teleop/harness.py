"""Scripted reproduction of the three benchmark tasks.

Synthetic operators drive the full stack through the wire protocol (a
real TCP connection to an in-process server under a simulated clock) in
both control modes, then the final scene is checked against the
fixture's goals and a metrics record is emitted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arm import FINGER_ENGAGEMENT, HOVER_HEIGHT, top_down_pose
from .client import TeleopClient
from .fileformats import ParseError, floats, parse_sections
from .geometry import Pose
from .metrics import EE, HSI, MetricsRecord
from .server import TeleopServer

log = logging.getLogger(__name__)

RELEASE_DROP = 0.10   # ghosts are released this far above their goal


@dataclass
class TaskFixture:
    label: str
    scene_file: Path
    goals: list                      # [(instance_id, Pose)], execution order
    tolerance: float = 0.01
    expect_support: dict = field(default_factory=dict)  # instance -> base id


def load_fixture(scene_file, goals_file, label=None) -> TaskFixture:
    scene_file = Path(scene_file)
    goals_file = Path(goals_file)
    sections = parse_sections(goals_file)
    goals = []
    for line_no, toks in sections.get("goals", []):
        if len(toks) != 8:
            raise ParseError(goals_file, line_no, "goal needs: instance_id px py pz qw qx qy qz")
        goals.append((toks[0], Pose.from_list(floats(goals_file, line_no, toks[1:], "goal"))))
    if not goals:
        raise ParseError(goals_file, 0, "missing [goals] section")
    expect = {}
    for line_no, toks in sections.get("expect_support", []):
        if len(toks) != 2:
            raise ParseError(goals_file, line_no, "expect_support needs: instance_id base_id")
        expect[toks[0]] = toks[1]
    tol = 0.01
    for line_no, toks in sections.get("tolerance", []):
        tol = floats(goals_file, line_no, toks, "tolerance")[0]
    return TaskFixture(label=label or scene_file.stem.capitalize(),
                       scene_file=scene_file, goals=goals,
                       tolerance=tol, expect_support=expect)


def discover_fixtures(directory) -> list:
    fixtures = []
    for scene_file in sorted(Path(directory).glob("*.scene")):
        goals_file = scene_file.with_suffix(".goals")
        if goals_file.exists():
            fixtures.append(load_fixture(scene_file, goals_file))
    return fixtures


@dataclass
class FixtureRun:
    record: MetricsRecord
    final_scene: dict
    goal_errors: dict


# ------------------------------------------------------------- operators

def _object_half_height(scene_payload, instance_id) -> float:
    models = {m["model_id"]: m for m in scene_payload["catalog"]}
    for obj in scene_payload["objects"]:
        if obj["instance_id"] == instance_id:
            return models[obj["model_id"]]["half_extents"][2]
    raise KeyError(f"no instance {instance_id!r} in scene")


def hsi_operator(client: TeleopClient, fixture: TaskFixture):
    """Drag each ghost to its goal (with a settle preview on release), then
    click Execute once; the server's executor does the rest."""
    scene = client.call("GetScene", {})
    objects = {o["instance_id"]: o for o in scene["objects"]}
    draft = []
    for instance_id, goal in fixture.goals:
        initial = Pose.from_list(objects[instance_id]["pose"])
        client.publish("interaction", {"event": "ghost_grab"})
        client.call("AdvanceClock", {"dt": 0.6})
        release = Pose(goal.position + np.array([0, 0, RELEASE_DROP]), goal.orientation)
        client.call("SetGhostPose", {"instance_id": instance_id, "pose": release.to_list()})
        client.publish("interaction", {"event": "ghost_move"})
        client.call("AdvanceClock", {"dt": 0.4})
        preview = client.call("SettlePreview",
                              {"instance_id": instance_id, "pose": release.to_list()})
        settled = preview["final_pose"]
        client.call("SetGhostPose", {"instance_id": instance_id, "pose": settled})
        client.publish("interaction", {"event": "ghost_release"})
        client.call("AdvanceClock", {"dt": 0.2})
        draft.append({"instance_id": instance_id,
                      "initial_pose": initial.to_list(),
                      "target_pose": settled})
    client.publish("interaction", {"event": "execute_click"})
    client.call("AdvanceClock", {"dt": 0.1})
    return client.call("ExecuteTask", {"moves": draft})


def ee_operator(client: TeleopClient, fixture: TaskFixture, detour=None):
    """Stream tool poses leg by leg, toggling the gripper at the ends.

    `detour` optionally injects an extra streamed pose after the grasp of
    the first object (used to provoke collisions in failure fixtures).
    """
    scene = client.call("GetScene", {})
    objects = {o["instance_id"]: o for o in scene["objects"]}

    def stream_to(pose, settle_time=1.6):
        client.publish("target_pose", {"pose": pose.to_list()})
        client.call("AdvanceClock", {"dt": settle_time})

    for k, (instance_id, goal) in enumerate(fixture.goals):
        initial = Pose.from_list(objects[instance_id]["pose"])
        half_h = _object_half_height(scene, instance_id)
        stream_to(top_down_pose(initial, half_h, HOVER_HEIGHT))
        stream_to(top_down_pose(initial, half_h, 0.0))
        grasp = client.call("GraspService", {})
        if not grasp["success"]:
            log.warning("EE grasp failed on %s", instance_id)
        stream_to(top_down_pose(initial, half_h, HOVER_HEIGHT))
        if k == 0 and detour is not None:
            stream_to(detour)
        stream_to(top_down_pose(goal, half_h, HOVER_HEIGHT))
        stream_to(top_down_pose(goal, half_h, 0.0))
        client.call("ReleaseService", {})
        stream_to(top_down_pose(goal, half_h, HOVER_HEIGHT))


# ------------------------------------------------------------ run + report

def verify_goals(client: TeleopClient, fixture: TaskFixture):
    scene = client.call("GetScene", {})
    objects = {o["instance_id"]: o for o in scene["objects"]}
    errors = {}
    ok = True
    for instance_id, goal in fixture.goals:
        pos = np.array(objects[instance_id]["pose"][:3])
        err = float(np.linalg.norm(pos - goal.position))
        errors[instance_id] = err
        if err > fixture.tolerance:
            ok = False
    for instance_id, base in fixture.expect_support.items():
        if objects[instance_id]["support"] != base:
            ok = False
            errors[f"{instance_id}.support"] = objects[instance_id]["support"]
    return ok, errors, scene


def run_fixture(fixture: TaskFixture, mode: str, metrics_path=None, seed=0,
                detour=None) -> FixtureRun:
    server = TeleopServer(fixture.scene_file, sim_clock=True, seed=seed,
                          metrics_path=metrics_path).start()
    try:
        with TeleopClient(port=server.port) as client:
            client.call("BeginTask", {"task": fixture.label, "mode": mode})
            if mode == HSI:
                hsi_operator(client, fixture)
            elif mode == EE:
                ee_operator(client, fixture, detour=detour)
            else:
                raise ValueError(f"unknown mode {mode!r}")
            ok, errors, scene = verify_goals(client, fixture)
            payload = {} if ok else {"outcome": "failure"}
            rec = client.call("EndTask", payload)
            record = MetricsRecord(task=rec["task"], mode=rec["mode"],
                                   completion_time=rec["completion_time"],
                                   interaction_time=rec["interaction_time"],
                                   outcome=rec["outcome"])
            return FixtureRun(record=record, final_scene=scene, goal_errors=errors)
    finally:
        server.stop()


def summarize(records) -> list:
    """Per (task, mode) aggregate rows."""
    groups = {}
    for r in records:
        groups.setdefault((r.task, r.mode), []).append(r)
    rows = []
    for (task, mode) in sorted(groups):
        rs = groups[(task, mode)]
        comp = [r.completion_time for r in rs]
        inter = [r.interaction_time for r in rs]
        rows.append({
            "task": task, "mode": mode, "runs": len(rs),
            "success_rate": sum(r.outcome == "success" for r in rs) / len(rs),
            "completion_mean": float(np.mean(comp)),
            "completion_min": float(np.min(comp)),
            "completion_max": float(np.max(comp)),
            "interaction_mean": float(np.mean(inter)),
            "interaction_min": float(np.min(inter)),
            "interaction_max": float(np.max(inter)),
        })
    return rows


REPORT_COLUMNS = ["task", "mode", "runs", "success_rate",
                  "completion_mean", "completion_min", "completion_max",
                  "interaction_mean", "interaction_min", "interaction_max"]


def write_report(records, out_dir) -> dict:
    """Delimited summary + bar-chart data + rendered figures.

    Returns the paths written. Empty input still writes an (empty) table.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = summarize(records)

    table = out_dir / "report.tsv"
    lines = ["\t".join(REPORT_COLUMNS)]
    for row in rows:
        lines.append("\t".join(_fmt(row[c]) for c in REPORT_COLUMNS))
    table.write_text("\n".join(lines) + "\n", encoding="utf-8")

    chart = out_dir / "report_bars.tsv"
    chart_lines = ["metric\ttask\tmode\tvalue"]
    for row in rows:
        for metric in ("completion_mean", "interaction_mean", "success_rate"):
            chart_lines.append(f"{metric}\t{row['task']}\t{row['mode']}\t{_fmt(row[metric])}")
    chart.write_text("\n".join(chart_lines) + "\n", encoding="utf-8")

    figures = _render_figures(rows, out_dir) if rows else []
    return {"table": table, "chart": chart, "figures": figures}


def _fmt(v):
    return f"{v:.4f}" if isinstance(v, float) else str(v)


def _render_figures(rows, out_dir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    tasks = sorted({r["task"] for r in rows})
    modes = sorted({r["mode"] for r in rows})
    paths = []
    specs = [("completion_mean", "Completion time (s)", "completion_time.png"),
             ("interaction_mean", "Interaction time (s)", "interaction_time.png"),
             ("success_rate", "Success rate", "success_rate.png")]
    for key, title, fname in specs:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        width = 0.8 / max(1, len(modes))
        x = np.arange(len(tasks))
        for i, mode in enumerate(modes):
            vals = []
            for task in tasks:
                match = [r[key] for r in rows if r["task"] == task and r["mode"] == mode]
                vals.append(match[0] if match else 0.0)
            ax.bar(x + i * width, vals, width, label=mode.upper())
        ax.set_xticks(x + width * (len(modes) - 1) / 2)
        ax.set_xticklabels(tasks)
        ax.set_ylabel(title)
        ax.legend()
        fig.tight_layout()
        path = out_dir / fname
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths
