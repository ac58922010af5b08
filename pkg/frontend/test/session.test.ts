import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { Client, ServiceError } from "../src/connection.js";
import { PoseArray } from "../src/protocol.js";
import { ConsoleSession } from "../src/session.js";
import { FakeClock, MockTransport, sceneSnapshot, ServiceHandler } from "./mock.js";

const here = dirname(fileURLToPath(import.meta.url));
const golden: Record<string, string> =
  JSON.parse(readFileSync(join(here, "golden", "frames.json"), "utf-8"));

const BOX1_SETTLED: PoseArray = [0.6, 0.2, 0.05, 1, 0, 0, 0];
const BOX2_SETTLED: PoseArray = [0.7, -0.1, 0.04, 0, 0, 0, 1];

function makeServices(): Record<string, ServiceHandler> {
  return {
    BeginTask: () => ({}),
    subscribe: () => ({}),
    GetScene: () => sceneSnapshot() as unknown as Record<string, unknown>,
    SettlePreview: (payload) => ({
      final_pose: payload.instance_id === "box2" ? BOX2_SETTLED : BOX1_SETTLED,
      support: "desktop",
      stable: true,
    }),
    SetGhostPose: () => ({}),
    ResetGhosts: () => ({}),
    ExecuteTask: () => ({ success: true, outcome: "success" }),
    GraspService: () => ({ held: "box1" }),
    ReleaseService: () => ({ released: "box1" }),
    EndTask: () => ({ outcome: "success" }),
  };
}

function makeSession(mode: "hsi" | "ee", clock?: FakeClock) {
  const transport = new MockTransport(makeServices());
  const client = new Client(transport);
  const session = new ConsoleSession(client, mode, clock);
  return { transport, client, session };
}

describe("draft serialization", () => {
  it("ships a single ghost move as the golden ExecuteTask frame", async () => {
    const { transport, session } = makeSession("hsi");
    await session.refreshScene();                       // id 1
    session.beginGhostDrag("box1");
    await session.releaseGhost([0.6, 0.2, 0.3, 1, 0, 0, 0]);  // ids 2, 3
    await session.execute();                            // id 4

    expect(transport.sent).toContain(golden.get_scene_request);
    expect(transport.sent).toContain(golden.settle_preview_request);
    expect(transport.sent).toContain(golden.set_ghost_request);
    expect(transport.sent).toContain(golden.execute_task_single);
  });

  it("preserves move order across two drags (golden frame)", async () => {
    const { transport, session } = makeSession("hsi");
    await session.refreshScene();                       // id 1
    session.beginGhostDrag("box1");
    await session.moveGhost([0.5, 0, 0.3, 1, 0, 0, 0]);       // id 2
    await session.releaseGhost([0.6, 0.2, 0.3, 1, 0, 0, 0]);  // ids 3, 4
    session.beginGhostDrag("box2");
    await session.releaseGhost([0.7, -0.1, 0.3, 1, 0, 0, 0]); // ids 5, 6
    await session.execute();                            // id 7

    expect(transport.sent).toContain(golden.execute_task_two_moves);
  });

  it("records the pre-drag authoritative pose as initial_pose", async () => {
    const { session } = makeSession("hsi");
    await session.refreshScene();
    session.beginGhostDrag("box1");
    await session.moveGhost([0.9, 0.9, 0.3, 1, 0, 0, 0]);
    await session.releaseGhost([0.6, 0.2, 0.3, 1, 0, 0, 0]);
    expect(session.draft[0].initial_pose).toEqual([0.45, -0.15, 0.05, 1, 0, 0, 0]);
  });

  it("clears the draft after a successful execute", async () => {
    const { session } = makeSession("hsi");
    await session.refreshScene();
    session.beginGhostDrag("box1");
    await session.releaseGhost([0.6, 0.2, 0.3, 1, 0, 0, 0]);
    const report = await session.execute();
    expect(report.success).toBe(true);
    expect(session.draft).toHaveLength(0);
    expect(session.executing).toBe(false);
  });
});

describe("ghost release", () => {
  it("snaps the ghost to the settle preview pose", async () => {
    const { transport, session } = makeSession("hsi");
    await session.refreshScene();
    session.beginGhostDrag("box1");
    const preview = await session.releaseGhost([0.6, 0.2, 0.3, 1, 0, 0, 0]);

    expect(preview.final_pose).toEqual(BOX1_SETTLED);
    // The mirror shows the settled pose, not the raw release pose.
    expect(session.object("box1").ghost_pose).toEqual(BOX1_SETTLED);
    // And the server-side ghost was set to exactly that pose.
    const setCalls = transport.sentFrames("SetGhostPose");
    const last = setCalls[setCalls.length - 1];
    expect(last.payload.pose).toEqual(BOX1_SETTLED);
    // The drafted target is the settled pose too.
    expect(session.draft[0].target_pose).toEqual(BOX1_SETTLED);
  });

  it("publishes the interaction breadcrumb trail", async () => {
    const { transport, session } = makeSession("hsi");
    await session.refreshScene();
    session.beginGhostDrag("box1");
    await session.moveGhost([0.5, 0, 0.3, 1, 0, 0, 0]);
    await session.releaseGhost([0.6, 0.2, 0.3, 1, 0, 0, 0]);
    await session.execute();
    const events = transport.sentFrames("interaction")
      .map((f) => f.payload.event);
    expect(events).toEqual(
      ["ghost_grab", "ghost_move", "ghost_release", "execute_click"]);
  });

  it("rejects overlapping drags and release without a drag", async () => {
    const { session } = makeSession("hsi");
    await session.refreshScene();
    await expect(session.releaseGhost([0, 0, 0.3, 1, 0, 0, 0]))
      .rejects.toThrow("no ghost drag");
    session.beginGhostDrag("box1");
    expect(() => session.beginGhostDrag("box2")).toThrow("another ghost drag");
    session.cancelGhostDrag();
    session.beginGhostDrag("box2");   // allowed again after cancel
  });
});

describe("canExecute", () => {
  it("is false with an empty draft", async () => {
    const { session } = makeSession("hsi");
    await session.refreshScene();
    expect(session.canExecute).toBe(false);
    await expect(session.execute()).rejects.toThrow("nothing to execute");
  });

  it("is false mid-drag and true once the ghost is released", async () => {
    const { session } = makeSession("hsi");
    await session.refreshScene();
    session.beginGhostDrag("box1");
    expect(session.canExecute).toBe(false);
    await session.releaseGhost([0.6, 0.2, 0.3, 1, 0, 0, 0]);
    expect(session.canExecute).toBe(true);
  });

  it("is always false in end-effector mode", async () => {
    const { session } = makeSession("ee");
    await session.refreshScene();
    expect(session.canExecute).toBe(false);
  });
});

describe("end-effector streaming", () => {
  it("throttles 100 pointer moves in one second to at most 21 frames",
     async () => {
    const clock = new FakeClock();
    const { transport, session } = makeSession("ee", clock);
    await session.refreshScene();
    for (let i = 0; i < 100; i++) {
      session.streamTarget([0.4 + i * 0.001, 0.1, 0.25, 0, 1, 0, 0]);
      clock.advance(10);
    }
    clock.advance(100);
    const frames = transport.sentFrames("target_pose");
    expect(frames.length).toBeLessThanOrEqual(21);
    expect(frames.length).toBeGreaterThanOrEqual(19);
    // The final pointer position is always delivered.
    const lastPose = frames[frames.length - 1].payload.pose as number[];
    expect(lastPose[0]).toBeCloseTo(0.4 + 99 * 0.001, 12);
  });

  it("serializes targets exactly as the server expects (golden frame)",
     async () => {
    const clock = new FakeClock();
    const { transport, session } = makeSession("ee", clock);
    await session.refreshScene();
    session.streamTarget([0.5, 0.1, 0.25, 0, 1, 0, 0]);
    expect(transport.sent).toContain(golden.target_pose_topic);
  });

  it("is rejected in scene-interaction mode", async () => {
    const { session } = makeSession("hsi");
    await session.refreshScene();
    expect(() => session.streamTarget([0.5, 0, 0.25, 0, 1, 0, 0]))
      .toThrow("EE-mode only");
  });

  it("grasp and release round-trip through their services", async () => {
    const { session } = makeSession("ee");
    expect((await session.grasp()).held).toBe("box1");
    expect((await session.release()).released).toBe("box1");
  });
});

describe("scene mirror", () => {
  it("applies object_poses topics to the mirror", async () => {
    const { transport, session } = makeSession("hsi");
    await session.start("demo");
    transport.emitTopic("object_poses", {
      stamp: 4.2,
      objects: [{ instance_id: "box1", pose: [0.5, 0.5, 0.05, 1, 0, 0, 0],
                  held: true, support: null }],
    });
    const obj = session.object("box1");
    expect(obj.pose).toEqual([0.5, 0.5, 0.05, 1, 0, 0, 0]);
    expect(obj.held).toBe(true);
    expect(obj.support).toBeNull();
    expect(session.scene?.sim_time).toBe(4.2);
  });

  it("applies joint_states topics to the mirror", async () => {
    const { transport, session } = makeSession("hsi");
    await session.start("demo");
    const angles = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
    transport.emitTopic("joint_states", {
      stamp: 1.5, angles, velocities: [0, 0, 0, 0, 0, 0, 0] });
    expect(session.scene?.joints.angles).toEqual(angles);
    expect(session.scene?.joints.stamp).toBe(1.5);
  });

  it("start subscribes to both mirror topics", async () => {
    const { transport, session } = makeSession("hsi");
    await session.start("demo");
    const topics = transport.sentFrames("subscribe")
      .map((f) => f.payload.topic);
    expect(topics).toEqual(["object_poses", "joint_states"]);
    const begin = transport.sentFrames("BeginTask")[0];
    expect(begin.payload).toEqual({ task: "demo", mode: "hsi" });
  });

  it("surfaces service errors with the service name", async () => {
    const { client } = makeSession("hsi");
    await expect(client.call("NoSuchService"))
      .rejects.toThrow(ServiceError);
    await expect(client.call("NoSuchService"))
      .rejects.toThrow("NoSuchService: unknown service");
  });
});
