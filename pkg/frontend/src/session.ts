/**
 * Console session state: the scene mirror, the ghost-move draft, and the
 * two control modes.
 *
 * The console never mutates authoritative state locally — every displayed
 * change originated from a server topic or service response. The draft is
 * the ordered list of completed ghost placements; Execute ships it as one
 * ExecuteTask request.
 */

import { Client } from "./connection.js";
import { Clock, systemClock, Throttle } from "./throttle.js";
import { PoseArray, posePayload } from "./protocol.js";

export type Mode = "hsi" | "ee";

export const TARGET_POSE_HZ = 20;

export interface SceneObject {
  instance_id: string;
  model_id: string;
  pose: PoseArray;
  ghost_pose: PoseArray;
  held: boolean;
  support: string | null;
}

export interface SceneMirror {
  sim_time: number;
  gripper_aperture: number;
  joints: { stamp: number; angles: number[]; velocities: number[] };
  desktop: {
    normal: number[];
    offset: number;
    boundary: [number, number][];
    triangles: [number, number, number][];
  };
  catalog: Array<{ model_id: string; half_extents: number[];
                   mass: number; grasp_width: number }>;
  objects: SceneObject[];
}

export interface DraftMove {
  instance_id: string;
  initial_pose: PoseArray;
  target_pose: PoseArray;
}

export interface SettlePreview {
  final_pose: PoseArray;
  support: string;
  stable: boolean;
}

interface ActiveDrag {
  instanceId: string;
  initialPose: PoseArray;
}

export class ConsoleSession {
  scene: SceneMirror | null = null;
  readonly draft: DraftMove[] = [];
  executing = false;
  lastReport: Record<string, unknown> | null = null;

  private drag: ActiveDrag | null = null;
  private readonly targetThrottle: Throttle<PoseArray>;

  constructor(private readonly client: Client,
              public readonly mode: Mode,
              clock: Clock = systemClock) {
    this.targetThrottle = new Throttle<PoseArray>(
      TARGET_POSE_HZ,
      (pose) => client.publish("target_pose", { pose: posePayload(pose) }),
      clock);
    client.onTopic("object_poses", (p) => this.applyObjectPoses(p));
    client.onTopic("joint_states", (p) => this.applyJointStates(p));
  }

  // ------------------------------------------------------------ lifecycle

  async start(task: string): Promise<void> {
    await this.client.call("BeginTask", { task, mode: this.mode });
    await this.refreshScene();
    await this.client.call("subscribe", { topic: "object_poses" });
    await this.client.call("subscribe", { topic: "joint_states" });
  }

  async refreshScene(): Promise<SceneMirror> {
    this.scene = await this.client.call("GetScene") as unknown as SceneMirror;
    return this.scene;
  }

  object(instanceId: string): SceneObject {
    const obj = this.scene?.objects.find((o) => o.instance_id === instanceId);
    if (!obj) throw new Error(`no object ${instanceId} in the scene mirror`);
    return obj;
  }

  private applyObjectPoses(payload: Record<string, unknown>): void {
    if (!this.scene) return;
    const incoming = payload.objects as Array<Record<string, unknown>>;
    for (const upd of incoming) {
      const obj = this.scene.objects.find(
        (o) => o.instance_id === upd.instance_id);
      if (obj) {
        obj.pose = upd.pose as PoseArray;
        obj.held = upd.held as boolean;
        obj.support = upd.support as string | null;
      }
    }
    this.scene.sim_time = payload.stamp as number;
  }

  private applyJointStates(payload: Record<string, unknown>): void {
    if (!this.scene) return;
    this.scene.joints = payload as SceneMirror["joints"];
  }

  // --------------------------------------------------------- ghost moves

  /** Start dragging an object's ghost; remembers the authoritative pose. */
  beginGhostDrag(instanceId: string): void {
    if (this.executing) throw new Error("draft is locked while executing");
    if (this.drag) throw new Error("another ghost drag is active");
    const obj = this.object(instanceId);
    this.drag = { instanceId, initialPose: [...obj.pose] as PoseArray };
    this.client.publish("interaction", { event: "ghost_grab" });
  }

  /** Stream an intermediate ghost pose to the server. */
  async moveGhost(pose: PoseArray): Promise<void> {
    if (!this.drag) throw new Error("no ghost drag is active");
    await this.client.call("SetGhostPose", {
      instance_id: this.drag.instanceId, pose: posePayload(pose) });
    this.object(this.drag.instanceId).ghost_pose = [...pose] as PoseArray;
    this.client.publish("interaction", { event: "ghost_move" });
  }

  /**
   * Drop the ghost: ask the server where the object would come to rest,
   * snap the ghost there, and append the move to the draft.
   */
  async releaseGhost(releasePose: PoseArray): Promise<SettlePreview> {
    if (!this.drag) throw new Error("no ghost drag is active");
    const { instanceId, initialPose } = this.drag;
    const preview = await this.client.call("SettlePreview", {
      instance_id: instanceId, pose: posePayload(releasePose),
    }) as unknown as SettlePreview;
    const settled = preview.final_pose;
    await this.client.call("SetGhostPose", {
      instance_id: instanceId, pose: posePayload(settled) });
    this.object(instanceId).ghost_pose = [...settled] as PoseArray;
    this.draft.push({
      instance_id: instanceId,
      initial_pose: initialPose,
      target_pose: [...settled] as PoseArray,
    });
    this.drag = null;
    this.client.publish("interaction", { event: "ghost_release" });
    return preview;
  }

  cancelGhostDrag(): void {
    this.drag = null;
  }

  // -------------------------------------------------------------- execute

  get canExecute(): boolean {
    return this.mode === "hsi" && this.draft.length > 0
      && !this.executing && !this.drag;
  }

  /** The exact ExecuteTask payload the draft serializes to. */
  draftPayload(): Record<string, unknown> {
    return {
      moves: this.draft.map((m) => ({
        instance_id: m.instance_id,
        initial_pose: posePayload(m.initial_pose),
        target_pose: posePayload(m.target_pose),
      })),
    };
  }

  async execute(): Promise<Record<string, unknown>> {
    if (!this.canExecute) throw new Error("nothing to execute");
    this.executing = true;
    this.client.publish("interaction", { event: "execute_click" });
    try {
      this.lastReport = await this.client.call("ExecuteTask", this.draftPayload());
      this.draft.length = 0;
      await this.client.call("ResetGhosts");
      await this.refreshScene();
      return this.lastReport;
    } finally {
      this.executing = false;
    }
  }

  // -------------------------------------------------------------- EE mode

  /** Stream a tool-frame target, throttled to TARGET_POSE_HZ. */
  streamTarget(pose: PoseArray): void {
    if (this.mode !== "ee") throw new Error("target streaming is EE-mode only");
    this.targetThrottle.push(pose);
  }

  async grasp(): Promise<Record<string, unknown>> {
    return this.client.call("GraspService");
  }

  async release(): Promise<Record<string, unknown>> {
    return this.client.call("ReleaseService");
  }

  async finish(outcome?: "failure"): Promise<Record<string, unknown>> {
    this.targetThrottle.cancel();
    return this.client.call("EndTask", outcome ? { outcome } : {});
  }
}
