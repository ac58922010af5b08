/**
 * Thin scene rendering: a top-down orthographic view of the desktop
 * boundary, opaque objects, translucent ghosts, and the streamed tool
 * target, plus a joint-angle strip driven by live joint_states.
 */

import { SceneMirror } from "./session.js";
import { PoseArray } from "./protocol.js";

const COLORS = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1"];

export interface View {
  scale: number;      // pixels per meter
  offsetX: number;    // canvas px of world x = 0
  offsetY: number;    // canvas px of world y = 0
}

export function fitView(scene: SceneMirror, width: number,
                        height: number): View {
  const xs = scene.desktop.boundary.map(([x]) => x);
  const ys = scene.desktop.boundary.map(([, y]) => y);
  const minX = Math.min(...xs), maxX = Math.max(...xs);
  const minY = Math.min(...ys), maxY = Math.max(...ys);
  const margin = 0.1;
  const scale = Math.min(
    width / (maxX - minX + 2 * margin),
    height / (maxY - minY + 2 * margin));
  return {
    scale,
    offsetX: width / 2 - scale * (minX + maxX) / 2,
    offsetY: height / 2 + scale * (minY + maxY) / 2,
  };
}

export function worldToCanvas(view: View, x: number, y: number):
    [number, number] {
  return [view.offsetX + view.scale * x, view.offsetY - view.scale * y];
}

export function canvasToWorld(view: View, px: number, py: number):
    [number, number] {
  return [(px - view.offsetX) / view.scale, (view.offsetY - py) / view.scale];
}

function yawOf(pose: PoseArray): number {
  const [, , , w, x, y, z] = pose;
  return Math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z));
}

function drawBox(ctx: CanvasRenderingContext2D, view: View, pose: PoseArray,
                 half: number[], fill: string, alpha: number): void {
  const [cx, cy] = worldToCanvas(view, pose[0], pose[1]);
  ctx.save();
  ctx.translate(cx, cy);
  ctx.rotate(-yawOf(pose));
  ctx.globalAlpha = alpha;
  ctx.fillStyle = fill;
  ctx.fillRect(-half[0] * view.scale, -half[1] * view.scale,
               2 * half[0] * view.scale, 2 * half[1] * view.scale);
  ctx.globalAlpha = 1;
  ctx.restore();
}

export function renderScene(canvas: HTMLCanvasElement, scene: SceneMirror,
                            toolTarget: PoseArray | null): View {
  const ctx = canvas.getContext("2d")!;
  const view = fitView(scene, canvas.width, canvas.height);
  ctx.clearRect(0, 0, canvas.width, canvas.height);

  // desktop boundary
  ctx.beginPath();
  scene.desktop.boundary.forEach(([x, y], i) => {
    const [px, py] = worldToCanvas(view, x, y);
    i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
  });
  ctx.closePath();
  ctx.fillStyle = "#f4efe6";
  ctx.fill();
  ctx.strokeStyle = "#8a8075";
  ctx.stroke();

  const halves = new Map(scene.catalog.map((m) => [m.model_id, m.half_extents]));
  scene.objects.forEach((obj, i) => {
    const half = halves.get(obj.model_id) ?? [0.03, 0.03, 0.03];
    const color = COLORS[i % COLORS.length];
    drawBox(ctx, view, obj.pose, half, color, obj.held ? 0.9 : 1.0);
    // ghost: translucent copy when it differs from the actual pose
    const moved = obj.ghost_pose.some((v, k) => Math.abs(v - obj.pose[k]) > 1e-9);
    if (moved) drawBox(ctx, view, obj.ghost_pose, half, color, 0.35);
  });

  if (toolTarget) {
    const [px, py] = worldToCanvas(view, toolTarget[0], toolTarget[1]);
    ctx.beginPath();
    ctx.arc(px, py, 8, 0, 2 * Math.PI);
    ctx.strokeStyle = "#333";
    ctx.lineWidth = 2;
    ctx.stroke();
    ctx.lineWidth = 1;
  }
  return view;
}

export function renderJoints(el: HTMLElement, angles: number[]): void {
  el.textContent = angles.map((a) => a.toFixed(2)).join("  ");
}
