/** Browser entry point: wire the session to the DOM and the /ws bridge. */

import { Client, WebSocketTransport } from "./connection.js";
import { canvasToWorld, renderJoints, renderScene } from "./render.js";
import { ConsoleSession, Mode } from "./session.js";
import { PoseArray } from "./protocol.js";

const DOWNWARD: [number, number, number, number] = [0, 1, 0, 0];
const STREAM_HEIGHT = 0.25;

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

async function boot(): Promise<void> {
  const status = el<HTMLElement>("status");
  const canvas = el<HTMLCanvasElement>("scene");
  const modeSel = el<HTMLSelectElement>("mode");
  const executeBtn = el<HTMLButtonElement>("execute");
  const graspBtn = el<HTMLButtonElement>("grasp");
  const releaseBtn = el<HTMLButtonElement>("release");
  const joints = el<HTMLElement>("joints");

  const url = `ws://${location.host}/ws`;
  const ws = new WebSocket(url);
  await new Promise<void>((resolve, reject) => {
    ws.onopen = () => resolve();
    ws.onerror = () => reject(new Error(`cannot reach ${url}`));
  });
  const client = new Client(new WebSocketTransport(ws));

  let session: ConsoleSession | null = null;
  let toolTarget: PoseArray | null = null;
  let dragging: string | null = null;

  async function begin(mode: Mode): Promise<void> {
    session = new ConsoleSession(client, mode);
    await session.start("console");
    status.textContent = `connected (${mode})`;
    redraw();
  }

  function redraw(): void {
    if (!session?.scene) return;
    renderScene(canvas, session.scene, toolTarget);
    renderJoints(joints, session.scene.joints.angles);
    executeBtn.disabled = !session.canExecute;
    const ee = session.mode === "ee";
    graspBtn.disabled = !ee;
    releaseBtn.disabled = !ee;
  }

  modeSel.onchange = () => void begin(modeSel.value as Mode);

  canvas.onpointerdown = (ev) => {
    if (!session?.scene) return;
    const view = renderScene(canvas, session.scene, toolTarget);
    const [wx, wy] = canvasToWorld(view, ev.offsetX, ev.offsetY);
    if (session.mode === "hsi") {
      const hit = session.scene.objects.find((o) =>
        Math.hypot(o.pose[0] - wx, o.pose[1] - wy) < 0.06);
      if (hit) {
        dragging = hit.instance_id;
        session.beginGhostDrag(hit.instance_id);
      }
    }
  };

  canvas.onpointermove = (ev) => {
    if (!session?.scene) return;
    const view = renderScene(canvas, session.scene, toolTarget);
    const [wx, wy] = canvasToWorld(view, ev.offsetX, ev.offsetY);
    if (session.mode === "hsi" && dragging) {
      void session.moveGhost([wx, wy, 0.3, 1, 0, 0, 0]).then(redraw);
    } else if (session.mode === "ee" && ev.buttons) {
      toolTarget = [wx, wy, STREAM_HEIGHT, ...DOWNWARD];
      session.streamTarget(toolTarget);
      redraw();
    }
  };

  canvas.onpointerup = (ev) => {
    if (!session?.scene || !dragging) return;
    const view = renderScene(canvas, session.scene, toolTarget);
    const [wx, wy] = canvasToWorld(view, ev.offsetX, ev.offsetY);
    dragging = null;
    void session.releaseGhost([wx, wy, 0.3, 1, 0, 0, 0]).then(redraw);
  };

  executeBtn.onclick = () => {
    if (!session) return;
    status.textContent = "executing…";
    void session.execute().then((report) => {
      status.textContent = report.success ? "task succeeded" : "task failed";
      redraw();
    });
  };
  graspBtn.onclick = () => void session?.grasp().then(redraw);
  releaseBtn.onclick = () => void session?.release().then(redraw);

  setInterval(redraw, 100);
  await begin("hsi");
}

void boot().catch((err) => {
  const status = document.getElementById("status");
  if (status) status.textContent = String(err);
});
