/**
 * Wire protocol: canonical-JSON frame bodies (docs/protocol.md).
 *
 * Over the WebSocket bridge one text message carries exactly one frame
 * body; the TCP length prefix does not exist at this layer. Encoding is
 * canonical — sorted keys, no whitespace — so a given structure always
 * produces identical bytes on every client and on the server.
 */

export type FrameKind = "topic" | "request" | "response" | "error";

export interface Frame {
  kind: FrameKind;
  name: string;
  payload: Record<string, unknown>;
  id?: number;
}

/** Position + scalar-first quaternion, as the 7-element wire array. */
export type PoseArray = [number, number, number, number, number, number, number];

/**
 * A JSON number that must serialize as a float (decimal point or exponent
 * always present), matching the server's formatting of non-integer typed
 * values: 1 -> "1.0", 0.05 -> "0.05", 5e-7 -> "5e-07".
 */
export class Float {
  constructor(public readonly value: number) {
    if (!Number.isFinite(value)) {
      throw new Error("float fields must be finite");
    }
  }
}

/** Format a number the way the server's JSON encoder formats floats. */
export function floatRepr(n: number): string {
  if (Object.is(n, -0)) return "-0.0";
  const abs = Math.abs(n);
  if (Number.isInteger(n) && abs < 1e16) {
    return `${n}.0`;
  }
  if (abs !== 0 && (abs < 1e-4 || abs >= 1e16)) {
    // exponent form with a sign and at least two exponent digits
    const [mantissa, exp] = n.toExponential().split("e");
    const sign = exp.startsWith("-") ? "-" : "+";
    const digits = exp.replace(/^[+-]/, "").padStart(2, "0");
    const m = mantissa.includes(".") || !/^\-?\d+$/.test(mantissa)
      ? mantissa : mantissa;
    return `${m}e${sign}${digits}`;
  }
  return n.toString();
}

function encodeValue(value: unknown): string {
  if (value instanceof Float) return floatRepr(value.value);
  if (value === null) return "null";
  if (typeof value === "string") return JSON.stringify(value);
  if (typeof value === "number") {
    if (!Number.isFinite(value)) throw new Error("numbers must be finite");
    return JSON.stringify(value);
  }
  if (typeof value === "boolean") return value ? "true" : "false";
  if (Array.isArray(value)) {
    return `[${value.map(encodeValue).join(",")}]`;
  }
  if (typeof value === "object") {
    const entries = Object.entries(value as Record<string, unknown>)
      .filter(([, v]) => v !== undefined)
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0));
    return `{${entries
      .map(([k, v]) => `${JSON.stringify(k)}:${encodeValue(v)}`)
      .join(",")}}`;
  }
  throw new Error(`cannot encode value of type ${typeof value}`);
}

/** Canonical frame body: the exact bytes the TCP protocol would carry. */
export function encodeFrameBody(frame: Frame): string {
  const obj: Record<string, unknown> = {
    kind: frame.kind,
    name: frame.name,
    payload: frame.payload,
  };
  if (frame.id !== undefined) {
    if (!Number.isInteger(frame.id)) {
      throw new Error("frame id must be an integer");
    }
    obj.id = frame.id;
  }
  return encodeValue(obj);
}

export function decodeFrameBody(text: string): Frame {
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch {
    throw new Error("frame body is not valid JSON");
  }
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    throw new Error("frame body must be a JSON object");
  }
  const rec = obj as Record<string, unknown>;
  const kind = rec.kind;
  if (kind !== "topic" && kind !== "request" && kind !== "response"
      && kind !== "error") {
    throw new Error(`unknown frame kind: ${String(kind)}`);
  }
  if (typeof rec.name !== "string" || rec.name === "") {
    throw new Error("frame needs a non-empty string name");
  }
  const payload = rec.payload ?? {};
  if (typeof payload !== "object" || Array.isArray(payload)) {
    throw new Error("frame payload must be an object");
  }
  const id = rec.id;
  if (id !== undefined && !Number.isInteger(id)) {
    throw new Error("frame id must be an integer");
  }
  if ((kind === "request" || kind === "response") && id === undefined) {
    throw new Error(`${kind} frames need a correlation id`);
  }
  return {
    kind,
    name: rec.name,
    payload: payload as Record<string, unknown>,
    id: id as number | undefined,
  };
}

/** Wrap each component of a pose so it serializes as a float. */
export function posePayload(pose: readonly number[]): Float[] {
  if (pose.length !== 7) throw new Error("pose needs 7 components");
  return pose.map((v) => new Float(v));
}
