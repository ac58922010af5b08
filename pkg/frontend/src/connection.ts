/**
 * Transport-agnostic protocol client: correlation ids, pending-call
 * routing, topic fan-out. The browser uses the WebSocket transport; the
 * tests plug in a mock.
 */

import { decodeFrameBody, encodeFrameBody, Frame } from "./protocol.js";

export interface Transport {
  send(body: string): void;
  onMessage(handler: (body: string) => void): void;
  close(): void;
}

export class WebSocketTransport implements Transport {
  private handler: ((body: string) => void) | null = null;

  constructor(private readonly ws: WebSocket) {
    ws.onmessage = (ev: MessageEvent) => {
      if (typeof ev.data === "string" && this.handler) this.handler(ev.data);
    };
  }

  send(body: string): void {
    this.ws.send(body);
  }

  onMessage(handler: (body: string) => void): void {
    this.handler = handler;
  }

  close(): void {
    this.ws.close();
  }
}

export class ServiceError extends Error {
  constructor(public readonly service: string, detail: string) {
    super(`${service}: ${detail}`);
  }
}

type Pending = {
  resolve: (payload: Record<string, unknown>) => void;
  reject: (err: Error) => void;
  name: string;
};

export class Client {
  private nextId = 0;
  private pending = new Map<number, Pending>();
  private topicHandlers = new Map<string, Array<(p: Record<string, unknown>) => void>>();

  constructor(private readonly transport: Transport) {
    transport.onMessage((body) => this.route(decodeFrameBody(body)));
  }

  private route(frame: Frame): void {
    if (frame.kind === "topic") {
      for (const handler of this.topicHandlers.get(frame.name) ?? []) {
        handler(frame.payload);
      }
      return;
    }
    if (frame.id === undefined) return;
    const entry = this.pending.get(frame.id);
    if (!entry) return;
    this.pending.delete(frame.id);
    if (frame.kind === "error") {
      entry.reject(new ServiceError(
        entry.name, String(frame.payload.error ?? "unknown error")));
    } else {
      entry.resolve(frame.payload);
    }
  }

  call(name: string, payload: Record<string, unknown> = {}):
      Promise<Record<string, unknown>> {
    const id = ++this.nextId;
    const body = encodeFrameBody({ kind: "request", name, payload, id });
    return new Promise((resolve, reject) => {
      this.pending.set(id, { resolve, reject, name });
      this.transport.send(body);
    });
  }

  publish(topic: string, payload: Record<string, unknown>): void {
    this.transport.send(encodeFrameBody({ kind: "topic", name: topic, payload }));
  }

  onTopic(topic: string, handler: (payload: Record<string, unknown>) => void): void {
    const list = this.topicHandlers.get(topic) ?? [];
    list.push(handler);
    this.topicHandlers.set(topic, list);
  }

  async subscribe(topic: string,
                  handler?: (payload: Record<string, unknown>) => void):
      Promise<void> {
    if (handler) this.onTopic(topic, handler);
    await this.call("subscribe", { topic });
  }

  close(): void {
    this.transport.close();
    for (const { reject, name } of this.pending.values()) {
      reject(new ServiceError(name, "connection closed"));
    }
    this.pending.clear();
  }
}
