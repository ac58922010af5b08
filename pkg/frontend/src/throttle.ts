/**
 * Rate limiter for streamed values: at most `hz` emissions per second,
 * with a trailing emission so the last value in a burst is never lost.
 * The clock is injected so tests can drive virtual time.
 */

export type Clock = {
  now(): number;                                    // milliseconds
  setTimeout(fn: () => void, ms: number): unknown;
  clearTimeout(handle: unknown): void;
};

export const systemClock: Clock = {
  now: () => Date.now(),
  setTimeout: (fn, ms) => setTimeout(fn, ms),
  clearTimeout: (h) => clearTimeout(h as ReturnType<typeof setTimeout>),
};

export class Throttle<T> {
  private readonly intervalMs: number;
  private lastSent = -Infinity;
  private queued: T | undefined;
  private timer: unknown = null;

  constructor(hz: number,
              private readonly emit: (value: T) => void,
              private readonly clock: Clock = systemClock) {
    if (hz <= 0) throw new Error("throttle rate must be positive");
    this.intervalMs = 1000 / hz;
  }

  push(value: T): void {
    const now = this.clock.now();
    if (now - this.lastSent >= this.intervalMs) {
      this.lastSent = now;
      this.emit(value);
      return;
    }
    // too soon: remember the newest value and emit it when the window opens
    this.queued = value;
    if (this.timer === null) {
      const wait = this.intervalMs - (now - this.lastSent);
      this.timer = this.clock.setTimeout(() => this.flush(), wait);
    }
  }

  private flush(): void {
    this.timer = null;
    if (this.queued === undefined) return;
    const value = this.queued;
    this.queued = undefined;
    this.lastSent = this.clock.now();
    this.emit(value);
  }

  /** Drop any pending trailing emission. */
  cancel(): void {
    if (this.timer !== null) {
      this.clock.clearTimeout(this.timer);
      this.timer = null;
    }
    this.queued = undefined;
  }
}
