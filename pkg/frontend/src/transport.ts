/**
 * Line feeds into the view-model.
 *
 * The engine serves NDJSON over a plain TCP socket; a browser reaches it
 * through any bytes-to-WebSocket bridge (e.g. websocat). `webSocketFeed`
 * consumes that, splitting frames into lines. `ReplayDriver` feeds a saved
 * session log back at a chosen speed, entirely client-side.
 */
import { LineSplitter } from "./ndjson";

export interface FeedCallbacks {
  onLine(line: string): void;
  onOpen?(): void;
  onClose?(): void;
}

export interface Feed {
  /** Send one already-serialized NDJSON line (actions upstream). */
  send(line: string): void;
  close(): void;
}

export function webSocketFeed(url: string, callbacks: FeedCallbacks): Feed {
  const splitter = new LineSplitter();
  const ws = new WebSocket(url);
  ws.onopen = () => callbacks.onOpen?.();
  ws.onclose = () => {
    for (const line of splitter.flush()) callbacks.onLine(line);
    callbacks.onClose?.();
  };
  ws.onmessage = (ev) => {
    if (typeof ev.data !== "string") return;
    for (const line of splitter.push(ev.data)) callbacks.onLine(line);
  };
  return {
    send(line: string): void {
      if (ws.readyState === WebSocket.OPEN) ws.send(line);
    },
    close(): void {
      ws.close();
    },
  };
}

/**
 * Paced replay of a session log: messages are released on their recorded
 * session-time axis, scaled by `rate` (10 = ten times faster than live).
 */
export class ReplayDriver {
  private readonly lines: string[];
  private readonly times: number[];
  private cursor = 0;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    logText: string,
    private readonly onLine: (line: string) => void,
    private readonly rate = 10,
  ) {
    this.lines = logText.split("\n").filter((l) => l.trim().length > 0);
    this.times = this.lines.map((line) => {
      try {
        const t = (JSON.parse(line) as { t?: unknown }).t;
        return typeof t === "number" ? t : 0;
      } catch {
        return 0;
      }
    });
  }

  get done(): boolean {
    return this.cursor >= this.lines.length;
  }

  start(): void {
    if (this.timer !== null || this.done) return;
    this.step();
  }

  pause(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  /** Deliver everything that remains, immediately. */
  finish(): void {
    this.pause();
    while (!this.done) this.emitNext();
  }

  private step(): void {
    this.timer = null;
    if (this.done) return;
    const now = this.times[this.cursor] ?? 0;
    this.emitNext();
    // Deliver same-timestamp messages as one burst, then wait out the gap.
    while (!this.done && (this.times[this.cursor] ?? 0) <= now) this.emitNext();
    if (this.done) return;
    const gapS = Math.max(0, (this.times[this.cursor] ?? 0) - now) / this.rate;
    this.timer = setTimeout(() => this.step(), gapS * 1000);
  }

  private emitNext(): void {
    const line = this.lines[this.cursor];
    this.cursor += 1;
    if (line !== undefined) this.onLine(line);
  }
}
