/**
 * Round trip against the real engine on loopback: spawn the CLI serving a
 * realtime replay, connect over TCP like any dashboard transport bridge,
 * drag-commit a threshold pair, and require the engine's confirming echo in
 * under 200 ms.
 */
import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { connect, type Socket } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { LineSplitter } from "../src/ndjson";
import { serializeAction, thresholdAction } from "../src/protocol";
import { applyLine, initialState, type DashboardState } from "../src/viewmodel";

const FIXTURE = fileURLToPath(
  new URL("./fixtures/perfect_session.ndjson", import.meta.url),
);

let proc: ChildProcess;
let outDir: string;
let port: number;

function startEngine(): Promise<number> {
  outDir = mkdtempSync(join(tmpdir(), "bciwalk-dash-"));
  proc = spawn(
    "python3",
    [
      "-m",
      "bciwalk.cli",
      "session",
      "--replay",
      FIXTURE,
      "--out-dir",
      join(outDir, "run"),
      "--serve",
      "127.0.0.1:0",
      "--realtime",
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  return new Promise((resolve, reject) => {
    let buffer = "";
    const timer = setTimeout(
      () => reject(new Error(`engine never announced its port: ${buffer}`)),
      20_000,
    );
    proc.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = /telemetry on [\d.]+:(\d+)/.exec(buffer);
      if (match !== null) {
        clearTimeout(timer);
        resolve(Number(match[1]));
      }
    });
    proc.on("exit", (code) =>
      reject(new Error(`engine exited early (${code}): ${buffer}`)),
    );
  });
}

beforeAll(async () => {
  port = await startEngine();
});

afterAll(() => {
  proc?.kill();
  if (outDir !== undefined) rmSync(outDir, { recursive: true, force: true });
});

describe("engine loopback", () => {
  it("echoes a dragged threshold pair in under 200 ms", async () => {
    const state: DashboardState = initialState();
    const splitter = new LineSplitter();
    const socket: Socket = await new Promise((resolve, reject) => {
      const s = connect({ host: "127.0.0.1", port }, () => resolve(s));
      s.once("error", reject);
    });
    socket.setNoDelay(true);

    try {
      const lines: string[] = [];
      let notify: (() => void) | null = null;
      socket.on("data", (chunk: Buffer) => {
        for (const line of splitter.push(chunk.toString())) {
          lines.push(line);
          applyLine(state, line);
        }
        notify?.();
      });
      const waitFor = async (pred: () => boolean, what: string): Promise<void> => {
        const deadline = Date.now() + 15_000;
        while (!pred()) {
          if (Date.now() > deadline) throw new Error(`timed out waiting for ${what}`);
          await new Promise<void>((r) => {
            notify = r;
            setTimeout(r, 250);
          });
          notify = null;
        }
      };

      // Engine is live once any telemetry flows.
      await waitFor(() => state.counts.messages > 0, "first telemetry");

      // The drag commit, exactly as HistogramView sends it.
      const action = thresholdAction(0.4, 0.62);
      expect(action).not.toBeNull();
      const sentAt = performance.now();
      socket.write(serializeAction(action!));

      await waitFor(
        () =>
          state.thresholds !== null &&
          state.thresholds.source === "client" &&
          state.thresholds.tIdle === 0.4 &&
          state.thresholds.tWalk === 0.62,
        "threshold echo",
      );
      const roundTripMs = performance.now() - sentAt;
      expect(roundTripMs).toBeLessThan(200);

      // The echo is a schema-valid protocol message (applyLine accepted it,
      // and nothing before it was malformed).
      expect(state.counts.malformed).toBe(0);

      // Control verbs echo too: pause the session and see the confirmation.
      socket.write(`{"type":"control","payload":{"action":"pause"}}\n`);
      await waitFor(() => state.paused, "pause echo");

      // Hostile client input must not kill the engine or the stream.
      socket.write("not json\n");
      socket.write(`{"type":"threshold_update","payload":{"t_idle":0.9,"t_walk":0.1}}\n`);
      socket.write(`{"type":"nonsense","payload":{}}\n`);
      socket.write(`{"type":"control","payload":{"action":"start"}}\n`);
      await waitFor(() => !state.paused, "start echo after hostile lines");
      // The crossed pair was rejected engine-side: thresholds unchanged.
      expect(state.thresholds).toEqual({ tIdle: 0.4, tWalk: 0.62, source: "client" });
      expect(proc.exitCode).toBeNull();
    } finally {
      socket.destroy();
    }
  });
});
