/**
 * Telemetry protocol v1, typed end: schemas for every message the engine
 * emits and the two actions a client may send back.
 *
 * The authoritative wire description is docs/telemetry-protocol.md in the
 * repository root. Two rules from it shape this module:
 *  - unknown message types are ignored, never fatal;
 *  - malformed lines are dropped and counted, never thrown.
 */
import { z } from "zod";

export const PROTOCOL_VERSION = 1;

const unit = z.number().min(0).max(1);
const fsmState = z.enum(["idle", "walk"]);

const posteriorPayload = z.object({
  raw: unit,
  smoothed: unit.optional(),
  intent: z.union([z.literal(0), z.literal(1)]).optional(),
});

const statePayload = z.object({
  state: fsmState,
  smoothed: z.number().optional(),
});

const calibrationHistogramPayload = z
  .object({
    edges: z.array(z.number()),
    idle: z.array(z.number().int().nonnegative()),
    walk: z.array(z.number().int().nonnegative()),
    median_idle: z.number().nullable(),
    median_walk: z.number().nullable(),
    n_idle: z.number().int().nonnegative(),
    n_walk: z.number().int().nonnegative(),
  })
  .refine(
    (p) => p.edges.length === p.idle.length + 1 && p.idle.length === p.walk.length,
    { message: "edges must be one longer than the count arrays" },
  );

const avatarPositionPayload = z.object({
  position_m: z.number(),
  state: fsmState,
});

const npcStatusPayload = z.object({
  npc: z.number().int().nonnegative(),
  dwell_s: z.number().nonnegative(),
  credit: unit,
});

const scorePayload = z.object({
  stops_score: z.number().min(0).max(10),
});

const sessionEndPayload = z.object({
  reason: z.string(),
  finished: z.boolean(),
  stops_score: z.number(),
  completion_time_s: z.number().nullable(),
  duration_s: z.number(),
});

const thresholdUpdatePayload = z.object({
  t_idle: unit,
  t_walk: unit,
  source: z.enum(["config", "client"]).optional(),
});

const controlPayload = z.object({
  action: z.enum(["start", "pause", "reset"]),
});

const PAYLOADS = {
  posterior: posteriorPayload,
  state: statePayload,
  calibration_histogram: calibrationHistogramPayload,
  avatar_position: avatarPositionPayload,
  npc_status: npcStatusPayload,
  score: scorePayload,
  session_end: sessionEndPayload,
  threshold_update: thresholdUpdatePayload,
  control: controlPayload,
} as const;

export type MessageKind = keyof typeof PAYLOADS;

interface Envelope<K extends MessageKind> {
  v: number;
  type: K;
  t: number;
  wall_t?: number;
  payload: z.infer<(typeof PAYLOADS)[K]>;
}

export type PosteriorMessage = Envelope<"posterior">;
export type StateMessage = Envelope<"state">;
export type CalibrationHistogramMessage = Envelope<"calibration_histogram">;
export type AvatarPositionMessage = Envelope<"avatar_position">;
export type NpcStatusMessage = Envelope<"npc_status">;
export type ScoreMessage = Envelope<"score">;
export type SessionEndMessage = Envelope<"session_end">;
export type ThresholdUpdateMessage = Envelope<"threshold_update">;
export type ControlMessage = Envelope<"control">;

export type TelemetryMessage =
  | PosteriorMessage
  | StateMessage
  | CalibrationHistogramMessage
  | AvatarPositionMessage
  | NpcStatusMessage
  | ScoreMessage
  | SessionEndMessage
  | ThresholdUpdateMessage
  | ControlMessage;

export type ParseResult =
  | { kind: "message"; message: TelemetryMessage }
  | { kind: "ignored"; type: string }
  | { kind: "malformed"; error: string };

function isEnvelopeShape(
  value: unknown,
): value is { v: unknown; type: string; t: number; wall_t?: unknown; payload: unknown } {
  if (typeof value !== "object" || value === null) return false;
  const v = value as Record<string, unknown>;
  return (
    typeof v.type === "string" &&
    typeof v.t === "number" &&
    Number.isFinite(v.t) &&
    typeof v.payload === "object" &&
    v.payload !== null
  );
}

/** Parse one NDJSON line. Never throws: bad input comes back as a verdict. */
export function parseTelemetryLine(line: string): ParseResult {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch (err) {
    return { kind: "malformed", error: `not JSON: ${String(err)}` };
  }
  if (!isEnvelopeShape(raw)) {
    return { kind: "malformed", error: "not a telemetry envelope" };
  }
  const type = raw.type;
  if (!(type in PAYLOADS)) {
    // Forward compatibility: a newer engine may speak kinds we do not know.
    return { kind: "ignored", type };
  }
  const schema = PAYLOADS[type as MessageKind];
  const parsed = schema.safeParse(raw.payload);
  if (!parsed.success) {
    return { kind: "malformed", error: `bad ${type} payload: ${parsed.error.message}` };
  }
  const message = {
    v: typeof raw.v === "number" ? raw.v : PROTOCOL_VERSION,
    type,
    t: raw.t,
    ...(typeof raw.wall_t === "number" ? { wall_t: raw.wall_t } : {}),
    payload: parsed.data,
  } as TelemetryMessage;
  return { kind: "message", message };
}

// ---------------------------------------------------------------------------
// Client actions (client -> engine)

export interface ThresholdUpdateAction {
  type: "threshold_update";
  payload: { t_idle: number; t_walk: number };
}

export interface ControlAction {
  type: "control";
  payload: { action: "start" | "pause" | "reset" };
}

export type OperatorAction = ThresholdUpdateAction | ControlAction;

/** Client-side gate: thresholds must satisfy 0 <= t_idle <= t_walk <= 1. */
export function validThresholds(tIdle: number, tWalk: number): boolean {
  return (
    Number.isFinite(tIdle) &&
    Number.isFinite(tWalk) &&
    tIdle >= 0 &&
    tWalk <= 1 &&
    tIdle <= tWalk
  );
}

/** Build a threshold action, or null when the pair is blocked client-side. */
export function thresholdAction(
  tIdle: number,
  tWalk: number,
): ThresholdUpdateAction | null {
  if (!validThresholds(tIdle, tWalk)) return null;
  return { type: "threshold_update", payload: { t_idle: tIdle, t_walk: tWalk } };
}

export function controlAction(verb: "start" | "pause" | "reset"): ControlAction {
  return { type: "control", payload: { action: verb } };
}

/** One NDJSON line, newline included, ready for the socket. */
export function serializeAction(action: OperatorAction): string {
  return JSON.stringify(action) + "\n";
}
