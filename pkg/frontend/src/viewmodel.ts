/**
 * Dashboard state and the one reducer that builds it from telemetry.
 *
 * The engine is authoritative: every message carries absolute values
 * (positions, scores, whole histograms), so the view reconciles on each
 * message and dropping any display-only message can only delay an update,
 * never corrupt the state. Malformed input is counted and ignored.
 */
import {
  parseTelemetryLine,
  type TelemetryMessage,
} from "./protocol";

/** Display geometry of the engine's default course (server-authoritative
 *  values arrive per-message; these only place the static scenery). */
export const COURSE = {
  npcSpacingM: 18.152,
  nStops: 10,
  dwellRadiusM: 2.0,
  fullCreditDwellS: 2.0,
  courseEndM: 18.152 * 10 + 2.0,
} as const;

export function npcPositionM(index: number): number {
  return COURSE.npcSpacingM * (index + 1);
}

export interface NpcView {
  index: number;
  dwellS: number;
  credit: number;
}

export interface HistogramView {
  edges: number[];
  idle: number[];
  walk: number[];
  medianIdle: number | null;
  medianWalk: number | null;
  nIdle: number;
  nWalk: number;
}

export interface SessionEndView {
  reason: string;
  finished: boolean;
  stopsScore: number;
  completionTimeS: number | null;
  durationS: number;
}

export interface Thresholds {
  tIdle: number;
  tWalk: number;
  source: string;
}

export interface DashboardState {
  /** Latest session time seen on any message, seconds. */
  clockS: number;
  fsmState: "idle" | "walk";
  lastRaw: number | null;
  lastSmoothed: number | null;
  /** Ground-truth intent when the stream carries labels (0 idle, 1 walk). */
  lastIntent: 0 | 1 | null;
  avatarPositionM: number;
  score: number;
  npcs: NpcView[];
  thresholds: Thresholds | null;
  histogram: HistogramView | null;
  sessionEnd: SessionEndView | null;
  paused: boolean;
  counts: { messages: number; ignored: number; malformed: number };
}

export function initialState(): DashboardState {
  return {
    clockS: 0,
    fsmState: "idle",
    lastRaw: null,
    lastSmoothed: null,
    lastIntent: null,
    avatarPositionM: 0,
    score: 0,
    npcs: Array.from({ length: COURSE.nStops }, (_, index) => ({
      index,
      dwellS: 0,
      credit: 0,
    })),
    thresholds: null,
    histogram: null,
    sessionEnd: null,
    paused: false,
    counts: { messages: 0, ignored: 0, malformed: 0 },
  };
}

/** Fold one validated message into the state (mutates and returns it). */
export function applyMessage(
  state: DashboardState,
  msg: TelemetryMessage,
): DashboardState {
  state.clockS = Math.max(state.clockS, msg.t);
  state.counts.messages += 1;
  switch (msg.type) {
    case "posterior":
      state.lastRaw = msg.payload.raw;
      state.lastSmoothed = msg.payload.smoothed ?? null;
      state.lastIntent = msg.payload.intent ?? null;
      break;
    case "state":
      state.fsmState = msg.payload.state;
      break;
    case "avatar_position":
      state.avatarPositionM = msg.payload.position_m;
      // Per-tick reconciliation: a dropped transition message heals here.
      state.fsmState = msg.payload.state;
      break;
    case "npc_status": {
      const npc = state.npcs[msg.payload.npc];
      if (npc !== undefined) {
        npc.dwellS = msg.payload.dwell_s;
        npc.credit = msg.payload.credit;
      } else {
        // A course larger than the default scenery: grow the list.
        state.npcs[msg.payload.npc] = {
          index: msg.payload.npc,
          dwellS: msg.payload.dwell_s,
          credit: msg.payload.credit,
        };
      }
      break;
    }
    case "score":
      state.score = msg.payload.stops_score;
      break;
    case "session_end":
      state.sessionEnd = {
        reason: msg.payload.reason,
        finished: msg.payload.finished,
        stopsScore: msg.payload.stops_score,
        completionTimeS: msg.payload.completion_time_s,
        durationS: msg.payload.duration_s,
      };
      state.score = msg.payload.stops_score;
      state.clockS = Math.max(state.clockS, msg.payload.duration_s);
      break;
    case "threshold_update":
      state.thresholds = {
        tIdle: msg.payload.t_idle,
        tWalk: msg.payload.t_walk,
        source: msg.payload.source ?? "config",
      };
      break;
    case "calibration_histogram":
      state.histogram = {
        edges: msg.payload.edges,
        idle: msg.payload.idle,
        walk: msg.payload.walk,
        medianIdle: msg.payload.median_idle,
        medianWalk: msg.payload.median_walk,
        nIdle: msg.payload.n_idle,
        nWalk: msg.payload.n_walk,
      };
      break;
    case "control":
      if (msg.payload.action === "pause") state.paused = true;
      else state.paused = false; // start and reset both resume
      break;
  }
  return state;
}

/** Fold one raw NDJSON line into the state. Never throws. */
export function applyLine(state: DashboardState, line: string): DashboardState {
  const result = parseTelemetryLine(line);
  switch (result.kind) {
    case "message":
      return applyMessage(state, result.message);
    case "ignored":
      state.counts.ignored += 1;
      return state;
    case "malformed":
      state.counts.malformed += 1;
      return state;
  }
}

/** Fold a whole log (for replay and tests). */
export function applyLog(state: DashboardState, text: string): DashboardState {
  for (const line of text.split("\n")) {
    if (line.trim().length > 0) applyLine(state, line);
  }
  return state;
}

/**
 * Quantile of a binned sample, linearly interpolated within the bin —
 * the dashed 25/50/75% markers of the calibration view are derived from
 * the streamed histogram alone.
 */
export function histogramQuantile(
  edges: number[],
  counts: number[],
  q: number,
): number | null {
  const total = counts.reduce((a, b) => a + b, 0);
  if (total <= 0 || edges.length !== counts.length + 1) return null;
  const target = q * total;
  let cum = 0;
  for (let i = 0; i < counts.length; i++) {
    const c = counts[i] ?? 0;
    const lo = edges[i] ?? 0;
    const hi = edges[i + 1] ?? lo;
    if (cum + c >= target) {
      if (c === 0) return lo;
      return lo + ((target - cum) / c) * (hi - lo);
    }
    cum += c;
  }
  return edges[edges.length - 1] ?? null;
}
