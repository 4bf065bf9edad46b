"""A 1-D walking course with dwell-scored stops, driven by idle/walk commands.

The avatar moves at constant speed while the command is walk and stands
still while it is idle. Ten non-player characters line the course; standing
inside an NPC's interaction zone accrues dwell time, and each NPC grants at
most one credit: 1.0 for a dwell of at least ``full_credit_dwell_s``, half
credit scaled by duration for shorter pauses, nothing below
``min_credit_dwell_s``. The session ends when the final NPC's outcome is
settled (full dwell reached, or its zone exited), or at the time limit.

One loop, :func:`run_session`, drives every kind of session: live decoding,
scripted oracles, uniform random-walk null runs, and log replay differ only
in the posterior source callable they plug in.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .online import IDLE, WALK, FsmConfig, OnlineFsm
from .recording import STATES
from .spectral import CLASS_INDEX

TICK_S = 0.5
DEFAULT_TIME_LIMIT_S = 1200.0
NPC_SPACING_M = 18.152


@dataclass(frozen=True)
class Track:
    """Geometry and scoring constants of the walking course."""

    npc_positions_m: tuple[float, ...] = tuple(
        NPC_SPACING_M * (k + 1) for k in range(10)
    )
    dwell_radius_m: float = 2.0
    avatar_speed_mps: float = 1.0
    full_credit_dwell_s: float = 2.0
    min_credit_dwell_s: float = 0.5
    start_position_m: float = 0.0

    def __post_init__(self) -> None:
        if not self.npc_positions_m:
            raise InvalidInputError("a track needs at least one NPC")
        pos = self.npc_positions_m
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise InvalidInputError("NPC positions must be strictly increasing")
        if pos[0] <= self.start_position_m + self.dwell_radius_m:
            raise InvalidInputError("the first NPC zone must not cover the start")
        if any(
            b - a <= 2 * self.dwell_radius_m for a, b in zip(pos, pos[1:])
        ):
            raise InvalidInputError("NPC zones must not overlap")
        if self.avatar_speed_mps <= 0 or self.dwell_radius_m <= 0:
            raise InvalidInputError("speed and dwell radius must be positive")
        if not 0 < self.min_credit_dwell_s < self.full_credit_dwell_s:
            raise InvalidInputError("need 0 < min_credit_dwell_s < full_credit_dwell_s")

    @property
    def n_npcs(self) -> int:
        return len(self.npc_positions_m)

    @property
    def course_end_m(self) -> float:
        return self.npc_positions_m[-1] + self.dwell_radius_m

    @property
    def ideal_completion_s(self) -> float:
        """Travel to the last NPC plus a full-credit dwell at every NPC."""
        travel = (self.npc_positions_m[-1] - self.start_position_m) / self.avatar_speed_mps
        return travel + self.n_npcs * self.full_credit_dwell_s

    def credit_for_dwell(self, dwell_s: float) -> float:
        if dwell_s >= self.full_credit_dwell_s:
            return 1.0
        if dwell_s >= self.min_credit_dwell_s:
            return dwell_s / self.full_credit_dwell_s
        return 0.0


@dataclass
class NpcState:
    index: int
    position_m: float
    best_dwell_s: float = 0.0
    open_dwell_s: float | None = None
    intervals: list[tuple[float, float]] = field(default_factory=list)


class WalkingCourse:
    """Mutable course state advanced tick by tick."""

    def __init__(self, track: Track, time_limit_s: float = DEFAULT_TIME_LIMIT_S):
        if time_limit_s <= 0:
            raise InvalidInputError("time limit must be positive")
        self.track = track
        self.time_limit_s = time_limit_s
        self.position_m = track.start_position_m
        self.clock_s = 0.0
        self.npcs = [NpcState(i, p) for i, p in enumerate(track.npc_positions_m)]
        self.done = False
        self.finished = False
        self.end_reason: str | None = None
        self.completion_time_s: float | None = None

    def zone_of(self, position: float) -> int | None:
        r = self.track.dwell_radius_m
        for npc in self.npcs:
            if npc.position_m - r <= position <= npc.position_m + r:
                return npc.index
        return None

    def stops_score(self) -> float:
        return float(
            sum(self.track.credit_for_dwell(n.best_dwell_s) for n in self.npcs)
        )

    def _close_dwell(self, npc: NpcState, events: list[dict]) -> None:
        if npc.open_dwell_s is None:
            return
        dwell = npc.open_dwell_s
        npc.intervals.append((self.clock_s - dwell, self.clock_s))
        npc.open_dwell_s = None
        events.append(
            {
                "kind": "dwell_closed",
                "t": self.clock_s,
                "npc": npc.index,
                "dwell_s": dwell,
                "credit": self.track.credit_for_dwell(npc.best_dwell_s),
            }
        )

    def _end(self, reason: str, finished: bool, events: list[dict]) -> None:
        self.done = True
        self.finished = finished
        self.end_reason = reason
        if finished:
            self.completion_time_s = self.clock_s
        for npc in self.npcs:
            self._close_dwell(npc, events)
        events.append(
            {
                "kind": "session_end",
                "t": self.clock_s,
                "reason": reason,
                "finished": finished,
                "stops_score": self.stops_score(),
            }
        )

    def step(self, state: str, dt: float = TICK_S) -> list[dict]:
        """Advance the course by one tick under the given command."""
        if self.done:
            raise InvalidInputError("the session has ended; no further steps")
        if state not in STATES:
            raise InvalidInputError(f"unknown command state {state!r}")
        events: list[dict] = []
        last = self.npcs[-1]
        self.clock_s += dt
        if state == WALK:
            was_in = self.zone_of(self.position_m)
            self.position_m += self.track.avatar_speed_mps * dt
            if was_in is not None:
                self._close_dwell(self.npcs[was_in], events)
            if self.position_m > self.track.course_end_m:
                self._end("course_end", True, events)
                return events
        else:
            zone = self.zone_of(self.position_m)
            if zone is not None:
                npc = self.npcs[zone]
                npc.open_dwell_s = (npc.open_dwell_s or 0.0) + dt
                if npc.open_dwell_s > npc.best_dwell_s:
                    npc.best_dwell_s = npc.open_dwell_s
                events.append(
                    {
                        "kind": "dwell",
                        "t": self.clock_s,
                        "npc": npc.index,
                        "dwell_s": npc.open_dwell_s,
                        "credit": self.track.credit_for_dwell(npc.best_dwell_s),
                    }
                )
                if (
                    npc is last
                    and npc.best_dwell_s >= self.track.full_credit_dwell_s
                ):
                    self._end("final_npc_credited", True, events)
                    return events
        if self.clock_s >= self.time_limit_s:
            self._end("timeout", False, events)
        return events


@dataclass
class SessionResult:
    """Outcome of one session, independent of how posteriors were produced."""

    stops_score: float
    completion_time_s: float | None
    duration_s: float
    finished: bool
    end_reason: str
    n_ticks: int
    n_transitions: int
    fsm: dict
    npcs: list[dict]
    false_positive_s: float | None = None
    false_negative_s: float | None = None
    events: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "stops_score": self.stops_score,
            "completion_time_s": self.completion_time_s,
            "duration_s": self.duration_s,
            "finished": self.finished,
            "end_reason": self.end_reason,
            "n_ticks": self.n_ticks,
            "n_transitions": self.n_transitions,
            "fsm": self.fsm,
            "npcs": self.npcs,
            "false_positive_s": self.false_positive_s,
            "false_negative_s": self.false_negative_s,
            "events": self.events,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionResult":
        return cls(**d)


def run_session(
    posterior_source,
    fsm_config: FsmConfig,
    track: Track = Track(),
    time_limit_s: float = DEFAULT_TIME_LIMIT_S,
    telemetry=None,
    control=None,
    realtime: bool = False,
    collect_events: bool = True,
) -> SessionResult:
    """Drive one session tick by tick.

    Parameters
    ----------
    posterior_source : callable(tick_index, course) -> (raw_posterior, intent)
        ``intent`` is the ground-truth intended state when known (scripted or
        cued sources), else None. Raising StopIteration ends the session
        early with reason "source_exhausted".
    control : optional object with ``poll_actions() -> list[dict]`` polled
        once per tick; supports threshold_update and start/pause/reset.
    realtime : pace ticks against the wall clock instead of free-running.
    """
    fsm = OnlineFsm(fsm_config)
    course = WalkingCourse(track, time_limit_s)
    started_wall = time.monotonic()
    if telemetry is not None and realtime:
        telemetry.wall_clock = lambda: time.monotonic() - started_wall
    paused = False
    tick = 0
    n_transitions = 0
    events: list[dict] = []
    mismatch_kind: str | None = None
    mismatch_start = 0.0
    fp_s = fn_s = 0.0
    saw_intent = False
    end_reason = None

    def note(event: dict) -> None:
        if collect_events:
            events.append(event)

    def close_mismatch(now: float) -> None:
        nonlocal mismatch_kind, fp_s, fn_s
        if mismatch_kind is None:
            return
        span = now - mismatch_start
        if mismatch_kind == "false_positive":
            fp_s += span
        else:
            fn_s += span
        note(
            {"kind": mismatch_kind, "t": mismatch_start, "end_t": now, "span_s": span}
        )
        mismatch_kind = None

    def poll_control() -> None:
        """Apply pending operator actions; runs between FSM steps only."""
        nonlocal paused, course, n_transitions
        if control is None:
            return
        for action in control.poll_actions():
            kind = action.get("type")
            payload = action.get("payload", {})
            if kind == "threshold_update":
                try:
                    fsm.retune(float(payload["t_idle"]), float(payload["t_walk"]))
                except (KeyError, TypeError, ValueError, InvalidInputError):
                    note({"kind": "rejected_action", "t": course.clock_s, "action": action})
                    continue
                if telemetry is not None:
                    telemetry.publish(
                        "threshold_update",
                        course.clock_s,
                        {
                            "t_idle": fsm.config.t_idle,
                            "t_walk": fsm.config.t_walk,
                            "source": "client",
                        },
                    )
            elif kind == "control":
                verb = payload.get("action")
                if verb == "pause":
                    paused = True
                elif verb == "start":
                    paused = False
                elif verb == "reset":
                    course = WalkingCourse(track, time_limit_s)
                    fsm.reset()
                    close_mismatch(course.clock_s)
                    n_transitions = 0
                else:
                    note({"kind": "rejected_action", "t": course.clock_s, "action": action})
                    continue
                if telemetry is not None and verb in ("start", "pause", "reset"):
                    telemetry.publish("control", course.clock_s, {"action": verb})

    while not course.done:
        poll_control()
        if paused:
            time.sleep(0.02)
            continue

        t0 = course.clock_s
        try:
            raw, intent = posterior_source(tick, course)
        except StopIteration:
            end_reason = "source_exhausted"
            break
        prev_state = fsm.state
        state, smoothed = fsm.update(raw)
        if telemetry is not None:
            telemetry.publish_posterior(
                t0, raw, smoothed, None if intent is None else CLASS_INDEX[intent]
            )
            if state != prev_state:
                telemetry.publish(
                    "state", t0, {"state": state, "smoothed": round(smoothed, 9)}
                )
        if state != prev_state:
            n_transitions += 1
            note({"kind": "transition", "t": t0, "from": prev_state, "to": state})

        if intent is not None:
            saw_intent = True
            kind = (
                None
                if state == intent
                else ("false_positive" if state == WALK else "false_negative")
            )
            if kind != mismatch_kind:
                close_mismatch(t0)
                if kind is not None:
                    mismatch_kind, mismatch_start = kind, t0

        step_events = course.step(state)
        if telemetry is not None:
            telemetry.publish(
                "avatar_position",
                course.clock_s,
                {"position_m": round(course.position_m, 6), "state": state},
            )
            for ev in step_events:
                if ev["kind"] in ("dwell", "dwell_closed"):
                    telemetry.publish(
                        "npc_status",
                        ev["t"],
                        {
                            "npc": ev["npc"],
                            "dwell_s": round(ev["dwell_s"], 6),
                            "credit": round(ev["credit"], 6),
                        },
                    )
                    telemetry.publish(
                        "score",
                        ev["t"],
                        {"stops_score": round(course.stops_score(), 6)},
                    )
        if collect_events:
            events.extend(
                ev for ev in step_events if ev["kind"] in ("dwell_closed", "session_end")
            )
        tick += 1
        while realtime:
            # Sliced wait: operator actions apply within ~20 ms instead of
            # stalling until the next 0.5-s tick boundary.
            delay = started_wall + course.clock_s - time.monotonic()
            if delay <= 0:
                break
            time.sleep(min(delay, 0.02))
            poll_control()
            if paused:
                break

    close_mismatch(course.clock_s)
    result = SessionResult(
        stops_score=course.stops_score(),
        completion_time_s=course.completion_time_s,
        duration_s=course.clock_s,
        finished=course.finished,
        end_reason=end_reason or course.end_reason or "source_exhausted",
        n_ticks=tick,
        n_transitions=n_transitions,
        fsm={
            "t_idle": fsm.config.t_idle,
            "t_walk": fsm.config.t_walk,
            "smoothing_window_s": fsm.config.smoothing_window_s,
            "segment_len_s": fsm.config.segment_len_s,
        },
        npcs=[
            {
                "index": n.index,
                "position_m": n.position_m,
                "best_dwell_s": n.best_dwell_s,
                "credit": track.credit_for_dwell(n.best_dwell_s),
                "intervals": [list(iv) for iv in n.intervals],
            }
            for n in course.npcs
        ],
        false_positive_s=fp_s if saw_intent else None,
        false_negative_s=fn_s if saw_intent else None,
        events=events,
    )
    if telemetry is not None:
        telemetry.publish(
            "session_end",
            course.clock_s,
            {
                "reason": result.end_reason,
                "finished": result.finished,
                "stops_score": round(result.stops_score, 6),
                "completion_time_s": result.completion_time_s,
                "duration_s": result.duration_s,
            },
        )
    return result


# ---------------------------------------------------------------------------
# Posterior sources


def decoder_source(stream, segment_decoder):
    """Live source: synthesize/acquire a window, decode it, report intent."""

    def source(tick, course):
        try:
            window, intent = stream.next_segment(course)
        except StopIteration:
            raise
        return segment_decoder.posterior(window), intent

    return source


def step_source(intent_fn, p_walk: float = 1.0, p_idle: float = 0.0):
    """Oracle source: a clean two-level posterior driven by an intent policy."""

    def source(tick, course):
        intent = intent_fn(course.clock_s, course)
        return (p_walk if intent == WALK else p_idle), intent

    return source


def random_walk_source(rng: np.random.Generator):
    """Null-model source: posteriors i.i.d. uniform on [0, 1]."""

    def source(tick, course):
        return float(rng.random()), None

    return source


def replay_source(messages: list[dict]):
    """Replay the raw posteriors of a recorded session log."""
    raws = [
        m["payload"]["raw"] for m in messages if m.get("type") == "posterior"
    ]
    intents = [
        m["payload"].get("intent") for m in messages if m.get("type") == "posterior"
    ]
    if not raws:
        raise InvalidInputError("log contains no posterior messages to replay")
    states = {v: k for k, v in CLASS_INDEX.items()}

    def source(tick, course):
        if tick >= len(raws):
            raise StopIteration
        intent = intents[tick]
        return raws[tick], None if intent is None else states[intent]

    return source


class StopAndGoIntent:
    """Closed-loop scripted user: walk to the next unserved NPC, pause there.

    The policy reads the live course snapshot, so it compensates decoder and
    smoothing lag automatically: it commands idle once the avatar is within
    ``stop_lead_m`` of the target NPC and resumes once that NPC's dwell
    reaches the full-credit requirement plus ``dwell_margin_s``.
    """

    def __init__(self, track: Track, stop_lead_m: float = 0.5, dwell_margin_s: float = 0.5):
        self.track = track
        self.stop_lead_m = stop_lead_m
        self.dwell_margin_s = dwell_margin_s

    def __call__(self, t: float, course) -> str:
        if course is None:
            return IDLE
        target_dwell = self.track.full_credit_dwell_s + self.dwell_margin_s
        for npc in course.npcs:
            if npc.best_dwell_s < target_dwell:
                if course.position_m >= npc.position_m - self.stop_lead_m:
                    return IDLE
                return WALK
        return WALK
