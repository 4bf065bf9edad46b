"""Walking course mechanics, dwell scoring, and the session loop."""

from __future__ import annotations

import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bciwalk.errors import InvalidInputError
from bciwalk.online import FsmConfig
from bciwalk.recording import IDLE, WALK
from bciwalk.simulator import (
    DEFAULT_TIME_LIMIT_S,
    NPC_SPACING_M,
    TICK_S,
    SessionResult,
    StopAndGoIntent,
    Track,
    WalkingCourse,
    random_walk_source,
    replay_source,
    run_session,
    step_source,
)
from bciwalk.telemetry import SessionLogWriter, TelemetryHub, read_session_log

CFG = FsmConfig(t_idle=0.40, t_walk=0.62)
# Zero-lag configuration: smoothing over a single segment, so an oracle
# posterior flips the state on the very tick it changes.
ZERO_LAG = FsmConfig(t_idle=0.40, t_walk=0.62, smoothing_window_s=0.5)


def oracle_session(track=Track(), **kwargs):
    intent = StopAndGoIntent(track, stop_lead_m=0.5, dwell_margin_s=0.0)
    return run_session(step_source(intent), ZERO_LAG, track=track, **kwargs)


class TestTrack:
    def test_default_geometry(self):
        track = Track()
        assert track.n_npcs == 10
        assert track.npc_positions_m[0] == pytest.approx(18.152)
        assert track.npc_positions_m[-1] == pytest.approx(181.52)
        assert track.course_end_m == pytest.approx(183.52)
        assert track.ideal_completion_s == pytest.approx(201.52)
        assert NPC_SPACING_M == pytest.approx(18.152)

    def test_validation(self):
        with pytest.raises(InvalidInputError):
            Track(npc_positions_m=())
        with pytest.raises(InvalidInputError):
            Track(npc_positions_m=(10.0, 10.0))
        with pytest.raises(InvalidInputError):
            Track(npc_positions_m=(1.0, 50.0))  # first zone covers the start
        with pytest.raises(InvalidInputError):
            Track(npc_positions_m=(10.0, 13.0))  # zones overlap (radius 2)
        with pytest.raises(InvalidInputError):
            Track(min_credit_dwell_s=3.0)  # above full_credit_dwell_s

    @pytest.mark.parametrize(
        "dwell,credit",
        [
            (0.0, 0.0),
            (0.49, 0.0),
            (0.5, 0.25),
            (1.0, 0.5),
            (1.9, 0.95),
            (2.0, 1.0),
            (10.0, 1.0),
        ],
    )
    def test_credit_table(self, dwell, credit):
        assert Track().credit_for_dwell(dwell) == pytest.approx(credit)

    @given(st.floats(min_value=0.0, max_value=10.0), st.floats(min_value=0.0, max_value=10.0))
    @settings(max_examples=200, deadline=None)
    def test_credit_monotone_and_bounded(self, a, b):
        track = Track()
        ca, cb = track.credit_for_dwell(a), track.credit_for_dwell(b)
        assert 0.0 <= ca <= 1.0
        if a <= b:
            assert ca <= cb


class TestWalkingCourse:
    def test_always_walk_reaches_course_end(self):
        course = WalkingCourse(Track())
        while not course.done:
            course.step(WALK)
        assert course.finished
        assert course.end_reason == "course_end"
        # first tick with position > 183.52 m at 0.5 m per tick is tick 368
        assert course.completion_time_s == pytest.approx(184.0)
        assert course.stops_score() == 0.0

    def test_always_idle_times_out(self):
        course = WalkingCourse(Track(), time_limit_s=30.0)
        while not course.done:
            course.step(IDLE)
        assert not course.finished
        assert course.end_reason == "timeout"
        assert course.clock_s == pytest.approx(30.0)

    def test_zone_boundaries_closed(self):
        course = WalkingCourse(Track())
        assert course.zone_of(18.152 - 2.0) == 0
        assert course.zone_of(18.152 + 2.0) == 0
        assert course.zone_of(18.152 - 2.001) is None
        assert course.zone_of(0.0) is None

    def test_dwell_accrues_and_credits(self):
        track = Track()
        course = WalkingCourse(track)
        # walk into the first zone (position 16.5 > 16.152)
        for _ in range(33):
            course.step(WALK)
        assert course.zone_of(course.position_m) == 0
        for _ in range(4):  # 2.0 s of dwell
            events = course.step(IDLE)
        assert course.npcs[0].best_dwell_s == pytest.approx(2.0)
        assert course.stops_score() == pytest.approx(1.0)
        assert events[-1]["kind"] == "dwell"
        assert events[-1]["credit"] == pytest.approx(1.0)

    def test_best_dwell_keeps_maximum_over_visits(self):
        track = Track()
        course = WalkingCourse(track)
        for _ in range(33):
            course.step(WALK)
        course.step(IDLE)  # 0.5 s: quarter credit
        assert course.stops_score() == pytest.approx(0.25)
        course.step(WALK)  # leave interrupts the dwell
        course.step(IDLE)  # returning opens a new dwell of 0.5 s
        assert course.npcs[0].best_dwell_s == pytest.approx(0.5)
        assert course.stops_score() == pytest.approx(0.25)
        course.step(IDLE)
        course.step(IDLE)
        course.step(IDLE)  # second visit now 2.0 s: full credit
        assert course.stops_score() == pytest.approx(1.0)

    def test_final_npc_full_dwell_ends_session(self):
        track = Track(npc_positions_m=(18.152,))
        course = WalkingCourse(track)
        while course.zone_of(course.position_m) is None:
            course.step(WALK)
        for _ in range(4):
            course.step(IDLE)
        assert course.done
        assert course.finished
        assert course.end_reason == "final_npc_credited"
        assert course.stops_score() == 1.0

    def test_step_after_done_raises(self):
        course = WalkingCourse(Track(), time_limit_s=1.0)
        course.step(IDLE)
        course.step(IDLE)
        assert course.done
        with pytest.raises(InvalidInputError):
            course.step(IDLE)

    def test_unknown_command_rejected(self):
        course = WalkingCourse(Track())
        with pytest.raises(InvalidInputError):
            course.step("run")


class TestPerfectOracle:
    def test_score_and_time(self):
        result = oracle_session()
        assert result.stops_score == 10.0
        assert result.finished
        assert result.end_reason == "final_npc_credited"
        # one extra tick per stop to re-enter walk is avoided by the zero-lag
        # config: 363 move ticks + 40 dwell ticks = 403 ticks of 0.5 s
        assert result.completion_time_s == pytest.approx(201.5)
        assert result.n_ticks == 403
        assert result.false_positive_s == 0.0
        assert result.false_negative_s == 0.0

    def test_oracle_with_default_smoothing_still_scores_full(self):
        intent = StopAndGoIntent(Track(), stop_lead_m=0.5, dwell_margin_s=0.5)
        result = run_session(step_source(intent), CFG)
        assert result.stops_score == 10.0
        assert result.finished
        # smoothing lag costs time but the policy compensates closed-loop
        assert result.completion_time_s < 1.3 * Track().ideal_completion_s


class TestRunSession:
    def test_timeout_with_idle_source(self):
        result = run_session(
            step_source(lambda t, c: IDLE), ZERO_LAG, time_limit_s=20.0
        )
        assert not result.finished
        assert result.end_reason == "timeout"
        assert result.duration_s == pytest.approx(20.0)
        assert result.stops_score == 0.0

    def test_source_exhaustion_ends_cleanly(self):
        def source(tick, course):
            if tick >= 10:
                raise StopIteration
            return 0.0, IDLE

        result = run_session(source, ZERO_LAG)
        assert result.end_reason == "source_exhausted"
        assert result.n_ticks == 10
        assert not result.finished

    def test_random_walk_source_runs(self):
        rng = np.random.default_rng(90)
        result = run_session(
            random_walk_source(rng), CFG, time_limit_s=120.0, collect_events=False
        )
        assert result.duration_s <= 120.0
        assert result.false_positive_s is None  # no intent known
        assert result.events == []

    def test_transition_counting_and_mismatch_accounting(self):
        # intent flips to walk at t=10 s; posterior follows intent exactly,
        # but 1.5 s smoothing delays the FSM flip by 2 ticks past the first.
        def intent_fn(t, course):
            return WALK if t >= 10.0 else IDLE

        result = run_session(
            step_source(intent_fn), CFG, time_limit_s=40.0
        )
        assert result.n_transitions >= 1
        transitions = [e for e in result.events if e["kind"] == "transition"]
        assert transitions[0]["from"] == IDLE and transitions[0]["to"] == WALK
        assert transitions[0]["t"] > 10.0  # smoothing lag
        assert result.false_negative_s > 0.0
        assert result.false_positive_s == 0.0

    def test_fsm_settings_recorded(self):
        result = run_session(step_source(lambda t, c: IDLE), CFG, time_limit_s=5.0)
        assert result.fsm == {
            "t_idle": 0.40,
            "t_walk": 0.62,
            "smoothing_window_s": 1.5,
            "segment_len_s": 0.5,
        }

    def test_result_dict_round_trip(self):
        result = oracle_session(time_limit_s=300.0)
        back = SessionResult.from_dict(result.to_dict())
        assert back.to_dict() == result.to_dict()

    def test_realtime_paces_wall_clock(self):
        def source(tick, course):
            if tick >= 3:
                raise StopIteration
            return 0.0, None

        t0 = time.monotonic()
        run_session(source, ZERO_LAG, realtime=True)
        elapsed = time.monotonic() - t0
        assert elapsed >= 1.4  # 3 ticks of 0.5 s, minus scheduling slack


class FakeControl:
    """Queue-backed stand-in for the telemetry server's action poller."""

    def __init__(self, schedule):
        # schedule: {tick_index: [action, ...]}
        self.schedule = schedule
        self.calls = 0

    def poll_actions(self):
        actions = self.schedule.get(self.calls, [])
        self.calls += 1
        return actions


class TestControlActions:
    def test_threshold_update_applies_and_echoes(self):
        control = FakeControl({5: [
            {"type": "threshold_update", "payload": {"t_idle": 0.1, "t_walk": 0.9}}
        ]})
        hub = TelemetryHub()
        seen = []
        hub.attach_sink(seen.append)
        result = run_session(
            step_source(lambda t, c: IDLE), CFG,
            time_limit_s=10.0, control=control, telemetry=hub,
        )
        assert result.fsm["t_idle"] == 0.1 and result.fsm["t_walk"] == 0.9
        echoes = [m for m in seen if m["type"] == "threshold_update"]
        assert len(echoes) == 1
        assert echoes[0]["payload"] == {"t_idle": 0.1, "t_walk": 0.9, "source": "client"}

    def test_invalid_threshold_update_rejected_not_fatal(self):
        control = FakeControl({2: [
            {"type": "threshold_update", "payload": {"t_idle": 0.9, "t_walk": 0.1}},
            {"type": "threshold_update", "payload": {"t_idle": "x"}},
        ]})
        result = run_session(
            step_source(lambda t, c: IDLE), CFG, time_limit_s=5.0, control=control
        )
        rejected = [e for e in result.events if e["kind"] == "rejected_action"]
        assert len(rejected) == 2
        assert result.fsm["t_idle"] == 0.40  # unchanged

    def test_pause_and_start(self):
        control = FakeControl({
            0: [{"type": "control", "payload": {"action": "pause"}}],
            3: [{"type": "control", "payload": {"action": "start"}}],
        })
        t0 = time.monotonic()
        result = run_session(
            step_source(lambda t, c: IDLE), ZERO_LAG,
            time_limit_s=2.0, control=control,
        )
        assert time.monotonic() - t0 >= 0.04  # at least two paused polls
        assert result.duration_s == pytest.approx(2.0)

    def test_reset_restarts_course(self):
        # walk 20 s, then reset at tick 40: the clock starts over
        control = FakeControl({40: [
            {"type": "control", "payload": {"action": "reset"}}
        ]})
        result = run_session(
            step_source(lambda t, c: WALK), ZERO_LAG,
            time_limit_s=30.0, control=control,
        )
        # 40 ticks before reset, then a fresh 60-tick run to the new timeout
        assert result.duration_s == pytest.approx(30.0)
        assert result.n_ticks == 100


class TestReplay:
    def test_replay_reproduces_live_session(self, tmp_path):
        log_path = tmp_path / "session.ndjson"
        hub = TelemetryHub()
        with SessionLogWriter(log_path) as writer:
            hub.attach_sink(writer)
            live = oracle_session(telemetry=hub)
        messages = read_session_log(log_path)
        replayed = run_session(replay_source(messages), ZERO_LAG)
        assert replayed.stops_score == live.stops_score
        assert replayed.completion_time_s == live.completion_time_s
        assert replayed.n_ticks == live.n_ticks
        assert replayed.n_transitions == live.n_transitions

    def test_replay_without_posteriors_rejected(self):
        with pytest.raises(InvalidInputError):
            replay_source([{"type": "state", "payload": {}}])


class TestStopAndGoIntent:
    def test_commands_stop_inside_zone(self):
        track = Track()
        course = WalkingCourse(track)
        intent = StopAndGoIntent(track, stop_lead_m=0.5, dwell_margin_s=0.0)
        while intent(course.clock_s, course) == WALK:
            course.step(WALK)
        # commanded to stop only within the lead distance of the first NPC
        assert course.position_m >= track.npc_positions_m[0] - 0.5
        assert course.zone_of(course.position_m) == 0

    def test_resumes_after_full_dwell(self):
        track = Track()
        course = WalkingCourse(track)
        intent = StopAndGoIntent(track, stop_lead_m=0.5, dwell_margin_s=0.0)
        while intent(course.clock_s, course) == WALK:
            course.step(WALK)
        for _ in range(4):
            assert intent(course.clock_s, course) == IDLE
            course.step(IDLE)
        assert intent(course.clock_s, course) == WALK  # NPC 0 served, move on

    def test_idle_when_no_snapshot(self):
        intent = StopAndGoIntent(Track())
        assert intent(0.0, None) == IDLE
