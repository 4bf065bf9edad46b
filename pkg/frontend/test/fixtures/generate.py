"""Regenerate perfect_session.ndjson: a zero-lag oracle run of the full course.

Run from this directory:  python3 generate.py
Deterministic: an ideal subject (instant threshold crossings, no decoder lag)
services all ten stops; final score 10.0 at t = 201.5 s.
"""
from pathlib import Path

from bciwalk import FsmConfig, StopAndGoIntent, Track, run_session, step_source
from bciwalk.telemetry import SessionLogWriter, TelemetryHub

out = Path(__file__).with_name("perfect_session.ndjson")
track = Track()
fsm = FsmConfig(0.40, 0.62, smoothing_window_s=0.5)
intent = StopAndGoIntent(track, stop_lead_m=0.5, dwell_margin_s=0.0)
hub = TelemetryHub()
with SessionLogWriter(out) as log:
    hub.attach_sink(log)
    hub.publish(
        "threshold_update",
        0.0,
        {"t_idle": fsm.t_idle, "t_walk": fsm.t_walk, "source": "config"},
    )
    result = run_session(step_source(intent), fsm, track, telemetry=hub)
print(result.stops_score, result.completion_time_s, result.n_ticks)
