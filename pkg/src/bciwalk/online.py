"""Self-paced online control: segment decoding, smoothing, hysteresis FSM.

The online path consumes half-second windows, conditions them with exactly
the same functions used offline, and turns the decoder's walk posterior into
an idle/walk command through a two-threshold state machine acting on the
smoothed posterior.
"""

from __future__ import annotations

import json
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .decoder import DecodingModel, band_rows
from .errors import DegenerateInputError, InvalidInputError
from .preprocess import bandpass_matrix, car_matrix
from .recording import IDLE, WALK, EegRecording
from .spectral import CLASS_INDEX, psd_bins


@dataclass(frozen=True)
class FsmConfig:
    """Two-threshold hysteresis on the smoothed walk posterior.

    Idle switches to walk only when the smoothed posterior rises strictly
    above ``t_walk``; walk returns to idle only when it falls strictly below
    ``t_idle``. Between the thresholds the current state holds, which is what
    makes the control self-paced rather than jittery.
    """

    t_idle: float
    t_walk: float
    smoothing_window_s: float = 1.5
    segment_len_s: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.t_idle <= self.t_walk <= 1.0:
            raise InvalidInputError(
                f"need 0 <= t_idle <= t_walk <= 1, got ({self.t_idle}, {self.t_walk})"
            )
        if self.segment_len_s <= 0 or self.smoothing_window_s < self.segment_len_s:
            raise InvalidInputError(
                "smoothing window must cover at least one segment"
            )

    @property
    def history_len(self) -> int:
        return round(self.smoothing_window_s / self.segment_len_s)

    def to_json(self) -> str:
        return json.dumps(
            {
                "t_idle": self.t_idle,
                "t_walk": self.t_walk,
                "smoothing_window_s": self.smoothing_window_s,
                "segment_len_s": self.segment_len_s,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "FsmConfig":
        return cls(**json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "FsmConfig":
        return cls.from_json(Path(path).read_text())


def fsm_step(state: str, smoothed_posterior: float, config: FsmConfig) -> str:
    """Pure transition rule of the hysteresis machine."""
    if state == IDLE:
        return WALK if smoothed_posterior > config.t_walk else IDLE
    if state == WALK:
        return IDLE if smoothed_posterior < config.t_idle else WALK
    raise InvalidInputError(f"unknown state {state!r}")


class OnlineFsm:
    """Stateful wrapper: smooths raw posteriors and applies the FSM.

    Smoothing is the arithmetic mean of the most recent posteriors covering
    the smoothing window; during warm-up the mean runs over what exists.
    """

    def __init__(self, config: FsmConfig):
        self.config = config
        self.state = IDLE
        self.history: deque[float] = deque()
        self._sum = 0.0

    def update(self, posterior: float) -> tuple[str, float]:
        if not 0.0 <= posterior <= 1.0:
            raise InvalidInputError(f"posterior {posterior!r} outside [0, 1]")
        posterior = float(posterior)
        self.history.append(posterior)
        self._sum += posterior
        if len(self.history) > self.config.history_len:
            self._sum -= self.history.popleft()
        smoothed = self._sum / len(self.history)
        # Re-sum occasionally so float error cannot accumulate without bound.
        if smoothed < 0.0 or smoothed > 1.0:
            self._sum = sum(self.history)
            smoothed = self._sum / len(self.history)
        self.state = fsm_step(self.state, smoothed, self.config)
        return self.state, smoothed

    def retune(self, t_idle: float, t_walk: float) -> None:
        """Swap thresholds without disturbing state or smoothing history."""
        self.config = FsmConfig(
            t_idle, t_walk, self.config.smoothing_window_s, self.config.segment_len_s
        )

    def reset(self) -> None:
        self.state = IDLE
        self.history.clear()
        self._sum = 0.0


class SegmentDecoder:
    """Turns raw half-second windows into walk posteriors with a fitted model."""

    def __init__(self, model: DecodingModel, segment_len_s: float = 0.5):
        self.model = model
        self.segment_len = round(segment_len_s * model.sample_rate_hz)
        self._rows = band_rows(model.band_hz)
        self.last_latency_s: float | None = None

    def expected_shape(self) -> tuple[int, int]:
        return (len(self.model.channel_names), self.segment_len)

    def posterior(self, segment: np.ndarray, channel_names=None) -> float:
        """Walk posterior for one window of raw samples.

        The window must carry the full trained montage (artifact channels
        included; they are dropped here exactly as during training). If
        ``channel_names`` is given, channels are matched by name and may
        arrive in any order or as a superset.
        """
        started = time.perf_counter()
        segment = np.asarray(segment, dtype=np.float64)
        model = self.model
        if channel_names is not None:
            index = {n: i for i, n in enumerate(channel_names)}
            missing = [n for n in model.channel_names if n not in index]
            if missing:
                raise InvalidInputError(f"segment is missing channels {missing}")
            segment = segment[[index[n] for n in model.channel_names], :]
        expected = self.expected_shape()
        if segment.shape != expected:
            raise InvalidInputError(
                f"segment shape {segment.shape} does not match expected {expected}"
            )
        conditioned = bandpass_matrix(
            car_matrix(segment), model.sample_rate_hz, model.filter
        )
        retained = conditioned[list(model.mask.retained), :]
        bins = psd_bins(retained, model.sample_rate_hz, taper=model.taper)
        p = float(model.decoder.posterior_walk(bins[None, self._rows, :])[0])
        self.last_latency_s = time.perf_counter() - started
        return p


@dataclass
class CalibrationReport:
    """Posterior distributions under cued idle and walk, plus suggested thresholds.

    Thresholds follow the class medians; ``separable`` is False when the
    medians are inverted (idle median at or above walk median), in which case
    the suggestion falls back to the sorted pair so it still forms a valid
    configuration.
    """

    idle_posteriors: np.ndarray
    walk_posteriors: np.ndarray
    histogram_edges: np.ndarray
    idle_counts: np.ndarray
    walk_counts: np.ndarray
    idle_quartiles: tuple[float, float, float]
    walk_quartiles: tuple[float, float, float]
    suggested_t_idle: float
    suggested_t_walk: float
    separable: bool

    def suggested_config(
        self, smoothing_window_s: float = 1.5, segment_len_s: float = 0.5
    ) -> FsmConfig:
        return FsmConfig(
            self.suggested_t_idle,
            self.suggested_t_walk,
            smoothing_window_s,
            segment_len_s,
        )

    def histogram_payload(self) -> dict:
        return {
            "edges": self.histogram_edges.tolist(),
            "idle": self.idle_counts.tolist(),
            "walk": self.walk_counts.tolist(),
            "median_idle": float(np.median(self.idle_posteriors))
            if len(self.idle_posteriors)
            else None,
            "median_walk": float(np.median(self.walk_posteriors))
            if len(self.walk_posteriors)
            else None,
            "n_idle": int(len(self.idle_posteriors)),
            "n_walk": int(len(self.walk_posteriors)),
        }

    def to_json(self) -> str:
        d = self.histogram_payload()
        d.update(
            idle_quartiles=list(self.idle_quartiles),
            walk_quartiles=list(self.walk_quartiles),
            suggested_t_idle=self.suggested_t_idle,
            suggested_t_walk=self.suggested_t_walk,
            separable=self.separable,
        )
        return json.dumps(d, indent=2, sort_keys=True)


def calibration_report(
    samples: list[tuple[float, str]], n_bins: int = 20, edge_margin: float = 0.02
) -> CalibrationReport:
    """Summarize labeled (posterior, state) pairs into a calibration report.

    Suggested thresholds are the class medians, sorted so they always form a
    valid pair, and clamped into [edge_margin, 1 - edge_margin]: the FSM
    crosses thresholds strictly, so a threshold at the exact boundary could
    never be crossed at all.
    """
    idle = np.array([p for p, s in samples if s == IDLE], dtype=float)
    walk = np.array([p for p, s in samples if s == WALK], dtype=float)
    if len(idle) == 0 or len(walk) == 0:
        raise DegenerateInputError(
            "calibration needs posteriors under both cued conditions; got "
            f"{len(idle)} idle and {len(walk)} walk samples"
        )
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idle_counts, _ = np.histogram(idle, bins=edges)
    walk_counts, _ = np.histogram(walk, bins=edges)
    m_idle, m_walk = float(np.median(idle)), float(np.median(walk))
    separable = m_idle < m_walk
    lo, hi = sorted((m_idle, m_walk))
    lo = float(np.clip(lo, edge_margin, 1.0 - edge_margin))
    hi = float(np.clip(hi, edge_margin, 1.0 - edge_margin))
    return CalibrationReport(
        idle_posteriors=idle,
        walk_posteriors=walk,
        histogram_edges=edges,
        idle_counts=idle_counts,
        walk_counts=walk_counts,
        idle_quartiles=tuple(float(q) for q in np.quantile(idle, [0.25, 0.5, 0.75])),
        walk_quartiles=tuple(float(q) for q in np.quantile(walk, [0.25, 0.5, 0.75])),
        suggested_t_idle=lo,
        suggested_t_walk=hi,
        separable=separable,
    )


def segments_from_recording(rec: EegRecording, segment_len_s: float = 0.5):
    """Yield (window, state) pairs from a labeled recording, in time order.

    A window's state is the label active at its start; windows beginning
    before the first label are skipped.
    """
    if rec.labels is None:
        raise InvalidInputError("recording has no labels")
    step = round(segment_len_s * rec.sample_rate_hz)
    for s0 in range(0, rec.n_samples - step + 1, step):
        state = rec.labels.state_at(s0 / rec.sample_rate_hz)
        if state is None:
            continue
        yield rec.samples[:, s0:s0 + step], state


def run_calibration(
    model: DecodingModel,
    source,
    telemetry=None,
    segment_len_s: float = 0.5,
    emit_every: int = 1,
) -> CalibrationReport:
    """Decode a cued stream and build a calibration report.

    ``source`` is any iterable of (window, state) pairs, e.g.
    :func:`segments_from_recording` or a synthetic ``SegmentStream``.
    """
    decoder = SegmentDecoder(model, segment_len_s)
    samples: list[tuple[float, str]] = []
    t = 0.0
    for i, (window, state) in enumerate(source):
        p = decoder.posterior(window)
        samples.append((p, state))
        if telemetry is not None:
            telemetry.publish_posterior(t, p, None, CLASS_INDEX[state])
            if (i + 1) % emit_every == 0:
                partial = _partial_histogram(samples)
                telemetry.publish("calibration_histogram", t, partial)
        t += segment_len_s
    report = calibration_report(samples)
    if telemetry is not None:
        telemetry.publish("calibration_histogram", t, report.histogram_payload())
    return report


def _partial_histogram(samples: list[tuple[float, str]], n_bins: int = 20) -> dict:
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idle = np.array([p for p, s in samples if s == IDLE], dtype=float)
    walk = np.array([p for p, s in samples if s == WALK], dtype=float)
    return {
        "edges": edges.tolist(),
        "idle": np.histogram(idle, bins=edges)[0].tolist(),
        "walk": np.histogram(walk, bins=edges)[0].tolist(),
        "median_idle": float(np.median(idle)) if len(idle) else None,
        "median_walk": float(np.median(walk)) if len(walk) else None,
        "n_idle": int(len(idle)),
        "n_walk": int(len(walk)),
    }
