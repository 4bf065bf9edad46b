"""Synthetic EEG with an idle/walk sensorimotor-rhythm contrast.

Every channel carries 1/f background noise. Channels over the midline motor
strip add two amplitude-modulated sinusoids inside the rhythm band; during
walk intent their amplitude drops by sqrt(1 - erd_depth), so rhythm-bin
power scales by (1 - erd_depth). Designated artifact channels carry extra
broadband 30-40 Hz power at a configurable multiple of their baseline.

Generation is chunked with persistent filter and oscillator state, so a
streaming consumer sees a signal identical in character to a batch render,
with no seams at chunk boundaries. All randomness comes from one
``numpy.random.default_rng(seed)`` (PCG64) drawn in a fixed order: tone
phases, AM rates, AM phases at startup, then per chunk the background noise
matrix followed by one artifact draw per artifact channel, in spec order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import InvalidInputError
from .recording import IDLE, MIDLINE_MOTOR, MONTAGE_63, STATES, WALK, EegRecording, LabelStream

# Pole-zero approximation of a pinking (1/f amplitude) filter.
_PINK_B = np.array([0.049922035, -0.095993537, 0.050612699, -0.004408786])
_PINK_A = np.array([1.0, -2.494956002, 2.017265875, -0.522189400])


def _default_names(n_channels: int) -> tuple[str, ...]:
    if n_channels >= len(MONTAGE_63):
        extra = tuple(f"X{i}" for i in range(n_channels - len(MONTAGE_63)))
        return MONTAGE_63 + extra
    # Small montages keep the midline motor strip, then fill front to back.
    picked = set(MIDLINE_MOTOR[: min(n_channels, len(MIDLINE_MOTOR))])
    for name in MONTAGE_63:
        if len(picked) == n_channels:
            break
        picked.add(name)
    return tuple(n for n in MONTAGE_63 if n in picked)


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic subject."""

    n_channels: int = 63
    sample_rate_hz: float = 256.0
    channel_names: tuple[str, ...] | None = None
    rhythm_channels: tuple[str, ...] | None = None
    rhythm_band_hz: tuple[float, float] = (8.0, 16.0)
    rhythm_amplitude: float = 1.0
    am_depth: float = 0.3
    erd_depth: float = 0.8
    noise_floor: float = 1.0
    artifact_channels: dict[str, float] = field(default_factory=dict)
    ramp_s: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        names = self.channel_names or _default_names(self.n_channels)
        object.__setattr__(self, "channel_names", tuple(names))
        if len(self.channel_names) != self.n_channels:
            raise InvalidInputError("channel_names length must equal n_channels")
        rhythm = self.rhythm_channels
        if rhythm is None:
            rhythm = tuple(c for c in MIDLINE_MOTOR if c in self.channel_names)
        object.__setattr__(self, "rhythm_channels", tuple(rhythm))
        missing = set(self.rhythm_channels) - set(self.channel_names)
        if missing:
            raise InvalidInputError(f"rhythm channels not in montage: {sorted(missing)}")
        if not self.rhythm_channels:
            raise InvalidInputError("at least one rhythm channel is required")
        missing = set(self.artifact_channels) - set(self.channel_names)
        if missing:
            raise InvalidInputError(f"artifact channels not in montage: {sorted(missing)}")
        lo, hi = self.rhythm_band_hz
        if not 0.0 < lo < hi < self.sample_rate_hz / 2.0:
            raise InvalidInputError("rhythm band must sit inside (0, Nyquist)")
        if not 0.0 <= self.erd_depth <= 1.0:
            raise InvalidInputError("erd_depth must be in [0, 1]")
        if self.noise_floor <= 0 or self.rhythm_amplitude < 0:
            raise InvalidInputError("noise_floor must be > 0 and rhythm_amplitude >= 0")
        for name, mult in self.artifact_channels.items():
            if mult < 1.0:
                raise InvalidInputError(
                    f"artifact multiplier for {name} must be >= 1 (got {mult})"
                )

    @property
    def tone_hz(self) -> tuple[float, float]:
        """The two rhythm carriers, at 1/4 and 3/4 of the rhythm band."""
        lo, hi = self.rhythm_band_hz
        span = hi - lo
        return (lo + span / 4.0, hi - span / 4.0)

    def to_json(self) -> str:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["channel_names"] = list(self.channel_names)
        d["rhythm_channels"] = list(self.rhythm_channels)
        d["rhythm_band_hz"] = list(self.rhythm_band_hz)
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        d = json.loads(text)
        for key in ("channel_names", "rhythm_channels", "rhythm_band_hz"):
            if key in d and d[key] is not None:
                d[key] = tuple(d[key])
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "SynthSpec":
        return cls.from_json(Path(path).read_text())


def _filter_band_gain(b, a, f_lo, f_hi, fs, worN=4096) -> float:
    """Fraction of unit-white-noise output power that lands in [f_lo, f_hi)."""
    freqs, h = signal.freqz(b, a, worN=worN, fs=fs)
    p = np.abs(h) ** 2
    total = np.trapezoid(p, freqs)
    mask = (freqs >= f_lo) & (freqs < f_hi)
    return float(np.trapezoid(p[mask], freqs[mask]) / total)


class SynthEngine:
    """Stateful chunked generator for one synthetic subject."""

    def __init__(self, spec: SynthSpec):
        self.spec = spec
        fs = spec.sample_rate_hz
        self._rng = np.random.default_rng(spec.seed)
        self._rhythm_idx = [spec.channel_names.index(c) for c in spec.rhythm_channels]
        n_r, n_t = len(self._rhythm_idx), len(spec.tone_hz)
        self._tone_phase = self._rng.uniform(0, 2 * np.pi, size=(n_r, n_t))
        self._am_rate = self._rng.uniform(0.1, 0.3, size=n_r)
        self._am_phase = self._rng.uniform(0, 2 * np.pi, size=n_r)
        # Persistent pinking-filter state, one section per channel.
        self._pink_zi = np.zeros((spec.n_channels, len(_PINK_A) - 1))
        # Unit-variance white noise through the pinking filter has this std.
        impulse = np.zeros(1 << 14)
        impulse[0] = 1.0
        h = signal.lfilter(_PINK_B, _PINK_A, impulse)
        self._pink_std = float(np.sqrt(np.sum(h**2)))
        # Fraction of pink-noise power that the artifact band carries, used to
        # express artifact strength as a multiple of each channel's baseline.
        self._artifact_band = (30.0, 40.0)
        self._pink_band_fraction = _filter_band_gain(
            _PINK_B, _PINK_A, *self._artifact_band, fs
        )
        self._artifact = []
        if spec.artifact_channels:
            sos = signal.butter(
                4, self._artifact_band, btype="bandpass", fs=fs, output="sos"
            )
            band_fraction = 1.0  # output of the band-pass is (almost) all in band
            for name, mult in spec.artifact_channels.items():
                idx = spec.channel_names.index(name)
                # White noise through the band-pass: estimate its output std once.
                h_bp = signal.sosfilt(sos, impulse)
                unit_std = float(np.sqrt(np.sum(h_bp**2)))
                baseline_band_power = (
                    spec.noise_floor**2 * self._pink_band_fraction
                )
                extra = (mult - 1.0) * baseline_band_power / band_fraction
                gain = float(np.sqrt(extra)) / unit_std
                self._artifact.append(
                    {"idx": idx, "sos": sos, "zi": np.zeros((sos.shape[0], 2)), "gain": gain}
                )
        self._gain = {IDLE: 1.0, WALK: float(np.sqrt(1.0 - spec.erd_depth))}
        self._current_gain = None  # set on the first chunk
        self.time_s = 0.0

    def chunk(self, n_samples: int, state: str) -> np.ndarray:
        """Generate the next n_samples with the given intent state."""
        if state not in STATES:
            raise InvalidInputError(f"unknown intent state {state!r}")
        spec = self.spec
        fs = spec.sample_rate_hz
        white = self._rng.standard_normal((spec.n_channels, n_samples))
        pink, self._pink_zi = signal.lfilter(
            _PINK_B, _PINK_A, white, axis=-1, zi=self._pink_zi
        )
        out = pink * (spec.noise_floor / self._pink_std)

        target = self._gain[state]
        if self._current_gain is None:
            self._current_gain = target
        envelope = np.full(n_samples, target)
        if target != self._current_gain:
            ramp = min(round(spec.ramp_s * fs), n_samples)
            u = np.linspace(0.0, 1.0, ramp, endpoint=False)
            envelope[:ramp] = self._current_gain + (target - self._current_gain) * (
                1.0 - np.cos(np.pi * u)
            ) / 2.0
        self._current_gain = target

        k = np.arange(1, n_samples + 1)
        am = 1.0 + spec.am_depth * np.sin(
            self._am_phase[:, None] + 2 * np.pi * self._am_rate[:, None] * k[None, :] / fs
        )
        rhythm = np.zeros((len(self._rhythm_idx), n_samples))
        for j, f in enumerate(spec.tone_hz):
            phases = self._tone_phase[:, j][:, None] + 2 * np.pi * f * k[None, :] / fs
            rhythm += np.sin(phases)
            self._tone_phase[:, j] = np.mod(
                self._tone_phase[:, j] + 2 * np.pi * f * n_samples / fs, 2 * np.pi
            )
        self._am_phase = np.mod(
            self._am_phase + 2 * np.pi * self._am_rate * n_samples / fs, 2 * np.pi
        )
        out[self._rhythm_idx, :] += spec.rhythm_amplitude * am * rhythm * envelope

        for art in self._artifact:
            w = self._rng.standard_normal(n_samples)
            banded, art["zi"] = signal.sosfilt(art["sos"], w, zi=art["zi"])
            out[art["idx"], :] += art["gain"] * banded

        self.time_s += n_samples / fs
        return out


def generate_recording(
    spec: SynthSpec,
    epoch_s: float = 30.0,
    total_s: float = 600.0,
    start_state: str = IDLE,
) -> EegRecording:
    """Render a block-alternating idle/walk recording with embedded labels."""
    if epoch_s <= 0 or total_s <= 0:
        raise InvalidInputError("epoch_s and total_s must be positive")
    engine = SynthEngine(spec)
    fs = spec.sample_rate_hz
    n_total = round(total_s * fs)
    per_epoch = round(epoch_s * fs)
    state = start_state
    transitions: list[tuple[float, str]] = []
    chunks = []
    produced = 0
    while produced < n_total:
        n = min(per_epoch, n_total - produced)
        transitions.append((produced / fs, state))
        chunks.append(engine.chunk(n, state))
        produced += n
        state = WALK if state == IDLE else IDLE
    samples = np.concatenate(chunks, axis=1).astype(np.float32)
    return EegRecording(
        sample_rate_hz=fs,
        channel_names=spec.channel_names,
        samples=samples,
        labels=LabelStream(tuple(transitions)),
    )


class TimedIntentScript:
    """Intent given as a fixed (duration_s, state) schedule."""

    def __init__(self, steps: list[tuple[float, str]]):
        if not steps:
            raise InvalidInputError("intent script cannot be empty")
        for dur, state in steps:
            if dur <= 0:
                raise InvalidInputError("script step durations must be positive")
            if state not in STATES:
                raise InvalidInputError(f"unknown intent state {state!r}")
        self.steps = [(float(d), s) for d, s in steps]
        self.total_s = sum(d for d, _ in self.steps)

    @classmethod
    def alternating(cls, period_s: float, total_s: float, start: str = IDLE) -> "TimedIntentScript":
        steps = []
        state, t = start, 0.0
        while t < total_s:
            steps.append((min(period_s, total_s - t), state))
            t += period_s
            state = WALK if state == IDLE else IDLE
        return cls(steps)

    def __call__(self, t: float, snapshot=None) -> str:
        if t < 0:
            raise InvalidInputError("intent queried before time zero")
        acc = 0.0
        for dur, state in self.steps:
            acc += dur
            if t < acc:
                return state
        raise InvalidInputError(
            f"intent script covers {self.total_s:g} s but was queried at {t:g} s"
        )


class SegmentStream:
    """Streams fixed-length analysis windows from a synthetic subject.

    ``next_segment`` asks the intent provider for the state governing the
    upcoming window, then synthesizes exactly one window of samples, so a
    closed-loop provider can react to the latest simulator snapshot.
    """

    def __init__(
        self,
        spec: SynthSpec,
        intent,
        segment_len_s: float = 0.5,
        duration_s: float | None = None,
    ):
        self.engine = SynthEngine(spec)
        self.intent = intent
        self.segment_len = round(segment_len_s * spec.sample_rate_hz)
        self.duration_s = duration_s
        self.channel_names = spec.channel_names

    def next_segment(self, snapshot=None) -> tuple[np.ndarray, str]:
        t = self.engine.time_s
        if self.duration_s is not None and t >= self.duration_s:
            raise StopIteration
        state = self.intent(t, snapshot)
        return self.engine.chunk(self.segment_len, state), state

    def __iter__(self):
        while True:
            try:
                yield self.next_segment()
            except StopIteration:
                return
