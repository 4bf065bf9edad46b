"""Core data types for multichannel EEG recordings and their file container.

A recording couples a sample matrix with the metadata required to interpret
it: sampling rate, electrode names, and (optionally) a stream of idle/walk
condition labels. The binary container keeps the header in plain text so a
recording can be inspected with standard shell tools.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

IDLE = "idle"
WALK = "walk"
STATES = (IDLE, WALK)

# Extended 10-20 montage used by the synthetic generator, 63 electrodes.
MONTAGE_63 = (
    "Fp1", "Fpz", "Fp2",
    "AF7", "AF3", "AFz", "AF4", "AF8",
    "F7", "F5", "F3", "F1", "Fz", "F2", "F4", "F6", "F8",
    "FT7", "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "FT8",
    "T7", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "T8",
    "TP7", "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6", "TP8",
    "P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8",
    "PO7", "PO3", "POz", "PO4", "PO8",
    "O1", "Oz", "O2",
    "M1", "M2",
)

# Midline central electrodes over the leg motor area; default carriers of
# the synthetic mu/beta rhythm.
MIDLINE_MOTOR = ("FC1", "FCz", "FC2", "C1", "Cz", "C2", "CP1", "CPz", "CP2")

_MAGIC = "bciwalk-recording v1"
_DTYPES = {"float32le": "<f4", "float64le": "<f8"}


@dataclass(frozen=True)
class LabelStream:
    """Piecewise-constant idle/walk labels given as (time_s, state) transitions.

    Transition times are strictly increasing and states alternate. A stream
    normally begins at time 0; a stream shifted by :func:`align_labels` may
    begin later, in which case the leading span of the recording is unlabeled.
    """

    transitions: tuple[tuple[float, str], ...]

    def __post_init__(self) -> None:
        if len(self.transitions) == 0:
            raise InvalidInputError("label stream needs at least one transition")
        object.__setattr__(
            self,
            "transitions",
            tuple((float(t), str(s)) for t, s in self.transitions),
        )
        times = [t for t, _ in self.transitions]
        states = [s for _, s in self.transitions]
        for s in states:
            if s not in STATES:
                raise InvalidInputError(f"unknown label state {s!r}")
        if times[0] < 0.0:
            raise InvalidInputError("label times must be non-negative")
        for a, b in zip(times, times[1:]):
            if not b > a:
                raise InvalidInputError("label times must be strictly increasing")
        for a, b in zip(states, states[1:]):
            if a == b:
                raise InvalidInputError("consecutive labels must alternate")

    def segments(self, duration_s: float) -> list[tuple[float, float, str]]:
        """Return (start_s, end_s, state) spans clipped to [0, duration_s)."""
        spans = []
        for i, (t, s) in enumerate(self.transitions):
            end = self.transitions[i + 1][0] if i + 1 < len(self.transitions) else duration_s
            start, end = max(t, 0.0), min(end, duration_s)
            if end > start:
                spans.append((start, end, s))
        return spans

    def state_at(self, t: float) -> str | None:
        """State active at time t, or None if t precedes the first transition."""
        state = None
        for time, s in self.transitions:
            if time <= t:
                state = s
            else:
                break
        return state


@dataclass
class EegRecording:
    """A multichannel EEG recording: samples are (n_channels, n_samples)."""

    sample_rate_hz: float
    channel_names: tuple[str, ...]
    samples: np.ndarray
    labels: LabelStream | None = None

    def __post_init__(self) -> None:
        self.sample_rate_hz = float(self.sample_rate_hz)
        self.channel_names = tuple(str(n) for n in self.channel_names)
        if not np.isfinite(self.sample_rate_hz) or self.sample_rate_hz <= 0:
            raise InvalidInputError("sample_rate_hz must be finite and positive")
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 2:
            raise InvalidInputError("samples must be a 2-D (channels, samples) array")
        if len(self.channel_names) != self.samples.shape[0]:
            raise InvalidInputError(
                f"{len(self.channel_names)} channel names for "
                f"{self.samples.shape[0]} sample rows"
            )
        if len(set(self.channel_names)) != len(self.channel_names):
            raise InvalidInputError("channel names must be unique")
        for name in self.channel_names:
            if "," in name or not name:
                raise InvalidInputError(f"invalid channel name {name!r}")
        if self.n_channels < 2:
            raise InvalidInputError(
                "a recording needs at least 2 channels (re-referencing is "
                "undefined otherwise)"
            )

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def with_samples(self, samples: np.ndarray) -> "EegRecording":
        """Copy of this recording with the sample matrix replaced."""
        return dataclasses.replace(self, samples=samples)

    def with_labels(self, labels: LabelStream | None) -> "EegRecording":
        return dataclasses.replace(self, labels=labels)

    def select_channels(self, indices) -> "EegRecording":
        indices = list(indices)
        return dataclasses.replace(
            self,
            channel_names=tuple(self.channel_names[i] for i in indices),
            samples=self.samples[indices, :],
        )


@dataclass(frozen=True)
class ChannelMask:
    """Partition of channel indices into retained and excluded (with reasons)."""

    n_channels: int
    retained: tuple[int, ...]
    excluded: dict[int, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "retained", tuple(int(i) for i in self.retained))
        all_idx = sorted(self.retained) + sorted(self.excluded)
        if sorted(all_idx) != list(range(self.n_channels)):
            raise InvalidInputError(
                "retained and excluded channels must partition the channel set"
            )
        if len(self.retained) == 0:
            raise InvalidInputError("a channel mask must retain at least one channel")

    @property
    def n_retained(self) -> int:
        return len(self.retained)


def write_recording(rec: EegRecording, path: str | Path) -> None:
    """Write a recording to the v1 container (text header, raw binary body).

    float32 and float64 sample matrices round-trip bit-exactly; any other
    dtype is stored as float64.
    """
    path = Path(path)
    dtype_name = "float32le" if rec.samples.dtype == np.float32 else "float64le"
    lines = [
        _MAGIC,
        f"sample_rate_hz={rec.sample_rate_hz!r}",
        f"n_channels={rec.n_channels}",
        f"n_samples={rec.n_samples}",
        f"dtype={dtype_name}",
        "channels=" + ",".join(rec.channel_names),
    ]
    if rec.labels is not None:
        lines.append(
            "labels=" + ",".join(f"{t!r}:{s}" for t, s in rec.labels.transitions)
        )
    lines.append("end-header")
    body = np.ascontiguousarray(rec.samples.astype(_DTYPES[dtype_name], copy=False))
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        fh.write(body.tobytes(order="C"))


def read_recording(path: str | Path) -> EegRecording:
    """Read a recording written by :func:`write_recording`."""
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    header_end = raw.find(b"end-header\n")
    if not raw.startswith(_MAGIC.encode()) or header_end < 0:
        raise InvalidInputError(f"{path} is not a bciwalk recording container")
    fields: dict[str, str] = {}
    for line in raw[:header_end].decode("utf-8").splitlines()[1:]:
        key, _, value = line.partition("=")
        fields[key] = value
    for key in ("sample_rate_hz", "n_channels", "n_samples", "dtype", "channels"):
        if key not in fields:
            raise InvalidInputError(f"{path}: container header is missing {key!r}")
    if fields["dtype"] not in _DTYPES:
        raise InvalidInputError(f"{path}: unsupported dtype {fields['dtype']!r}")
    n_channels = int(fields["n_channels"])
    n_samples = int(fields["n_samples"])
    dtype = np.dtype(_DTYPES[fields["dtype"]])
    body = raw[header_end + len(b"end-header\n"):]
    expected = n_channels * n_samples * dtype.itemsize
    if len(body) != expected:
        raise InvalidInputError(
            f"{path}: body holds {len(body)} bytes, header promises {expected}"
        )
    samples = np.frombuffer(body, dtype=dtype).reshape(n_channels, n_samples)
    labels = None
    if "labels" in fields and fields["labels"]:
        transitions = []
        for item in fields["labels"].split(","):
            t, _, s = item.partition(":")
            transitions.append((float(t), s))
        labels = LabelStream(tuple(transitions))
    return EegRecording(
        sample_rate_hz=float(fields["sample_rate_hz"]),
        channel_names=tuple(fields["channels"].split(",")),
        samples=samples,
        labels=labels,
    )
