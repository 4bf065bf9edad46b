"""Power spectral estimation on short windows and labeled trial extraction.

Windows are summarized as power integrated over contiguous 2-Hz bins. Bin b
covers the half-open band [2b, 2b+2) Hz; the DC coefficient lands in bin 0
and, when the analysis range extends to Nyquist, the Nyquist coefficient is
kept in the top bin rather than discarded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InvalidInputError
from .recording import IDLE, STATES, EegRecording

BIN_WIDTH_HZ = 2.0

#: Class index convention used throughout: idle is 0, walk is 1.
CLASS_INDEX = {state: i for i, state in enumerate(STATES)}


def psd_bins(
    window: np.ndarray,
    sample_rate_hz: float,
    f_min_hz: float = 0.0,
    f_max_hz: float = 40.0,
    taper: str | None = None,
) -> np.ndarray:
    """Integrate single-window periodogram power into 2-Hz bins.

    Parameters
    ----------
    window : (n_channels, n_samples) array
    taper : None for a plain rectangular window, or "hann".

    Returns
    -------
    (n_bins, n_channels) array, rows ordered low to high frequency.
    """
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise InvalidInputError("window must be (channels, samples)")
    n = window.shape[1]
    nyquist = sample_rate_hz / 2.0
    if not 0.0 <= f_min_hz < f_max_hz <= nyquist:
        raise InvalidInputError("need 0 <= f_min < f_max <= Nyquist")
    if sample_rate_hz / n > BIN_WIDTH_HZ:
        raise InvalidInputError(
            f"window of {n} samples at {sample_rate_hz:g} Hz cannot resolve "
            f"{BIN_WIDTH_HZ:g}-Hz bins"
        )
    if taper == "hann":
        w = np.hanning(n)
        tapered = window * w
        norm = float(np.mean(w**2))
    elif taper is None:
        tapered = window
        norm = 1.0
    else:
        raise InvalidInputError(f"unknown taper {taper!r}")

    spectrum = np.fft.rfft(tapered, axis=1)
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate_hz)
    power = np.abs(spectrum) ** 2 / (n**2 * norm)
    weights = np.full(freqs.shape, 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    power *= weights

    n_bins = int(np.ceil((f_max_hz - f_min_hz) / BIN_WIDTH_HZ))
    bins = np.zeros((n_bins, window.shape[0]))
    bin_idx = np.floor((freqs - f_min_hz) / BIN_WIDTH_HZ).astype(int)
    if f_max_hz == nyquist and n % 2 == 0:
        bin_idx[-1] = n_bins - 1
    keep = (freqs >= f_min_hz) & (bin_idx >= 0) & (bin_idx < n_bins)
    np.add.at(bins, bin_idx[keep], power[:, keep].T)
    return bins


@dataclass(frozen=True)
class SpectralTrial:
    """One labeled trial: binned power plus its source span in the recording."""

    bins: np.ndarray  # (n_bins, n_channels)
    label: int  # CLASS_INDEX value
    span_s: tuple[float, float]


@dataclass(frozen=True)
class TrialSet:
    """A collection of equally shaped labeled trials."""

    trials: tuple[SpectralTrial, ...]
    channel_names: tuple[str, ...]
    sample_rate_hz: float

    def __post_init__(self) -> None:
        if not self.trials:
            raise DegenerateInputError("a trial set cannot be empty")
        shape = self.trials[0].bins.shape
        for t in self.trials:
            if t.bins.shape != shape:
                raise InvalidInputError("all trials must share one bins shape")

    @property
    def n_trials(self) -> int:
        return len(self.trials)

    @property
    def bin_shape(self) -> tuple[int, int]:
        return self.trials[0].bins.shape

    def matrix(self) -> np.ndarray:
        """Stack trials into an (n_trials, n_bins, n_channels) array."""
        return np.stack([t.bins for t in self.trials])

    def labels(self) -> np.ndarray:
        return np.array([t.label for t in self.trials], dtype=int)

    def class_counts(self) -> tuple[int, int]:
        y = self.labels()
        return int(np.sum(y == 0)), int(np.sum(y == 1))

    def with_labels(self, labels: np.ndarray) -> "TrialSet":
        """Same trials with labels replaced (used for permutation controls)."""
        import dataclasses

        if len(labels) != self.n_trials:
            raise InvalidInputError("label count must match trial count")
        trials = tuple(
            dataclasses.replace(t, label=int(l)) for t, l in zip(self.trials, labels)
        )
        return TrialSet(trials, self.channel_names, self.sample_rate_hz)


def _trial_offsets(
    n_trials: int, window: int, slack: int, rng: np.random.Generator
) -> np.ndarray:
    """Start offsets of non-overlapping windows, uniform over all placements.

    Sorted non-negative gaps summing to at most ``slack`` are drawn through
    the standard combination bijection: choose n_trials distinct values from
    {0, ..., slack + n_trials - 1}, sort, subtract (0, 1, ..., n_trials - 1).
    """
    picks = np.sort(rng.choice(slack + n_trials, size=n_trials, replace=False))
    cumulative = picks - np.arange(n_trials)
    return cumulative + np.arange(n_trials) * window


def extract_trials(
    rec: EegRecording,
    seed: int,
    trial_len_s: float = 4.0,
    trials_per_segment: int = 5,
    min_segment_s: float = 20.0,
    f_min_hz: float = 0.0,
    f_max_hz: float = 40.0,
    taper: str | None = None,
) -> TrialSet:
    """Cut non-overlapping trials from every labeled segment of a recording.

    Trial placement within each segment is uniformly random over all
    non-overlapping placements (seeded); segments are processed in temporal
    order so a seed fully determines the result.
    """
    if rec.labels is None:
        raise InvalidInputError("recording has no labels; align a label stream first")
    window = round(trial_len_s * rec.sample_rate_hz)
    rng = np.random.default_rng(seed)
    trials: list[SpectralTrial] = []
    for idx, (start, end, state) in enumerate(rec.labels.segments(rec.duration_s)):
        if end - start < min_segment_s:
            raise DegenerateInputError(
                f"labeled segment {idx} ({state}, {start:g}-{end:g} s) is shorter "
                f"than {min_segment_s:g} s"
            )
        first = round(start * rec.sample_rate_hz)
        length = min(round((end - start) * rec.sample_rate_hz), rec.n_samples - first)
        slack = length - trials_per_segment * window
        if slack < 0:
            raise DegenerateInputError(
                f"labeled segment {idx} cannot hold {trials_per_segment} trials"
            )
        for offset in _trial_offsets(trials_per_segment, window, slack, rng):
            s0 = first + int(offset)
            bins = psd_bins(
                rec.samples[:, s0:s0 + window], rec.sample_rate_hz,
                f_min_hz, f_max_hz, taper,
            )
            span = (s0 / rec.sample_rate_hz, (s0 + window) / rec.sample_rate_hz)
            trials.append(SpectralTrial(bins, CLASS_INDEX[state], span))
    return TrialSet(tuple(trials), rec.channel_names, rec.sample_rate_hz)
