"""Signal conditioning: re-referencing, band-pass filtering, channel QC.

All operations are pure: they take an :class:`EegRecording` (or a raw
channels-by-samples matrix) and return a new one. Matrix-level helpers are
exposed so the online path can condition half-second windows with exactly
the same code that conditions full recordings.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import DegenerateInputError, InvalidInputError
from .recording import ChannelMask, EegRecording, LabelStream


@dataclass(frozen=True)
class FilterConfig:
    """Zero-phase Butterworth band-pass settings."""

    low_hz: float = 0.01
    high_hz: float = 40.0
    order: int = 4

    def __post_init__(self) -> None:
        if not 0.0 < self.low_hz < self.high_hz:
            raise InvalidInputError("need 0 < low_hz < high_hz")
        if self.order < 1:
            raise InvalidInputError("filter order must be >= 1")


def car_matrix(x: np.ndarray) -> np.ndarray:
    """Common average reference: subtract the instantaneous cross-channel mean."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InvalidInputError("CAR needs a 2-D matrix with at least 2 channels")
    return x - x.mean(axis=0, keepdims=True)


def bandpass_matrix(x: np.ndarray, sample_rate_hz: float, config: FilterConfig) -> np.ndarray:
    """Zero-phase Butterworth band-pass along the sample axis."""
    x = np.asarray(x, dtype=np.float64)
    nyquist = sample_rate_hz / 2.0
    if config.high_hz >= nyquist:
        raise InvalidInputError(
            f"high cutoff {config.high_hz} Hz must sit below Nyquist ({nyquist} Hz)"
        )
    sos = signal.butter(
        config.order, [config.low_hz, config.high_hz], btype="bandpass",
        fs=sample_rate_hz, output="sos",
    )
    return signal.sosfiltfilt(sos, x, axis=-1)


def common_average_reference(rec: EegRecording) -> EegRecording:
    """Re-reference every channel to the instantaneous cross-channel mean."""
    return rec.with_samples(car_matrix(rec.samples))


def bandpass(rec: EegRecording, config: FilterConfig = FilterConfig()) -> EegRecording:
    """Band-pass filter a recording with zero phase distortion."""
    return rec.with_samples(bandpass_matrix(rec.samples, rec.sample_rate_hz, config))


def band_power(x: np.ndarray, sample_rate_hz: float, low_hz: float, high_hz: float) -> np.ndarray:
    """Mean power per channel inside [low_hz, high_hz), via the periodogram."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    spectrum = np.fft.rfft(x, axis=-1)
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate_hz)
    power = np.abs(spectrum) ** 2 / n**2
    weights = np.full(freqs.shape, 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    mask = (freqs >= low_hz) & (freqs < high_hz)
    return (power[..., mask] * weights[mask]).sum(axis=-1)


def reject_artifact_channels(
    rec: EegRecording,
    band_hz: tuple[float, float] = (30.0, 40.0),
    k_mad: float = 5.0,
) -> tuple[EegRecording, ChannelMask]:
    """Iteratively drop channels whose high-band power is a gross outlier.

    A channel is excluded when its power in ``band_hz`` exceeds the median of
    the currently retained channels by more than ``k_mad`` median absolute
    deviations. Exclusion repeats until no channel crosses the bar, so a very
    large outlier cannot mask a smaller one.
    """
    powers = band_power(rec.samples, rec.sample_rate_hz, *band_hz)
    retained = list(range(rec.n_channels))
    excluded: dict[int, str] = {}
    while True:
        if not retained:
            raise DegenerateInputError(
                "artifact rejection excluded every channel; the recording is unusable"
            )
        p = powers[retained]
        median = float(np.median(p))
        mad = float(np.median(np.abs(p - median)))
        threshold = median + k_mad * mad
        offenders = [i for i in retained if powers[i] > threshold]
        if not offenders:
            break
        for i in offenders:
            ratio = powers[i] / median if median > 0 else float("inf")
            excluded[i] = (
                f"{band_hz[0]:g}-{band_hz[1]:g} Hz power {ratio:.1f}x the retained median"
            )
        retained = [i for i in retained if i not in excluded]
    mask = ChannelMask(rec.n_channels, tuple(retained), excluded)
    return rec.select_channels(retained), mask


def align_labels(
    rec: EegRecording, labels: LabelStream, offset_s: float = 0.0
) -> EegRecording:
    """Attach a label stream to a recording, shifting label times by offset_s.

    Transitions shifted past the end of the recording are dropped; transitions
    shifted before time 0 collapse onto the state active at time 0. If no
    labeled time overlaps the recording, the alignment is rejected.
    """
    shifted = [(t + offset_s, s) for t, s in labels.transitions]
    kept: list[tuple[float, str]] = []
    for t, s in shifted:
        if t <= 0.0:
            kept = [(0.0, s)]
        elif t < rec.duration_s:
            kept.append((t, s))
    if not kept:
        raise InvalidInputError(
            "labels fall entirely outside the recording after alignment"
        )
    return rec.with_labels(LabelStream(tuple(kept)))
