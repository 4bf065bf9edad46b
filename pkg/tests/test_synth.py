"""Synthetic subject: spectra, ERD contrast, streaming continuity, determinism."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from bciwalk.errors import InvalidInputError
from bciwalk.preprocess import band_power
from bciwalk.recording import IDLE, MIDLINE_MOTOR, WALK
from bciwalk.synth import (
    SegmentStream,
    SynthEngine,
    SynthSpec,
    TimedIntentScript,
    generate_recording,
)


class TestSynthSpec:
    def test_defaults(self):
        spec = SynthSpec()
        assert spec.n_channels == 63
        assert len(spec.channel_names) == 63
        assert spec.rhythm_channels == MIDLINE_MOTOR
        assert spec.tone_hz == (10.0, 14.0)

    def test_small_montage_keeps_motor_strip(self):
        spec = SynthSpec(n_channels=16)
        assert set(MIDLINE_MOTOR) <= set(spec.channel_names)
        assert len(spec.channel_names) == 16

    def test_unknown_artifact_channel_rejected(self):
        with pytest.raises(InvalidInputError):
            SynthSpec(artifact_channels={"XX9": 10.0})

    def test_artifact_multiplier_below_one_rejected(self):
        with pytest.raises(InvalidInputError):
            SynthSpec(artifact_channels={"Fp1": 0.5})

    def test_erd_depth_range(self):
        with pytest.raises(InvalidInputError):
            SynthSpec(erd_depth=1.5)

    def test_json_round_trip(self):
        spec = SynthSpec(n_channels=16, erd_depth=0.6, seed=9,
                         artifact_channels={"Fp1": 5.0})
        back = SynthSpec.from_json(spec.to_json())
        assert back == spec


class TestSynthEngine:
    def test_rhythm_band_concentration(self):
        spec = SynthSpec(n_channels=16, seed=1)
        engine = SynthEngine(spec)
        x = engine.chunk(256 * 20, IDLE)
        idx = spec.channel_names.index("Cz")
        in_band = band_power(x[idx:idx + 1], 256.0, 8.0, 16.0)[0]
        out_band = band_power(x[idx:idx + 1], 256.0, 20.0, 40.0)[0]
        assert in_band > 5 * out_band

    def test_erd_power_ratio(self):
        spec = SynthSpec(n_channels=16, seed=2, erd_depth=0.8)
        engine = SynthEngine(spec)
        idle = engine.chunk(256 * 30, IDLE)
        walk = engine.chunk(256 * 30, WALK)
        idx = spec.channel_names.index("Cz")
        p_idle = band_power(idle[idx:idx + 1], 256.0, 8.0, 16.0)[0]
        p_walk = band_power(walk[idx:idx + 1], 256.0, 8.0, 16.0)[0]
        # rhythm power scales by (1 - erd_depth); noise adds a small floor
        assert p_walk / p_idle < 0.35

    def test_zero_erd_no_contrast(self):
        spec = SynthSpec(n_channels=16, seed=3, erd_depth=0.0)
        engine = SynthEngine(spec)
        idle = engine.chunk(256 * 30, IDLE)
        walk = engine.chunk(256 * 30, WALK)
        idx = spec.channel_names.index("Cz")
        p_idle = band_power(idle[idx:idx + 1], 256.0, 8.0, 16.0)[0]
        p_walk = band_power(walk[idx:idx + 1], 256.0, 8.0, 16.0)[0]
        assert p_walk / p_idle == pytest.approx(1.0, abs=0.15)

    def test_non_rhythm_channel_has_no_band_structure(self):
        spec = SynthSpec(n_channels=16, seed=4)
        engine = SynthEngine(spec)
        x = engine.chunk(256 * 20, IDLE)
        idx = spec.channel_names.index("Fp1")
        assert "Fp1" not in spec.rhythm_channels
        in_band = band_power(x[idx:idx + 1], 256.0, 8.0, 16.0)[0]
        neighbor = band_power(x[idx:idx + 1], 256.0, 16.0, 24.0)[0]
        # pink noise only: smooth spectrum, no rhythm peak
        assert in_band < 4 * neighbor

    def test_artifact_channel_band_power_multiple(self):
        spec = SynthSpec(n_channels=16, seed=5, artifact_channels={"Fp1": 10.0})
        engine = SynthEngine(spec)
        x = engine.chunk(256 * 60, IDLE)
        i_art = spec.channel_names.index("Fp1")
        i_ref = spec.channel_names.index("Fp2")
        p_art = band_power(x[i_art:i_art + 1], 256.0, 30.0, 40.0)[0]
        p_ref = band_power(x[i_ref:i_ref + 1], 256.0, 30.0, 40.0)[0]
        assert p_art / p_ref == pytest.approx(10.0, rel=0.35)

    def test_unknown_state_rejected(self):
        engine = SynthEngine(SynthSpec(n_channels=16))
        with pytest.raises(InvalidInputError):
            engine.chunk(128, "sprint")

    def test_oscillators_continuous_across_chunks(self):
        # With the noise floor driven to nothing, the deterministic rhythm
        # must be identical whether rendered in one chunk or several.
        spec = SynthSpec(n_channels=4, channel_names=("Cz", "C1", "C2", "Fp1"),
                         seed=6, noise_floor=1e-12)
        batch = SynthEngine(spec).chunk(1024, IDLE)
        engine = SynthEngine(spec)
        parts = [engine.chunk(n, IDLE) for n in (128, 512, 384)]
        chunked = np.concatenate(parts, axis=1)
        np.testing.assert_allclose(chunked, batch, atol=1e-8)

    def test_noise_has_no_seam_at_chunk_boundaries(self):
        # Pink-noise filter state persists across chunks: samples adjacent
        # across a boundary stay as correlated as interior neighbours.
        spec = SynthSpec(rhythm_amplitude=0.0, seed=15)  # 63 channels of noise
        engine = SynthEngine(spec)
        parts = [engine.chunk(256, IDLE) for _ in range(8)]
        x = np.concatenate(parts, axis=1)
        seams = [256 * k for k in range(1, 8)]
        pairs = np.array([[x[c, b - 1], x[c, b]] for b in seams for c in range(63)])
        seam_corr = np.corrcoef(pairs[:, 0], pairs[:, 1])[0, 1]
        interior_corr = np.corrcoef(x[:, 99:-1].ravel(), x[:, 100:].ravel())[0, 1]
        assert seam_corr > interior_corr - 0.1

    def test_state_change_ramps_smoothly(self):
        spec = SynthSpec(n_channels=4, channel_names=("Cz", "C1", "C2", "Fp1"),
                         seed=7, noise_floor=1e-6, am_depth=0.0)
        engine = SynthEngine(spec)
        engine.chunk(512, IDLE)
        x = engine.chunk(512, WALK)
        idx = 0  # Cz
        # envelope eases over ramp_s = 0.5 s = 128 samples; no jump at the seam
        early = np.abs(x[idx, :16]).max()
        late = np.abs(x[idx, 200:]).max()
        amp_idle = 2.0 * spec.rhythm_amplitude  # two unit tones
        assert early > 0.5 * np.sqrt(1 - spec.erd_depth) * amp_idle  # still near idle gain
        assert late < 1.05 * np.sqrt(1 - spec.erd_depth) * amp_idle  # settled at walk gain


class TestGenerateRecording:
    def test_shape_labels_and_dtype(self):
        spec = SynthSpec(n_channels=16, seed=8)
        rec = generate_recording(spec, epoch_s=30.0, total_s=120.0)
        assert rec.samples.shape == (16, 120 * 256)
        assert rec.samples.dtype == np.float32
        assert rec.labels.transitions == (
            (0.0, IDLE), (30.0, WALK), (60.0, IDLE), (90.0, WALK)
        )

    def test_deterministic(self):
        spec = SynthSpec(n_channels=16, seed=9)
        a = generate_recording(spec, total_s=10.0, epoch_s=5.0)
        b = generate_recording(spec, total_s=10.0, epoch_s=5.0)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_seed_matters(self):
        a = generate_recording(SynthSpec(n_channels=16, seed=10), total_s=5.0)
        b = generate_recording(SynthSpec(n_channels=16, seed=11), total_s=5.0)
        assert not np.array_equal(a.samples, b.samples)


class TestTimedIntentScript:
    def test_alternating_schedule(self):
        script = TimedIntentScript.alternating(15.0, 60.0)
        assert script(0.0) == IDLE
        assert script(14.999) == IDLE
        assert script(15.0) == WALK
        assert script(59.999) == WALK

    def test_query_past_end_raises(self):
        script = TimedIntentScript([(10.0, IDLE)])
        with pytest.raises(InvalidInputError):
            script(10.0)

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            TimedIntentScript([])


class TestSegmentStream:
    def test_segment_shape_and_count(self):
        spec = SynthSpec(n_channels=16, seed=12)
        stream = SegmentStream(spec, TimedIntentScript.alternating(5.0, 10.0),
                               duration_s=10.0)
        segments = list(stream)
        assert len(segments) == 20
        window, state = segments[0]
        assert window.shape == (16, 128)
        assert state == IDLE
        assert segments[10][1] == WALK

    def test_exhaustion_raises_stopiteration(self):
        spec = SynthSpec(n_channels=16, seed=13)
        stream = SegmentStream(spec, TimedIntentScript.alternating(5.0, 5.0),
                               duration_s=1.0)
        for _ in range(2):
            stream.next_segment()
        with pytest.raises(StopIteration):
            stream.next_segment()

    def test_intent_sees_snapshot(self):
        spec = SynthSpec(n_channels=16, seed=14)
        seen = []

        def intent(t, snapshot):
            seen.append(snapshot)
            return IDLE

        stream = SegmentStream(spec, intent)
        stream.next_segment("the-snapshot")
        assert seen == ["the-snapshot"]
