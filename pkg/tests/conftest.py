"""Shared fixtures: one small synthetic subject, trained once per session."""

from __future__ import annotations

import dataclasses
import re

import numpy as np
import pytest

from bciwalk.decoder import TrainingConfig, train_decoding_model
from bciwalk.online import run_calibration
from bciwalk.synth import SegmentStream, SynthSpec, TimedIntentScript, generate_recording


@pytest.fixture(scope="session")
def spec16() -> SynthSpec:
    return SynthSpec(n_channels=16, seed=3)


@pytest.fixture(scope="session")
def rec16(spec16):
    return generate_recording(spec16, total_s=600.0)


@pytest.fixture(scope="session")
def model16(rec16):
    return train_decoding_model(
        rec16, TrainingConfig(seed=7, methods=("lda",))
    )


@pytest.fixture(scope="session")
def calib16(model16, spec16):
    stream = SegmentStream(
        dataclasses.replace(spec16, seed=11),
        TimedIntentScript.alternating(15.0, 120.0),
        duration_s=120.0,
    )
    return run_calibration(model16, stream)


@pytest.fixture(scope="session")
def fsm16(calib16):
    return calib16.suggested_config()


_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one PASS/FAIL line per acceptance criterion."""
    results: dict[int, tuple[bool, str]] = {}
    for reports in terminalreporter.stats.values():
        for rep in reports:
            match = _CRITERION.search(getattr(rep, "nodeid", "") or "")
            if match is None:
                continue
            number, title = int(match.group(1)), match.group(2)
            ok_so_far, _ = results.get(number, (True, title))
            failed = getattr(rep, "outcome", "") in ("failed", "error")
            results[number] = (ok_so_far and not failed, title)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, title = results[number]
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(
            f"criterion {number} ({title.replace('_', ' ')}): {verdict}"
        )


def gaussian_trials(
    rng: np.random.Generator,
    n_per_class: int,
    dim: int,
    mu0,
    mu1,
    scale0: float = 1.0,
    scale1: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Two Gaussian clouds as a labeled trial matrix."""
    x0 = rng.standard_normal((n_per_class, dim)) * scale0 + np.asarray(mu0)
    x1 = rng.standard_normal((n_per_class, dim)) * scale1 + np.asarray(mu1)
    X = np.vstack([x0, x1])
    y = np.array([0] * n_per_class + [1] * n_per_class)
    return X, y
