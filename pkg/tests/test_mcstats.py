"""Null-model ensembles, the 2-D KDE, level-set p-values, composite scoring."""

from __future__ import annotations

import math

import numpy as np
import pytest

from bciwalk.errors import InvalidInputError
from bciwalk.mcstats import (
    ALPHA,
    IDEAL_COMPLETION_S,
    GaussianKde2d,
    McEnsemble,
    composite,
    evaluate_session,
    evaluation_report,
    export_ensemble_csv,
    export_report_csv,
    level_set_p_value,
    random_walk_mc,
    read_ensemble_csv,
)
from bciwalk.online import FsmConfig
from bciwalk.simulator import StopAndGoIntent, Track, run_session, step_source

CFG = FsmConfig(t_idle=0.40, t_walk=0.62)
ZERO_LAG = FsmConfig(t_idle=0.40, t_walk=0.62, smoothing_window_s=0.5)


@pytest.fixture(scope="module")
def ensemble300():
    return random_walk_mc(CFG, n_runs=300, seed=17)


@pytest.fixture(scope="module")
def kde300(ensemble300):
    return GaussianKde2d.fit(ensemble300.samples())


class TestRandomWalkMc:
    def test_shapes_and_ranges(self, ensemble300):
        e = ensemble300
        assert e.n_runs == 300
        assert e.samples().shape == (300, 2)
        assert np.all((e.stops_scores >= 0) & (e.stops_scores <= 10))
        assert np.all(e.completion_times <= e.time_limit_s)
        # physical floor: straight walk to the last zone plus the full dwell
        assert np.all(e.completion_times >= 181.52)

    def test_deterministic_under_seed(self):
        a = random_walk_mc(CFG, n_runs=20, seed=4)
        b = random_walk_mc(CFG, n_runs=20, seed=4)
        np.testing.assert_array_equal(a.stops_scores, b.stops_scores)
        np.testing.assert_array_equal(a.completion_times, b.completion_times)

    def test_seed_changes_outcomes(self):
        a = random_walk_mc(CFG, n_runs=20, seed=4)
        b = random_walk_mc(CFG, n_runs=20, seed=5)
        assert not np.array_equal(a.completion_times, b.completion_times)

    def test_unfinished_runs_enter_at_cap(self):
        # extreme thresholds: the random walk can never cross 0.98, so no
        # run ever moves and every run times out at the cap
        frozen = FsmConfig(t_idle=0.02, t_walk=0.98)
        e = random_walk_mc(frozen, n_runs=10, seed=6, time_limit_s=240.0)
        assert e.finished_fraction == 0.0
        assert np.all(e.completion_times == 240.0)
        assert np.all(e.stops_scores == 0.0)

    def test_summary_fields(self, ensemble300):
        s = ensemble300.summary()
        assert s["n_runs"] == 300
        assert s["fsm"]["t_walk"] == 0.62
        assert 0.0 <= s["finished_fraction"] <= 1.0

    def test_minimum_runs_enforced(self):
        with pytest.raises(InvalidInputError):
            random_walk_mc(CFG, n_runs=1)

    def test_csv_round_trip(self, ensemble300, tmp_path):
        path = tmp_path / "ensemble.csv"
        export_ensemble_csv(ensemble300, path)
        back = read_ensemble_csv(path)
        assert back.n_runs == ensemble300.n_runs
        assert back.seed == ensemble300.seed
        assert back.fsm == ensemble300.fsm
        np.testing.assert_allclose(back.stops_scores, ensemble300.stops_scores, atol=1e-6)
        np.testing.assert_allclose(
            back.completion_times, ensemble300.completion_times, atol=1e-6
        )
        np.testing.assert_array_equal(back.finished, ensemble300.finished)


class TestGaussianKde2d:
    def test_density_integrates_to_one(self, kde300):
        assert kde300.grid_integral() == pytest.approx(1.0, abs=0.02)

    def test_density_peaks_near_the_data(self, ensemble300, kde300):
        center = ensemble300.samples().mean(axis=0)
        far = center + np.array([0.0, 900.0])
        d_center, d_far = kde300.density(np.vstack([center, far]))
        assert d_center > 100 * max(d_far, 1e-300)

    def test_degenerate_axis_becomes_point_mass_on_it(self):
        # all runs timed out: time column is constant, score column varies
        samples = np.column_stack([np.random.default_rng(7).uniform(0, 3, 50),
                                   np.full(50, 1200.0)])
        kde = GaussianKde2d.fit(samples)
        assert kde.active_axes == (0,)
        on, off = kde.density(np.array([[1.0, 1200.0], [1.0, 1100.0]]))
        assert on > 0.0
        assert off == 0.0

    def test_full_point_mass(self):
        samples = np.tile([0.0, 1200.0], (50, 1))
        kde = GaussianKde2d.fit(samples)
        assert kde.point_mass
        d = kde.density(np.array([[0.0, 1200.0], [5.0, 300.0]]))
        assert math.isinf(d[0]) and d[1] == 0.0

    def test_diffusion_bandwidth_also_normalizes(self, ensemble300):
        kde = GaussianKde2d.fit(ensemble300.samples(), bandwidth="diffusion")
        assert kde.grid_integral() == pytest.approx(1.0, abs=0.05)

    def test_bad_inputs(self):
        with pytest.raises(InvalidInputError):
            GaussianKde2d.fit(np.zeros((1, 2)))
        with pytest.raises(InvalidInputError):
            GaussianKde2d.fit(np.zeros((10, 3)))
        with pytest.raises(InvalidInputError):
            GaussianKde2d.fit(np.zeros((10, 2)), bandwidth="scott")


class TestLevelSetPValue:
    def test_extreme_point_gets_minimum_p(self, ensemble300, kde300):
        p = level_set_p_value(kde300, (10.0, 190.0))
        assert p == pytest.approx(1.0 / (ensemble300.n_runs + 1))

    def test_typical_point_gets_large_p(self, ensemble300, kde300):
        center = ensemble300.samples().mean(axis=0)
        assert level_set_p_value(kde300, center) > 0.5

    def test_p_bounded_away_from_zero_and_one_half_open(self, kde300, ensemble300):
        n = ensemble300.n_runs
        for pt in [(0.0, 1200.0), (10.0, 182.0), (5.0, 600.0)]:
            p = level_set_p_value(kde300, pt)
            assert 1.0 / (n + 1) <= p <= 1.0

    def test_point_mass_exact(self):
        samples = np.tile([0.0, 1200.0], (50, 1))
        kde = GaussianKde2d.fit(samples)
        assert level_set_p_value(kde, (0.0, 1200.0)) == 1.0
        assert level_set_p_value(kde, (10.0, 200.0)) == 0.0


class TestComposite:
    def test_perfect_session_is_exactly_one(self):
        c = composite(10.0, 201.52)
        assert c.c == 1.0
        assert c.percent == 100.0
        assert c.c_s == 1.0 and c.c_t == 1.0

    def test_worst_case_is_zero(self):
        assert composite(0.0, 500.0).c == 0.0
        assert composite(5.0, 1200.0).c == 0.0

    def test_geometric_mean(self):
        c = composite(5.0, 700.76)  # c_s = 0.5, c_t = 0.5 (midpoint time)
        assert c.c == pytest.approx(math.sqrt(0.25))

    def test_out_of_range_rejected(self):
        with pytest.raises(InvalidInputError):
            composite(11.0, 300.0)
        with pytest.raises(InvalidInputError):
            composite(5.0, 100.0)  # faster than physically ideal
        with pytest.raises(InvalidInputError):
            composite(5.0, 1300.0)

    def test_monotone_in_both_arguments(self):
        scores = np.linspace(0.0, 10.0, 50)
        times = np.linspace(201.52, 1200.0, 50)
        for t in times[::7]:
            cs = [composite(s, t).c for s in scores]
            assert all(b >= a for a, b in zip(cs, cs[1:]))
        for s in scores[::7]:
            cts = [composite(s, t).c for t in times]
            assert all(b <= a for a, b in zip(cts, cts[1:]))


class TestEvaluateSession:
    @staticmethod
    def oracle_result():
        track = Track()
        intent = StopAndGoIntent(track, stop_lead_m=0.5, dwell_margin_s=0.0)
        return run_session(step_source(intent), ZERO_LAG, track=track)

    def test_purposeful_session_flagged(self, ensemble300, kde300):
        result = self.oracle_result()
        ev = evaluate_session(result, ensemble300, label="oracle", kde=kde300)
        assert ev.purposeful
        assert ev.p_value < ALPHA
        assert ev.finished

    def test_composite_undefined_below_ideal_minimum(self, ensemble300, kde300):
        # the zero-lag oracle finishes at 201.5 s, a hair under 201.52 s
        result = self.oracle_result()
        ev = evaluate_session(result, ensemble300, kde=kde300)
        assert ev.time_s == pytest.approx(201.5)
        assert ev.composite is None
        assert "idealized minimum" in ev.note

    def test_unfinished_session_not_purposeful(self, ensemble300, kde300):
        result = run_session(
            step_source(lambda t, c: "idle"), ZERO_LAG, time_limit_s=1200.0
        )
        ev = evaluate_session(result, ensemble300, kde=kde300)
        assert not ev.purposeful
        assert ev.time_s == 1200.0
        assert ev.composite is None

    def test_typical_null_run_not_purposeful(self, ensemble300, kde300):
        from bciwalk.simulator import random_walk_source

        rng = np.random.default_rng(1234)
        result = run_session(random_walk_source(rng), CFG, collect_events=False)
        ev = evaluate_session(result, ensemble300, kde=kde300)
        assert not ev.purposeful

    def test_report_and_csv(self, ensemble300, kde300, tmp_path):
        evs = [
            evaluate_session(self.oracle_result(), ensemble300, label="a", kde=kde300)
        ]
        report = evaluation_report(evs, ensemble300)
        assert report["aggregate"]["n_sessions"] == 1
        assert report["aggregate"]["n_purposeful"] == 1
        assert report["sessions"][0]["label"] == "a"
        path = tmp_path / "report.csv"
        export_report_csv(report, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("label,")
        assert len(lines) == 3  # header, one session, aggregate

    def test_ideal_completion_constant(self):
        assert IDEAL_COMPLETION_S == pytest.approx(201.52)
        assert Track().ideal_completion_s == pytest.approx(IDEAL_COMPLETION_S)
