"""Certifying purposeful control against a random-walk null model.

The null hypothesis is that session outcomes arise from meaningless decoder
output. It is materialized by running the full online stack (smoothing, FSM,
course) with posteriors drawn i.i.d. uniform on [0, 1], many times. An
observed session's (stops score, completion time) pair is then scored by a
kernel density estimate over the null ensemble: its p-value is the null
probability of landing somewhere with density at most as large, estimated by
the finite-sample-corrected rank (r + 1) / (n + 1), where ties count as
at least as extreme.

A composite performance number combines score and time against the ideal
session, c = sqrt(c_s * c_t).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy import optimize

from .errors import InvalidInputError
from .online import FsmConfig
from .simulator import (
    DEFAULT_TIME_LIMIT_S,
    SessionResult,
    Track,
    random_walk_source,
    run_session,
)

ALPHA = 0.01
IDEAL_COMPLETION_S = 201.52


@dataclass
class McEnsemble:
    """Outcomes of repeated random-walk null sessions."""

    fsm: dict
    n_runs: int
    seed: int
    time_limit_s: float
    stops_scores: np.ndarray
    completion_times: np.ndarray  # unfinished runs entered at the time limit
    finished: np.ndarray

    def samples(self) -> np.ndarray:
        return np.column_stack([self.stops_scores, self.completion_times])

    @property
    def finished_fraction(self) -> float:
        return float(np.mean(self.finished))

    def summary(self) -> dict:
        return {
            "n_runs": self.n_runs,
            "seed": self.seed,
            "time_limit_s": self.time_limit_s,
            "fsm": self.fsm,
            "finished_fraction": self.finished_fraction,
            "stops_score_mean": float(np.mean(self.stops_scores)),
            "stops_score_std": float(np.std(self.stops_scores, ddof=1)),
            "completion_time_mean_s": float(np.mean(self.completion_times)),
            "completion_time_std_s": float(np.std(self.completion_times, ddof=1)),
        }


def random_walk_mc(
    fsm_config: FsmConfig,
    track: Track = Track(),
    n_runs: int = 1000,
    seed: int = 0,
    time_limit_s: float = DEFAULT_TIME_LIMIT_S,
) -> McEnsemble:
    """Run the null model ``n_runs`` times with independent child seeds."""
    if n_runs < 2:
        raise InvalidInputError("an ensemble needs at least 2 runs")
    children = np.random.SeedSequence(seed).spawn(n_runs)
    scores = np.empty(n_runs)
    times = np.empty(n_runs)
    finished = np.empty(n_runs, dtype=bool)
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        result = run_session(
            random_walk_source(rng),
            fsm_config,
            track,
            time_limit_s,
            collect_events=False,
        )
        scores[i] = result.stops_score
        times[i] = (
            result.completion_time_s if result.finished else time_limit_s
        )
        finished[i] = result.finished
    # Physical floor: nothing can finish faster than walking straight to the
    # final NPC's zone and standing the full dwell.
    floor = (
        track.npc_positions_m[-1] - track.dwell_radius_m - track.start_position_m
    ) / track.avatar_speed_mps + track.full_credit_dwell_s
    if times.min() < floor - 1e-9:
        raise InvalidInputError(
            f"ensemble contains an impossible completion time {times.min():.2f} s"
        )
    return McEnsemble(
        fsm={
            "t_idle": fsm_config.t_idle,
            "t_walk": fsm_config.t_walk,
            "smoothing_window_s": fsm_config.smoothing_window_s,
            "segment_len_s": fsm_config.segment_len_s,
        },
        n_runs=n_runs,
        seed=seed,
        time_limit_s=time_limit_s,
        stops_scores=scores,
        completion_times=times,
        finished=finished,
    )


def export_ensemble_csv(ensemble: McEnsemble, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        for key, value in sorted(ensemble.summary().items()):
            if key == "fsm":
                for k, v in sorted(value.items()):
                    fh.write(f"# fsm.{k}={v!r}\n")
            else:
                fh.write(f"# {key}={value!r}\n")
        writer = csv.writer(fh)
        writer.writerow(["run", "stops_score", "completion_time_s", "finished"])
        for i in range(ensemble.n_runs):
            writer.writerow(
                [
                    i,
                    f"{ensemble.stops_scores[i]:.6f}",
                    f"{ensemble.completion_times[i]:.6f}",
                    int(ensemble.finished[i]),
                ]
            )


def read_ensemble_csv(path: str | Path) -> McEnsemble:
    meta: dict[str, str] = {}
    rows = []
    with open(path, newline="") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value
            elif not line.startswith("run,"):
                rows.append(line.split(","))
    if not rows:
        raise InvalidInputError(f"{path}: no ensemble rows found")
    scores = np.array([float(r[1]) for r in rows])
    times = np.array([float(r[2]) for r in rows])
    finished = np.array([bool(int(r[3])) for r in rows])
    fsm = {k.split(".", 1)[1]: float(v) for k, v in meta.items() if k.startswith("fsm.")}
    return McEnsemble(
        fsm=fsm,
        n_runs=len(rows),
        seed=int(meta.get("seed", "0")),
        time_limit_s=float(meta.get("time_limit_s", DEFAULT_TIME_LIMIT_S)),
        stops_scores=scores,
        completion_times=times,
        finished=finished,
    )


# ---------------------------------------------------------------------------
# Kernel density estimation


def _silverman_bandwidth(x: np.ndarray, d: int = 2) -> float:
    n = len(x)
    return float(np.std(x, ddof=1) * n ** (-1.0 / (d + 4)))


def _diffusion_bandwidth(x: np.ndarray) -> float:
    """1-D diffusion-equation plug-in bandwidth (DCT fixed point).

    Falls back to the Silverman rule when the fixed point cannot be
    bracketed, which happens for tiny or nearly discrete samples.
    """
    n_grid = 1 << 10
    x = np.asarray(x, dtype=np.float64)
    n = len(np.unique(x))
    lo, hi = x.min(), x.max()
    pad = (hi - lo) / 10 if hi > lo else 1.0
    lo, hi = lo - pad, hi + pad
    spread = hi - lo
    hist, _ = np.histogram(x, bins=n_grid, range=(lo, hi))
    density = hist / len(x)
    a = sfft.dct(density, norm=None)
    idx = np.arange(1, n_grid, dtype=np.float64) ** 2
    a2 = (a[1:] / 2.0) ** 2

    def fixed_point(t: float) -> float:
        ell = 7
        f = 2 * np.pi ** (2 * ell) * np.sum(idx**ell * a2 * np.exp(-idx * np.pi**2 * t))
        for s in range(ell - 1, 1, -1):
            odd_factorial = float(np.prod(np.arange(1, 2 * s, 2)))
            k0 = odd_factorial / math.sqrt(2 * np.pi)
            const = (1 + (0.5) ** (s + 0.5)) / 3
            t_s = (2 * const * k0 / (n * f)) ** (2.0 / (3 + 2 * s))
            f = 2 * np.pi ** (2 * s) * np.sum(idx**s * a2 * np.exp(-idx * np.pi**2 * t_s))
        return t - (2 * n * math.sqrt(np.pi) * f) ** (-0.4)

    try:
        t_star = optimize.brentq(fixed_point, 1e-12, 0.1)
        return float(math.sqrt(t_star) * spread)
    except (ValueError, RuntimeError):
        return _silverman_bandwidth(x)


@dataclass
class GaussianKde2d:
    """Product-Gaussian KDE over (stops score, completion time) pairs.

    An axis with zero sample variance is treated as an exact point mass on
    that axis: density off the observed value is zero. When both axes are
    degenerate the whole estimate is a point mass.
    """

    samples: np.ndarray
    bandwidths: np.ndarray
    active_axes: tuple[int, ...]
    fixed_values: np.ndarray
    point_mass: bool

    @classmethod
    def fit(cls, samples: np.ndarray, bandwidth: str = "silverman") -> "GaussianKde2d":
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[1] != 2:
            raise InvalidInputError("KDE expects (n, 2) samples")
        if samples.shape[0] < 2:
            raise InvalidInputError("KDE needs at least 2 samples")
        if bandwidth not in ("silverman", "diffusion"):
            raise InvalidInputError(f"unknown bandwidth rule {bandwidth!r}")
        stds = samples.std(axis=0, ddof=1)
        active = tuple(int(i) for i in range(2) if stds[i] > 0)
        h = np.zeros(2)
        for i in active:
            if bandwidth == "silverman":
                h[i] = _silverman_bandwidth(samples[:, i])
            else:
                h[i] = _diffusion_bandwidth(samples[:, i])
        return cls(
            samples=samples,
            bandwidths=h,
            active_axes=active,
            fixed_values=samples[0].copy(),
            point_mass=len(active) == 0,
        )

    def density(self, points: np.ndarray, chunk: int = 256) -> np.ndarray:
        """Estimated density at each query point (rows of ``points``)."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if points.shape[1] != 2:
            raise InvalidInputError("query points must be (m, 2)")
        if self.point_mass:
            return np.where(
                np.all(points == self.fixed_values, axis=1), np.inf, 0.0
            )
        out = np.empty(points.shape[0])
        norm = 1.0
        for i in self.active_axes:
            norm *= self.bandwidths[i] * math.sqrt(2 * np.pi)
        for start in range(0, points.shape[0], chunk):
            block = points[start:start + chunk]
            log_k = np.zeros((block.shape[0], self.samples.shape[0]))
            for i in self.active_axes:
                z = (block[:, i, None] - self.samples[None, :, i]) / self.bandwidths[i]
                log_k -= 0.5 * z**2
            kernel = np.exp(log_k)
            for i in range(2):
                if i not in self.active_axes:
                    match = block[:, i, None] == self.samples[None, :, i]
                    kernel = kernel * match
            out[start:start + chunk] = kernel.mean(axis=1) / norm
        return out

    def grid_integral(self, n: int = 256, span_sigmas: float = 6.0) -> float:
        """Numerical integral of the density over a generous grid."""
        if self.point_mass or len(self.active_axes) < 2:
            return 1.0
        axes = []
        for i in range(2):
            lo = self.samples[:, i].min() - span_sigmas * self.bandwidths[i]
            hi = self.samples[:, i].max() + span_sigmas * self.bandwidths[i]
            axes.append(np.linspace(lo, hi, n))
        xx, yy = np.meshgrid(axes[0], axes[1], indexing="ij")
        grid = np.column_stack([xx.ravel(), yy.ravel()])
        d = self.density(grid, chunk=512)
        dx = axes[0][1] - axes[0][0]
        dy = axes[1][1] - axes[1][0]
        return float(d.sum() * dx * dy)

    def reference_densities(self, observed: np.ndarray) -> np.ndarray:
        """Density of each sample over the other n points of the pooled set.

        Pooling the observation with the ensemble and scoring every point by
        its mean kernel weight against the other n points makes the level-set
        rank exchangeable under the null. The plain estimate instead hands
        each sample its own kernel's peak weight - a bonus the fresh draw
        never receives - and so declares too many genuine null sessions
        extreme.
        """
        if self.point_mass:
            return np.full(len(self.samples), np.inf)
        n = len(self.samples)
        norm = 1.0
        for i in self.active_axes:
            norm *= self.bandwidths[i] * math.sqrt(2 * np.pi)
        kernel = np.ones(n)
        for i in self.active_axes:
            z = (self.samples[:, i] - observed[i]) / self.bandwidths[i]
            kernel *= np.exp(-0.5 * z * z)
        for i in range(2):
            if i not in self.active_axes:
                kernel = kernel * (self.samples[:, i] == observed[i])
        full = self.density(self.samples)
        return np.maximum(full + (kernel - 1.0) / (n * norm), 0.0)


def level_set_p_value(kde: GaussianKde2d, observed) -> float:
    """Null probability of a density at most as large as the observation's.

    The observation is pooled with the n ensemble samples; every point is
    scored by its density over the other n points, and the p-value is the
    observation's rank, (r + 1) / (n + 1), with r the number of samples
    scoring <= the observed point. Under the null the rank is uniform, so
    the p-value is exact up to conservative tie-breaking.
    """
    observed = np.asarray(observed, dtype=np.float64).reshape(1, 2)
    if kde.point_mass:
        return 1.0 if bool(np.all(observed[0] == kde.fixed_values)) else 0.0
    d_obs = float(kde.density(observed)[0])
    d_samples = kde.reference_densities(observed[0])
    r = int(np.sum(d_samples <= d_obs))
    return (r + 1) / (len(d_samples) + 1)


# ---------------------------------------------------------------------------
# Composite score and session evaluation


@dataclass(frozen=True)
class CompositeScore:
    c: float
    c_s: float
    c_t: float

    @property
    def percent(self) -> float:
        return 100.0 * self.c


def composite(
    stops_score: float,
    completion_time_s: float,
    s_max: float = 10.0,
    t_min_s: float = IDEAL_COMPLETION_S,
    t_max_s: float = DEFAULT_TIME_LIMIT_S,
) -> CompositeScore:
    """Geometric mean of normalized score and normalized time."""
    if not 0.0 <= stops_score <= s_max:
        raise InvalidInputError(f"stops score {stops_score} outside [0, {s_max}]")
    if not t_min_s <= completion_time_s <= t_max_s:
        raise InvalidInputError(
            f"completion time {completion_time_s} outside [{t_min_s}, {t_max_s}]"
        )
    c_s = stops_score / s_max
    c_t = (t_max_s - completion_time_s) / (t_max_s - t_min_s)
    return CompositeScore(math.sqrt(c_s * c_t), c_s, c_t)


@dataclass
class SessionEvaluation:
    label: str
    stops_score: float
    time_s: float
    finished: bool
    p_value: float
    purposeful: bool
    composite: CompositeScore | None
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "stops_score": self.stops_score,
            "time_s": self.time_s,
            "finished": self.finished,
            "p_value": self.p_value,
            "purposeful": self.purposeful,
            "composite_pct": None if self.composite is None else self.composite.percent,
            "c_s": None if self.composite is None else self.composite.c_s,
            "c_t": None if self.composite is None else self.composite.c_t,
            "note": self.note,
        }


def evaluate_session(
    result: SessionResult,
    ensemble: McEnsemble,
    label: str = "session",
    alpha: float = ALPHA,
    s_max: float = 10.0,
    t_min_s: float = IDEAL_COMPLETION_S,
    kde: GaussianKde2d | None = None,
) -> SessionEvaluation:
    """Score one session against a null ensemble.

    A session counts as purposeful control only if it finished the course
    and its outcome pair is extreme under the null (p < alpha). Unfinished
    sessions enter the KDE at the time cap, like censored null runs.
    """
    t_max = ensemble.time_limit_s
    time_s = result.completion_time_s if result.finished else t_max
    if kde is None:
        kde = GaussianKde2d.fit(ensemble.samples())
    p = level_set_p_value(kde, (result.stops_score, time_s))
    purposeful = bool(result.finished and p < alpha)
    comp: CompositeScore | None = None
    note = ""
    if not result.finished:
        note = "did not finish; composite undefined"
    elif time_s < t_min_s:
        note = (
            f"completion {time_s:g} s beats the idealized minimum {t_min_s:g} s; "
            "composite undefined"
        )
    elif time_s > t_max:
        note = "completion beyond the time limit; composite undefined"
    else:
        comp = composite(result.stops_score, time_s, s_max, t_min_s, t_max)
    return SessionEvaluation(
        label=label,
        stops_score=result.stops_score,
        time_s=time_s,
        finished=result.finished,
        p_value=p,
        purposeful=purposeful,
        composite=comp,
        note=note,
    )


def evaluation_report(
    evaluations: list[SessionEvaluation], ensemble: McEnsemble
) -> dict:
    """JSON-ready report over one or more evaluated sessions."""
    composites = [e.composite.percent for e in evaluations if e.composite is not None]
    aggregate = {
        "n_sessions": len(evaluations),
        "n_purposeful": sum(e.purposeful for e in evaluations),
        "stops_score_mean": float(np.mean([e.stops_score for e in evaluations])),
        "time_mean_s": float(np.mean([e.time_s for e in evaluations])),
        "composite_mean_pct": float(np.mean(composites)) if composites else None,
        "composite_std_pct": float(np.std(composites, ddof=1))
        if len(composites) > 1
        else None,
    }
    return {
        "sessions": [e.to_dict() for e in evaluations],
        "aggregate": aggregate,
        "ensemble": ensemble.summary(),
    }


def export_report_csv(report: dict, path: str | Path) -> None:
    columns = [
        "label",
        "stops_score",
        "time_s",
        "finished",
        "p_value",
        "purposeful",
        "composite_pct",
        "c_s",
        "c_t",
        "note",
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in report["sessions"]:
            writer.writerow({k: row.get(k) for k in columns})
        agg = report["aggregate"]
        writer.writerow(
            {
                "label": "aggregate",
                "stops_score": agg["stops_score_mean"],
                "time_s": agg["time_mean_s"],
                "finished": "",
                "p_value": "",
                "purposeful": agg["n_purposeful"],
                "composite_pct": agg["composite_mean_pct"],
                "c_s": "",
                "c_t": "",
                "note": f"mean over {agg['n_sessions']} sessions",
            }
        )
