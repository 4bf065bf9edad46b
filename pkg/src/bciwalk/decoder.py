"""Idle-vs-walk decoding on binned spectral trials.

The decoder learns one principal subspace per class, a 1-D discriminant
inside each subspace, and Gaussian class-conditional models of the projected
feature. At prediction time each subspace produces a posterior; the final
posterior is the evidence-weighted combination across subspaces (or, when
configured, the posterior of the subspace that reconstructs the trial best).

Training-time model selection is nested cross-validation over the analysis
band and the discriminant type, with an exact binomial test against chance.
"""

from __future__ import annotations

import base64
import dataclasses
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, clone
from sklearn.model_selection import StratifiedKFold

from .errors import DegenerateInputError, InvalidInputError
from .features import ClasswisePca, FisherDiscriminant, InfoDiscriminant
from .preprocess import FilterConfig, bandpass, common_average_reference, reject_artifact_channels
from .recording import ChannelMask, EegRecording
from .spectral import BIN_WIDTH_HZ, TrialSet, extract_trials

METHODS = ("lda", "aida")
SUBSPACE_RULES = ("evidence", "reconstruction")


def _as_matrix(X) -> tuple[np.ndarray, tuple[int, int] | None]:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 3:
        return X.reshape(X.shape[0], -1), (X.shape[1], X.shape[2])
    if X.ndim == 2:
        return X, None
    raise InvalidInputError("X must be (n, bins, channels) or (n, features)")


class KmiDecoder(BaseEstimator):
    """Classwise-PCA + 1-D discriminant + Gaussian posterior classifier.

    Parameters
    ----------
    method : "lda" for the Fisher direction, "aida" for the
        mutual-information direction.
    variance_fraction : explained-variance target of each class subspace.
    subspace_rule : "evidence" combines subspace posteriors weighted by
        their marginal likelihood; "reconstruction" trusts the subspace
        with the smaller reconstruction error for the trial.
    """

    def __init__(
        self,
        method: str = "lda",
        variance_fraction: float = 0.9,
        subspace_rule: str = "evidence",
    ):
        self.method = method
        self.variance_fraction = variance_fraction
        self.subspace_rule = subspace_rule

    def _discriminant(self):
        if self.method == "lda":
            return FisherDiscriminant()
        if self.method == "aida":
            return InfoDiscriminant()
        raise InvalidInputError(f"unknown method {self.method!r}; pick from {METHODS}")

    def fit(self, X, y):
        if self.subspace_rule not in SUBSPACE_RULES:
            raise InvalidInputError(
                f"unknown subspace_rule {self.subspace_rule!r}; pick from {SUBSPACE_RULES}"
            )
        X, bin_shape = _as_matrix(X)
        y = np.asarray(y).astype(int)
        self.bin_shape_ = bin_shape
        self.classes_ = np.array([0, 1])
        self.cpca_ = ClasswisePca(self.variance_fraction).fit(X, y)
        n = X.shape[0]
        self.priors_ = np.array([(y == 0).sum() / n, (y == 1).sum() / n])
        self.directions_ = {}
        self.gaussians_ = {}
        for k in (0, 1):
            z = self.cpca_.project(X, k)
            disc = self._discriminant().fit(z, y)
            f = disc.transform(z)
            mus = np.array([f[y == 0].mean(), f[y == 1].mean()])
            var = np.array([f[y == 0].var(ddof=1), f[y == 1].var(ddof=1)])
            floor = 1e-12 * max(float(var.max()), float(np.abs(mus).max()) ** 2, 1e-30)
            var = np.maximum(var, floor)
            self.directions_[k] = disc.direction_
            self.gaussians_[k] = {"mean": mus, "var": var}
        return self

    def features(self, X) -> np.ndarray:
        """Per-subspace discriminant features, shape (n, 2)."""
        X, _ = _as_matrix(X)
        cols = [
            self.cpca_.project(X, k) @ self.directions_[k] for k in (0, 1)
        ]
        return np.stack(cols, axis=1)

    def _log_joint(self, X) -> np.ndarray:
        """log p(x, c | subspace k), shape (n, 2 subspaces, 2 classes)."""
        feats = self.features(X)
        out = np.empty((feats.shape[0], 2, 2))
        log_priors = np.log(self.priors_)
        for k in (0, 1):
            g = self.gaussians_[k]
            for c in (0, 1):
                out[:, k, c] = log_priors[c] + stats.norm.logpdf(
                    feats[:, k], loc=g["mean"][c], scale=np.sqrt(g["var"][c])
                )
        return out

    def _reconstruction_errors(self, X) -> np.ndarray:
        X, _ = _as_matrix(X)
        errs = np.empty((X.shape[0], 2))
        for k in (0, 1):
            centered = X - self.cpca_.means_[k]
            proj = centered @ self.cpca_.bases_[k]
            resid = centered - proj @ self.cpca_.bases_[k].T
            errs[:, k] = np.einsum("ij,ij->i", resid, resid)
        return errs

    def predict_proba(self, X) -> np.ndarray:
        """Posterior [P(idle), P(walk)] per trial; rows sum to one exactly."""
        joint = self._log_joint(X)
        evidence = logsumexp(joint, axis=2)  # (n, 2 subspaces)
        with np.errstate(invalid="ignore"):
            log_post = joint - evidence[:, :, None]
        # A subspace whose likelihood underflowed contributes its prior.
        dead = ~np.isfinite(evidence)
        log_post[dead] = np.log(self.priors_)
        if self.subspace_rule == "reconstruction":
            pick = self._reconstruction_errors(X).argmin(axis=1)
            p_walk = np.exp(log_post[np.arange(len(pick)), pick, 1])
        else:
            both_dead = dead.all(axis=1)
            weights = np.zeros_like(evidence)
            live = ~both_dead
            if live.any():
                ev = np.where(dead[live], -np.inf, evidence[live])
                weights[live] = np.exp(ev - logsumexp(ev, axis=1)[:, None])
            weights[both_dead] = 0.5
            p_walk = (weights * np.exp(log_post[:, :, 1])).sum(axis=1)
        p_walk = np.clip(p_walk, 0.0, 1.0)
        return np.column_stack([1.0 - p_walk, p_walk])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] > 0.5).astype(int)

    def posterior_walk(self, X) -> np.ndarray:
        return self.predict_proba(X)[:, 1]

    def weight_map(self) -> np.ndarray:
        """Input-space salience |basis_k @ direction_k| summed over subspaces.

        Shaped (n_bins, n_channels) when the decoder was fit on 3-D trials.
        """
        w = sum(
            np.abs(self.cpca_.bases_[k] @ self.directions_[k]) for k in (0, 1)
        )
        if self.bin_shape_ is not None:
            return w.reshape(self.bin_shape_)
        return w


@dataclass(frozen=True)
class CvResult:
    """Accuracy of repeated stratified cross-validation."""

    fold_accuracies: tuple[float, ...]
    n_runs: int
    n_folds: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.fold_accuracies, ddof=1))


def cross_validate(
    X,
    y,
    decoder: BaseEstimator,
    n_runs: int = 10,
    n_folds: int = 10,
    seed: int = 0,
) -> CvResult:
    """Repeated stratified k-fold accuracy of a decoder prototype.

    Each run reshuffles the fold assignment with its own seed; every fit
    sees only that fold's training rows.
    """
    Xm, _ = _as_matrix(X)
    y = np.asarray(y).astype(int)
    counts = np.bincount(y, minlength=2)
    if counts.min() < n_folds:
        raise DegenerateInputError(
            f"need at least {n_folds} trials per class for {n_folds}-fold CV; "
            f"got {counts.tolist()}"
        )
    accs = []
    for run in range(n_runs):
        splitter = StratifiedKFold(n_splits=n_folds, shuffle=True, random_state=seed + run)
        for train_idx, test_idx in splitter.split(Xm, y):
            model = clone(decoder).fit(Xm[train_idx], y[train_idx])
            accs.append(float(np.mean(model.predict(Xm[test_idx]) == y[test_idx])))
    return CvResult(tuple(accs), n_runs, n_folds)


def chance_p_value(accuracy: float, n_trials: int) -> float:
    """Exact one-tailed binomial probability of scoring >= accuracy by chance.

    The observed hit count is ceil(accuracy * n_trials) (with a small guard
    against float fuzz in the product), and the null is Binomial(n, 1/2).
    """
    if not 0.0 <= accuracy <= 1.0:
        raise InvalidInputError("accuracy must be in [0, 1]")
    if n_trials < 1:
        raise InvalidInputError("n_trials must be positive")
    k = math.ceil(accuracy * n_trials - 1e-9)
    return float(stats.binom.sf(k - 1, n_trials, 0.5))


def band_rows(band_hz: tuple[float, float]) -> slice:
    """Row slice of the full 0-40 Hz bin matrix covered by a band."""
    lo, hi = band_hz
    if not (lo < hi and lo % BIN_WIDTH_HZ == 0 and hi % BIN_WIDTH_HZ == 0):
        raise InvalidInputError(f"band {band_hz} must align to {BIN_WIDTH_HZ:g}-Hz bins")
    return slice(int(lo / BIN_WIDTH_HZ), int(hi / BIN_WIDTH_HZ))


@dataclass(frozen=True)
class BandSearchResult:
    band_hz: tuple[float, float]
    cv: CvResult
    history: tuple[tuple[tuple[float, float], float], ...]


def search_band(
    X3: np.ndarray,
    y: np.ndarray,
    decoder: BaseEstimator,
    seed: int = 0,
    n_runs: int = 10,
    n_folds: int = 10,
    full_band_hz: tuple[float, float] = (0.0, 40.0),
) -> BandSearchResult:
    """Greedy analysis-band refinement by cross-validated accuracy.

    Starting from the full band, the lower edge is raised one bin at a time
    while accuracy strictly improves, then the upper edge is lowered the
    same way. Every candidate is scored on the same trials with the same
    fold seeds, and ties keep the wider band.
    """
    X3 = np.asarray(X3, dtype=np.float64)
    if X3.ndim != 3:
        raise InvalidInputError("band search needs (n, bins, channels) trials")
    cache: dict[tuple[float, float], CvResult] = {}
    history: list[tuple[tuple[float, float], float]] = []

    def score(band: tuple[float, float]) -> CvResult:
        if band not in cache:
            rows = band_rows(band)
            offset = band_rows(full_band_hz).start
            sub = X3[:, rows.start - offset:rows.stop - offset, :]
            cache[band] = cross_validate(sub, y, decoder, n_runs, n_folds, seed)
            history.append((band, cache[band].mean))
        return cache[band]

    current = full_band_hz
    best = score(current)
    for edge in ("low", "high"):
        while True:
            lo, hi = current
            cand = (lo + BIN_WIDTH_HZ, hi) if edge == "low" else (lo, hi - BIN_WIDTH_HZ)
            if cand[1] - cand[0] < BIN_WIDTH_HZ:
                warnings.warn(
                    "band search reached the minimum one-bin width", RuntimeWarning
                )
                break
            trial = score(cand)
            if trial.mean > best.mean:
                current, best = cand, trial
            else:
                break
    return BandSearchResult(current, best, tuple(history))


@dataclass(frozen=True)
class TrainingConfig:
    """Everything that determines a training run besides the recording."""

    seed: int = 0
    variance_fraction: float = 0.9
    methods: tuple[str, ...] = METHODS
    band_search: bool = True
    n_cv_runs: int = 10
    n_cv_folds: int = 10
    subspace_rule: str = "evidence"
    filter: FilterConfig = field(default_factory=FilterConfig)
    artifact_band_hz: tuple[float, float] = (30.0, 40.0)
    artifact_k_mad: float = 5.0
    trial_len_s: float = 4.0
    trials_per_segment: int = 5
    taper: str | None = None

    def __post_init__(self) -> None:
        for m in self.methods:
            if m not in METHODS:
                raise InvalidInputError(f"unknown method {m!r}; pick from {METHODS}")
        if not self.methods:
            raise InvalidInputError("at least one method is required")


@dataclass
class DecodingModel:
    """A fitted decoder plus everything needed to reproduce its input view."""

    sample_rate_hz: float
    channel_names: tuple[str, ...]
    mask: ChannelMask
    filter: FilterConfig
    band_hz: tuple[float, float]
    method: str
    decoder: KmiDecoder
    cv_mean: float
    cv_std: float
    n_trials: int
    p_value: float
    trial_len_s: float
    taper: str | None
    seed: int
    search_history: tuple = ()
    method_scores: dict[str, float] = field(default_factory=dict)

    @property
    def retained_channel_names(self) -> tuple[str, ...]:
        return tuple(self.channel_names[i] for i in self.mask.retained)

    @property
    def n_bins(self) -> int:
        rows = band_rows(self.band_hz)
        return rows.stop - rows.start


def preprocess_for_training(
    rec: EegRecording, config: TrainingConfig
) -> tuple[EegRecording, ChannelMask]:
    """Reference, filter, and channel-QC a labeled recording."""
    conditioned = bandpass(common_average_reference(rec), config.filter)
    return reject_artifact_channels(
        conditioned, config.artifact_band_hz, config.artifact_k_mad
    )


def train_decoding_model(
    rec: EegRecording, config: TrainingConfig = TrainingConfig()
) -> DecodingModel:
    """Full offline training pipeline on a labeled recording."""
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    trial_seed = seeds[0]
    cv_seed = int(seeds[1].generate_state(1)[0] % (2**31 - 1))

    conditioned, mask = preprocess_for_training(rec, config)
    trials = extract_trials(
        conditioned,
        trial_seed,
        trial_len_s=config.trial_len_s,
        trials_per_segment=config.trials_per_segment,
        taper=config.taper,
    )
    return fit_from_trials(trials, mask, rec, config, cv_seed)


def fit_from_trials(
    trials: TrialSet,
    mask: ChannelMask,
    rec: EegRecording,
    config: TrainingConfig,
    cv_seed: int,
) -> DecodingModel:
    """Model selection and final fit on an extracted trial set."""
    X3, y = trials.matrix(), trials.labels()
    results: dict[str, BandSearchResult] = {}
    for method in config.methods:
        proto = KmiDecoder(method, config.variance_fraction, config.subspace_rule)
        if config.band_search:
            results[method] = search_band(
                X3, y, proto, cv_seed, config.n_cv_runs, config.n_cv_folds
            )
        else:
            cv = cross_validate(X3, y, proto, config.n_cv_runs, config.n_cv_folds, cv_seed)
            results[method] = BandSearchResult((0.0, 40.0), cv, (((0.0, 40.0), cv.mean),))
    best_method = max(config.methods, key=lambda m: results[m].cv.mean)
    chosen = results[best_method]
    final = KmiDecoder(best_method, config.variance_fraction, config.subspace_rule)
    final.fit(X3[:, band_rows(chosen.band_hz), :], y)
    return DecodingModel(
        sample_rate_hz=rec.sample_rate_hz,
        channel_names=rec.channel_names,
        mask=mask,
        filter=config.filter,
        band_hz=chosen.band_hz,
        method=best_method,
        decoder=final,
        cv_mean=chosen.cv.mean,
        cv_std=chosen.cv.std,
        n_trials=trials.n_trials,
        p_value=chance_p_value(chosen.cv.mean, trials.n_trials),
        trial_len_s=config.trial_len_s,
        taper=config.taper,
        seed=config.seed,
        search_history=chosen.history,
        method_scores={m: results[m].cv.mean for m in config.methods},
    )


# ---------------------------------------------------------------------------
# Serialization


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype=np.float64)
    return {
        "__nd__": base64.b64encode(a.tobytes()).decode("ascii"),
        "shape": list(a.shape),
    }


def _decode_array(d: dict) -> np.ndarray:
    buf = base64.b64decode(d["__nd__"])
    return np.frombuffer(buf, dtype=np.float64).reshape(d["shape"]).copy()


def _decoder_state(dec: KmiDecoder) -> dict:
    return {
        "method": dec.method,
        "variance_fraction": dec.variance_fraction,
        "subspace_rule": dec.subspace_rule,
        "bin_shape": list(dec.bin_shape_) if dec.bin_shape_ else None,
        "priors": _encode_array(dec.priors_),
        "subspaces": {
            str(k): {
                "basis": _encode_array(dec.cpca_.bases_[k]),
                "mean": _encode_array(dec.cpca_.means_[k]),
                "direction": _encode_array(dec.directions_[k]),
                "gauss_mean": _encode_array(dec.gaussians_[k]["mean"]),
                "gauss_var": _encode_array(dec.gaussians_[k]["var"]),
            }
            for k in (0, 1)
        },
    }


def _restore_decoder(state: dict) -> KmiDecoder:
    dec = KmiDecoder(
        state["method"], state["variance_fraction"], state["subspace_rule"]
    )
    dec.bin_shape_ = tuple(state["bin_shape"]) if state["bin_shape"] else None
    dec.classes_ = np.array([0, 1])
    dec.priors_ = _decode_array(state["priors"])
    dec.cpca_ = ClasswisePca(state["variance_fraction"])
    dec.cpca_.bases_, dec.cpca_.means_ = {}, {}
    dec.directions_, dec.gaussians_ = {}, {}
    for k in (0, 1):
        sub = state["subspaces"][str(k)]
        dec.cpca_.bases_[k] = _decode_array(sub["basis"])
        dec.cpca_.means_[k] = _decode_array(sub["mean"])
        dec.directions_[k] = _decode_array(sub["direction"])
        dec.gaussians_[k] = {
            "mean": _decode_array(sub["gauss_mean"]),
            "var": _decode_array(sub["gauss_var"]),
        }
    return dec


def model_to_dict(model: DecodingModel) -> dict:
    return {
        "sample_rate_hz": model.sample_rate_hz,
        "channel_names": list(model.channel_names),
        "mask": {
            "n_channels": model.mask.n_channels,
            "retained": list(model.mask.retained),
            "excluded": {str(k): v for k, v in model.mask.excluded.items()},
        },
        "filter": dataclasses.asdict(model.filter),
        "band_hz": list(model.band_hz),
        "method": model.method,
        "decoder": _decoder_state(model.decoder),
        "cv_mean": model.cv_mean,
        "cv_std": model.cv_std,
        "n_trials": model.n_trials,
        "p_value": model.p_value,
        "trial_len_s": model.trial_len_s,
        "taper": model.taper,
        "seed": model.seed,
        "search_history": [[list(b), m] for b, m in model.search_history],
        "method_scores": model.method_scores,
    }


def model_from_dict(d: dict) -> DecodingModel:
    return DecodingModel(
        sample_rate_hz=float(d["sample_rate_hz"]),
        channel_names=tuple(d["channel_names"]),
        mask=ChannelMask(
            d["mask"]["n_channels"],
            tuple(d["mask"]["retained"]),
            {int(k): v for k, v in d["mask"]["excluded"].items()},
        ),
        filter=FilterConfig(**d["filter"]),
        band_hz=tuple(d["band_hz"]),
        method=d["method"],
        decoder=_restore_decoder(d["decoder"]),
        cv_mean=d["cv_mean"],
        cv_std=d["cv_std"],
        n_trials=d["n_trials"],
        p_value=d["p_value"],
        trial_len_s=d["trial_len_s"],
        taper=d["taper"],
        seed=d["seed"],
        search_history=tuple((tuple(b), m) for b, m in d["search_history"]),
        method_scores=dict(d["method_scores"]),
    )


def save_model(model: DecodingModel, path: str | Path) -> None:
    """Write a model as canonical JSON with an integrity checksum."""
    payload = json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
    document = {
        "format": "bciwalk-model",
        "version": 1,
        "sha256": digest,
        "model": json.loads(payload),
    }
    Path(path).write_text(json.dumps(document, sort_keys=True, indent=1) + "\n")


def load_model(path: str | Path) -> DecodingModel:
    """Read a model file, refusing content whose checksum does not match."""
    document = json.loads(Path(path).read_text())
    if document.get("format") != "bciwalk-model":
        raise InvalidInputError(f"{path} is not a bciwalk model file")
    payload = json.dumps(document["model"], sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
    if digest != document.get("sha256"):
        raise InvalidInputError(
            f"{path}: checksum mismatch; the file was corrupted or edited"
        )
    return model_from_dict(document["model"])


def export_weight_map_csv(model: DecodingModel, path: str | Path) -> None:
    """Per-bin, per-channel salience of the fitted decoder as CSV."""
    w = model.decoder.weight_map()
    if w.ndim != 2:
        raise InvalidInputError("decoder was not fit on (bins, channels) trials")
    lo = model.band_hz[0]
    names = model.retained_channel_names
    lines = ["freq_hz," + ",".join(names)]
    for i in range(w.shape[0]):
        f0 = lo + i * BIN_WIDTH_HZ
        row = ",".join(f"{v:.10g}" for v in w[i])
        lines.append(f"{f0:g}-{f0 + BIN_WIDTH_HZ:g},{row}")
    Path(path).write_text("\n".join(lines) + "\n")
