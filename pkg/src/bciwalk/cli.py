"""Command-line interface: synth, train, calibrate, session, evaluate.

Exit codes: 0 on success, 1 on runtime or validation failures, 2 on usage
errors (unknown flags, missing files).
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import click

from . import mcstats, simulator, synth as synthmod
from .decoder import (
    TrainingConfig,
    export_weight_map_csv,
    load_model,
    save_model,
    train_decoding_model,
)
from .errors import BciwalkError
from .online import (
    FsmConfig,
    SegmentDecoder,
    run_calibration,
    segments_from_recording,
)
from .recording import read_recording, write_recording
from .simulator import StopAndGoIntent, Track, run_session
from .telemetry import (
    SessionLogWriter,
    TelemetryHub,
    TelemetryServer,
    read_session_log,
)


@click.group()
def main() -> None:
    """Self-paced idle/walk BCI training, simulation, and evaluation."""


def _guard(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except BciwalkError as err:
        raise click.ClickException(str(err)) from err


def _load_spec(path: str | None, seed: int | None) -> synthmod.SynthSpec:
    spec = synthmod.SynthSpec() if path is None else _guard(synthmod.SynthSpec.load, path)
    if seed is not None:
        spec = dataclasses.replace(spec, seed=seed)
    return spec


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None,
              help="Synthetic subject JSON; defaults to the built-in subject.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--duration", default=600.0, show_default=True, help="Seconds.")
@click.option("--epoch", default=30.0, show_default=True, help="Cue block length, seconds.")
@click.option("--seed", type=int, default=None, help="Override the spec's seed.")
@click.option("--write-spec", "write_spec", type=click.Path(), default=None,
              help="Also write the effective spec JSON here.")
def synth(spec_path, out_path, duration, epoch, seed, write_spec):
    """Generate a cued idle/walk recording from a synthetic subject."""
    spec = _load_spec(spec_path, seed)
    rec = _guard(synthmod.generate_recording, spec, epoch_s=epoch, total_s=duration)
    _guard(write_recording, rec, out_path)
    if write_spec:
        Path(write_spec).write_text(spec.to_json() + "\n")
    click.echo(
        f"wrote {out_path}: {rec.n_channels} channels, {rec.duration_s:g} s "
        f"at {rec.sample_rate_hz:g} Hz"
    )


@main.command()
@click.option("--recording", "rec_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--method", type=click.Choice(["lda", "aida", "both"]), default="both",
              show_default=True)
@click.option("--band-search/--no-band-search", default=True, show_default=True)
@click.option("--variance-fraction", default=0.9, show_default=True)
@click.option("--subspace-rule", type=click.Choice(["evidence", "reconstruction"]),
              default="evidence", show_default=True)
@click.option("--cv-runs", default=10, show_default=True)
@click.option("--cv-folds", default=10, show_default=True)
@click.option("--weights-csv", type=click.Path(), default=None,
              help="Also export the decoder weight map as CSV.")
def train(rec_path, out_path, seed, method, band_search, variance_fraction,
          subspace_rule, cv_runs, cv_folds, weights_csv):
    """Train a decoding model from a labeled recording."""
    rec = _guard(read_recording, rec_path)
    methods = ("lda", "aida") if method == "both" else (method,)
    config = TrainingConfig(
        seed=seed,
        variance_fraction=variance_fraction,
        methods=methods,
        band_search=band_search,
        n_cv_runs=cv_runs,
        n_cv_folds=cv_folds,
        subspace_rule=subspace_rule,
    )
    model = _guard(train_decoding_model, rec, config)
    _guard(save_model, model, out_path)
    if weights_csv:
        _guard(export_weight_map_csv, model, weights_csv)
    excluded = model.mask.excluded
    if excluded:
        names = {i: model.channel_names[i] for i in sorted(excluded)}
        click.echo(f"excluded channels: {names}")
    click.echo(
        f"method {model.method}, band {model.band_hz[0]:g}-{model.band_hz[1]:g} Hz, "
        f"CV accuracy {100 * model.cv_mean:.1f}% +/- {100 * model.cv_std:.1f}% "
        f"({model.n_trials} trials), chance p = {model.p_value:.2e}"
    )
    click.echo(f"wrote {out_path}")


def _telemetry_setup(log_path, serve):
    hub = TelemetryHub()
    log = SessionLogWriter(log_path)
    hub.attach_sink(log)
    server = None
    if serve:
        host, _, port = serve.partition(":")
        server = TelemetryServer(hub, host or "127.0.0.1", int(port or 0))
        click.echo(f"telemetry on {server.host}:{server.port}")
    return hub, log, server


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True,
              help="Threshold JSON to write.")
@click.option("--recording", "rec_path", type=click.Path(exists=True), default=None,
              help="Cued labeled recording to decode.")
@click.option("--synth", "spec_path", type=click.Path(exists=True), default=None,
              help="Synthetic subject JSON to stream from (default subject if "
                   "neither source is given).")
@click.option("--seed", type=int, default=None, help="Override the synth spec seed.")
@click.option("--duration", default=120.0, show_default=True)
@click.option("--period", default=15.0, show_default=True, help="Cue alternation, seconds.")
@click.option("--smoothing", default=1.5, show_default=True)
@click.option("--report", "report_path", type=click.Path(), default=None,
              help="Also write the full calibration report JSON.")
@click.option("--log", "log_path", type=click.Path(), default=None,
              help="Telemetry NDJSON log path.")
@click.option("--serve", default=None, help="Serve telemetry on HOST:PORT while calibrating.")
def calibrate(model_path, out_path, rec_path, spec_path, seed, duration, period,
              smoothing, report_path, log_path, serve):
    """Estimate hysteresis thresholds from a cued run."""
    model = _guard(load_model, model_path)
    if rec_path is not None:
        rec = _guard(read_recording, rec_path)
        source = segments_from_recording(rec)
    else:
        spec = _load_spec(spec_path, seed)
        script = synthmod.TimedIntentScript.alternating(period, duration)
        source = synthmod.SegmentStream(spec, script, duration_s=duration)
    hub = log = server = None
    if log_path or serve:
        hub, log, server = _telemetry_setup(log_path or "calibration_log.ndjson", serve)
    try:
        report = _guard(run_calibration, model, source, telemetry=hub)
    finally:
        if server:
            server.stop()
        if log:
            log.close()
    config = report.suggested_config(smoothing_window_s=smoothing)
    Path(out_path).write_text(config.to_json() + "\n")
    if report_path:
        Path(report_path).write_text(report.to_json() + "\n")
    if not report.separable:
        click.echo(
            "warning: idle/walk medians are inverted; thresholds were sorted "
            "to stay valid, treat this calibration as unreliable"
        )
    click.echo(
        f"idle median {float(report.idle_quartiles[1]):.3f}, "
        f"walk median {float(report.walk_quartiles[1]):.3f} "
        f"-> t_idle {config.t_idle:.3f}, t_walk {config.t_walk:.3f}"
    )
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), default=None)
@click.option("--thresholds", "thr_path", type=click.Path(exists=True), default=None)
@click.option("--synth", "spec_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None, help="Override the synth spec seed.")
@click.option("--intent", default="stop-and-go", show_default=True,
              help="'stop-and-go' or a timed script JSON path.")
@click.option("--replay", "replay_path", type=click.Path(exists=True), default=None,
              help="Replay a session log instead of decoding.")
@click.option("--time-limit", default=1200.0, show_default=True)
@click.option("--out-dir", "out_dir", type=click.Path(), required=True)
@click.option("--serve", default=None, help="Serve telemetry on HOST:PORT.")
@click.option("--realtime", is_flag=True, help="Pace ticks against the wall clock.")
def session(model_path, thr_path, spec_path, seed, intent, replay_path,
            time_limit, out_dir, serve, realtime):
    """Run one closed-loop course session (live decode or replay)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    track = Track()
    if replay_path is not None:
        messages = _guard(read_session_log, replay_path)
        source = _guard(simulator.replay_source, messages)
        config = _replay_config(messages, thr_path)
    else:
        if model_path is None or thr_path is None:
            raise click.UsageError("--model and --thresholds are required unless --replay is given")
        model = _guard(load_model, model_path)
        config = _guard(FsmConfig.load, thr_path)
        spec = _load_spec(spec_path, seed)
        if intent == "stop-and-go":
            policy = StopAndGoIntent(track)
        else:
            steps = json.loads(Path(intent).read_text())
            policy = synthmod.TimedIntentScript([(float(d), s) for d, s in steps])
        stream = synthmod.SegmentStream(spec, policy)
        source = simulator.decoder_source(stream, SegmentDecoder(model))
    hub, log, server = _telemetry_setup(out / "session_log.ndjson", serve)
    hub.publish(
        "threshold_update",
        0.0,
        {"t_idle": config.t_idle, "t_walk": config.t_walk, "source": "config"},
    )
    try:
        result = _guard(
            run_session,
            source,
            config,
            track,
            time_limit_s=time_limit,
            telemetry=hub,
            control=server,
            realtime=realtime,
        )
    finally:
        if server:
            server.stop()
        log.close()
    (out / "session_result.json").write_text(
        json.dumps(result.to_dict(), sort_keys=True, indent=1) + "\n"
    )
    click.echo(
        f"{result.end_reason}: score {result.stops_score:g}/10, "
        + (
            f"completed in {result.completion_time_s:g} s"
            if result.finished
            else f"not completed ({result.duration_s:g} s elapsed)"
        )
    )
    click.echo(f"wrote {out / 'session_result.json'} and {out / 'session_log.ndjson'}")


def _replay_config(messages: list[dict], thr_path: str | None) -> FsmConfig:
    if thr_path is not None:
        return _guard(FsmConfig.load, thr_path)
    for m in messages:
        if m.get("type") == "threshold_update":
            p = m["payload"]
            return FsmConfig(p["t_idle"], p["t_walk"])
    raise click.UsageError(
        "the log carries no threshold_update message; pass --thresholds"
    )


@main.command()
@click.option("--session", "session_paths", type=click.Path(exists=True),
              multiple=True, required=True,
              help="session_result.json files (repeatable).")
@click.option("--thresholds", "thr_path", type=click.Path(exists=True), required=True)
@click.option("--runs", default=1000, show_default=True, help="Null-ensemble size.")
@click.option("--seed", default=0, show_default=True)
@click.option("--time-limit", default=1200.0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Report JSON path.")
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Report CSV path.")
@click.option("--ensemble-csv", type=click.Path(), default=None,
              help="Also export the null ensemble as CSV.")
def evaluate(session_paths, thr_path, runs, seed, time_limit, out_path, csv_path,
             ensemble_csv):
    """Score sessions against a fresh random-walk null ensemble."""
    config = _guard(FsmConfig.load, thr_path)
    track = Track()
    ensemble = _guard(
        mcstats.random_walk_mc, config, track, n_runs=runs, seed=seed,
        time_limit_s=time_limit,
    )
    if ensemble_csv:
        _guard(mcstats.export_ensemble_csv, ensemble, ensemble_csv)
    kde = mcstats.GaussianKde2d.fit(ensemble.samples())
    evaluations = []
    for path in session_paths:
        result = simulator.SessionResult.from_dict(json.loads(Path(path).read_text()))
        ev = _guard(
            mcstats.evaluate_session, result, ensemble, label=Path(path).stem, kde=kde
        )
        evaluations.append(ev)
        comp = f"{ev.composite.percent:.2f}%" if ev.composite else "n/a"
        click.echo(
            f"{ev.label}: score {ev.stops_score:g}, time {ev.time_s:g} s, "
            f"p = {ev.p_value:.4g}, purposeful = {'yes' if ev.purposeful else 'no'}, "
            f"composite = {comp}"
        )
    report = mcstats.evaluation_report(evaluations, ensemble)
    if out_path:
        Path(out_path).write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")
        click.echo(f"wrote {out_path}")
    if csv_path:
        mcstats.export_report_csv(report, csv_path)
        click.echo(f"wrote {csv_path}")


if __name__ == "__main__":
    main()
