"""Command-line interface: one subcommand per pipeline or characterization
procedure over CSV inputs/outputs. Every subcommand is a thin dispatcher;
its values are identical to the corresponding library call."""

from __future__ import annotations

import sys
import time
from pathlib import Path

import click
import numpy as np

from . import analytics, cca, fidelity, filters, stream, synth
from .core import (
    AcquisitionConfig,
    read_epoch_csv,
    read_timing_log_csv,
    write_epoch_csv,
    write_timing_log_csv,
)
from .errors import PipelineError


def _fail(exc: PipelineError) -> None:
    click.echo(f"{exc.module}: {exc}", err=True)
    sys.exit(1)


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except PipelineError as exc:
            _fail(exc)


@click.group(cls=_Group)
def main():
    """SSVEP decoding pipeline and characterization toolbox."""


def _parse_freqs(text: str) -> tuple:
    return tuple(float(f) for f in text.split(","))


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

@main.group("synth")
def synth_cmd():
    """Generate synthetic fixtures."""


@synth_cmd.command("trial")
@click.option("--freq", type=float, required=True, help="Target frequency in Hz.")
@click.option("--amps", default="1.0,0.4", show_default=True, help="Harmonic amplitudes in uV, fundamental first.")
@click.option("--phase", type=float, default=0.0, show_default=True)
@click.option("--snr-rms", "noise_rms", type=float, default=0.5, show_default=True, help="White-noise RMS in uV.")
@click.option("--duration", type=float, default=5.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--rate", type=float, default=500.0, show_default=True)
@click.option("--channels", type=int, default=8, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), required=True)
def synth_trial(freq, amps, phase, noise_rms, duration, seed, rate, channels, output):
    """Write a synthetic SSVEP trial epoch CSV."""
    spec = synth.SsvepSynthSpec(
        target_hz=freq,
        harmonic_amplitudes_uv=_parse_freqs(amps),
        phase_rad=phase,
        noise_rms_uv=noise_rms,
        duration_s=duration,
        seed=seed,
        config=AcquisitionConfig(sample_rate_hz=rate, channel_count=channels),
    )
    trial = synth.gen_ssvep_trial(spec)
    write_epoch_csv(trial.epoch_full, output)
    click.echo(
        f"trial: freq={freq} amps={amps} phase={phase} noise_rms={noise_rms} "
        f"duration={duration} seed={seed} rate={rate} channels={channels} "
        f"prng={synth.PRNG_ALGORITHM} -> {output}"
    )


@synth_cmd.command("timing")
@click.option("--events", type=int, required=True)
@click.option("--period-us", type=float, default=2000.0, show_default=True)
@click.option("--jitter-us", type=float, default=0.0, show_default=True)
@click.option("--drift-ppm", type=float, default=0.0, show_default=True)
@click.option("--mode", type=click.Choice(["OFF", "ON"]), default="OFF", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), required=True)
def synth_timing(events, period_us, jitter_us, drift_ppm, mode, seed, output):
    """Write a synthetic DRDY timing log CSV."""
    spec = synth.TimingSynthSpec(
        event_count=events,
        nominal_period_us=period_us,
        jitter_std_us=jitter_us,
        drift_ppm=drift_ppm,
        seed=seed,
        mode=mode,
    )
    write_timing_log_csv(synth.gen_timing_log(spec), output)
    click.echo(
        f"timing: events={events} period_us={period_us} jitter_us={jitter_us} "
        f"drift_ppm={drift_ppm} mode={mode} seed={seed} prng={synth.PRNG_ALGORITHM} -> {output}"
    )


@synth_cmd.command("noise")
@click.option("--rms", type=float, required=True, help="Wideband noise RMS in uV.")
@click.option("--duration", type=float, default=30.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--rate", type=float, default=500.0, show_default=True)
@click.option("--channels", type=int, default=8, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), required=True)
def synth_noise(rms, duration, seed, rate, channels, output):
    """Write a shorted-input-style white-noise record."""
    config = AcquisitionConfig(sample_rate_hz=rate, channel_count=channels)
    write_epoch_csv(synth.gen_noise_record(rms, duration, seed, config), output)
    click.echo(f"noise: rms={rms} duration={duration} seed={seed} prng={synth.PRNG_ALGORITHM} -> {output}")


@synth_cmd.command("common-mode")
@click.option("--residuals", required=True, help="Comma-separated per-channel 50 Hz residual RMS in uV.")
@click.option("--base-rms", type=float, default=0.05, show_default=True)
@click.option("--duration", type=float, default=30.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--rate", type=float, default=500.0, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), required=True)
def synth_common_mode(residuals, base_rms, duration, seed, rate, output):
    """Write a 50 Hz common-mode injection record."""
    res = _parse_freqs(residuals)
    config = AcquisitionConfig(sample_rate_hz=rate, channel_count=len(res))
    epoch = synth.gen_common_mode_record(base_rms, res, duration, seed, config)
    write_epoch_csv(epoch, output)
    click.echo(f"common-mode: residuals={residuals} base_rms={base_rms} seed={seed} -> {output}")


# ---------------------------------------------------------------------------
# decode
# ---------------------------------------------------------------------------

@main.command()
@click.argument("epoch_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--window", type=click.Choice(cca.WINDOW_POLICIES), default="final_4s", show_default=True)
@click.option("--freqs", default="7,7.5,8,8.5,9,11", show_default=True)
@click.option("--harmonics", type=int, default=2, show_default=True)
@click.option("--precision", type=click.Choice(filters.PRECISIONS), default=filters.BINARY64, show_default=True)
def decode(epoch_csv, window, freqs, harmonics, precision):
    """Filter + CCA decision for one epoch CSV."""
    from .core import TrialRecording

    epoch = read_epoch_csv(epoch_csv)
    trial = TrialRecording(epoch_full=epoch)
    selected = cca.select_analysis_window(trial, window)
    fs = selected.config.sample_rate_hz
    coeffs = filters.design_butterworth_bandpass(filters.FilterSpec(sample_rate_hz=fs), precision)
    filtered = filters.filtfilt(coeffs, selected)
    bank = cca.build_reference_bank(_parse_freqs(freqs), harmonics, selected.sample_count, fs, precision)
    decision = cca.classify(filtered, bank)
    for hz, rho in decision.correlations:
        click.echo(f"rho {hz:g} {rho:.6f}")
    click.echo(f"predicted {decision.predicted_hz:g}")
    click.echo(f"rho_peak {decision.rho_peak:.6f}")
    click.echo(f"margin {decision.margin:.6f}")


# ---------------------------------------------------------------------------
# bench-latency
# ---------------------------------------------------------------------------

@main.command("bench-latency")
@click.option("--cycles", type=int, default=170, show_default=True)
@click.option("--rate", type=float, default=500.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
def bench_latency(cycles, rate, seed, output):
    """Time filter+classify on a fixed synthetic 8 x 2000 epoch N times."""
    if cycles < 1:
        raise click.BadParameter("cycles must be >= 1")
    config = AcquisitionConfig(sample_rate_hz=rate)
    spec = synth.SsvepSynthSpec(target_hz=8.0, duration_s=4.0, seed=seed, config=config)
    epoch = synth.gen_ssvep_trial(spec).epoch_full
    coeffs = filters.design_butterworth_bandpass(filters.FilterSpec(sample_rate_hz=rate))
    bank = cca.build_reference_bank((7.0, 7.5, 8.0, 8.5, 9.0, 11.0), 2, epoch.sample_count, rate)
    records = []
    for _ in range(cycles):
        t0 = time.perf_counter_ns() // 1000
        filtered = filters.filtfilt(coeffs, epoch)
        t1 = time.perf_counter_ns() // 1000
        cca.classify(filtered, bank)
        t2 = time.perf_counter_ns() // 1000
        records.append(analytics.LatencyRecord(t0_us=t0, t1_us=t1, t2_us=t2))
    stats = analytics.latency_stats(records)
    text = analytics.latency_stats_csv(stats)
    if output:
        Path(output).write_text(text)
    click.echo(text, nl=False)


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

@main.group()
def analyze():
    """Characterization reports from recorded CSVs."""


@analyze.command("noise")
@click.argument("runs", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--window-s", type=float, default=5.0, show_default=True)
@click.option("--windows", type=int, default=6, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
def analyze_noise(runs, window_s, windows, output):
    epochs = [read_epoch_csv(p) for p in runs]
    spec = filters.FilterSpec(sample_rate_hz=epochs[0].config.sample_rate_hz)
    report = analytics.noise_metrics(epochs, spec, window_length_s=window_s, windows_per_run=windows)
    text = analytics.noise_report_csv(report)
    if output:
        Path(output).write_text(text)
    click.echo(text, nl=False)


@analyze.command("jitter")
@click.argument("log_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--period-us", type=float, default=2000.0, show_default=True)
@click.option("--drift-convention", type=click.Choice(["total", "per_second"]), default="total", show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
def analyze_jitter(log_csv, period_us, drift_convention, output):
    log = read_timing_log_csv(log_csv)
    stats = analytics.jitter_and_drift(log, nominal_period_us=period_us, drift_convention=drift_convention)
    text = analytics.jitter_stats_csv(stats)
    if output:
        Path(output).write_text(text)
    click.echo(text, nl=False)


@analyze.command("cmrr")
@click.option("--on", "on_csv", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--off", "off_csv", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--vpp", type=float, default=1.0, show_default=True)
@click.option("--condition", type=click.Choice(["balanced", "mismatch"]), default="balanced", show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
def analyze_cmrr(on_csv, off_csv, vpp, condition, output):
    report = analytics.common_mode_attenuation(
        read_epoch_csv(on_csv), read_epoch_csv(off_csv), v_pp_volts=vpp, condition=condition
    )
    text = analytics.cm_report_csv(report)
    if output:
        Path(output).write_text(text)
    click.echo(text, nl=False)


@analyze.command("itr")
@click.option("-m", "targets", type=int, required=True)
@click.option("-p", "accuracy", type=float, required=True)
@click.option("-t", "selection_s", type=float, required=True)
def analyze_itr(targets, accuracy, selection_s):
    click.echo(f"{analytics.itr_bits_per_min(targets, accuracy, selection_s):.2f}")


# ---------------------------------------------------------------------------
# fidelity
# ---------------------------------------------------------------------------

@main.command("fidelity")
@click.option("--trials", "trials_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--configs", default="DD,DF,FD,FF", show_default=True)
@click.option("--window", type=click.Choice(cca.WINDOW_POLICIES), default="final_4s", show_default=True)
@click.option("--freqs", default="7,7.5,8,8.5,9,11", show_default=True)
@click.option("--harmonics", type=int, default=2, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
def fidelity_cmd(trials_dir, configs, window, freqs, harmonics, output):
    """Replay every trial CSV in a directory through the precision configs."""
    from .core import TrialRecording

    paths = sorted(Path(trials_dir).glob("*.csv"))
    if not paths:
        raise click.ClickException(f"no .csv trials under {trials_dir}")
    trials = [TrialRecording(epoch_full=read_epoch_csv(p)) for p in paths]
    cfgs = [fidelity.PrecisionConfig.from_label(lbl) for lbl in configs.split(",")]
    report = fidelity.run_fidelity_suite(
        trials, window_policy=window, frequencies=_parse_freqs(freqs), harmonics=harmonics, configs=cfgs
    )
    text = fidelity.fidelity_report_csv(report)
    if output:
        Path(output).write_text(text)
    for lbl in report.configs:
        s = report.summaries[lbl]
        click.echo(
            f"{lbl}: agreement {100 * s.agreement_fraction:.1f}% "
            f"({report.trial_count - s.disagreements}/{report.trial_count}), "
            f"max|dm| {s.max_abs_margin_deviation:.3g}"
        )


# ---------------------------------------------------------------------------
# serve / client
# ---------------------------------------------------------------------------

@main.command()
@click.option("--rate", type=float, default=500.0, show_default=True)
@click.option("--port", type=int, default=stream.DEFAULT_PORT, show_default=True)
@click.option("--queue", "queue_depth", type=int, default=256, show_default=True)
@click.option("--freq", type=float, default=8.0, show_default=True, help="Synthetic SSVEP target frequency.")
@click.option("--noise-rms", type=float, default=0.2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--duration", type=float, default=None, help="Session length in seconds (default: until disconnect).")
def serve(rate, port, queue_depth, freq, noise_rms, seed, duration):
    """Run the simulated device server until client disconnect or --duration."""
    config = AcquisitionConfig(sample_rate_hz=rate)
    source = stream.SsvepFrameSource(freq, config=config, noise_rms_uv=noise_rms, seed=seed)
    server = stream.DeviceServer(
        source, port=port, queue_depth=queue_depth, rate_hz=rate, duration_s=duration, config=config
    )
    stats = server.run()
    click.echo(
        f"session: generated={stats.frames_generated} sent={stats.frames_sent} "
        f"dropped={stats.frames_dropped} queue_hwm={stats.queue_high_watermark}"
    )
    if stats.tick_period_stats:
        click.echo(analytics.jitter_stats_csv(stats.tick_period_stats), nl=False)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=stream.DEFAULT_PORT, show_default=True)
@click.option("--duration", type=float, default=None)
@click.option("--trial", default=None, help="Run one trial handshake, e.g. '5s'.")
def client(host, port, duration, trial):
    """Connect to a device server, ingest frames, optionally run a trial."""
    trial_s = float(trial.rstrip("s")) if trial else None
    stats = stream.run_client(host=host, port=port, duration_s=duration, trial_s=trial_s)
    click.echo(f"frames={stats.frames_received} gaps={stats.gap_count} crc_errors={stats.crc_errors}")
    for line in stats.decisions:
        click.echo(line)


if __name__ == "__main__":
    main()
