"""Closed-loop discrete-time session: drift, feedback, sampling, distillation.

One session advances second by second (configurable step), feeding the
controllers only quantities an operator could observe - sampled counts and
the QBER computed from them - while the true drift state is logged as
hidden diagnostic truth.  Completed distillation windows are turned into
secure key records; a trailing partial window is discarded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import (CLASSES, DriftState, PulseTally, class_rates,
                      sample_tally)
from .config import Config
from .finite_key import (KeyResult, decoy_bounds, estimate_channel,
                         secure_key_length)
from .stabilization import (ControllerState, apply_controls,
                            gate_delay_feedback, intensity_feedback,
                            polarization_feedback, step_drift,
                            stretcher_feedback)

__all__ = [
    "TelemetryRow",
    "SecureKeyRecord",
    "SessionSummary",
    "SessionResult",
    "run_session",
    "distill_window",
    "export_timeseries",
    "load_telemetry_csv",
    "load_keys_csv",
    "TELEMETRY_HEADER",
    "KEYS_HEADER",
]

TELEMETRY_HEADER = ("time_s,qber_mu,qber_nu1,qber_nu2,"
                    "trans_mu,trans_nu1,trans_nu2,"
                    "stretcher,epc1,epc2,epc3,epc4,gate_delay_ps,atten_db,"
                    "hidden_phase_rad,hidden_pol_rad,hidden_timing_ps,hidden_power")

KEYS_HEADER = ("window_start_s,window_end_s,"
               "sifted_mu,errors_mu,sifted_nu1,errors_nu1,sifted_nu2,errors_nu2,"
               "qber_mu,y1_lower,e1_upper,secure_bits,secure_rate_bps,efficiency")


@dataclass(frozen=True)
class TelemetryRow:
    """One time step of observable statistics plus hidden diagnostic truth.

    QBER/transmittance fields are None when no counts were available that
    step.  The hidden_* fields are the raw environmental drift; controllers
    never read them.
    """

    time_s: float
    qber_mu: float | None
    qber_nu1: float | None
    qber_nu2: float | None
    trans_mu: float | None
    trans_nu1: float | None
    trans_nu2: float | None
    stretcher: float
    epc1: float
    epc2: float
    epc3: float
    epc4: float
    gate_delay_ps: float
    atten_db: float
    hidden_phase_rad: float
    hidden_pol_rad: float
    hidden_timing_ps: float
    hidden_power: float


@dataclass(frozen=True)
class SecureKeyRecord:
    """One distillation window: aggregated counts, bounds, and key output."""

    window_start: float
    window_end: float
    tally: PulseTally
    qber_signal: float | None
    transmittance: dict[str, float | None]
    key: KeyResult
    secure_rate: float  # bits per second of window time
    y1_lower: float
    e1_upper: float


@dataclass(frozen=True)
class SessionSummary:
    duration: float
    n_steps: int
    n_windows: int
    total_secure_bits: int
    mean_secure_rate_bps: float
    mean_qber_signal: float | None
    max_qber_signal: float | None


@dataclass(frozen=True)
class SessionResult:
    rows: list[TelemetryRow]
    records: list[SecureKeyRecord]
    summary: SessionSummary


def distill_window(tally: PulseTally, config: Config, window_start: float,
                   window_end: float) -> SecureKeyRecord:
    """Turn one complete window's tally into a secure key record."""
    bounds = decoy_bounds(estimate_channel(tally, config.security), config.source)
    key = secure_key_length(tally, bounds, config.security, config.source)
    interval = window_end - window_start
    trans = {cls: (2.0 * tally.sifted(cls) / tally.sent(cls)
                   if tally.sent(cls) > 0 else None) for cls in CLASSES}
    qber = (tally.errors_mu / tally.sifted_mu) if tally.sifted_mu > 0 else None
    return SecureKeyRecord(
        window_start=window_start,
        window_end=window_end,
        tally=tally,
        qber_signal=qber,
        transmittance=trans,
        key=key,
        secure_rate=key.secure_bits / interval,
        y1_lower=bounds.y1_lower,
        e1_upper=bounds.e1_upper,
    )


def _steps_per(interval: float, dt: float) -> int:
    return max(1, int(round(interval / dt)))


def run_session(config: Config, duration: float | None = None,
                seed: int | None = None) -> SessionResult:
    """Run a full closed-loop session and distill every complete window."""
    config = config.validated()
    source, link, security, sim = (config.source, config.link,
                                   config.security, config.sim)
    control = config.control
    dt = sim.time_step
    if duration is None:
        duration = sim.duration
    if seed is None:
        seed = sim.rng_seed
    n_steps = int(math.floor(duration / dt + 1e-9))

    rng = np.random.default_rng(seed)
    drift = DriftState()
    ctrl = ControllerState(control=control)
    carry: dict[str, float] = {}
    stabilize = sim.stabilization_enabled

    stretcher_every = _steps_per(control.stretcher_interval, dt)
    epc_every = _steps_per(control.epc_interval, dt)
    gate_every = _steps_per(control.gate_interval, dt)
    gate_offset = gate_every // 2  # interleave with the EPC loop
    intensity_every = _steps_per(control.intensity_interval, dt)
    window_steps = _steps_per(security.distill_interval, dt)

    rows: list[TelemetryRow] = []
    records: list[SecureKeyRecord] = []
    window_tally = PulseTally()
    window_start_step = 0

    last_qber: float | None = None
    last_count_rate: float | None = None

    total_errors = 0
    total_sifted = 0
    max_qber: float | None = None

    for i in range(n_steps):
        t = i * dt
        drift = step_drift(drift, link, dt, rng)

        if stabilize:
            if i % stretcher_every == 0:
                ctrl = stretcher_feedback(last_qber, ctrl)
            if i % epc_every == 0:
                ctrl = polarization_feedback(last_count_rate, ctrl)
            if i % gate_every == gate_offset:
                ctrl = gate_delay_feedback(last_count_rate, ctrl)
            if i % intensity_every == 0:
                measured = (source.clock_rate * source.mean_intensity()
                            * drift.power_factor
                            * 10.0 ** (-ctrl.attenuator_setting / 10.0))
                ctrl = intensity_feedback(measured, source, ctrl)

        residual = apply_controls(drift, ctrl)
        rates = class_rates(residual, source, link)
        tally = sample_tally(rates, source, dt, rng, carry)

        qber_obs = {}
        trans_obs = {}
        for cls in CLASSES:
            sifted = tally.sifted(cls)
            qber_obs[cls] = tally.errors(cls) / sifted if sifted > 0 else None
            sent = tally.sent(cls)
            trans_obs[cls] = 2.0 * sifted / sent if sent > 0 else None

        last_qber = qber_obs["mu"]
        last_count_rate = tally.total_sifted() / dt

        if qber_obs["mu"] is not None:
            max_qber = qber_obs["mu"] if max_qber is None else max(max_qber,
                                                                   qber_obs["mu"])
        total_errors += tally.errors_mu
        total_sifted += tally.sifted_mu

        rows.append(TelemetryRow(
            time_s=t,
            qber_mu=qber_obs["mu"], qber_nu1=qber_obs["nu1"],
            qber_nu2=qber_obs["nu2"],
            trans_mu=trans_obs["mu"], trans_nu1=trans_obs["nu1"],
            trans_nu2=trans_obs["nu2"],
            stretcher=ctrl.stretcher_setting,
            epc1=ctrl.epc_settings[0], epc2=ctrl.epc_settings[1],
            epc3=ctrl.epc_settings[2], epc4=ctrl.epc_settings[3],
            gate_delay_ps=ctrl.gate_delay,
            atten_db=ctrl.attenuator_setting,
            hidden_phase_rad=drift.phase_error,
            hidden_pol_rad=drift.polarization_angle,
            hidden_timing_ps=drift.timing_offset,
            hidden_power=drift.power_factor,
        ))

        window_tally = window_tally + tally
        if (i + 1 - window_start_step) == window_steps:
            records.append(distill_window(
                window_tally, config,
                window_start_step * dt, (i + 1) * dt))
            window_tally = PulseTally()
            window_start_step = i + 1

    total_bits = sum(r.key.secure_bits for r in records)
    window_time = len(records) * window_steps * dt
    summary = SessionSummary(
        duration=n_steps * dt,
        n_steps=n_steps,
        n_windows=len(records),
        total_secure_bits=total_bits,
        mean_secure_rate_bps=total_bits / window_time if window_time > 0 else 0.0,
        mean_qber_signal=total_errors / total_sifted if total_sifted > 0 else None,
        max_qber_signal=max_qber,
    )
    return SessionResult(rows=rows, records=records, summary=summary)


# ---------------------------------------------------------------------------
# CSV export (9 significant digits, absent values as empty fields).
# ---------------------------------------------------------------------------

def _fmt(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return f"{value:.9g}"


def format_summary(summary: SessionSummary) -> str:
    lines = [
        f"duration_s: {_fmt(summary.duration)}",
        f"steps: {summary.n_steps}",
        f"windows: {summary.n_windows}",
        f"total_secure_bits: {summary.total_secure_bits}",
        f"mean_secure_rate_bps: {_fmt(summary.mean_secure_rate_bps)}",
        f"mean_qber_signal: {_fmt(summary.mean_qber_signal)}",
        f"max_qber_signal: {_fmt(summary.max_qber_signal)}",
    ]
    return "\n".join(lines) + "\n"


def export_timeseries(rows: list[TelemetryRow], records: list[SecureKeyRecord],
                      destination: str | Path,
                      summary: SessionSummary | None = None) -> list[Path]:
    """Write telemetry.csv and keys.csv (and summary.txt when given) under
    the destination directory; returns the written paths."""
    dest = Path(destination)
    try:
        dest.mkdir(parents=True, exist_ok=True)
        telemetry_path = dest / "telemetry.csv"
        with telemetry_path.open("w") as fh:
            fh.write(TELEMETRY_HEADER + "\n")
            for r in rows:
                fh.write(",".join(_fmt(v) for v in (
                    r.time_s, r.qber_mu, r.qber_nu1, r.qber_nu2,
                    r.trans_mu, r.trans_nu1, r.trans_nu2,
                    r.stretcher, r.epc1, r.epc2, r.epc3, r.epc4,
                    r.gate_delay_ps, r.atten_db,
                    r.hidden_phase_rad, r.hidden_pol_rad,
                    r.hidden_timing_ps, r.hidden_power)) + "\n")
        keys_path = dest / "keys.csv"
        with keys_path.open("w") as fh:
            fh.write(KEYS_HEADER + "\n")
            for rec in records:
                fh.write(",".join(_fmt(v) for v in (
                    rec.window_start, rec.window_end,
                    rec.tally.sifted_mu, rec.tally.errors_mu,
                    rec.tally.sifted_nu1, rec.tally.errors_nu1,
                    rec.tally.sifted_nu2, rec.tally.errors_nu2,
                    rec.qber_signal, rec.y1_lower, rec.e1_upper,
                    rec.key.secure_bits, rec.secure_rate,
                    rec.key.efficiency)) + "\n")
        written = [telemetry_path, keys_path]
        if summary is not None:
            summary_path = dest / "summary.txt"
            summary_path.write_text(format_summary(summary))
            written.append(summary_path)
        return written
    except OSError as exc:
        raise OSError(f"failed writing session output under {dest}: {exc}") from exc


def _parse_cell(cell: str) -> float | None:
    return None if cell == "" else float(cell)


def load_telemetry_csv(path: str | Path) -> list[dict[str, float | None]]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    assert lines[0] == TELEMETRY_HEADER, "unexpected telemetry schema"
    return [dict(zip(header, map(_parse_cell, line.split(","))))
            for line in lines[1:]]


def load_keys_csv(path: str | Path) -> list[dict[str, float | None]]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    assert lines[0] == KEYS_HEADER, "unexpected keys schema"
    return [dict(zip(header, map(_parse_cell, line.split(","))))
            for line in lines[1:]]
