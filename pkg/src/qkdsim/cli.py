"""Command-line entry point.

Subcommands:
    simulate          run a closed-loop session, write telemetry/keys CSVs
    keyrate           distill one window from expectation or supplied tallies
    efficiency-curve  sweep key-extraction efficiency over a pulse-count grid
    optimize          search source intensities/probabilities for best rate
    calibrate         solve the intrinsic misalignment for a target QBER

Every configuration key is exposed both in the key=value config file and as
a command-line override flag; overrides apply after the file, before
validation.  All randomness flows from a single seed.

Exit status: 0 success, 2 usage, 3 unreadable/invalid config file,
4 configuration validation error, 5 output I/O failure.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import channel, config as config_mod, finite_key, optimizer, session
from .config import Config, ConfigError

__all__ = ["CommandRequest", "parse_command", "dispatch", "main"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG_FILE = 3
EXIT_VALIDATION = 4
EXIT_IO = 5

SUBCOMMANDS = ("simulate", "keyrate", "efficiency-curve", "optimize", "calibrate")


@dataclass
class CommandRequest:
    subcommand: str
    config_path: str | None = None
    out_dir: str = "."
    overrides: dict[str, str] = field(default_factory=dict)
    seed: int | None = None
    # subcommand-specific settings
    n_pulses: float = 1.2e12
    tally_file: str | None = None
    min_pulses: float = 1e9
    max_pulses: float = 1e15
    points: int = 20
    sweeps: int = 5
    target_qber: float = 0.0385


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qkdsim",
        description="Simulate a continuously stabilized decoy-state BB84 link "
                    "and distill finite-size secure keys.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", metavar="FILE",
                       help="key=value configuration file (all keys optional)")
        p.add_argument("--out", metavar="DIR", default=".",
                       help="output directory (default: current directory)")
        p.add_argument("--seed", type=int,
                       help="RNG seed; overrides the rng_seed key")
        for key, default, typ in config_mod.config_keys():
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest=f"key_{key}", metavar=typ.__name__.upper(),
                           help=f"override {key} (default: {default})")

    p = sub.add_parser("simulate", help="run a closed-loop session")
    add_common(p)

    p = sub.add_parser("keyrate", help="distill a single window")
    add_common(p)
    p.add_argument("--n-pulses", type=float, default=1.2e12,
                   help="pulse budget for expectation tallies (default: 1.2e12)")
    p.add_argument("--tally-file", metavar="FILE",
                   help="key=value counts (sent_mu, sifted_mu, errors_mu, ...) "
                        "used instead of expectation tallies")

    p = sub.add_parser("efficiency-curve",
                       help="key-extraction efficiency vs. pulse count")
    add_common(p)
    p.add_argument("--min-pulses", type=float, default=1e9)
    p.add_argument("--max-pulses", type=float, default=1e15)
    p.add_argument("--points", type=int, default=20)

    p = sub.add_parser("optimize", help="optimize source parameters")
    add_common(p)
    p.add_argument("--n-pulses", type=float, default=1.2e12,
                   help="pulse budget of the finite-size objective")
    p.add_argument("--sweeps", type=int, default=5,
                   help="coordinate-descent passes (default: 5)")

    p = sub.add_parser("calibrate",
                       help="solve intrinsic misalignment for a target QBER")
    add_common(p)
    p.add_argument("--target-qber", type=float, default=0.0385)
    return parser


def parse_command(argv: list[str]) -> CommandRequest:
    """Parse an argument list into a CommandRequest (raises SystemExit(2) on
    usage errors, matching argparse conventions)."""
    ns = _build_parser().parse_args(argv)
    overrides = {key: getattr(ns, f"key_{key}")
                 for key, _, _ in config_mod.config_keys()
                 if getattr(ns, f"key_{key}", None) is not None}
    req = CommandRequest(subcommand=ns.subcommand, config_path=ns.config,
                         out_dir=ns.out, overrides=overrides, seed=ns.seed)
    for attr in ("n_pulses", "tally_file", "min_pulses", "max_pulses",
                 "points", "sweeps", "target_qber"):
        if hasattr(ns, attr):
            setattr(req, attr, getattr(ns, attr))
    return req


def _load_config(req: CommandRequest) -> Config:
    if req.config_path is not None:
        cfg = config_mod.load_config_file(req.config_path)
    else:
        cfg = Config()
    cfg = config_mod.apply_overrides(cfg, req.overrides)
    if req.seed is not None:
        cfg = replace(cfg, sim=replace(cfg.sim, rng_seed=req.seed))
    return cfg.validated()


def _read_tally_file(path: str) -> channel.PulseTally:
    counts: dict[str, int] = {}
    for line in Path(path).read_text().splitlines():
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, _, raw = stripped.partition("=")
        counts[key.strip()] = int(float(raw.strip()))
    tally = channel.PulseTally(**counts)
    tally.check()
    return tally


class _OutputTracker:
    """Removes partially written outputs if the command fails."""

    def __init__(self, out_dir: str):
        self.dir = Path(out_dir)
        self.written: list[Path] = []

    def write_text(self, name: str, text: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / name
        path.write_text(text)
        self.written.append(path)
        return path

    def cleanup(self) -> None:
        for path in self.written:
            path.unlink(missing_ok=True)


def _run_simulate(req: CommandRequest, cfg: Config, out: _OutputTracker) -> None:
    result = session.run_session(cfg)
    paths = session.export_timeseries(result.rows, result.records, out.dir,
                                      summary=result.summary)
    out.written.extend(paths)
    sys.stdout.write(session.format_summary(result.summary))


def _run_keyrate(req: CommandRequest, cfg: Config, out: _OutputTracker) -> None:
    if req.tally_file is not None:
        tally = _read_tally_file(req.tally_file)
    else:
        tally = finite_key.expectation_tally(req.n_pulses, cfg.source, cfg.link)
    bounds = finite_key.decoy_bounds(
        finite_key.estimate_channel(tally, cfg.security), cfg.source)
    result = finite_key.secure_key_length(tally, bounds, cfg.security, cfg.source)
    header = ("secure_bits,single_photon_bits,leakage_bits,finite_size_bits,"
              "efficiency,epsilon_spent,y1_lower,e1_upper")
    row = ",".join(session._fmt(v) for v in (
        result.secure_bits, result.single_photon_bits, result.leakage_bits,
        result.finite_size_bits, result.efficiency, result.epsilon_spent,
        bounds.y1_lower, bounds.e1_upper))
    out.write_text("keyrate.csv", header + "\n" + row + "\n")
    sys.stdout.write(
        f"secure_bits: {result.secure_bits}\n"
        f"single_photon_bits: {result.single_photon_bits:.9g}\n"
        f"leakage_bits: {result.leakage_bits:.9g}\n"
        f"finite_size_bits: {result.finite_size_bits:.9g}\n"
        f"efficiency: {result.efficiency:.9g}\n"
        f"y1_lower: {bounds.y1_lower:.9g}\n"
        f"e1_upper: {bounds.e1_upper:.9g}\n")


def _run_efficiency_curve(req: CommandRequest, cfg: Config,
                          out: _OutputTracker) -> None:
    grid = np.logspace(np.log10(req.min_pulses), np.log10(req.max_pulses),
                       req.points)
    lines = ["n_pulses,efficiency"]
    for n in grid:
        eff = finite_key.key_efficiency(float(n), cfg.source, cfg.link,
                                        cfg.security)
        lines.append(f"{float(n):.9g},{eff:.9g}")
    out.write_text("efficiency_curve.csv", "\n".join(lines) + "\n")
    sys.stdout.write("\n".join(lines) + "\n")


def _run_optimize(req: CommandRequest, cfg: Config, out: _OutputTracker) -> None:
    settings = optimizer.SearchSettings(start=cfg.source, sweeps=req.sweeps)
    result = optimizer.optimize_source(cfg.link, cfg.security, req.n_pulses,
                                       settings)
    best = result.best
    report = (
        f"rate_bits_per_pulse: {result.rate:.9g}\n"
        f"rate_bps_at_clock: {result.rate * best.clock_rate:.9g}\n"
        f"evaluations: {result.evaluations}\n"
        f"mu: {best.mu:.9g}\nnu1: {best.nu1:.9g}\nnu2: {best.nu2:.9g}\n"
        f"p_mu: {best.p_mu:.9g}\np_nu1: {best.p_nu1:.9g}\np_nu2: {best.p_nu2:.9g}\n"
    )
    out.write_text("optimize.txt", report)
    out.write_text("best_config.cfg",
                   config_mod.config_to_text(replace(cfg, source=best)))
    sys.stdout.write(report)


def _run_calibrate(req: CommandRequest, cfg: Config, out: _OutputTracker) -> None:
    value = channel.calibrate_misalignment(cfg.source, cfg.link,
                                           req.target_qber)
    calibrated = replace(cfg, link=replace(
        cfg.link, intrinsic_misalignment_error=value))
    out.write_text("calibrated.cfg", config_mod.config_to_text(calibrated))
    sys.stdout.write(f"intrinsic_misalignment_error: {value:.9g}\n")


_RUNNERS = {
    "simulate": _run_simulate,
    "keyrate": _run_keyrate,
    "efficiency-curve": _run_efficiency_curve,
    "optimize": _run_optimize,
    "calibrate": _run_calibrate,
}


def dispatch(request: CommandRequest) -> int:
    """Execute a parsed request; returns the process exit status."""
    try:
        cfg = _load_config(request)
    except ConfigError as exc:
        print(f"qkdsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"qkdsim: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG_FILE

    out = _OutputTracker(request.out_dir)
    try:
        _RUNNERS[request.subcommand](request, cfg, out)
    except (OSError, ValueError) as exc:
        out.cleanup()
        print(f"qkdsim: {exc}", file=sys.stderr)
        return EXIT_IO if isinstance(exc, OSError) else EXIT_VALIDATION
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    request = parse_command(sys.argv[1:] if argv is None else argv)
    return dispatch(request)


if __name__ == "__main__":
    sys.exit(main())
