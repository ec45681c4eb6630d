"""Configuration dataclasses, validation, and the key=value config file format.

The defaults describe a 50 km, GHz-clocked phase-encoded decoy BB84 link:
signal intensity 0.5 photons/pulse with two weak decoys, 0.2 dB/km fiber,
16.5% efficient gated detectors with 9e-6 dark counts per gate, and a
composable security parameter of 1e-7.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Iterator

__all__ = [
    "ConfigError",
    "SourceConfig",
    "LinkConfig",
    "SecurityConfig",
    "SimConfig",
    "ControlConfig",
    "Config",
    "validate_config",
    "default_config",
    "load_config_file",
    "parse_config_text",
    "apply_overrides",
    "config_to_text",
    "config_keys",
    "DEFAULT_MISALIGNMENT",
]

# Intrinsic optical misalignment chosen so the zero-drift signal QBER of the
# default link is exactly 3.85%.  Recompute with `qkdsim calibrate` if any
# link constant changes; tests assert consistency with fresh calibration.
DEFAULT_MISALIGNMENT = 0.03749724321045597


class ConfigError(ValueError):
    """One or more configuration invariants are violated.

    The message carries one line per violation, naming the offending field
    and the bound it broke.
    """

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(problems))


@dataclass(frozen=True)
class SourceConfig:
    """Pulsed source: intensities, send probabilities, clock."""

    mu: float = 0.5            # signal mean photon number, photons/pulse
    nu1: float = 0.1           # first decoy mean photon number
    nu2: float = 0.0007        # second (near-vacuum) decoy mean photon number
    p_mu: float = 0.9883       # signal send probability
    p_nu1: float = 0.0078      # first decoy send probability
    p_nu2: float = 0.0039      # second decoy send probability
    clock_rate: float = 1e9    # pulses per second

    def mean_intensity(self) -> float:
        """Send-probability-weighted mean photons per pulse (monitored flux)."""
        return self.p_mu * self.mu + self.p_nu1 * self.nu1 + self.p_nu2 * self.nu2

    def _problems(self) -> list[str]:
        out = []
        if not self.mu > self.nu1:
            out.append("mu must exceed nu1")
        if not self.nu1 > self.nu2:
            out.append("nu1 must exceed nu2")
        if not self.nu2 >= 0:
            out.append("nu2 must be >= 0")
        for name in ("p_mu", "p_nu1", "p_nu2"):
            v = getattr(self, name)
            if not 0 < v < 1:
                out.append(f"{name} must lie in (0, 1)")
        if abs(self.p_mu + self.p_nu1 + self.p_nu2 - 1.0) > 1e-12:
            out.append("probabilities must sum to 1 (tolerance 1e-12)")
        if not self.clock_rate > 0:
            out.append("clock_rate must be > 0")
        return out


@dataclass(frozen=True)
class LinkConfig:
    """Fiber, detectors, and environmental drift rates."""

    fiber_length: float = 50.0            # km
    loss_coefficient: float = 0.2         # dB/km
    detector_efficiency: float = 0.165    # probability
    dark_count_prob: float = 9e-6         # per detector per gate
    num_detectors: int = 2
    intrinsic_misalignment_error: float = DEFAULT_MISALIGNMENT  # baseline optical error
    gate_sigma: float = 100.0             # detector gate window width, ps
    phase_diffusion: float = 1e-4         # rad^2/s, interferometer path drift
    polarization_diffusion: float = 1e-6  # rad^2/s, channel polarization drift
    timing_drift_rate: float = 0.05       # ps/s, deterministic arrival-time drift
    timing_diffusion: float = 0.01        # ps^2/s
    laser_power_diffusion: float = 1e-8   # fractional variance per second

    def background_yield(self) -> float:
        """Probability at least one detector dark-fires in a gate."""
        return 1.0 - (1.0 - self.dark_count_prob) ** self.num_detectors

    def _problems(self) -> list[str]:
        out = []
        for name in ("detector_efficiency", "dark_count_prob",
                     "intrinsic_misalignment_error"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                out.append(f"{name} must lie in [0, 1]")
        if not self.loss_coefficient >= 0:
            out.append("loss_coefficient must be >= 0")
        if not self.fiber_length >= 0:
            out.append("fiber_length must be >= 0")
        if not self.num_detectors >= 1:
            out.append("num_detectors must be >= 1")
        if not self.gate_sigma > 0:
            out.append("gate_sigma must be > 0")
        for name in ("phase_diffusion", "polarization_diffusion",
                     "timing_diffusion", "laser_power_diffusion"):
            if not getattr(self, name) >= 0:
                out.append(f"{name} must be >= 0")
        if not math.isfinite(self.timing_drift_rate):
            out.append("timing_drift_rate must be finite")
        return out


@dataclass(frozen=True)
class SecurityConfig:
    """Composable security budget and distillation cadence."""

    epsilon: float = 1e-7        # total composable failure probability
    ec_efficiency: float = 1.15  # error-correction inefficiency factor f >= 1
    distill_interval: float = 1200.0  # seconds per distillation window

    def _problems(self) -> list[str]:
        out = []
        if not 0 < self.epsilon < 1:
            out.append("epsilon must lie in (0, 1)")
        if not self.ec_efficiency >= 1:
            out.append("ec_efficiency must be >= 1")
        if not self.distill_interval > 0:
            out.append("distill_interval must be > 0")
        return out


@dataclass(frozen=True)
class SimConfig:
    """Discrete-time session settings."""

    duration: float = 129600.0    # seconds (36 h)
    time_step: float = 1.0        # seconds; per-step statistics cadence
    rng_seed: int = 1
    stabilization_enabled: bool = True

    def _problems(self) -> list[str]:
        out = []
        if not self.time_step > 0:
            out.append("time_step must be > 0")
        if not self.duration >= 0:
            out.append("duration must be >= 0")
        if 0 < self.duration < self.time_step:
            out.append("duration must be >= time_step")
        return out


@dataclass(frozen=True)
class ControlConfig:
    """Feedback-loop step sizes, gains, and cadences."""

    stretcher_step: float = 0.04     # rad-equivalent per dither move
    stretcher_interval: float = 1.0  # seconds between updates
    epc_step: float = 0.02           # rad-equivalent per channel move
    epc_interval: float = 5.0
    gate_step: float = 1.0           # ps per dither move
    gate_interval: float = 5.0
    intensity_gain: float = 1.0      # proportional loop gain
    intensity_interval: float = 1.0

    def _problems(self) -> list[str]:
        out = []
        for name in ("stretcher_step", "epc_step", "gate_step"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be > 0")
        for name in ("stretcher_interval", "epc_interval", "gate_interval",
                     "intensity_interval"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be > 0")
        if not 0 < self.intensity_gain <= 2:
            out.append("intensity_gain must lie in (0, 2]")
        return out


@dataclass(frozen=True)
class Config:
    """Validated bundle of every configurable quantity."""

    source: SourceConfig = SourceConfig()
    link: LinkConfig = LinkConfig()
    security: SecurityConfig = SecurityConfig()
    sim: SimConfig = SimConfig()
    control: ControlConfig = ControlConfig()

    def validated(self) -> "Config":
        validate_config(self.source, self.link, self.security, self.sim)
        problems = self.control._problems()
        if problems:
            raise ConfigError(problems)
        return self


def validate_config(
    source: SourceConfig,
    link: LinkConfig,
    security: SecurityConfig,
    sim: SimConfig,
) -> tuple[SourceConfig, LinkConfig, SecurityConfig, SimConfig]:
    """Check every invariant; return the bundle unchanged or raise ConfigError."""
    problems = (source._problems() + link._problems()
                + security._problems() + sim._problems())
    if problems:
        raise ConfigError(problems)
    return source, link, security, sim


def default_config() -> Config:
    return Config().validated()


# ---------------------------------------------------------------------------
# Flat key=value configuration file support.
# ---------------------------------------------------------------------------

_SECTIONS = {
    "source": SourceConfig,
    "link": LinkConfig,
    "security": SecurityConfig,
    "sim": SimConfig,
    "control": ControlConfig,
}

# key -> (section attr on Config, field name, python type)
_KEYS: dict[str, tuple[str, str, type]] = {}
for _section, _cls in _SECTIONS.items():
    for _f in fields(_cls):
        _KEYS[_f.name] = (_section, _f.name, _f.type if isinstance(_f.type, type)
                          else {"float": float, "int": int, "bool": bool}[_f.type])


def config_keys() -> Iterator[tuple[str, Any, type]]:
    """Yield (key, default value, type) for every configuration key."""
    defaults = Config()
    for key, (section, name, typ) in _KEYS.items():
        yield key, getattr(getattr(defaults, section), name), typ


def _coerce(key: str, raw: str) -> Any:
    _, _, typ = _KEYS[key]
    raw = raw.strip()
    if typ is bool:
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError([f"{key} must be a boolean, got {raw!r}"])
    try:
        if typ is int:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError([f"{key} must be a {typ.__name__}, got {raw!r}"]) from None


def apply_overrides(config: Config, overrides: dict[str, Any]) -> Config:
    """Layer key -> value overrides onto a Config; unknown keys are an error."""
    unknown = sorted(set(overrides) - set(_KEYS))
    if unknown:
        raise ConfigError([f"unknown configuration key: {k}" for k in unknown])
    per_section: dict[str, dict[str, Any]] = {}
    for key, value in overrides.items():
        section, name, typ = _KEYS[key]
        if isinstance(value, str):
            value = _coerce(key, value)
        elif typ in (int, bool):
            value = typ(value)
        else:
            value = float(value)
        per_section.setdefault(section, {})[name] = value
    for section, kv in per_section.items():
        config = replace(config, **{section: replace(getattr(config, section), **kv)})
    return config


def parse_config_text(text: str, path: str = "<config>") -> Config:
    """Parse a flat key=value file body. All keys optional; unknown keys error."""
    overrides: dict[str, str] = {}
    problems: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            problems.append(f"{path}:{lineno}: expected key = value, got {stripped!r}")
            continue
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _KEYS:
            problems.append(f"{path}:{lineno}: unknown configuration key: {key}")
            continue
        overrides[key] = raw
    if problems:
        raise ConfigError(problems)
    return apply_overrides(Config(), overrides)


def load_config_file(path: str | Path) -> Config:
    p = Path(path)
    return parse_config_text(p.read_text(), str(p))


def config_to_text(config: Config) -> str:
    """Serialize a Config as a flat key=value file round-trippable by the parser."""
    lines = []
    for section, cls in _SECTIONS.items():
        lines.append(f"# {section}")
        obj = getattr(config, section)
        for f in fields(cls):
            value = getattr(obj, f.name)
            if isinstance(value, bool):
                rendered = "true" if value else "false"
            elif isinstance(value, int):
                rendered = str(value)
            else:
                rendered = repr(float(value))
            lines.append(f"{f.name} = {rendered}")
        lines.append("")
    return "\n".join(lines)
