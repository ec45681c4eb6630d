"""Source-parameter search maximizing the finite-size secure key rate.

Coordinate descent over (mu, nu1, nu2, p_mu, p_nu1) with a golden-section
line search per coordinate.  p_nu2 is derived as the simplex remainder, and
every candidate is projected back inside the source invariants before
evaluation, so gradients through the clamped (max with zero) regions of the
objective are never needed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .config import LinkConfig, SecurityConfig, SourceConfig
from .finite_key import (decoy_bounds, estimate_channel, expectation_tally,
                         secure_key_length)

__all__ = [
    "SearchSettings",
    "OptimizationResult",
    "objective",
    "optimize_source",
    "MU_BOUNDS",
]

MU_BOUNDS = (0.01, 1.5)
_MARGIN = 1e-3    # strict-ordering margin between intensities
_P_FLOOR = 1e-4   # keep every send probability strictly inside (0, 1)
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def objective(source: SourceConfig, link: LinkConfig, security: SecurityConfig,
              n_pulses: float) -> float:
    """Deterministic finite-size secure bits per emitted pulse at expectation
    tallies (no sampling)."""
    if not (source.mu > source.nu1 > source.nu2 >= 0.0
            and source.nu1 + source.nu2 < source.mu):
        return 0.0
    tally = expectation_tally(n_pulses, source, link)
    bounds = decoy_bounds(estimate_channel(tally, security), source)
    result = secure_key_length(tally, bounds, security, source)
    return result.secure_bits / n_pulses


@dataclass(frozen=True)
class SearchSettings:
    start: SourceConfig = SourceConfig()
    sweeps: int = 5            # full passes over all coordinates
    line_search_iters: int = 30
    mu_bounds: tuple[float, float] = MU_BOUNDS


@dataclass
class OptimizationResult:
    best: SourceConfig
    rate: float                # bits per pulse at the optimum
    evaluations: int = 0
    trace: list[float] = field(default_factory=list)  # best rate per line search


def _project(source: SourceConfig, settings: SearchSettings) -> SourceConfig:
    mu = min(max(source.mu, settings.mu_bounds[0]), settings.mu_bounds[1])
    nu1 = min(max(source.nu1, _MARGIN), mu * (1.0 - _MARGIN))
    nu2 = min(max(source.nu2, 0.0), nu1 * (1.0 - _MARGIN))
    p_mu = min(max(source.p_mu, _P_FLOOR), 1.0 - 2.0 * _P_FLOOR)
    p_nu1 = min(max(source.p_nu1, _P_FLOOR), 1.0 - p_mu - _P_FLOOR)
    p_nu2 = 1.0 - p_mu - p_nu1
    return replace(source, mu=mu, nu1=nu1, nu2=nu2,
                   p_mu=p_mu, p_nu1=p_nu1, p_nu2=p_nu2)


def _golden_max(f, lo: float, hi: float, iters: int) -> tuple[float, float]:
    """Deterministic golden-section maximization; returns the best probe."""
    best_x, best_f = lo, f(lo)
    fh = f(hi)
    if fh > best_f:
        best_x, best_f = hi, fh
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = f(d)
        if fc > best_f:
            best_x, best_f = c, fc
        if fd > best_f:
            best_x, best_f = d, fd
    return best_x, best_f


def optimize_source(link: LinkConfig, security: SecurityConfig, n_pulses: float,
                    settings: SearchSettings | None = None) -> OptimizationResult:
    """Maximize the finite-size rate over intensities and send probabilities."""
    settings = settings or SearchSettings()
    if settings.mu_bounds[0] >= settings.mu_bounds[1]:
        raise ValueError("infeasible mu bounds")

    result = OptimizationResult(best=_project(settings.start, settings), rate=-1.0)

    def evaluate(candidate: SourceConfig) -> float:
        result.evaluations += 1
        rate = objective(candidate, link, security, n_pulses)
        if rate > result.rate:
            result.rate = rate
            result.best = candidate
        return rate

    evaluate(result.best)

    coordinates = ("mu", "nu1", "nu2", "p_mu", "p_nu1")
    for _ in range(settings.sweeps):
        for coord in coordinates:
            base = result.best

            def line(x: float, coord=coord, base=base) -> float:
                return evaluate(_project(replace(base, **{coord: x}), settings))

            if coord == "mu":
                lo, hi = settings.mu_bounds
            elif coord == "nu1":
                lo, hi = _MARGIN, base.mu * (1.0 - _MARGIN)
            elif coord == "nu2":
                lo, hi = 0.0, base.nu1 * (1.0 - _MARGIN)
            elif coord == "p_mu":
                lo, hi = 0.5, 1.0 - base.p_nu1 - _P_FLOOR
            else:
                lo, hi = _P_FLOOR, 1.0 - base.p_mu - _P_FLOOR
            _golden_max(line, lo, hi, settings.line_search_iters)
            result.trace.append(result.rate)
    return result
