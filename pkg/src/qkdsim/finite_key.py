"""Finite-size secure key distillation with exact binomial confidence bounds.

Statistical parameters are never taken at face value: every estimated gain
and error gain is replaced by its worst-case Clopper-Pearson endpoint before
entering the two-decoy (vacuum + weak) single-photon bounds, and the final
key length subtracts error-correction leakage and a privacy-amplification
penalty.  The total failure probability epsilon is split half to privacy
amplification and half equally across the six binomial bound invocations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import special

from .channel import CLASSES, DriftState, PulseTally, class_rates
from .config import LinkConfig, SecurityConfig, SourceConfig

__all__ = [
    "BinomialBound",
    "ChannelEstimates",
    "DecoyBounds",
    "KeyResult",
    "binary_entropy",
    "clopper_pearson",
    "estimate_channel",
    "point_estimates",
    "decoy_bounds",
    "secure_key_length",
    "asymptotic_rate",
    "expectation_tally",
    "key_efficiency",
]

# Number of one-sided binomial bounds consumed by one distillation:
# three gains, two decoy error gains, one signal error rate.
N_BOUND_CALLS = 6


def binary_entropy(x: float) -> float:
    """Shannon entropy of a bit with bias x, in bits."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary_entropy argument must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


@dataclass(frozen=True)
class BinomialBound:
    """Two-sided confidence interval on a binomial success probability."""

    lower: float
    upper: float


def _betainc_inv_safe(a: float, b: float, y: float) -> float:
    """betaincinv with a bisection fallback on the forward function, which
    stays accurate where the direct inversion overflows (counts beyond ~1e14)."""
    x = float(special.betaincinv(a, b, y))
    if math.isfinite(x):
        return x
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if special.betainc(a, b, mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def clopper_pearson(successes: int, trials: int,
                    confidence_epsilon: float) -> BinomialBound:
    """Exact binomial confidence interval at total failure probability
    confidence_epsilon (epsilon/2 per tail), via the regularized
    incomplete beta function."""
    if trials <= 0:
        raise ValueError("clopper_pearson requires trials > 0")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    if not 0.0 < confidence_epsilon < 1.0:
        raise ValueError("confidence_epsilon must lie in (0, 1)")
    half = confidence_epsilon / 2.0
    if successes == 0:
        lower = 0.0
    else:
        lower = _betainc_inv_safe(successes, trials - successes + 1, half)
    if successes == trials:
        upper = 1.0
    else:
        upper = _betainc_inv_safe(successes + 1, trials - successes, 1.0 - half)
    return BinomialBound(lower=lower, upper=upper)


@dataclass(frozen=True)
class ChannelEstimates:
    """Confidence intervals on per-class gains Q_c and error gains E_c*Q_c
    (probabilities per sent pulse, sifting undone)."""

    q_mu: BinomialBound
    q_nu1: BinomialBound
    q_nu2: BinomialBound
    eq_nu1: BinomialBound
    eq_nu2: BinomialBound


def _scaled_cp(successes: int, trials: int, eps: float) -> BinomialBound:
    # Sifted counts are binomial in Q/2 per sent pulse; scale back to Q.
    b = clopper_pearson(successes, trials, eps)
    return BinomialBound(lower=min(1.0, 2.0 * b.lower),
                         upper=min(1.0, 2.0 * b.upper))


def estimate_channel(tally: PulseTally, security: SecurityConfig) -> ChannelEstimates:
    """Clopper-Pearson intervals for the decoy analysis, each at its share of
    the epsilon budget."""
    eps = security.epsilon / 2.0 / N_BOUND_CALLS
    return ChannelEstimates(
        q_mu=_scaled_cp(tally.sifted_mu, tally.sent_mu, eps),
        q_nu1=_scaled_cp(tally.sifted_nu1, tally.sent_nu1, eps),
        q_nu2=_scaled_cp(tally.sifted_nu2, tally.sent_nu2, eps),
        eq_nu1=_scaled_cp(tally.errors_nu1, tally.sent_nu1, eps),
        eq_nu2=_scaled_cp(tally.errors_nu2, tally.sent_nu2, eps),
    )


def point_estimates(tally: PulseTally) -> ChannelEstimates:
    """Zero-width intervals at the observed ratios (infinite-statistics limit)."""
    def ratio(k: int, n: int) -> BinomialBound:
        p = min(1.0, 2.0 * k / n) if n > 0 else 0.0
        return BinomialBound(p, p)

    return ChannelEstimates(
        q_mu=ratio(tally.sifted_mu, tally.sent_mu),
        q_nu1=ratio(tally.sifted_nu1, tally.sent_nu1),
        q_nu2=ratio(tally.sifted_nu2, tally.sent_nu2),
        eq_nu1=ratio(tally.errors_nu1, tally.sent_nu1),
        eq_nu2=ratio(tally.errors_nu2, tally.sent_nu2),
    )


@dataclass(frozen=True)
class DecoyBounds:
    """Single-photon characterization from the decoy classes."""

    y1_lower: float   # single-photon yield, lower bound
    e1_upper: float   # single-photon error rate, upper bound
    y0_lower: float   # background yield, lower bound


def decoy_bounds(estimates: ChannelEstimates, source: SourceConfig) -> DecoyBounds:
    """Vacuum+weak two-decoy bounds with every gain at its worst-case endpoint.

    The background lower bound comes from the near-vacuum error gain: its
    errors are at least half the background clicks minus everything a
    multi-photon emission could possibly contribute.
    """
    mu, nu1, nu2 = source.mu, source.nu1, source.nu2
    e_nu1, e_nu2 = math.exp(nu1), math.exp(nu2)

    y0_lower = max(0.0, 2.0 * (estimates.eq_nu2.lower * e_nu2 - (e_nu2 - 1.0)))

    # The vacuum+weak inference is only sound for nu1 + nu2 < mu (the
    # multi-photon comparison between classes flips sign otherwise); outside
    # that region report no single-photon knowledge at all.
    if nu1 + nu2 >= mu:
        return DecoyBounds(y1_lower=0.0, e1_upper=0.5, y0_lower=y0_lower)

    denom = mu * (nu1 - nu2) - nu1 ** 2 + nu2 ** 2
    y1 = (mu / denom) * (
        estimates.q_nu1.lower * e_nu1
        - estimates.q_nu2.upper * e_nu2
        - ((nu1 ** 2 - nu2 ** 2) / mu ** 2)
        * (estimates.q_mu.upper * math.exp(mu) - y0_lower)
    )
    y1_lower = min(1.0, max(0.0, y1))

    if y1_lower <= 0.0:
        e1_upper = 0.5
    else:
        e1 = (estimates.eq_nu1.upper * e_nu1 - estimates.eq_nu2.lower * e_nu2) \
            / ((nu1 - nu2) * y1_lower)
        e1_upper = min(0.5, max(0.0, e1))
    return DecoyBounds(y1_lower=y1_lower, e1_upper=e1_upper, y0_lower=y0_lower)


@dataclass(frozen=True)
class KeyResult:
    """Outcome of distilling one window."""

    secure_bits: int
    single_photon_bits: float   # N1_lower * (1 - H2(e1_upper))
    leakage_bits: float         # f * n_sift * H2(E_upper)
    finite_size_bits: float     # privacy-amplification penalty
    efficiency: float           # ratio to the infinite-statistics key from the same tally
    epsilon_spent: float


def _key_terms(tally: PulseTally, bounds: DecoyBounds,
               security: SecurityConfig, source: SourceConfig,
               q_mu_upper: float, e_mu_upper: float,
               finite_size: bool) -> tuple[float, float, float]:
    n_sift = tally.sifted_mu
    if n_sift == 0 or q_mu_upper <= 0.0:
        return 0.0, 0.0, 0.0
    p1 = source.mu * math.exp(-source.mu)
    n1_lower = n_sift * p1 * bounds.y1_lower / q_mu_upper
    single = n1_lower * (1.0 - binary_entropy(bounds.e1_upper))
    leakage = security.ec_efficiency * n_sift * binary_entropy(min(0.5, e_mu_upper))
    pa = math.log2(2.0 / (security.epsilon / 2.0)) if finite_size else 0.0
    return single, leakage, pa


def secure_key_length(tally: PulseTally, bounds: DecoyBounds,
                      security: SecurityConfig,
                      source: SourceConfig) -> KeyResult:
    """Extractable secure bits for one window's tally.

    Key bits come from the signal class only; the decoy classes enter through
    `bounds`.  `bounds` must have been computed from the same tally with
    `estimate_channel` so the epsilon accounting lines up.
    """
    eps_bound = security.epsilon / 2.0 / N_BOUND_CALLS
    if tally.sifted_mu > 0 and tally.sent_mu > 0:
        q_mu_upper = min(1.0, 2.0 * clopper_pearson(
            tally.sifted_mu, tally.sent_mu, eps_bound).upper)
        e_mu_upper = clopper_pearson(
            tally.errors_mu, tally.sifted_mu, eps_bound).upper
    else:
        q_mu_upper, e_mu_upper = 0.0, 0.5
    single, leakage, pa = _key_terms(tally, bounds, security, source,
                                     q_mu_upper, e_mu_upper, finite_size=True)
    secure = max(0, math.floor(single - leakage - pa))

    # Infinite-statistics reference from the very same counts, for the
    # efficiency ratio.
    ref_bounds = decoy_bounds(point_estimates(tally), source)
    q_hat = 2.0 * tally.sifted_mu / tally.sent_mu if tally.sent_mu else 0.0
    e_hat = (tally.errors_mu / tally.sifted_mu) if tally.sifted_mu else 0.5
    ref_single, ref_leak, _ = _key_terms(tally, ref_bounds, security, source,
                                         q_hat, e_hat, finite_size=False)
    reference = max(0.0, ref_single - ref_leak)
    efficiency = min(1.0, secure / reference) if reference > 0 else 0.0
    return KeyResult(
        secure_bits=secure,
        single_photon_bits=single,
        leakage_bits=leakage,
        finite_size_bits=pa,
        efficiency=efficiency,
        epsilon_spent=security.epsilon,
    )


def asymptotic_rate(source: SourceConfig, link: LinkConfig,
                    security: SecurityConfig) -> float:
    """Secure bits per emitted pulse for an infinitely long session on the
    drift-free channel (decoy bounds at their infinite-statistics point
    estimates, statistical penalties gone)."""
    rates = class_rates(DriftState(), source, link)
    est = ChannelEstimates(
        q_mu=BinomialBound(rates.q_mu, rates.q_mu),
        q_nu1=BinomialBound(rates.q_nu1, rates.q_nu1),
        q_nu2=BinomialBound(rates.q_nu2, rates.q_nu2),
        eq_nu1=BinomialBound(rates.e_nu1 * rates.q_nu1, rates.e_nu1 * rates.q_nu1),
        eq_nu2=BinomialBound(rates.e_nu2 * rates.q_nu2, rates.e_nu2 * rates.q_nu2),
    )
    bounds = decoy_bounds(est, source)
    q1 = source.mu * math.exp(-source.mu) * bounds.y1_lower
    rate = 0.5 * source.p_mu * (
        q1 * (1.0 - binary_entropy(bounds.e1_upper))
        - security.ec_efficiency * rates.q_mu * binary_entropy(rates.e_mu)
    )
    return max(0.0, rate)


def expectation_tally(n_pulses: float, source: SourceConfig,
                      link: LinkConfig) -> PulseTally:
    """Deterministic expected counts for n_pulses emitted on the drift-free
    channel (no sampling)."""
    rates = class_rates(DriftState(), source, link)
    counts = []
    for cls, p_cls in zip(CLASSES, (source.p_mu, source.p_nu1, source.p_nu2)):
        sent = round(n_pulses * p_cls)
        sifted = round(sent * rates.gain(cls) / 2.0)
        errors = round(sifted * rates.qber(cls))
        counts.extend((int(sent), int(sifted), int(errors)))
    return PulseTally(*counts)


def key_efficiency(n_pulses: float, source: SourceConfig, link: LinkConfig,
                   security: SecurityConfig) -> float:
    """Finite-size key from expectation tallies over the infinite-session key
    for the same channel and pulse budget."""
    if n_pulses <= 0:
        raise ValueError("n_pulses must be > 0")
    tally = expectation_tally(n_pulses, source, link)
    bounds = decoy_bounds(estimate_channel(tally, security), source)
    result = secure_key_length(tally, bounds, security, source)
    asymptotic = n_pulses * asymptotic_rate(source, link, security)
    if asymptotic <= 0:
        return 0.0
    return min(1.0, result.secure_bits / asymptotic)
