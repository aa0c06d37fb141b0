"""Detector dead-time (saturation) model and pulse-spacing optimization.

Space encoding: every pulse carries a qudit spread over 2N detectors and
``n = tau_d / T_p`` pulses fit in one dead time.

Time encoding: a qudit is a train of N slots read out by 2 detectors, so ``n``
counts trains, ``tau_d / (N T_p)``.  The per-train hit probability uses the
same bracket as the space case shared between 2 detectors, and the raw bit
count carries an extra factor 1/2 because a detector cannot fire twice within
one train.  This choice recovers ``P_s (N - 1) / (8 N tau_d)`` as the
small-P_s maximum.

Dead time is non-paralyzable throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .analytics import config_survival_prob, rate_breakdown, secret_rate
from .errors import DomainError
from .model import Encoding, ProtocolConfig, detector_count

_GOLDEN = (math.sqrt(5) - 1) / 2


def _hit_bracket(dimension: int, p_s: float) -> float:
    # expected detector hits per qudit: one photon, or two (bunched pairs hit once)
    return 2 * p_s * (1 - p_s) + p_s**2 * (2 * dimension - 1) / dimension


def hit_prob(dimension: int, p_s: float, encoding: Encoding = Encoding.SPACE) -> float:
    """Probability that a given detector is hit, per pulse (space) or per train (time)."""
    if not 0 <= p_s <= 1:
        raise DomainError(f"p_s must be a probability, got {p_s}")
    n_det = detector_count(dimension, encoding)
    return _hit_bracket(dimension, p_s) / n_det


def alive_prob(p_hit: float, n: float) -> float:
    """Fraction of time a detector is not dark with ``n`` pulses per dead time."""
    if n < 0:
        raise DomainError(f"pulses per dead time must be >= 0, got {n}")
    return 1.0 / (1.0 + n * p_hit)


def uses_per_deadtime(dimension: int, dead_time: float, pulse_sep: float,
                      encoding: Encoding = Encoding.SPACE) -> float:
    """Qudits sent per dead time: pulses (space) or trains of N pulses (time)."""
    if pulse_sep <= 0:
        raise DomainError(f"pulse separation must be > 0, got {pulse_sep}")
    if dead_time < 0:
        raise DomainError(f"dead time must be >= 0, got {dead_time}")
    per_use = pulse_sep if Encoding(encoding) is Encoding.SPACE else dimension * pulse_sep
    return dead_time / per_use


def _raw_bits(dimension: int, p_s: float, n: float, encoding: Encoding) -> float:
    coincidences = (dimension - 1) / dimension * p_s**2
    p_alive = alive_prob(hit_prob(dimension, p_s, encoding), n)
    bits = n * coincidences * p_alive**2
    return bits if Encoding(encoding) is Encoding.SPACE else bits / 2


def raw_bits_per_deadtime(dimension: int, p_s: float, dead_time: float, pulse_sep: float,
                          encoding: Encoding = Encoding.SPACE) -> float:
    """Average raw bits exchanged during one dead time at pulse separation ``pulse_sep``."""
    n = uses_per_deadtime(dimension, dead_time, pulse_sep, encoding)
    return _raw_bits(dimension, p_s, n, encoding)


def closed_form_max(dimension: int, p_s: float, dead_time: float,
                    encoding: Encoding = Encoding.SPACE) -> float:
    """Small-P_s maximum of raw bits per second (bits per dead time over tau_d)."""
    if dead_time <= 0:
        raise DomainError("closed-form maximum needs dead_time > 0")
    if Encoding(encoding) is Encoding.SPACE:
        return p_s * (dimension - 1) / (4 * dead_time)
    return p_s * (dimension - 1) / (8 * dead_time * dimension)


def golden_section_max(func, lo: float, hi: float, rel_tol: float = 1e-9, max_iter: int = 500):
    """Maximize a unimodal ``func`` on ``[lo, hi]``; returns ``(x, func(x))``."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(max_iter):
        if abs(b - a) <= rel_tol * max(abs(a), abs(b), 1e-300):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = func(d)
    candidates = [(func(lo), lo), (fc, c), (fd, d), (func(hi), hi)]
    best_f, best_x = max(candidates)
    return best_x, best_f


@dataclass(frozen=True)
class PulseOptimum:
    pulse_sep: float
    raw_bits: float  # per dead time
    constrained: bool


def optimize_pulse_spacing(dimension: int, p_s: float, dead_time: float, min_pulse_sep: float,
                           encoding: Encoding = Encoding.SPACE) -> PulseOptimum:
    """Maximize raw bits per dead time over ``T_p >= min_pulse_sep``.

    The objective ``c n / (1 + n P_hit)^2`` is unimodal in ``log T_p`` with
    its peak at ``n = 1 / P_hit``; the search runs over
    ``[min_pulse_sep, 1e3 * dead_time]``.
    """
    if min_pulse_sep <= 0:
        raise DomainError(f"min_pulse_sep must be > 0, got {min_pulse_sep}")
    if dead_time <= 0:
        raise DomainError("pulse-spacing optimization needs dead_time > 0")
    if p_s == 0:
        return PulseOptimum(min_pulse_sep, 0.0, True)

    p_hit = hit_prob(dimension, p_s, encoding)
    per_use = 1 if Encoding(encoding) is Encoding.SPACE else dimension
    ideal_sep = dead_time * p_hit / per_use  # n = 1 / P_hit
    if ideal_sep <= min_pulse_sep:
        bits = raw_bits_per_deadtime(dimension, p_s, dead_time, min_pulse_sep, encoding)
        return PulseOptimum(min_pulse_sep, bits, True)

    lo, hi = math.log(min_pulse_sep), math.log(max(1e3 * dead_time, 2 * min_pulse_sep))
    log_sep, bits = golden_section_max(
        lambda x: raw_bits_per_deadtime(dimension, p_s, dead_time, math.exp(x), encoding),
        lo, hi, rel_tol=1e-12,
    )
    return PulseOptimum(math.exp(log_sep), bits, False)


def optimal_dimension(p_s: float, dead_time: float, min_pulse_sep: float) -> float:
    """N_opt = 2 + P_s tau_d / T~_p (real-valued; round at the call site)."""
    if min_pulse_sep <= 0:
        raise DomainError(f"min_pulse_sep must be > 0, got {min_pulse_sep}")
    return 2 + p_s * dead_time / min_pulse_sep


@dataclass(frozen=True)
class SaturationResult:
    p_hit: float
    p_alive: float
    raw_bits: float  # N_raw at the chosen spacing, per dead time
    optimal_pulse_sep: float
    constrained: bool
    raw_rate: float  # R, bits/s
    raw_rate_per_detector: float  # R / n_det
    n_detectors: int
    saturated: bool  # False when tau_d = 0


def rate_with_deadtime(config: ProtocolConfig, p_s: float | None = None) -> SaturationResult:
    """Raw key rate per second R and per detector R / n_det.

    With dead time, R is the optimized raw bits per dead time over tau_d,
    scaled by the ratio of the dark-count-inclusive sifted rate R_p to its
    dark-count-free value ((N-1)/N) P_s^2.  Without dead time R is R_p per
    qudit period.
    """
    n, enc = config.dimension, config.encoding
    if p_s is None:
        p_s = config_survival_prob(config)
    tau_d = config.detector.dead_time
    n_det = detector_count(n, enc)
    r_p = rate_breakdown(config, p_s=p_s).r_p_z
    p_hit = hit_prob(n, p_s, enc)

    if tau_d == 0:
        sep = max(config.timing.pulse_sep, config.timing.min_pulse_sep)
        period = sep if enc is Encoding.SPACE else n * sep
        rate = r_p / period
        return SaturationResult(p_hit, 1.0, 0.0, sep, False, rate, rate / n_det, n_det, False)

    opt = optimize_pulse_spacing(n, p_s, tau_d, config.timing.min_pulse_sep, enc)
    ideal = (n - 1) / n * p_s**2
    scale = r_p / ideal if ideal > 0 else 0.0
    rate = opt.raw_bits / tau_d * scale
    uses = uses_per_deadtime(n, tau_d, opt.pulse_sep, enc)
    return SaturationResult(
        p_hit=p_hit,
        p_alive=alive_prob(p_hit, uses),
        raw_bits=opt.raw_bits,
        optimal_pulse_sep=opt.pulse_sep,
        constrained=opt.constrained,
        raw_rate=rate,
        raw_rate_per_detector=rate / n_det,
        n_detectors=n_det,
        saturated=True,
    )


def secret_rate_per_second(config: ProtocolConfig, p_s: float | None = None) -> float:
    """Secret key rate r in bits/s from R and the dead-time-free QBERs."""
    rb = rate_breakdown(config, p_s=p_s)
    sat = rate_with_deadtime(config, p_s=rb.p_s)
    return secret_rate(sat.raw_rate, rb.eps_x, rb.eps_z, config.ec_inefficiency)
