"""Closed-form QBER and key-rate engine, without detector dead time.

All per-use rates are per pulse pair and conditioned on both parties having
picked the basis in question; the basis-choice factor is left out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UndefinedQBERError
from .model import PhaseModel, ProtocolConfig

_REL_TOL = 1e-12


def survival_prob(efficiency: float, loss_db_per_km: float, distance_km: float) -> float:
    """Probability that a photon reaches Charlie and clicks: eta * 10^(-alpha d / 10)."""
    if not 0 < efficiency <= 1:
        raise DomainError(f"efficiency must lie in (0, 1], got {efficiency}")
    if loss_db_per_km < 0 or distance_km < 0:
        raise DomainError("loss coefficient and distance must be non-negative")
    return efficiency * 10.0 ** (-loss_db_per_km * distance_km / 10.0)


def binary_entropy(x: float) -> float:
    if not 0 <= x <= 1:
        raise DomainError(f"binary entropy needs x in [0, 1], got {x}")
    if x == 0 or x == 1:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def dephasing_pair_sum(dimension: int, sigma: float, model: PhaseModel) -> float:
    """Sum over bin pairs i < j of <cos> of the two-party relative phase.

    Pairs at separation k = |i - j| occur N - k times; their combined phase
    has variance 2 w_k sigma^2 with w_k = 1 (space), k (white), k^2 (drift).
    """
    model = PhaseModel(model)
    k = np.arange(1, dimension)
    if model is PhaseModel.SPACE_HOMOGENEOUS:
        weight = np.ones_like(k)
    elif model is PhaseModel.TIME_WHITE:
        weight = k
    else:
        weight = k**2
    return float(np.sum((dimension - k) * np.exp(-weight * sigma**2)))


def dephasing_factor(dimension: int, sigma: float, model: PhaseModel) -> float:
    """f_N for the given phase-noise model."""
    if dimension < 2:
        raise DomainError(f"dimension must be >= 2, got {dimension}")
    if sigma < 0:
        raise DomainError(f"sigma must be >= 0, got {sigma}")
    model = PhaseModel(model)
    n = dimension
    if sigma == 0:
        return n * (n - 1) / 2
    s2 = sigma**2
    if model is PhaseModel.SPACE_HOMOGENEOUS:
        return n * (n - 1) * math.exp(-s2) / 2
    if model is PhaseModel.TIME_WHITE and s2 >= 1e-3:
        # the closed form cancels to second order in sigma^2; below the cutoff use the pair sum
        num = -n * math.expm1(-s2) + math.expm1(-n * s2)
        return num / (2 * math.sinh(s2 / 2)) ** 2
    return dephasing_pair_sum(n, sigma, model)


@dataclass(frozen=True)
class XOutcomeProbs:
    """Two-photon X-basis outcome probabilities (no loss, no dark counts)."""

    f_n: float
    p_good: float
    p_bad: float
    p_double: float


def x_outcome_probs(dimension: int, beta_sq: float, f_n: float) -> XOutcomeProbs:
    n = dimension
    f_max = n * (n - 1) / 2
    if not -_REL_TOL <= f_n <= f_max * (1 + _REL_TOL):
        raise DomainError(f"f_N = {f_n} outside [0, {f_max}]")
    if not 0 <= beta_sq <= 1:
        raise DomainError(f"beta_sq must lie in [0, 1], got {beta_sq}")
    base = n * (n - 1)
    return XOutcomeProbs(
        f_n=f_n,
        p_good=(base + 2 * beta_sq * f_n) / (2 * n**2),
        p_bad=(base - 2 * beta_sq * f_n) / (2 * n**2),
        # unnormalized by convention; the bunching probability proper is half this
        p_double=(1 + beta_sq) / n,
    )


@dataclass(frozen=True)
class ZEventProbs:
    p_rand0: float
    p_rand1: float
    p_correct2: float
    p_wrong2: float


def _check_probs(**probs: float) -> None:
    for name, p in probs.items():
        if not 0 <= p <= 1:
            raise DomainError(f"{name} must be a probability, got {p}")


def z_event_probs(dimension: int, p_s: float, p_dc: float) -> ZEventProbs:
    """Key-producing Z-basis events per pulse pair, split by photons detected."""
    _check_probs(p_s=p_s, p_dc=p_dc)
    frac = (dimension - 1) / dimension
    quiet = (1 - p_dc) ** (2 * dimension - 2)
    return ZEventProbs(
        p_rand0=4 * frac * (1 - p_s) ** 2 * p_dc**2 * quiet,
        p_rand1=4 * frac * p_s * (1 - p_s) * p_dc * quiet,
        p_correct2=frac * p_s**2 * quiet,
        p_wrong2=2 * frac * p_s**2 * p_dc * quiet,
    )


def qber_z(probs: ZEventProbs) -> tuple[float, float]:
    """Return ``(eps_z, R_p_z)``; random-bit events count as half an error."""
    randoms = probs.p_rand0 + probs.p_rand1
    r_p = randoms + probs.p_correct2 + probs.p_wrong2
    if r_p <= 0:
        raise UndefinedQBERError("no key-producing Z events (R_p = 0)")
    return (0.5 * randoms + probs.p_wrong2) / r_p, r_p


def x_event_probs(dimension: int, p_s: float, p_dc: float, xo: XOutcomeProbs) -> tuple[float, float]:
    """Correct- and wrong-parity X coincidence probabilities per pulse pair."""
    _check_probs(p_s=p_s, p_dc=p_dc)
    n = dimension
    quiet = (1 - p_dc) ** (2 * n - 2)
    p0 = (1 - p_s) ** 2 * n * (n - 1) * p_dc**2 * quiet
    p1 = 2 * p_s * (1 - p_s) * (n - 1) * p_dc * quiet
    dark_bunch = (n - 1) * p_dc * xo.p_double
    two = p_s**2 * quiet
    correct = p0 + p1 + two * (xo.p_good + dark_bunch)
    wrong = p0 + p1 + two * (xo.p_bad + dark_bunch)
    return correct, wrong


def qber_x(p_correct: float, p_wrong: float) -> tuple[float, float]:
    """Return ``(eps_x, R_p_x)`` with all X subspaces merged."""
    if p_correct < 0 or p_wrong < 0:
        raise DomainError("X-basis totals must be non-negative")
    total = p_correct + p_wrong
    if total <= 0:
        raise UndefinedQBERError("no X coincidences (R_p_x = 0)")
    return p_wrong / total, total


def secret_fraction(eps_x: float, eps_z: float, ec_inefficiency: float = 1.0) -> float:
    """1 - H(eps_x) - f H(eps_z), unclamped."""
    return 1 - binary_entropy(eps_x) - ec_inefficiency * binary_entropy(eps_z)


def secret_rate(raw_rate: float, eps_x: float, eps_z: float, ec_inefficiency: float = 1.0) -> float:
    if raw_rate < 0:
        raise DomainError(f"raw rate must be >= 0, got {raw_rate}")
    if ec_inefficiency < 1:
        raise DomainError(f"error-correction inefficiency must be >= 1, got {ec_inefficiency}")
    return max(0.0, raw_rate * secret_fraction(eps_x, eps_z, ec_inefficiency))


@dataclass(frozen=True)
class RateBreakdown:
    """QBERs and per-use rates for one operating point.

    ``r`` is the secret key per pulse pair with the Z sifted rate as the raw
    rate.  Empirical breakdowns fill the ``*_se`` fields; analytic ones leave
    them as ``None``.
    """

    eps_x: float
    eps_z: float
    r_p_z: float
    r_p_x: float
    r: float
    p_s: float
    z_events: ZEventProbs | None = None
    x_outcomes: XOutcomeProbs | None = None
    eps_x_se: float | None = None
    eps_z_se: float | None = None
    r_p_z_se: float | None = None
    r_p_x_se: float | None = None

    @property
    def r_p(self) -> float:
        return self.r_p_z

    @property
    def secret_fraction(self) -> float:
        return self.r / self.r_p_z if self.r_p_z > 0 else 0.0


def config_survival_prob(config: ProtocolConfig) -> float:
    ch = config.channel
    return survival_prob(ch.efficiency, ch.loss_db_per_km, ch.distance_km)


def rate_breakdown(config: ProtocolConfig, p_s: float | None = None) -> RateBreakdown:
    """Analytic QBERs and per-use rates for ``config``.

    ``p_s`` overrides the channel-derived survival probability.
    """
    n = config.dimension
    if p_s is None:
        p_s = config_survival_prob(config)
    noise = config.noise
    p_dc = config.detector.dark_count
    f_n = dephasing_factor(n, noise.sigma, noise.phase_model)
    xo = x_outcome_probs(n, noise.beta_sq, f_n)
    zp = z_event_probs(n, p_s, p_dc)
    eps_z, r_p_z = qber_z(zp)
    eps_x, r_p_x = qber_x(*x_event_probs(n, p_s, p_dc, xo))
    r = secret_rate(r_p_z, eps_x, eps_z, config.ec_inefficiency)
    return RateBreakdown(
        eps_x=eps_x, eps_z=eps_z, r_p_z=r_p_z, r_p_x=r_p_x, r=r, p_s=p_s,
        z_events=zp, x_outcomes=xo,
    )
