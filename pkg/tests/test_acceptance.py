"""Acceptance gate: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the criterion lines are
printed even without ``-s``.
"""

import math

import numpy as np
import pytest

from hdmdi.analytics import (
    dephasing_factor,
    qber_z,
    rate_breakdown,
    x_outcome_probs,
    z_event_probs,
)
from hdmdi.model import (
    BasisKind,
    ChannelParams,
    DetectorParams,
    Encoding,
    NoiseParams,
    PhaseModel,
    ProtocolConfig,
    TimingParams,
    build_basis,
)
from hdmdi.saturation import (
    closed_form_max,
    hit_prob,
    optimize_pulse_spacing,
    rate_with_deadtime,
    raw_bits_per_deadtime,
)
from hdmdi.simulator import binomial_agreement, run_session, simulate_deadtime_timeline
from hdmdi.twophoton import PhotonState, network_output, sample_categories
from oracles import z_qber_full_dark_accounting

TAU = 20e-9
SEED = 2024


@pytest.fixture
def report(capsys):
    def _report(criterion, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {criterion:>2}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        return ok
    return _report


def _ideal_x_config(n, sigma, model, beta_sq=1.0):
    return ProtocolConfig(
        dimension=n,
        noise=NoiseParams(sigma=sigma, beta_sq=beta_sq, phase_model=model),
        detector=DetectorParams(dark_count=0.0),
    )


def test_c01_sigma_calibration(report):
    space = rate_breakdown(_ideal_x_config(2, 0.325, PhaseModel.SPACE_HOMOGENEOUS)).eps_x
    time = rate_breakdown(_ideal_x_config(2, 0.175, PhaseModel.TIME_WHITE)).eps_x
    ok = abs(space - 0.050) <= 0.001 and abs(time - 0.015) <= 0.001
    assert report(1, "sigma calibration", ok, f"eps_x space={space:.5f} (0.050), time={time:.5f} (0.015)")


def test_c02_sifting_advantage(report):
    base = qber_z(z_event_probs(2, 0.1, 0.0))[1]
    worst = max(abs(qber_z(z_event_probs(n, 0.1, 0.0))[1] / base - 2 * (n - 1) / n) for n in range(2, 17))
    ok = worst <= 1e-12
    assert report(2, "sifting advantage 2(N-1)/N", ok, f"max |ratio - 2(N-1)/N| = {worst:.2e} over N=2..16")


def test_c03_distinguishability_floor(report):
    analytic_err, details, ok = 0.0, [], True
    for n in (2, 3, 4, 8):
        cfg = ProtocolConfig(dimension=n, noise=NoiseParams(sigma=0.0, beta_sq=0.85),
                             detector=DetectorParams(dark_count=0.0))
        analytic_err = max(analytic_err, abs(rate_breakdown(cfg).eps_x - 0.075))
        stats = run_session(cfg, 1_000_000, rng_seed=SEED + n)
        agree = binomial_agreement(stats.wrong_x, stats.sifted_x, 0.075)
        ok &= agree.ok
        details.append(f"N={n}: {stats.eps_x_hat:.4f} (z={agree.z:+.2f})")
    ok &= analytic_err <= 1e-12
    assert report(3, "distinguishability floor 0.075", ok,
                  f"analytic max err {analytic_err:.1e}; MC " + ", ".join(details))


def test_c04_saturation_closed_forms(report):
    limits = {0.01: 0.005, 0.2: 0.05}
    worst = {p: 0.0 for p in limits}
    for enc in Encoding:
        for n in (2, 4, 8, 16):
            for p_s in limits:
                numeric = optimize_pulse_spacing(n, p_s, TAU, 1e-18, enc).raw_bits / TAU
                dev = abs(closed_form_max(n, p_s, TAU, enc) / numeric - 1)
                worst[p_s] = max(worst[p_s], dev)
    # the P_s = 0.2, N = 2 deviation is P_s / (2N) = 0.05, exactly the limit
    ok = all(worst[p] <= limits[p] + 1e-12 for p in limits)
    assert report(4, "saturation closed forms", ok,
                  f"max deviation {worst[0.01]:.4%} at P_s=0.01 (<=0.5%), {worst[0.2]:.4%} at P_s=0.2 (<=5%)")


def test_c05_optimal_dimension(report):
    found = {}
    for ratio, target in ((100, 22), (20, 6)):
        cfg = ProtocolConfig(detector=DetectorParams(dead_time=TAU),
                             timing=TimingParams(pulse_sep=TAU / ratio, min_pulse_sep=TAU / ratio))
        dims = list(range(2, 61))
        per_det = [rate_with_deadtime(cfg.replace(dimension=n), p_s=0.2).raw_rate_per_detector for n in dims]
        found[target] = dims[int(np.argmax(per_det))]
    ok = all(abs(found[t] - t) <= 2 for t in found)
    assert report(5, "optimal dimension", ok, f"argmax R_det = {found[22]} (22 +/- 2), {found[6]} (6 +/- 2)")


def test_c06_oracle_normalization(report):
    rng = np.random.default_rng(SEED)
    worst_norm = worst_forbidden = 0.0
    for n in range(2, 9):
        for _ in range(100):
            a = rng.normal(size=n) + 1j * rng.normal(size=n)
            b = rng.normal(size=n) + 1j * rng.normal(size=n)
            dist = network_output(PhotonState(a / np.linalg.norm(a)), PhotonState(b / np.linalg.norm(b)),
                                  indistinguishable=bool(rng.random() < 0.5))
            worst_norm = max(worst_norm, abs(dist.total - 1))
        basis = build_basis(n, BasisKind.X)
        for ka in range(n):
            for kb in range(n):
                dist = network_output(PhotonState(basis[ka]), PhotonState(basis[kb]))
                worst_forbidden = max(worst_forbidden, dist.wrong)
    ok = worst_norm <= 1e-9 and worst_forbidden <= 1e-12
    assert report(6, "oracle normalization and parity", ok,
                  f"max |mass - 1| = {worst_norm:.1e}, max forbidden-parity mass = {worst_forbidden:.1e}")


@pytest.mark.slow
def test_c07_oracle_vs_analytics(report):
    models = {0.175: PhaseModel.TIME_WHITE, 0.325: PhaseModel.SPACE_HOMOGENEOUS}
    worst, failures = 0.0, []
    for n in (2, 4, 8):
        plus = build_basis(n, BasisKind.X)[0]
        for sigma, model in models.items():
            for beta_sq in (0.85, 1.0):
                noise = NoiseParams(sigma=sigma, beta_sq=beta_sq, phase_model=model)
                dist = sample_categories(plus, plus, noise, 1_000_000, rng_seed=SEED)
                xo = x_outcome_probs(n, beta_sq, dephasing_factor(n, sigma, model))
                for name, got, want in (("good", dist.correct, xo.p_good), ("bad", dist.wrong, xo.p_bad)):
                    z = (got - want) / dist.std_errors["correct" if name == "good" else "wrong"]
                    worst = max(worst, abs(z))
                    if abs(z) > 3:
                        failures.append(f"N={n} sigma={sigma} beta^2={beta_sq} P_{name} z={z:+.2f}")
    ok = not failures
    assert report(7, "oracle vs P_good/P_bad", ok,
                  f"max |z| = {worst:.2f} over 24 comparisons" + ("; " + "; ".join(failures) if failures else ""))


@pytest.mark.slow
def test_c08_monte_carlo_vs_analytics(report):
    # 1e6 rounds at 100 km give well under one sifted event, so that distance runs 1e10 rounds
    budgets = {0: 1_000_000, 100: 10_000_000_000}
    failures, worst, checks = [], 0.0, 0
    for enc in Encoding:
        for n in (2, 4, 8):
            for d, rounds in budgets.items():
                cfg = ProtocolConfig.for_encoding(enc, dimension=n, channel=ChannelParams(distance_km=d))
                rb = rate_breakdown(cfg)
                stats = run_session(cfg, rounds, rng_seed=SEED, chunk_rounds=1 << 30)
                for name, k, trials, p0 in (
                    ("eps_x", stats.wrong_x, stats.sifted_x, rb.eps_x),
                    ("eps_z", stats.wrong_z, stats.sifted_z, rb.eps_z),
                    ("sifted_z", stats.sifted_z, stats.rounds_zz, rb.r_p_z),
                ):
                    agree = binomial_agreement(k, trials, p0)
                    checks += 1
                    worst = max(worst, abs(agree.z))
                    if not agree.ok:
                        line = f"{enc.value} N={n} d={d} {name}: {k}/{trials} vs {p0:.3g} (z={agree.z:+.2f})"
                        if name == "eps_z":
                            full = z_qber_full_dark_accounting(n, rb.p_s, cfg.detector.dark_count,
                                                               cfg.noise.beta_sq)[0]
                            line += f", full dark accounting {full:.3g} (z={binomial_agreement(k, trials, full).z:+.2f})"
                        failures.append(line)
    ok = not failures
    assert report(8, "Monte Carlo vs closed forms", ok,
                  f"{checks - len(failures)}/{checks} within 3 SE, max |z| = {worst:.2f}"
                  + ("; " + "; ".join(failures) if failures else ""))


def test_c09_three_regime_shape(report):
    alpha = 0.2
    worst_sat = worst_unsat = 0.0
    monotone = finite_cutoff = True
    for enc in Encoding:
        for n in (2, 3, 4, 8):
            cfg = ProtocolConfig.for_encoding(enc, dimension=n)

            def at(d, cfg=cfg):
                c = cfg.replace(channel=ChannelParams(distance_km=d))
                rb = rate_breakdown(c)
                raw = rate_with_deadtime(c, p_s=rb.p_s).raw_rate
                return raw, raw * max(0.0, 1 - _h(rb.eps_x) - _h(rb.eps_z))

            for (lo, hi), target, kind in (((0, 10), -alpha / 10, "sat"), ((100, 150), -2 * alpha / 10, "unsat")):
                ds = np.linspace(lo, hi, 11)
                slope = np.polyfit(ds, np.log10([at(d)[0] for d in ds]), 1)[0]
                dev = abs(slope / target - 1)
                if kind == "sat":
                    worst_sat = max(worst_sat, dev)
                else:
                    worst_unsat = max(worst_unsat, dev)
            r = [at(d)[1] for d in np.arange(0, 400, 2.0)]
            monotone &= all(b <= a for a, b in zip(r, r[1:]))
            finite_cutoff &= r[0] > 0 and r[-1] == 0
    ok = worst_sat <= 0.1 and worst_unsat <= 0.1 and monotone and finite_cutoff
    assert report(9, "three-regime shape", ok,
                  f"slope deviation saturated {worst_sat:.1%}, unsaturated {worst_unsat:.1%} (<=10%); "
                  f"r(d) non-increasing={monotone}, reaches 0={finite_cutoff}")


def _h(x):
    return 0.0 if x in (0.0, 1.0) else -x * math.log2(x) - (1 - x) * math.log2(1 - x)


@pytest.mark.slow
def test_c10_deadtime_timeline(report):
    # the criterion is the space-encoding rate model; the time variant is reported alongside
    n, p_s = 4, 0.2
    results, ok = [], True
    for enc in Encoding:
        uses = 1 / hit_prob(n, p_s, enc)
        sep = TAU / uses if enc is Encoding.SPACE else TAU / (uses * n)
        cfg = ProtocolConfig(dimension=n, encoding=enc, noise=NoiseParams(sigma=0.0, beta_sq=0.85),
                             detector=DetectorParams(dark_count=0.0, dead_time=TAU),
                             timing=TimingParams(pulse_sep=sep, min_pulse_sep=sep))
        pulses = int(5e4 * uses) * (n if enc is Encoding.TIME else 1)
        stats = simulate_deadtime_timeline(cfg, pulses, rng_seed=SEED, p_s=p_s)
        predicted = raw_bits_per_deadtime(n, p_s, TAU, sep, enc)
        dev = abs(stats.raw_per_deadtime / predicted - 1)
        if enc is Encoding.SPACE:
            ok = dev <= 0.1 and stats.deadtime_windows >= 1e4
        results.append(f"{enc.value}{'' if enc is Encoding.SPACE else ' (informational)'}: "
                       f"{stats.raw_per_deadtime:.4f} vs {predicted:.4f} "
                       f"({dev:.1%}, {stats.deadtime_windows:.0f} windows)")
    assert report(10, "dead-time timeline", ok, "; ".join(results))
