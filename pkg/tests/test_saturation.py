import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hdmdi.analytics import rate_breakdown
from hdmdi.errors import DomainError
from hdmdi.model import (
    ChannelParams,
    DetectorParams,
    Encoding,
    ProtocolConfig,
    TimingParams,
)
from hdmdi.saturation import (
    alive_prob,
    closed_form_max,
    golden_section_max,
    hit_prob,
    optimal_dimension,
    optimize_pulse_spacing,
    raw_bits_per_deadtime,
    rate_with_deadtime,
    uses_per_deadtime,
)

TAU = 20e-9


class TestHitAndAlive:
    def test_hit_space(self):
        assert hit_prob(4, 0.2) == pytest.approx((0.32 + 0.04 * 7 / 4) / 8, rel=1e-15)
        assert hit_prob(4, 0.2) == pytest.approx(0.04875, rel=1e-12)

    @pytest.mark.parametrize("n", [2, 4, 16])
    def test_hit_small_ps(self, n):
        p_s = 1e-6
        assert hit_prob(n, p_s) == pytest.approx(p_s / n, rel=1e-5)
        assert hit_prob(n, 0.0) == 0.0

    def test_hit_time_shares_two_detectors(self):
        assert hit_prob(4, 0.2, Encoding.TIME) == pytest.approx(4 * hit_prob(4, 0.2))

    def test_alive(self):
        assert alive_prob(0.3, 0) == 1.0
        assert alive_prob(0.04875, 100) == pytest.approx(0.17021, abs=1e-5)
        assert alive_prob(0.2, 5.0) == pytest.approx(0.5)

    def test_uses(self):
        assert uses_per_deadtime(4, TAU, 1e-9) == pytest.approx(20)
        assert uses_per_deadtime(4, TAU, 1e-9, Encoding.TIME) == pytest.approx(5)
        with pytest.raises(DomainError):
            uses_per_deadtime(4, TAU, 0.0)


class TestRawBits:
    def test_zero_deadtime(self):
        assert raw_bits_per_deadtime(4, 0.2, 0.0, 1e-10) == 0.0

    def test_at_analytic_optimum(self):
        n_opt = 1 / hit_prob(4, 0.2)
        assert n_opt == pytest.approx(20.513, abs=1e-3)
        bits = raw_bits_per_deadtime(4, 0.2, TAU, TAU / n_opt)
        assert bits == pytest.approx(n_opt * 0.03 * 0.25, rel=1e-12)
        assert bits == pytest.approx(0.15385, abs=1e-4)

    def test_time_halved_at_equal_alive(self):
        n, p_s, sep = 4, 0.2, 1e-9
        for enc, factor in ((Encoding.SPACE, 1.0), (Encoding.TIME, 0.5)):
            uses = uses_per_deadtime(n, TAU, sep, enc)
            alive = alive_prob(hit_prob(n, p_s, enc), uses)
            full = uses * 0.75 * p_s**2 * alive**2
            assert raw_bits_per_deadtime(n, p_s, TAU, sep, enc) == pytest.approx(factor * full, rel=1e-12)


class TestClosedForm:
    def test_values(self):
        assert closed_form_max(4, 0.2, TAU) == pytest.approx(7.5e6, rel=1e-12)
        assert closed_form_max(4, 0.2, TAU, Encoding.TIME) == pytest.approx(9.375e5, rel=1e-12)

    def test_space_time_ratio(self):
        ratio = closed_form_max(2, 0.1, TAU) / closed_form_max(2, 0.1, TAU, Encoding.TIME)
        assert ratio == pytest.approx(4.0, rel=1e-12)

    def test_needs_deadtime(self):
        with pytest.raises(DomainError):
            closed_form_max(4, 0.2, 0.0)


class TestOptimize:
    def test_golden_section(self):
        x, fx = golden_section_max(lambda t: -(t - 1.3) ** 2 + 2, -5, 5, rel_tol=1e-12)
        assert x == pytest.approx(1.3, abs=1e-6)
        assert fx == pytest.approx(2.0, abs=1e-12)

    def test_unconstrained_optimum(self):
        opt = optimize_pulse_spacing(4, 0.2, TAU, 1e-15)
        assert not opt.constrained
        assert opt.raw_bits == pytest.approx(0.15385, abs=1e-4)
        assert TAU / opt.pulse_sep == pytest.approx(1 / hit_prob(4, 0.2), rel=1e-4)

    def test_constrained(self):
        # tau_d / T~_p = 10 < 1 / P_hit = 20.5
        opt = optimize_pulse_spacing(4, 0.2, TAU, TAU / 10)
        assert opt.constrained
        assert opt.pulse_sep == TAU / 10
        assert opt.raw_bits == pytest.approx(raw_bits_per_deadtime(4, 0.2, TAU, TAU / 10))

    @pytest.mark.parametrize("enc", list(Encoding))
    @pytest.mark.parametrize("n", [2, 4, 8, 16])
    def test_closed_form_converges(self, n, enc):
        opt = optimize_pulse_spacing(n, 0.01, TAU, 1e-15, enc)
        assert closed_form_max(n, 0.01, TAU, enc) / (opt.raw_bits / TAU) == pytest.approx(1, abs=0.005)

    @given(
        n=st.integers(2, 16),
        p_s=st.floats(1e-4, 1.0),
        ratio=st.floats(1.0, 1e3),
        probe=st.floats(-3, 3),
        enc=st.sampled_from(list(Encoding)),
    )
    def test_optimum_dominates(self, n, p_s, ratio, probe, enc):
        min_sep = TAU / ratio
        opt = optimize_pulse_spacing(n, p_s, TAU, min_sep, enc)
        assert opt.pulse_sep >= min_sep
        sep = max(min_sep, opt.pulse_sep * 10**probe)
        assert raw_bits_per_deadtime(n, p_s, TAU, sep, enc) <= opt.raw_bits * (1 + 1e-9)


class TestDimension:
    def test_optimal_dimension(self):
        assert optimal_dimension(0.2, TAU, TAU / 100) == pytest.approx(22)
        assert optimal_dimension(0.2, TAU, TAU / 20) == pytest.approx(6)
        assert optimal_dimension(0.2, 0.0, 1e-10) == 2

    def test_interior_maximum(self):
        base = ProtocolConfig(detector=DetectorParams(dead_time=TAU),
                              timing=TimingParams(pulse_sep=TAU / 100, min_pulse_sep=TAU / 100))
        per_det = [rate_with_deadtime(base.replace(dimension=n), p_s=0.2).raw_rate_per_detector
                   for n in range(2, 60)]
        best = per_det.index(max(per_det)) + 2
        assert 2 < best < 59
        assert abs(best - 22) <= 2


def _config(pdc=0.0, tau=TAU, min_sep=TAU / 100, sep=None, n=4, enc=Encoding.SPACE, d=0.0):
    return ProtocolConfig.for_encoding(
        enc,
        dimension=n,
        channel=ChannelParams(distance_km=d),
        detector=DetectorParams(dark_count=pdc, dead_time=tau),
        timing=TimingParams(pulse_sep=sep or min_sep, min_pulse_sep=min_sep),
    )


class TestRateWithDeadtime:
    def test_no_deadtime_is_r_p_per_period(self):
        for enc in Encoding:
            cfg = _config(tau=0.0, min_sep=1e-10, enc=enc)
            sat = rate_with_deadtime(cfg)
            period = 1e-10 if enc is Encoding.SPACE else 4e-10
            assert not sat.saturated
            assert sat.raw_rate == pytest.approx(rate_breakdown(cfg).r_p_z / period, rel=1e-12)
            faster = rate_with_deadtime(_config(tau=0.0, min_sep=5e-11, enc=enc))
            assert faster.raw_rate == pytest.approx(2 * sat.raw_rate, rel=1e-12)

    def test_per_detector(self):
        sat = rate_with_deadtime(_config(n=8))
        assert sat.n_detectors == 16
        assert sat.raw_rate_per_detector == pytest.approx(sat.raw_rate / 16)
        assert rate_with_deadtime(_config(n=8, enc=Encoding.TIME)).n_detectors == 2

    def test_matches_optimizer_without_dark_counts(self):
        cfg = _config()
        sat = rate_with_deadtime(cfg, p_s=0.2)
        opt = optimize_pulse_spacing(4, 0.2, TAU, TAU / 100)
        assert sat.raw_rate == pytest.approx(opt.raw_bits / TAU, rel=1e-12)

    def test_saturated_scaling_is_linear(self):
        cfg = _config(n=2, min_sep=1e-15)
        hi = rate_with_deadtime(cfg, p_s=0.01).raw_rate
        lo = rate_with_deadtime(cfg, p_s=0.001).raw_rate
        assert hi / lo == pytest.approx(10, rel=0.01)

    def test_unsaturated_scaling_is_quadratic(self):
        cfg = _config(n=2, min_sep=TAU / 100)
        hi = rate_with_deadtime(cfg, p_s=1e-4).raw_rate
        lo = rate_with_deadtime(cfg, p_s=1e-5).raw_rate
        assert math.log10(hi / lo) == pytest.approx(2, rel=0.01)
