import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from powerref.harness import preset, shipped_tables
from powerref.prc import (CollectiveLoadFilter, DeratingAutomaton, GustConfig, GustMeasure,
                          Prc0Config, SlowReference, TransientConfig, constant_table,
                          transient_estimates, validate_prc)
from powerref.signals import ConfigError, LowPass2, biquad_step

RPM = 2 * math.pi / 60


def _brute_gust(u, dt, cfg):
    """Weighted-difference maximum evaluated directly on the history."""
    n = len(u) - 1
    best = 0.0
    for r in range(1, cfg.n_delays + 1):
        k = int(round(r * cfg.delay / dt))
        w = cfg.w0 + (1 - cfg.w0) * r / cfg.n_delays
        past = u[max(n - k, 0)]
        best = max(best, w * (u[n] - past))
    return best


class TestSlowReference:
    def test_pr1150_low_wind(self):
        blk = SlowReference(Prc0Config(shipped_tables()["PR-1.150"]), dt=0.1, u0=10.0)
        assert blk.step(10.0) == pytest.approx(1.15)

    def test_pr1100_constant(self):
        pre = preset("PR-1.100")
        assert not pre.prc0
        assert pre.rmax_peak == 1.10

    def test_pr1150_tapers(self):
        t = shipped_tables()["PR-1.150"]
        hi = [t(u) for u in np.arange(18.0, 25.01, 0.5)]
        assert max(hi) <= 1.10
        assert np.all(np.diff(hi) <= 1e-12)

    def test_range_enforced(self):
        with pytest.raises(ConfigError):
            Prc0Config(constant_table(1.3))


class TestGust:
    def test_constant_and_decreasing(self):
        g = GustMeasure(dt=0.1)
        for _ in range(300):
            v = g.push(12.0)
        assert v == 0.0
        g = GustMeasure(dt=0.1)
        for k in range(300):
            v = g.push(20.0 - 0.01 * k)
        assert v == 0.0

    def test_step_five_seconds_ago(self):
        dt = 0.1
        g = GustMeasure(dt=dt)
        u = [10.0] * 100 + [11.0] * 50
        for x in u:
            v = g.push(x)
        assert v == pytest.approx(2.125)
        assert v == pytest.approx(_brute_gust(u, dt, GustConfig()))

    @given(st.lists(st.floats(3, 30), min_size=1, max_size=400), st.floats(-5, 5))
    def test_properties(self, u, shift):
        dt = 0.1
        a, b = GustMeasure(dt=dt), GustMeasure(dt=dt)
        for x in u:
            va = a.push(x)
            vb = b.push(x + shift)
        assert va >= 0.0
        assert vb == pytest.approx(va, abs=1e-9)
        assert va == pytest.approx(_brute_gust(u, dt, GustConfig()), abs=1e-9)

    def test_weights(self):
        w = GustConfig().weights()
        assert w[0] == 2.5 and w[-1] == pytest.approx(1.0)

    def test_delay_grid(self):
        with pytest.raises(ConfigError):
            GustMeasure(GustConfig(delay=0.25), dt=0.1)


class TestTransientEstimates:
    def test_zero_gust(self):
        assert transient_estimates(1174.0, 8000.0, 0.0, TransientConfig()) == (1174.0, 8000.0)

    def test_values(self):
        w, m = transient_estimates(1174.0, 8000.0, 2.0, TransientConfig())
        assert w == pytest.approx(1254.0)
        assert m == pytest.approx(9500.0)
        assert m > TransientConfig().m_lim


class TestAutomaton:
    def test_strict_guard(self):
        a = DeratingAutomaton()
        assert a.step(1325.0, 100.0, 1.15) == 1.15
        assert a.mode == "Safe"

    def test_absolute_decrement(self):
        a = DeratingAutomaton(TransientConfig(decrement="absolute"))
        a.force("Derating")
        r = a.step(1325.0, 100.0, 1.15)
        assert a.dR[0] == pytest.approx(-0.5 * 1325 / 1174, abs=1e-4)
        assert r == pytest.approx(0.5857, abs=1e-4)

    def test_absolute_min_picks_more_negative(self):
        a = DeratingAutomaton(TransientConfig(decrement="absolute"))
        a.force("Derating")
        r = a.step(1325.0, 9500.0, 1.15)
        assert a.dR[1] == pytest.approx(-0.285)
        assert r == pytest.approx(1.15 + min(a.dR))
        assert r == pytest.approx(1.15 - 0.5 * 1325 / 1174)

    def test_exceedance_decrement(self):
        a = DeratingAutomaton()
        r = a.step(1345.0, 9100.0, 1.15)
        assert a.mode == "Derating"
        assert a.dR == pytest.approx((-0.5 / 1174 * 20.0, -3e-5 * 100.0))
        assert r == pytest.approx(1.15 - 0.5 / 1174 * 20.0)

    def test_floor(self):
        a = DeratingAutomaton(TransientConfig(decrement="absolute", k_m=1e-3))
        assert a.step(1174.0, 20000.0, 1.0) == 0.3

    def test_dwell_then_return(self):
        a = DeratingAutomaton(dt=0.1)
        a.step(1400.0, 0.0, 1.1)
        modes = [a.mode]
        rs = []
        for _ in range(15):
            rs.append(a.step(1200.0, 0.0, 1.1))
            modes.append(a.mode)
        assert modes[:10] == ["Derating"] * 10
        assert modes[-1] == "Safe"
        assert rs[-1] == 1.1

    @given(st.lists(st.tuples(st.floats(800, 1500), st.floats(0, 12000)), min_size=1,
                    max_size=50), st.floats(0.5, 1.2))
    def test_never_above_rmax(self, seq, rmax):
        a = DeratingAutomaton(dt=0.1)
        for w, m in seq:
            r = a.step(w, m, rmax)
            assert 0.3 <= r <= rmax
            if a.mode == "Safe":
                assert r == rmax

    def test_validation(self):
        with pytest.raises(ConfigError):
            validate_prc(Prc0Config(constant_table(1.15)), TransientConfig(), 1174.0)
        validate_prc(Prc0Config(constant_table(1.15)), TransientConfig(), 1174.0,
                     allow_steady_derating=True)
        validate_prc(Prc0Config(constant_table(1.10)), TransientConfig(), 1174.0, gfact=20.0)
        with pytest.raises(ConfigError):
            validate_prc(Prc0Config(constant_table(1.10)), TransientConfig(), 1174.0, gfact=1.2)
        with pytest.raises(ConfigError):
            TransientConfig(omega_lim=1410.0)


class TestLoadFilter:
    def test_equal_loads(self):
        f = CollectiveLoadFilter(dt=0.01)
        for _ in range(3000):
            y = f.step(5000.0, 5000.0, 5000.0, 1174.0)
        assert y == pytest.approx(5000.0, abs=1e-6)

    def test_3p_attenuated(self):
        dt = 0.01
        w3p = 3 * 1174.0 * RPM / 97.0
        t = np.arange(0, 120, dt)
        x = 1000.0 * np.sin(w3p * t)
        f = CollectiveLoadFilter(dt=dt)
        f.reset(0.0, 1174.0)
        y = np.array([f.step(v, v, v, 1174.0) for v in x])
        # the 1 s low-pass adds its own attenuation at 3P; compare with it removed
        wn = 2 * np.pi
        lp = abs(wn**2 / ((1j * w3p) ** 2 + np.sqrt(2) * wn * 1j * w3p + wn**2))
        amp = 0.5 * np.ptp(y[-2000:]) / 1000.0
        assert amp / lp == pytest.approx(0.1, abs=0.02)

    def test_speed_smoothing_lag(self):
        # oracle: the 100 s second-order low-pass applied to the 3P frequency
        dt = 0.1
        w_old, w_new = 3 * 1000.0 * RPM / 97, 3 * 1174.0 * RPM / 97
        ref = LowPass2(100.0, dt, w_old).filter(np.full(1000, w_new))
        f = CollectiveLoadFilter(dt=dt)
        f.reset(0.0, 1000.0)
        y = [biquad_step(f.w3p_c, f.w3p_s, w_new) for _ in range(1000)]
        assert np.allclose(y, ref, atol=1e-12)
        # the centre lags: under a fifth of the way after 10 s, settled by 50 s
        assert (y[99] - w_old) < 0.2 * (w_new - w_old)
        assert (y[499] - w_old) > 0.95 * (w_new - w_old)
