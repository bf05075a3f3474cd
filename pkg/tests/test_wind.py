import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from powerref.signals import ConfigError
from powerref.wind import (SiteDistribution, WindSeries, default_bins, gen_constant,
                           gen_lull_gust, gen_turbulence, kaimal_psd, load_wind,
                           turbulence_sigma, weibull_weight)


def test_intensity_models():
    # NTM: I_ref (0.75 V + 5.6); ETM: c I_ref (0.072 (V_ave/c + 3)(V/c - 4) + 10), c = 2
    assert turbulence_sigma(18.0, "NTM") == pytest.approx(0.16 * (0.75 * 18 + 5.6))
    assert turbulence_sigma(18.0, "ETM") == pytest.approx(
        2 * 0.16 * (0.072 * (10 / 2 + 3) * (18 / 2 - 4) + 10))
    with pytest.raises(ValueError):
        turbulence_sigma(10.0, "EWM")


def test_deterministic_and_seed_isolated():
    a = gen_turbulence(18.0, "ETM", 7, 600.0, 0.01)
    b = gen_turbulence(18.0, "ETM", 7, 600.0, 0.01)
    c = gen_turbulence(18.0, "ETM", 8, 600.0, 0.01)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_etm_wider_than_ntm():
    n = gen_turbulence(18.0, "NTM", 3, 600.0, 0.01)
    e = gen_turbulence(18.0, "ETM", 3, 600.0, 0.01)
    assert e.samples.std() > n.samples.std()


@pytest.mark.parametrize("mean,model", [(10.0, "NTM"), (18.0, "NTM"), (18.0, "ETM"),
                                        (24.0, "ETM")])
def test_sigma_and_mean(mean, model):
    w = gen_turbulence(mean, model, 11, 600.0, 0.01)
    assert len(w) == 60000
    assert np.all(w.samples > 0)
    assert w.samples.std() == pytest.approx(turbulence_sigma(mean, model), rel=0.05)
    assert abs(w.samples.mean() - mean) <= 0.02 * mean
    half = w.samples.size // 2
    s1, s2 = w.samples[:half].std(), w.samples[half:].std()
    assert abs(s1 / s2 - 1) < 0.25


def test_mean_preserved_at_10():
    w = gen_turbulence(10.0, "NTM", 0, 600.0, 0.01)
    assert w.samples.mean() == pytest.approx(10.0, abs=0.2)


def test_spectrum_shape_follows_kaimal():
    # averaged periodogram against the target one-sided spectrum in a mid band
    dt, mean = 0.1, 12.0
    sigma = turbulence_sigma(mean, "NTM")
    psd = []
    for s in range(20):
        x = gen_turbulence(mean, "NTM", s, 600.0, dt).samples - mean
        f = np.fft.rfftfreq(x.size, dt)
        psd.append(2 * dt / x.size * np.abs(np.fft.rfft(x)) ** 2)
    psd = np.mean(psd, axis=0)
    band = (f > 0.02) & (f < 0.5)
    target = kaimal_psd(f[band], mean, sigma)
    ratio = psd[band] / target
    assert 0.7 < np.median(ratio) < 1.3


def test_bad_inputs():
    with pytest.raises(ValueError):
        gen_turbulence(10.0, "NTM", 0, 600.0, 0.0)
    with pytest.raises(ValueError):
        gen_turbulence(10.0, "NTM", 0, -1.0, 0.01)


class TestLullGust:
    def test_minimum(self):
        w = gen_lull_gust(18.0, 8.0, 20.0, 10.0, 0.01)
        assert w.samples.min() == pytest.approx(10.0, abs=0.1)

    def test_zero_depth_is_constant(self):
        w = gen_lull_gust(12.0, 0.0, 20.0, 10.0, 0.01)
        assert np.allclose(w.samples, 12.0)

    def test_drop_hold_rise_past_base(self):
        w = gen_lull_gust(18.0, 8.0, 20.0, 10.0, 0.01)
        u = w.samples
        i_min = int(np.argmin(u))
        assert u[0] == pytest.approx(18.0)
        assert np.all(np.diff(u[:i_min]) <= 1e-12)
        assert u[-1] > 18.0
        # C1: slope changes are small at dt resolution
        assert np.max(np.abs(np.diff(u, 2))) < 1e-3

    def test_invalid(self):
        with pytest.raises(ValueError):
            gen_lull_gust(5.0, 6.0, 10.0, 5.0, 0.01)


class TestSite:
    def test_pdf_normalised(self):
        d = SiteDistribution()
        total, _ = integrate.quad(d.pdf, 0, np.inf)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_weights(self):
        d = SiteDistribution()
        bins = default_bins(d)
        assert list(bins) == list(range(5, 26, 2))
        w = weibull_weight(d, bins)
        assert w.size == 11
        assert w.sum() == pytest.approx(1.0, abs=1e-9)
        assert w[list(bins).index(9)] > w[list(bins).index(23)]

    def test_mode(self):
        d = SiteDistribution()
        k, lam = 2.17, 10.3
        assert d.mode == pytest.approx(lam * ((k - 1) / k) ** (1 / k))
        # lambda ((k-1)/k)^(1/k) = 7.75 m/s for this site
        assert 7.5 <= d.mode <= 9.0

    def test_empty_bins(self):
        with pytest.raises(ValueError):
            weibull_weight(SiteDistribution(), [])

    def test_invalid_site(self):
        with pytest.raises(ConfigError):
            SiteDistribution(shape=-1)


def test_csv_round_trip(tmp_path):
    w = gen_turbulence(9.0, "NTM", 1, 10.0, 0.05)
    p = tmp_path / "w.csv"
    w.to_csv(p)
    back = WindSeries.from_csv(p)
    assert back.dt == pytest.approx(0.05)
    assert np.allclose(back.samples, w.samples, atol=1e-6)


def test_csv_header_required(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3,4\n")
    with pytest.raises(ValueError):
        WindSeries.from_csv(p)


def test_load_wind_specs():
    assert np.allclose(load_wind("const:12", 0.01, 5.0).samples, 12.0)
    assert load_wind("etm:18", 0.01, 5.0, seed=2).label == "ETM"
    assert load_wind("lullgust:12,4,10,5", 0.01, 5.0).samples.min() == pytest.approx(8.0)
    with pytest.raises(ValueError):
        load_wind("gusty:3", 0.01, 5.0)


@given(st.floats(0.5, 30), st.floats(1, 100))
def test_constant_series(speed, duration):
    w = gen_constant(speed, duration, 0.1)
    assert len(w) == int(round(duration / 0.1))
    assert np.all(w.samples == speed)
