from pathlib import Path

import numpy as np
import pytest
import yaml
from hypothesis import given, strategies as st

from powerref.analysis import (CycleSet, aep, bin_probabilities, capacity_factor,
                               characteristic, damage_equivalent_load, derating_dynamics_check,
                               derating_matrix, find_gfact, gross_capacity_factor, is_hurwitz,
                               linearize, rainflow, reversals)
from powerref.wind import SiteDistribution, default_bins

FIXTURE = yaml.safe_load((Path(__file__).parent / "fixtures/rainflow_fixture.yaml").read_text())

finite = st.floats(-1e3, 1e3, allow_nan=False)


class TestRainflow:
    def test_hand_counted_fixture(self):
        got = sorted(rainflow(FIXTURE["series"]).as_tuples())
        want = sorted(tuple(float(v) for v in c) for c in FIXTURE["cycles"])
        assert got == pytest.approx(want)

    def test_sinusoid(self):
        n = 7
        t = np.linspace(0, 2 * np.pi * n, 4000 * n)
        cs = rainflow(3.0 * np.sin(t))
        full = cs.counts == 1.0
        assert np.allclose(cs.ranges[full], 6.0, atol=1e-4)
        assert cs.counts.sum() == pytest.approx(n, abs=1.0)
        assert np.sum(full) >= n - 1

    def test_ramp(self):
        cs = rainflow(np.linspace(0, 5, 50))
        assert cs.as_tuples() == [(5.0, 2.5, 0.5)]

    def test_plateaus(self):
        assert list(reversals([0, 1, 1, 1, 0])) == [0, 1, 0]

    def test_invalid(self):
        with pytest.raises(ValueError):
            rainflow([1.0])
        with pytest.raises(ValueError):
            rainflow([0.0, float("nan"), 1.0])

    @given(st.lists(finite, min_size=2, max_size=200))
    def test_range_conservation(self, xs):
        # every reversal-to-reversal excursion is counted exactly once
        cs = rainflow(xs)
        total = np.sum(np.abs(np.diff(reversals(xs))))
        assert np.sum(2 * cs.counts * cs.ranges) == pytest.approx(total, rel=1e-9, abs=1e-9)

    # integers keep the shift exact; with floats, rounding can flip near-ties
    @given(st.lists(st.integers(-1000, 1000), min_size=2, max_size=100),
           st.integers(-100, 100))
    def test_shift_invariant_ranges(self, xs, c):
        a = rainflow(xs)
        b = rainflow(np.asarray(xs) + c)
        assert np.allclose(np.sort(a.ranges), np.sort(b.ranges), atol=1e-6)


class TestDel:
    def test_single_cycle(self):
        cs = CycleSet(np.array([7.0]), np.array([0.0]), np.array([1.0]))
        assert damage_equivalent_load([cs], 4, [1.0], n_eq=1) == pytest.approx(7.0)

    def test_weights_symmetry(self):
        cs = rainflow(FIXTURE["series"])
        a = damage_equivalent_load([cs, cs], 4, [1.0, 0.0])
        b = damage_equivalent_load([cs, cs], 4, [0.5, 0.5])
        assert a == pytest.approx(b)

    def test_seed_average(self):
        c1 = CycleSet(np.array([2.0]), np.zeros(1), np.ones(1))
        c2 = CycleSet(np.array([4.0]), np.zeros(1), np.ones(1))
        d = damage_equivalent_load([[c1, c2]], 4, [1.0], n_eq=1)
        assert d == pytest.approx((0.5 * (16 + 256)) ** 0.25)

    @given(st.lists(finite, min_size=3, max_size=60), st.floats(0.1, 10),
           st.sampled_from([4.0, 10.0]))
    def test_homogeneous(self, xs, k, m):
        base = damage_equivalent_load([rainflow(xs)], m, [1.0])
        scaled = damage_equivalent_load([rainflow(k * np.asarray(xs))], m, [1.0])
        assert scaled == pytest.approx(k * base, rel=1e-6, abs=1e-12)

    @given(st.lists(st.floats(0.1, 100), min_size=1, max_size=20), st.floats(0.1, 50))
    def test_monotone_in_ranges(self, ranges, extra):
        r = np.array(ranges)
        a = CycleSet(r, np.zeros_like(r), np.ones_like(r))
        b = CycleSet(r + extra, np.zeros_like(r), np.ones_like(r))
        assert damage_equivalent_load([b], 4, [1.0]) > damage_equivalent_load([a], 4, [1.0])

    def test_bad(self):
        with pytest.raises(ValueError):
            damage_equivalent_load([CycleSet()], 0.0, [1.0])
        with pytest.raises(ValueError):
            damage_equivalent_load([CycleSet()], 4, [0.5])


class TestEnergy:
    def test_flat(self):
        w = np.full(11, 1 / 11)
        assert aep(np.full(11, 5000.0), w) == pytest.approx(5000.0)
        assert capacity_factor(5000.0) == 1.0

    def test_concentrated(self):
        w = np.zeros(11)
        w[3] = 1.0
        p = np.arange(11) * 100.0
        assert aep(p, w) == 300.0

    def test_missing_bin(self):
        with pytest.raises(ValueError):
            aep([1.0, np.nan], [0.5, 0.5])
        with pytest.raises(ValueError):
            aep([1.0], [0.5, 0.5])

    def test_bin_probabilities(self):
        d = SiteDistribution()
        bins = default_bins(d)
        p = bin_probabilities(d, bins)
        assert p.sum() == pytest.approx(d.cdf(25.0) - d.cdf(5.0))
        # gross capacity factor at constant rated output equals the operating time share
        assert gross_capacity_factor(np.full(11, 5000.0), d, bins) == pytest.approx(p.sum())


class TestCharacteristic:
    def test_values(self):
        assert characteristic([[10, 12, 14]]) == 12
        assert characteristic({5: [12, 12], 7: [13, 13]}) == 13

    @given(st.lists(st.lists(st.floats(0, 1e4), min_size=1, max_size=6), min_size=1,
                    max_size=8))
    def test_below_overall_max(self, groups):
        assert characteristic(groups) <= max(max(g) for g in groups) + 1e-9

    def test_empty(self):
        with pytest.raises(ValueError):
            characteristic([])


@pytest.fixture(scope="module")
def model():
    return linearize()


class TestStability:
    def test_gfact_above_one(self, model):
        g = find_gfact(model)
        assert g > 1.0
        assert is_hurwitz(model.matrix(0.98 * g))
        assert not is_hurwitz(model.matrix(1.02 * g))

    def test_derating_bound(self, model):
        g = find_gfact(model)
        k = 0.5 / 1174.0
        assert k * 1174.0 + 1 == pytest.approx(1.5)
        assert 1.5 < g
        assert derating_dynamics_check(model, k)
        assert not derating_dynamics_check(model, (g - 1) / 1174.0 * 1.1)

    def test_zero_k_is_safe_matrix(self, model):
        assert np.array_equal(derating_matrix(model, 0.0), model.matrix(1.0))

    def test_faster_actuator_raises_gfact(self, model):
        fast = linearize(actuator_cutoff=2 * model.actuator_cutoff)
        assert find_gfact(fast) > find_gfact(model)

    def test_equilibrium(self, model):
        # the operating point is an equilibrium of the nonlinear field
        f = model.rhs(model.x0)
        assert np.allclose(f, 0.0, atol=1e-6)

    def test_below_rated_rejected(self):
        with pytest.raises(ValueError):
            linearize(wind=8.0)
