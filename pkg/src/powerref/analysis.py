"""Post-processing of campaign output and linearised stability checks.

Rainflow counting follows the ASTM E1049 range-counting rules. The lifetime
damage-equivalent load scales the per-record damage of each wind bin to the
turbine lifetime with the site probabilities. The stability helpers
linearise the above-rated closed loop (rotor, pitch actuator, pitch PI) by
central differences and look at the eigenvalues of the state matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .pictrl import DEG, RPM, PitchPiConfig, gain_schedule
from .turbine import TurbineParams, aero_torque, default_surrogate, steady_state
from .wind import SiteDistribution

TOWER_WOHLER = 4.0
BLADE_WOHLER = 10.0
N_EQ = 1.0e7
LIFETIME_S = 20.0 * 365.25 * 24.0 * 3600.0


# --------------------------------------------------------------------------
# rainflow
# --------------------------------------------------------------------------

@dataclass
class CycleSet:
    ranges: np.ndarray = field(default_factory=lambda: np.zeros(0))
    means: np.ndarray = field(default_factory=lambda: np.zeros(0))
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return self.ranges.size

    def as_tuples(self) -> list[tuple[float, float, float]]:
        return [(float(r), float(m), float(c))
                for r, m, c in zip(self.ranges, self.means, self.counts)]

    def damage_sum(self, m: float) -> float:
        """sum(count * range**m)."""
        if m <= 0:
            raise ValueError("Woehler exponent must be positive")
        return float(np.sum(self.counts * self.ranges**m))


def reversals(series) -> np.ndarray:
    """Turning points of a series, plateaus collapsed, end points kept."""
    x = np.asarray(series, dtype=float)
    if x.size < 2:
        raise ValueError("rainflow needs at least two samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    # drop repeated values so the sign of the slope is defined everywhere
    keep = np.concatenate([[True], np.diff(x) != 0])
    x = x[keep]
    if x.size < 2:
        return x
    d = np.diff(x)
    turn = np.sign(d[1:]) != np.sign(d[:-1])
    idx = np.concatenate([[0], np.nonzero(turn)[0] + 1, [x.size - 1]])
    return x[idx]


def rainflow(series) -> CycleSet:
    pts = reversals(series)
    if pts.size < 2:
        return CycleSet()
    ranges, means, counts = [], [], []
    stack: list[float] = []
    for p in pts:
        stack.append(float(p))
        while len(stack) >= 3:
            x = abs(stack[-1] - stack[-2])
            y = abs(stack[-2] - stack[-3])
            if x < y:
                break
            a, b = stack[-3], stack[-2]
            # with three points left, Y still contains the series start
            if len(stack) == 3:
                ranges.append(y)
                means.append(0.5 * (a + b))
                counts.append(0.5)
                stack.pop(0)
            else:
                ranges.append(y)
                means.append(0.5 * (a + b))
                counts.append(1.0)
                last = stack.pop()
                stack.pop()
                stack.pop()
                stack.append(last)
    for a, b in zip(stack[:-1], stack[1:]):
        ranges.append(abs(b - a))
        means.append(0.5 * (a + b))
        counts.append(0.5)
    return CycleSet(np.array(ranges), np.array(means), np.array(counts))


# --------------------------------------------------------------------------
# lifetime quantities
# --------------------------------------------------------------------------

def _check_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-6:
        raise ValueError("bin weights must be non-negative and sum to one")
    return w


def damage_equivalent_load(cycles_per_bin, m: float, weights, lifetime_scale: float = 1.0,
                           n_eq: float = N_EQ) -> float:
    """Lifetime DEL from per-bin cycle sets.

    ``cycles_per_bin[i]`` is a CycleSet, a list of CycleSets (seeds, averaged)
    or a precomputed damage sum. ``lifetime_scale`` converts one record into
    the lifetime (lifetime seconds over record seconds).
    """
    if m <= 0:
        raise ValueError("Woehler exponent must be positive")
    w = _check_weights(weights)
    if len(cycles_per_bin) != w.size:
        raise ValueError("one cycle entry per wind bin is required")
    total = 0.0
    for wi, entry in zip(w, cycles_per_bin):
        if isinstance(entry, CycleSet):
            d = entry.damage_sum(m)
        elif np.isscalar(entry):
            d = float(entry)
        else:
            d = float(np.mean([c.damage_sum(m) if isinstance(c, CycleSet) else float(c)
                               for c in entry]))
        total += wi * lifetime_scale * d
    return (total / n_eq) ** (1.0 / m)


# ``del`` is a reserved word, hence the trailing underscore
del_ = damage_equivalent_load


def aep(power_per_bin, weights) -> float:
    """Lifetime average power (kW): the probability-weighted bin power."""
    w = _check_weights(weights)
    p = np.asarray(power_per_bin, dtype=float)
    if p.shape != w.shape:
        raise ValueError(f"{p.size} bin powers for {w.size} weights")
    if not np.all(np.isfinite(p)):
        raise ValueError("missing bin power")
    return float(np.dot(w, p))


def capacity_factor(avg_power_kw: float, rated_kw: float = 5000.0) -> float:
    return avg_power_kw / rated_kw


def bin_probabilities(dist: SiteDistribution, bin_centers) -> np.ndarray:
    """Time fraction of each bin with the outer edges at cut-in and cut-out.

    Unlike :func:`weibull_weight` these are not renormalised: the time spent
    below cut-in or above cut-out produces nothing.
    """
    c = np.asarray(bin_centers, dtype=float)
    if c.size < 2 or np.any(np.diff(c) <= 0):
        raise ValueError("need at least two ascending bin centres")
    edges = np.concatenate([[dist.cut_in], 0.5 * (c[:-1] + c[1:]), [dist.cut_out]])
    return np.diff(dist.cdf(edges))


def gross_capacity_factor(power_per_bin, dist: SiteDistribution, bin_centers,
                          rated_kw: float = 5000.0) -> float:
    p = np.asarray(power_per_bin, dtype=float)
    return float(np.dot(bin_probabilities(dist, bin_centers), p)) / rated_kw


def characteristic(maxima) -> float:
    """Max over bins of the seed-averaged per-run maxima.

    ``maxima`` maps bin -> sequence of per-seed maxima, or is a sequence of
    such sequences.
    """
    groups = maxima.values() if isinstance(maxima, dict) else maxima
    means = [float(np.mean(g)) for g in groups if len(g)]
    if not means:
        raise ValueError("no maxima given")
    return max(means)


# --------------------------------------------------------------------------
# linearised stability
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearModel:
    """Above-rated closed loop, x = [omega_r rad/s, theta deg, theta_dot deg/s,
    integrator rad], torque held at rated and omega_theta = omega_0."""

    params: TurbineParams
    pitch: PitchPiConfig
    wind: float
    omega_r: float
    theta: float
    integ: float
    actuator_cutoff: float

    def rhs(self, x, gain: float = 1.0, speed_slope: float = 1.0) -> np.ndarray:
        """Continuous-time vector field. ``speed_slope`` multiplies the speed
        error; de-rating with R = R^max - k_w (w - w_lim) gives 1 + k_w w_0."""
        p = self.params
        wn = 2.0 * math.pi * self.actuator_cutoff
        z = p.actuator_damping
        w, th, thd, integ = x
        ta = aero_torque(w, self.wind, th, p.aero_array, p.air_density, p.rotor_radius,
                         0.01 * p.omega_r0)
        dw = (ta - p.gearbox * p.tau_rated * 1000.0) / p.J_tot
        err = gain_schedule(th, self.pitch.theta_k) * speed_slope * \
            (w - self.omega_r) * p.gearbox
        theta_c = (gain * self.pitch.kp * err + gain * integ) / DEG
        dthd = wn * wn * (theta_c - th) - 2.0 * z * wn * thd
        dinteg = self.pitch.ki * err
        return np.array([dw, thd, dthd, dinteg])

    @property
    def x0(self) -> np.ndarray:
        return np.array([self.omega_r, self.theta, 0.0, self.integ])

    def matrix(self, gain: float = 1.0, speed_slope: float = 1.0) -> np.ndarray:
        """Central-difference Jacobian at the operating point.

        The integrator equilibrium shifts with the gain, so it is rescaled to
        keep the commanded pitch at the operating point.
        """
        x0 = self.x0.copy()
        x0[3] = self.integ / gain
        h = np.array([1e-6 * max(abs(self.omega_r), 1.0), 1e-4, 1e-4, 1e-7])
        A = np.empty((4, 4))
        for j in range(4):
            e = np.zeros(4)
            e[j] = h[j]
            A[:, j] = (self.rhs(x0 + e, gain, speed_slope)
                       - self.rhs(x0 - e, gain, speed_slope)) / (2.0 * h[j])
        return A


def linearize(wind: float = 18.0, pitch: PitchPiConfig | None = None,
              params: TurbineParams | None = None, actuator_cutoff: float | None = None,
              k_opt: float | None = None) -> LinearModel:
    sur = default_surrogate()
    params = params or sur.params
    pitch = pitch or PitchPiConfig()
    sp = steady_state(wind, params, k_opt or sur.k_opt, R=1.0)
    if sp.region != "3":
        raise ValueError(f"{wind} m/s is not above rated on this surrogate")
    return LinearModel(params=params, pitch=pitch, wind=float(wind),
                       omega_r=sp.omega_g * RPM / params.gearbox, theta=sp.theta,
                       integ=sp.theta * DEG,
                       actuator_cutoff=actuator_cutoff or params.actuator_cutoff)


def is_hurwitz(A: np.ndarray) -> bool:
    return bool(np.all(np.linalg.eigvals(A).real < 0.0))


def find_gfact(model: LinearModel | None = None, upper: float = 2.0, rtol: float = 1e-3,
               max_upper: float = 1e4) -> float:
    """Smallest PI gain factor at which the linear closed loop loses stability."""
    model = model or linearize()
    if not is_hurwitz(model.matrix(1.0)):
        raise ValueError("closed loop is already unstable with the base gains")
    lo, hi = 1.0, upper
    while is_hurwitz(model.matrix(hi)):
        lo = hi
        hi *= 2.0
        if hi > max_upper:
            return math.inf
    while (hi - lo) > rtol * lo:
        mid = 0.5 * (lo + hi)
        if is_hurwitz(model.matrix(mid)):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def derating_matrix(model: LinearModel, k_omega: float, omega_0: float | None = None) -> np.ndarray:
    omega_0 = model.params.omega_0 if omega_0 is None else omega_0
    return model.matrix(1.0, speed_slope=1.0 + k_omega * omega_0)


def derating_dynamics_check(model: LinearModel | None = None, k_omega: float = 0.5 / 1174.0,
                            omega_0: float | None = None) -> bool:
    """True when the de-rating state matrix is Hurwitz."""
    model = model or linearize()
    return is_hurwitz(derating_matrix(model, k_omega, omega_0))


__all__ = ["CycleSet", "reversals", "rainflow", "damage_equivalent_load", "del_", "aep",
           "capacity_factor", "bin_probabilities", "gross_capacity_factor", "characteristic", "LinearModel", "linearize", "is_hurwitz",
           "find_gfact", "derating_matrix", "derating_dynamics_check", "TOWER_WOHLER",
           "BLADE_WOHLER", "N_EQ", "LIFETIME_S"]
