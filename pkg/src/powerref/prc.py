"""Power reference control: the slow R^max schedule, the collective blade
load filter, the weighted-delay gust measure, transient estimates and the
safe/de-rating automaton that produces the power reference factor R."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .signals import (ConfigError, DelayBuffer, LookupTable1D, LowPass2, biquad_reset,
                      biquad_step, lpf2_coeffs, notch_coeffs, ring_get)

RPM = 2.0 * math.pi / 60.0
OMEGA_HARD_LIMIT = 1408.0   # rpm, 120 % of the nominal rated speed
SAFE, DERATING = 0, 1
DECREMENTS = ("exceedance", "absolute")


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------

@njit(cache=True)
def gust_kernel(buf, meta, n_delays, steps_per_delay, w0):
    """max_r w_r (u(t) - u(t - t_r)) with weights falling linearly from w0 to 1."""
    now = ring_get(buf, meta, 0)
    best = 0.0
    for r in range(1, n_delays + 1):
        w = (1.0 - w0) * r / n_delays + w0
        d = w * (now - ring_get(buf, meta, r * steps_per_delay))
        if d > best:
            best = d
    return best


@njit(cache=True)
def collective_load_kernel(m1, m2, m3, omega_g, gearbox, notch_c, notch_s, width, depth,
                           lp_c, lp_s, w3p_c, w3p_s, dt):
    """Filtered collective load; notch centred on the smoothed 3P frequency."""
    w3p = biquad_step(w3p_c, w3p_s, 3.0 * omega_g * RPM / gearbox)
    if w3p < 1e-3:
        w3p = 1e-3
    notch_coeffs(w3p, width, depth, dt, notch_c)
    y = biquad_step(notch_c, notch_s, (m1 + m2 + m3) / 3.0)
    return biquad_step(lp_c, lp_s, y)


@njit(cache=True)
def derate_kernel(st, omega_hat, m_hat, rmax, k_omega, k_m, omega_lim, m_lim,
                  r_floor, min_dwell, absolute, dt):
    """st = [mode, time in mode]; returns (R, dR_omega, dR_m)."""
    exceed = omega_hat > omega_lim or m_hat > m_lim
    if st[0] == SAFE:
        if exceed:
            st[0] = DERATING
            st[1] = 0.0
    else:
        st[1] += dt
        if not exceed and st[1] >= min_dwell:
            st[0] = SAFE
            st[1] = 0.0
    if st[0] == SAFE:
        return rmax, 0.0, 0.0
    if absolute:
        dr_w = -k_omega * omega_hat
        dr_m = -k_m * m_hat
    else:
        dr_w = -k_omega * max(omega_hat - omega_lim, 0.0)
        dr_m = -k_m * max(m_hat - m_lim, 0.0)
    r = rmax + min(dr_w, dr_m)
    if r < r_floor:
        r = r_floor
    return r, dr_w, dr_m


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def constant_table(value: float, lo: float = 4.0, hi: float = 26.0) -> LookupTable1D:
    bp = np.arange(lo, hi + 1e-9, 2.0)
    return LookupTable1D(bp, np.full(bp.size, float(value)))


@dataclass(frozen=True)
class Prc0Config:
    rmax_table: LookupTable1D = field(default_factory=lambda: constant_table(1.0))
    time_constant: float = 100.0

    def __post_init__(self):
        v = self.rmax_table.values
        if np.any(v < 0.5) or np.any(v > 1.2):
            raise ConfigError("R^max table values must lie in [0.5, 1.2]")
        if self.time_constant <= 0:
            raise ConfigError("PRC0 filter time constant must be positive")

    @property
    def rmax_peak(self) -> float:
        return float(np.max(self.rmax_table.values))


@dataclass(frozen=True)
class GustConfig:
    delay: float = 1.0      # s, spacing of the delays
    n_delays: int = 20
    w0: float = 2.5

    def __post_init__(self):
        if self.n_delays < 1 or self.delay <= 0 or self.w0 < 1:
            raise ConfigError("gust measure needs n_delays >= 1, delay > 0, w0 >= 1")

    @property
    def span(self) -> float:
        return self.n_delays * self.delay

    def weights(self) -> np.ndarray:
        t = np.arange(self.n_delays + 1) * self.delay
        return (1.0 - self.w0) / t[-1] * t + self.w0


@dataclass(frozen=True)
class LoadFilterConfig:
    notch_width: float = 1.0
    notch_depth: float = 0.1
    lowpass: float = 1.0          # s
    speed_filter: float = 100.0   # s, smoothing of the 3P frequency

    def __post_init__(self):
        if self.notch_width <= 0 or self.notch_depth < 0:
            raise ConfigError("notch width must be positive and depth non-negative")
        if self.lowpass <= 0 or self.speed_filter <= 0:
            raise ConfigError("filter time constants must be positive")


@dataclass(frozen=True)
class TransientConfig:
    d_omega: float = 40.0               # rpm per m/s
    d_m: float = 750.0                  # kN m per m/s
    k_omega: float = 0.5 / 1174.0       # 1/rpm
    k_m: float = 3e-5                   # 1/(kN m)
    omega_lim: float = 1325.0           # rpm
    m_lim: float = 9000.0               # kN m
    r_floor: float = 0.3
    min_dwell: float = 1.0              # s
    decrement: str = "exceedance"

    def __post_init__(self):
        for name in ("d_omega", "d_m", "k_omega", "k_m", "omega_lim", "m_lim"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.omega_lim >= OMEGA_HARD_LIMIT:
            raise ConfigError(f"omega_lim must stay below {OMEGA_HARD_LIMIT} rpm")
        if not 0 < self.r_floor < 1:
            raise ConfigError("R floor must lie in (0, 1)")
        if self.min_dwell < 0:
            raise ConfigError("minimum dwell must be non-negative")
        if self.decrement not in DECREMENTS:
            raise ConfigError(f"decrement must be one of {DECREMENTS}")


def validate_prc(prc0: Prc0Config, transient: TransientConfig, omega_0: float,
                 gfact: float | None = None, allow_steady_derating: bool = False) -> None:
    """Configuration-time checks tying the schedule to the automaton.

    A schedule whose peak puts the rated speed above omega_lim keeps the
    automaton de-rating in steady operation; it is refused unless explicitly
    allowed. With ``gfact`` the de-rating stability bound is also checked.
    """
    if omega_0 * prc0.rmax_peak >= transient.omega_lim and not allow_steady_derating:
        raise ConfigError(
            f"omega_0 * max(R^max) = {omega_0 * prc0.rmax_peak:.1f} rpm is not below "
            f"omega_lim = {transient.omega_lim} rpm; the automaton would never return "
            "to the safe state")
    if gfact is not None and not transient.k_omega * omega_0 + 1.0 < gfact:
        raise ConfigError(
            f"k_omega*omega_0 + 1 = {transient.k_omega * omega_0 + 1:.3f} is not below "
            f"G_fact = {gfact:.3f}")


# --------------------------------------------------------------------------
# stateful blocks
# --------------------------------------------------------------------------

class SlowReference:
    """R^max = table(LPF_100{u_hat})."""

    def __init__(self, cfg: Prc0Config | None = None, dt: float = 0.01, u0: float = 0.0):
        self.cfg = cfg or Prc0Config()
        self.filter = LowPass2(self.cfg.time_constant, dt, u0)
        self.u_bar = u0

    def step(self, u_hat: float) -> float:
        self.u_bar = self.filter.step(u_hat)
        return self.cfg.rmax_table(self.u_bar)


def prc0_step(block: SlowReference, u_hat: float) -> float:
    return block.step(u_hat)


class CollectiveLoadFilter:
    def __init__(self, cfg: LoadFilterConfig | None = None, dt: float = 0.01,
                 gearbox: float = 97.0):
        self.cfg = cfg or LoadFilterConfig()
        self.dt = float(dt)
        self.gearbox = float(gearbox)
        self.notch_c = np.empty(5)
        self.notch_s = np.zeros(2)
        self.lp_c = np.empty(5)
        self.lp_s = np.zeros(2)
        self.w3p_c = np.empty(5)
        self.w3p_s = np.zeros(2)
        lpf2_coeffs(self.cfg.lowpass, self.dt, self.lp_c)
        lpf2_coeffs(self.cfg.speed_filter, self.dt, self.w3p_c)
        self._primed = False

    def reset(self, load: float, omega_g: float) -> None:
        w3p = 3.0 * omega_g * RPM / self.gearbox
        biquad_reset(self.w3p_c, self.w3p_s, w3p)
        notch_coeffs(max(w3p, 1e-3), self.cfg.notch_width, self.cfg.notch_depth, self.dt,
                     self.notch_c)
        biquad_reset(self.notch_c, self.notch_s, load)
        biquad_reset(self.lp_c, self.lp_s, load)
        self._primed = True

    def step(self, m1: float, m2: float, m3: float, omega_g: float) -> float:
        if not self._primed:
            self.reset((m1 + m2 + m3) / 3.0, omega_g)
        return collective_load_kernel(float(m1), float(m2), float(m3), float(omega_g),
                                      self.gearbox, self.notch_c, self.notch_s,
                                      self.cfg.notch_width, self.cfg.notch_depth,
                                      self.lp_c, self.lp_s, self.w3p_c, self.w3p_s, self.dt)


def collective_load_step(m1, m2, m3, omega_g, block: CollectiveLoadFilter) -> float:
    return block.step(m1, m2, m3, omega_g)


class GustMeasure:
    """Delay buffer of the wind estimate plus the weighted-difference maximum."""

    def __init__(self, cfg: GustConfig | None = None, dt: float = 0.01):
        self.cfg = cfg or GustConfig()
        steps = self.cfg.delay / dt
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError("gust delay spacing must be a multiple of dt")
        self.steps_per_delay = int(round(steps))
        self.buffer = DelayBuffer(self.cfg.span, dt)

    def push(self, u_hat: float) -> float:
        self.buffer.push(u_hat)
        return self.value()

    def value(self) -> float:
        return gust_measure(self.buffer, self.cfg, self.steps_per_delay)


def gust_measure(buffer: DelayBuffer, cfg: GustConfig, steps_per_delay: int | None = None) -> float:
    if buffer.meta[1] == 0:
        raise IndexError("gust measure of an empty buffer")
    if steps_per_delay is None:
        steps_per_delay = int(round(cfg.delay / buffer.dt))
    return gust_kernel(buffer.buf, buffer.meta, cfg.n_delays, steps_per_delay, cfg.w0)


def transient_estimates(omega_g: float, m0: float, du: float, cfg: TransientConfig):
    return omega_g + cfg.d_omega * du, m0 + cfg.d_m * du


class DeratingAutomaton:
    """Two-state hybrid automaton (Safe / Derating) producing R."""

    def __init__(self, cfg: TransientConfig | None = None, dt: float = 0.01):
        self.cfg = cfg or TransientConfig()
        self.dt = float(dt)
        self.state = np.zeros(2)
        self.R = None
        self.dR = (0.0, 0.0)

    @property
    def mode(self) -> str:
        return "Derating" if self.state[0] == DERATING else "Safe"

    def force(self, mode: str, dwell: float = 0.0) -> None:
        self.state[0] = DERATING if mode == "Derating" else SAFE
        self.state[1] = dwell

    def step(self, omega_hat: float, m_hat: float, rmax: float) -> float:
        c = self.cfg
        r, dw, dm = derate_kernel(self.state, float(omega_hat), float(m_hat), float(rmax),
                                  c.k_omega, c.k_m, c.omega_lim, c.m_lim, c.r_floor,
                                  c.min_dwell, c.decrement == "absolute", self.dt)
        self.R = r
        self.dR = (dw, dm)
        return r


def derate_step(automaton: DeratingAutomaton, omega_hat, m_hat, rmax) -> float:
    return automaton.step(omega_hat, m_hat, rmax)
