"""Set-point smoothing (SPC), the power controller (PC) and minimum pitch
peak shaving (MPPS)."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit

from .signals import ConfigError, LookupTable1D, LowPass2, biquad_step
from .turbine import Surrogate, default_surrogate, steady_state

R_HARD_MAX = 1.2
FPC_WIND = 8.0
FPC_PITCH = np.arange(0.0, 20.01, 1.0)
MPPS_BREAKPOINTS = (10.0, 12.0, 18.0, 24.0)
MPPS_DEFAULT = (0.0, 1.5, 4.0, 6.0)


@njit(cache=True)
def spc_kernel(coeffs, fstate, theta, theta_min_pc, tau, tau_rated, omega_rat, g1, g2):
    """Returns (omega_tau, omega_theta, bias) in rpm."""
    excess = theta - theta_min_pc
    if excess < 0.0:
        excess = 0.0
    bias = biquad_step(coeffs, fstate, g1 * excess - g2 * (tau_rated - tau))
    if bias > 0.0:
        return omega_rat - bias, omega_rat, bias
    return omega_rat, omega_rat - bias, bias


@dataclass(frozen=True)
class SpcConfig:
    g1: float = 33.3          # rpm/deg
    g2: float = 2.79          # rpm/(kN m)
    time_constant: float = 10.0

    def __post_init__(self):
        if not (self.g1 > 0 and self.g2 > 0 and self.time_constant > 0):
            raise ConfigError("SPC gains and filter time constant must be positive")


class SetpointSmoother:
    def __init__(self, cfg: SpcConfig | None = None, dt: float = 0.01, bias0: float = 0.0):
        self.cfg = cfg or SpcConfig()
        self.filter = LowPass2(self.cfg.time_constant, dt, bias0)
        self.bias = bias0

    def step(self, theta, theta_min_pc, tau, tau_rated, omega_rat):
        w_tau, w_theta, self.bias = spc_kernel(
            self.filter.coeffs, self.filter.state, float(theta), float(theta_min_pc),
            float(tau), float(tau_rated), float(omega_rat), self.cfg.g1, self.cfg.g2)
        return w_tau, w_theta


def spc_step(smoother: SetpointSmoother, theta, theta_min_pc, tau, tau_rated, omega_rat):
    return smoother.step(theta, theta_min_pc, tau, tau_rated, omega_rat)


# --------------------------------------------------------------------------
# power controller
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PcConfig:
    omega_0: float = 1174.0
    f_pc: LookupTable1D = field(default=None)
    theta_fine: float = 0.0

    def __post_init__(self):
        if self.f_pc is None:
            object.__setattr__(self, "f_pc", default_fpc())
        t = self.f_pc
        if abs(t(1.0) - self.theta_fine) > 1e-9:
            raise ConfigError("f_PC(1) must equal the fine pitch angle")
        if np.any(np.diff(t.values) > 0):
            raise ConfigError("f_PC must be non-increasing in R")


def pc(R: float, cfg: PcConfig) -> tuple[float, float]:
    """(omega_rat rpm, theta_min_PC deg) for power reference factor ``R``."""
    if not R > 0:
        raise ValueError(f"power reference factor must be positive, got {R}")
    if R > R_HARD_MAX:
        raise ValueError(f"power reference factor {R} above hard cap {R_HARD_MAX}")
    if R >= 1.0:
        return R * cfg.omega_0, cfg.theta_fine
    return R * cfg.omega_0, cfg.f_pc(R)


def fpc_sweep(surrogate: Surrogate, wind: float = FPC_WIND, pitches=FPC_PITCH):
    """Steady below-rated power ratio P(theta)/P(theta_fine) at fixed wind."""
    p = surrogate.params
    pw = np.array([steady_state(wind, p, surrogate.k_opt, theta_min=float(th)).power
                   for th in pitches])
    return np.asarray(pitches, dtype=float), pw / pw[0]


def calibrate_fpc(surrogate: Surrogate | None = None, wind: float = FPC_WIND,
                  pitches=FPC_PITCH) -> LookupTable1D:
    """Invert the steady power-vs-minimum-pitch map into f_PC: R -> theta."""
    surrogate = surrogate or default_surrogate()
    th, ratio = fpc_sweep(surrogate, wind, pitches)
    if np.any(np.diff(ratio) >= 0):
        raise ConfigError("steady power is not strictly decreasing in pitch; "
                          "the surrogate cannot be inverted")
    keep = ratio > 1e-3
    return LookupTable1D(ratio[keep][::-1], th[keep][::-1])


@lru_cache(maxsize=None)
def default_fpc() -> LookupTable1D:
    return calibrate_fpc(default_surrogate())


# --------------------------------------------------------------------------
# minimum pitch peak shaving
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MppsConfig:
    table: LookupTable1D = field(
        default_factory=lambda: LookupTable1D(MPPS_BREAKPOINTS, MPPS_DEFAULT))
    time_constant: float = 40.0
    theta_fine: float = 0.0

    def __post_init__(self):
        v = self.table.values
        if np.any(np.diff(v) < 0):
            raise ConfigError("MPPS table must be non-decreasing")
        if abs(self.table(10.0) - self.theta_fine) > 1e-9:
            raise ConfigError("MPPS table must give the fine pitch at 10 m/s")


class PeakShaver:
    def __init__(self, cfg: MppsConfig | None = None, dt: float = 0.01, u0: float = 0.0):
        self.cfg = cfg or MppsConfig()
        self.filter = LowPass2(self.cfg.time_constant, dt, u0)

    def step(self, u_hat: float) -> float:
        return self.cfg.table(self.filter.step(u_hat))


def mpps_step(shaver: PeakShaver, u_hat: float) -> float:
    return shaver.step(u_hat)


def combine_theta_min(theta_min_pc: float, theta_min_ps: float) -> float:
    return max(theta_min_pc, theta_min_ps)


__all__ = ["SpcConfig", "SetpointSmoother", "spc_step", "spc_kernel", "PcConfig", "pc",
           "calibrate_fpc", "fpc_sweep", "default_fpc", "MppsConfig", "PeakShaver",
           "mpps_step", "combine_theta_min", "R_HARD_MAX"]
