"""Gain-scheduled PI pitch control and regime-switched PI torque control.

Internally both loops work on the generator speed error in rad/s. Pitch is
exchanged in degrees and torque in kN*m at the interfaces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .signals import ConfigError

RPM = 2.0 * math.pi / 60.0
DEG = math.pi / 180.0
THETA_MAX = 90.0


@njit(cache=True)
def gain_schedule(theta, theta_k):
    if theta <= 0.0:
        return 1.0
    return 1.0 / (1.0 + theta / theta_k)


@njit(cache=True)
def torque_regime_kernel(omega_g, omega_tau, omega_min, k_opt, tau_rated):
    """Returns (set point rpm, lower kN m, upper kN m); k_opt in N m/rpm^2."""
    opt = k_opt * omega_g * omega_g / 1000.0
    if opt > tau_rated:
        opt = tau_rated
    if omega_g < 0.5 * (omega_min + omega_tau):
        return omega_min, 0.0, opt
    return omega_tau, opt, tau_rated


@njit(cache=True)
def pi_step(state, err, kp, ki, lo, hi, dt):
    """One PI update with conditional integration.

    ``state`` = [integral, saturation flag]. The integral is frozen while the
    output sits on a limit and the error pushes further into it, and it is
    always kept inside [lo, hi].
    """
    integ = state[0]
    trial = integ + ki * err * dt
    out = kp * err + trial
    sat = 0.0
    if out > hi:
        sat = 1.0
        if err > 0.0:
            trial = integ
    elif out < lo:
        sat = -1.0
        if err < 0.0:
            trial = integ
    if trial > hi:
        trial = hi
    elif trial < lo:
        trial = lo
    out = kp * err + trial
    if out > hi:
        out = hi
    elif out < lo:
        out = lo
    state[0] = trial
    state[1] = sat
    return out


@njit(cache=True)
def pitch_pi_kernel(state, omega_g, omega_theta, theta_now, theta_min, kp, ki,
                    theta_k, dt):
    """Pitch command in deg. Speeds in rpm; gains act on rad/s and rad."""
    gk = gain_schedule(theta_now, theta_k)
    err = gk * (omega_g - omega_theta) * RPM
    out = pi_step(state, err, kp, ki, theta_min * DEG, THETA_MAX * DEG, dt)
    return out / DEG


@njit(cache=True)
def torque_pi_kernel(state, omega_g, setpoint, lo, hi, kp, ki, dt):
    """Torque command in kN m; kp in kN m s/rad, ki in kN m/rad."""
    err = (omega_g - setpoint) * RPM
    return pi_step(state, err, kp, ki, lo, hi, dt)


# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PitchPiConfig:
    kp: float = 0.0143            # s
    ki: float = 7.18e-4
    theta_k: float = 4.71         # deg
    theta_min: float = 0.0        # deg
    theta_max: float = THETA_MAX
    omega_reg: float = 0.275      # rad/s, regulator mode the gains were designed for
    zeta_reg: float = 1.59

    def __post_init__(self):
        if not (self.kp > 0 and self.ki > 0 and self.theta_k > 0):
            raise ConfigError("pitch PI gains and theta_k must be positive")
        if self.theta_max != THETA_MAX:
            raise ConfigError("theta_max is fixed at 90 deg")
        if self.theta_min > self.theta_max:
            raise ConfigError("theta_min above theta_max")


@dataclass(frozen=True)
class TorquePiConfig:
    kp: float = 9.75              # kN m s/rad
    ki: float = 4.88              # kN m/rad
    k_opt: float = 0.0251         # N m/rpm^2, replaced by the calibrated value
    omega_min: float = 436.5      # rpm
    tau_rated: float = 43.1       # kN m

    def __post_init__(self):
        if not (self.kp > 0 and self.ki > 0 and self.k_opt > 0):
            raise ConfigError("torque PI gains and k_opt must be positive")
        if not (self.omega_min > 0 and self.tau_rated > 0):
            raise ConfigError("omega_min and tau_rated must be positive")


def retune_pitch_gains(cfg: PitchPiConfig, omega_reg: float) -> PitchPiConfig:
    """Move the regulator mode to ``omega_reg`` at constant damping.

    For the standard single-mode design kP grows with the natural frequency
    and kI with its square.
    """
    if omega_reg <= 0:
        raise ConfigError("omega_reg must be positive")
    s = omega_reg / cfg.omega_reg
    return replace(cfg, kp=cfg.kp * s, ki=cfg.ki * s * s, omega_reg=omega_reg)


def torque_regime(omega_g: float, omega_tau: float, cfg: TorquePiConfig):
    if omega_g < 0:
        raise ValueError("omega_g must be non-negative")
    return torque_regime_kernel(float(omega_g), float(omega_tau), cfg.omega_min,
                                cfg.k_opt, cfg.tau_rated)


def _finite(*xs):
    for x in xs:
        if not math.isfinite(x):
            raise ValueError(f"non-finite controller input {x!r}")


@dataclass
class PiState:
    integrator: float = 0.0
    saturation: int = 0

    def as_array(self) -> np.ndarray:
        return np.array([self.integrator, float(self.saturation)])

    def load(self, arr) -> None:
        self.integrator = float(arr[0])
        self.saturation = int(arr[1])


class PitchPI:
    """Stateful wrapper around the pitch kernel."""

    def __init__(self, cfg: PitchPiConfig | None = None, theta0: float = 0.0):
        self.cfg = cfg or PitchPiConfig()
        self.state = PiState(integrator=theta0 * DEG)

    def step(self, omega_g, omega_theta, theta_now, theta_min, dt) -> float:
        _finite(omega_g, omega_theta, theta_now, theta_min, dt)
        if theta_min > self.cfg.theta_max:
            raise ValueError("theta_min above theta_max")
        arr = self.state.as_array()
        out = pitch_pi_kernel(arr, float(omega_g), float(omega_theta), float(theta_now),
                              float(theta_min), self.cfg.kp, self.cfg.ki,
                              self.cfg.theta_k, float(dt))
        self.state.load(arr)
        return out


class TorquePI:
    def __init__(self, cfg: TorquePiConfig | None = None, tau0: float = 0.0):
        self.cfg = cfg or TorquePiConfig()
        self.state = PiState(integrator=tau0)

    def step(self, omega_g, setpoint, limits, dt) -> float:
        lo, hi = limits
        _finite(omega_g, setpoint, lo, hi, dt)
        arr = self.state.as_array()
        out = torque_pi_kernel(arr, float(omega_g), float(setpoint), float(lo), float(hi),
                               self.cfg.kp, self.cfg.ki, float(dt))
        self.state.load(arr)
        return out
