"""Reduced-order turbine: rigid drivetrain, parametric Cp/Ct surrogate, rate
limited second-order pitch actuator and thrust-based load proxies.

Units at the interfaces: generator speed in rpm, pitch in deg, generator
torque in kN*m, power in kW, forces in kN and moments in kN*m.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from numba import njit
from scipy import optimize

from .signals import ConfigError

RPM = 2.0 * math.pi / 60.0  # rad/s per rpm
BETZ = 16.0 / 27.0
THETA_LO, THETA_HI = -5.0, 90.0

# aero coefficient vector layout
# [cp_max, lambda_star, shape, zp_a, zp_b, margin, margin_exp, cp_floor,
#  lambda_scale, ct_max, ct_lambda, ct_pitch]
# cp_floor is the width of the softplus that keeps Cp >= 0 while staying smooth.
# Cp = cp_max * (x e^(1-x))^shape * g, x = lambda*scale/lambda_star, where g
# falls from 1 at zero pitch to 0 at the zero-power pitch zp_a/lambda - zp_b.
BASE_AERO = np.array([0.482, 7.55, 1.686, 87.57, 1.692, 8.17, -0.919, 0.004,
                      1.0, 0.875, 3.0, 0.09])


CP_BRACKET = (0.35, 0.58)


class CalibrationError(RuntimeError):
    """No coefficient set reproduces the calibration anchors."""


@dataclass(frozen=True)
class TurbineParams:
    """Plant parameters (NREL-5MW class rotor)."""

    J_tot: float = 4.38e7             # kg m^2, rotor side
    gearbox: float = 97.0
    rotor_radius: float = 63.0        # m
    omega_0: float = 1174.0           # rpm, nominal rated generator speed
    omega_min: float = 436.5          # rpm
    tau_rated: float = 43.1           # kN m, generator side
    air_density: float = 1.225        # kg/m^3
    hub_height: float = 87.0          # m
    actuator_cutoff: float = 1.0      # Hz
    actuator_damping: float = math.sqrt(2.0) / 2.0
    pitch_rate_limit: float = 8.0     # deg/s
    generator_efficiency: float = 0.944
    theta_fine: float = 0.0           # deg
    rated_power: float = 5000.0       # kW, electrical
    flap_arm: float = 28.0            # m, thrust-to-flap moment arm proxy
    flap_1p: float = 0.15             # per-blade 1P amplitude (fraction of mean)
    flap_3p: float = 0.03             # collective 3P amplitude (fraction of mean)
    aero: tuple = tuple(BASE_AERO)

    def __post_init__(self):
        for name in ("J_tot", "gearbox", "rotor_radius", "omega_0", "omega_min",
                     "tau_rated", "air_density", "hub_height", "actuator_cutoff",
                     "pitch_rate_limit", "generator_efficiency", "flap_arm"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"turbine parameter {name} must be positive")
        if len(self.aero) != BASE_AERO.size:
            raise ConfigError("aero coefficient vector has wrong length")

    @property
    def area(self) -> float:
        return math.pi * self.rotor_radius**2

    @property
    def aero_array(self) -> np.ndarray:
        return np.asarray(self.aero, dtype=float)

    @property
    def omega_r0(self) -> float:
        """Rated rotor speed, rad/s."""
        return self.omega_0 * RPM / self.gearbox

    def rated_mech_power(self) -> float:
        """tau_rated * omega_0 in kW."""
        return self.tau_rated * self.omega_0 * RPM

    def check_rating(self, tol: float = 0.05) -> float:
        """Relative mismatch between eta*tau_rat*omega_0 and the rated power."""
        err = self.generator_efficiency * self.rated_mech_power() / self.rated_power - 1.0
        if abs(err) > tol:
            raise ConfigError(f"rated torque/speed inconsistent with rated power ({err:+.1%})")
        return err


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------

@njit(cache=True)
def cp_ct(lam, theta, aero):
    """Power and thrust coefficients of the surrogate rotor (theta in deg)."""
    if lam < 0.0:
        lam = 0.0
    elif lam > 20.0:
        lam = 20.0
    if theta < -5.0:
        theta = -5.0
    elif theta > 90.0:
        theta = 90.0
    le = lam * aero[8]
    if le < 0.05:
        le = 0.05
    x = le / aero[1]
    cp0 = aero[0] * (x * math.exp(1.0 - x)) ** aero[2]
    zero_pitch = aero[3] / le - aero[4]
    # below lambda ~1.4 the hyperbola would put the zero-power pitch past
    # feather; cap it so a feathered rotor never produces power
    if zero_pitch > 60.0:
        zero_pitch = 60.0
    margin = aero[5] * x ** aero[6]
    norm = 1.0 - math.exp(-zero_pitch / margin)
    if norm < 1e-3:
        norm = 1e-3
    raw = cp0 * (1.0 - math.exp((theta - zero_pitch) / margin)) / norm
    soft = aero[7]
    if raw > 30.0 * soft:
        cp = raw
    elif raw < -30.0 * soft:
        cp = 0.0
    else:
        cp = soft * math.log1p(math.exp(raw / soft))
    if cp > 0.59:
        cp = 0.59
    ct = aero[9] * (1.0 - math.exp(-lam / aero[10])) * math.exp(-aero[11] * theta)
    if ct < 0.0:
        ct = 0.0
    elif ct > 2.0:
        ct = 2.0
    return cp, ct


@njit(cache=True)
def aero_torque(omega_r, u, theta, aero, rho, radius, omega_floor):
    """Rotor aerodynamic torque in N m."""
    w = omega_r if omega_r > omega_floor else omega_floor
    lam = w * radius / u if u > 0.1 else 20.0
    cp, _ = cp_ct(lam, theta, aero)
    return 0.5 * rho * math.pi * radius * radius * u * u * u * cp / w


@njit(cache=True)
def actuator_step(act, theta_c, dt, wn, zeta, rate_limit):
    """Second-order pitch actuator, act = [theta, theta_dot] (deg, deg/s)."""
    acc = wn * wn * (theta_c - act[0]) - 2.0 * zeta * wn * act[1]
    v = act[1] + dt * acc
    if v > rate_limit:
        v = rate_limit
    elif v < -rate_limit:
        v = -rate_limit
    th = act[0] + dt * v
    if th < -5.0:
        th = -5.0
        v = 0.0
    elif th > 90.0:
        th = 90.0
        v = 0.0
    act[0] = th
    act[1] = v


@njit(cache=True)
def blade_loads(u, theta, omega_r, azimuth, aero, rho, radius, hub_height,
                arm, a1p, a3p, out):
    """out = [thrust kN, m1, m2, m3 kN m, tower FA kN m]."""
    w = omega_r if omega_r > 0.0 else 0.0
    lam = w * radius / u if u > 0.1 else 20.0
    _, ct = cp_ct(lam, theta, aero)
    thrust = 0.5 * rho * math.pi * radius * radius * u * u * ct / 1000.0
    mean = thrust / 3.0 * arm
    c3 = a3p * math.cos(3.0 * azimuth)
    for i in range(3):
        out[1 + i] = mean * (1.0 + a1p * math.cos(azimuth + 2.0 * math.pi * i / 3.0) + c3)
    out[0] = thrust
    out[4] = thrust * hub_height


@njit(cache=True)
def plant_step_kernel(x, theta_c, tau_g, u, dt, aero, rho, radius, J, G,
                      wn_act, zeta_act, rate_limit, omega_floor):
    """x = [omega_r rad/s, theta deg, theta_dot deg/s, azimuth rad]; returns aero torque N m."""
    act = x[1:3]
    actuator_step(act, theta_c, dt, wn_act, zeta_act, rate_limit)
    ta = aero_torque(x[0], u, x[1], aero, rho, radius, omega_floor)
    w = x[0] + dt * (ta - G * tau_g * 1000.0) / J
    if w < 0.0:
        w = 0.0
    x[0] = w
    x[3] = (x[3] + dt * w) % (2.0 * math.pi)
    return ta


# --------------------------------------------------------------------------
# Python surface
# --------------------------------------------------------------------------

@dataclass
class TurbineState:
    omega_r: float          # rad/s
    theta: float = 0.0      # deg
    theta_dot: float = 0.0  # deg/s
    azimuth: float = 0.0    # rad

    def as_array(self) -> np.ndarray:
        return np.array([self.omega_r, self.theta, self.theta_dot, self.azimuth])

    @classmethod
    def from_array(cls, x) -> "TurbineState":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]))

    def omega_g(self, params: TurbineParams) -> float:
        """Generator speed in rpm."""
        return self.omega_r * params.gearbox / RPM


@dataclass
class LoadOutputs:
    thrust: float                   # kN
    flap: tuple                     # kN m, per blade
    tower_fa: float                 # kN m
    aero_power: float               # kW
    gen_power: float                # kW


def aero_coeffs(lam: float, theta: float, params: TurbineParams | None = None):
    """(Cp, Ct) for tip-speed ratio ``lam`` and pitch ``theta`` (deg)."""
    aero = (params or default_params()).aero_array
    return cp_ct(float(lam), float(theta), aero)


def loads(u: float, theta: float, omega_r: float, azimuth: float,
          params: TurbineParams, tau_g: float = 0.0) -> LoadOutputs:
    out = np.empty(5)
    blade_loads(u, theta, omega_r, azimuth, params.aero_array, params.air_density,
                params.rotor_radius, params.hub_height, params.flap_arm,
                params.flap_1p, params.flap_3p, out)
    ta = aero_torque(omega_r, u, theta, params.aero_array, params.air_density,
                     params.rotor_radius, 0.01 * params.omega_r0)
    return LoadOutputs(
        thrust=out[0], flap=(out[1], out[2], out[3]), tower_fa=out[4],
        aero_power=ta * omega_r / 1000.0,
        gen_power=params.generator_efficiency * tau_g * omega_r * params.gearbox,
    )


def plant_step(state: TurbineState, theta_c: float, tau_g: float, u: float, dt: float,
               params: TurbineParams) -> tuple[TurbineState, LoadOutputs]:
    """Advance the plant one step; ``theta_c`` deg, ``tau_g`` kN m, ``u`` m/s."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not all(math.isfinite(v) for v in (theta_c, tau_g, u)):
        raise ValueError("non-finite plant input")
    x = state.as_array()
    plant_step_kernel(x, theta_c, tau_g, u, dt, params.aero_array, params.air_density,
                      params.rotor_radius, params.J_tot, params.gearbox,
                      2.0 * math.pi * params.actuator_cutoff, params.actuator_damping,
                      params.pitch_rate_limit, 0.01 * params.omega_r0)
    new = TurbineState.from_array(x)
    return new, loads(u, new.theta, new.omega_r, new.azimuth, params, tau_g)


# --------------------------------------------------------------------------
# steady state and calibration
# --------------------------------------------------------------------------

def aero_power_kw(omega_r, u, theta, params: TurbineParams) -> float:
    lam = omega_r * params.rotor_radius / u
    cp, _ = cp_ct(lam, theta, params.aero_array)
    return 0.5 * params.air_density * params.area * u**3 * cp / 1000.0


def optimal_tip_speed(params: TurbineParams, theta: float | None = None) -> tuple[float, float]:
    """(lambda*, Cp_max) at fine pitch."""
    theta = params.theta_fine if theta is None else theta
    aero = params.aero_array
    res = optimize.minimize_scalar(lambda l: -cp_ct(l, theta, aero)[0],
                                   bounds=(2.0, 14.0), method="bounded",
                                   options={"xatol": 1e-8})
    return float(res.x), float(-res.fun)


def optimal_torque_gain(params: TurbineParams) -> float:
    """k_opt in N m / rpm^2 (generator side) for the surrogate's optimum."""
    lam, cpmax = optimal_tip_speed(params)
    k_rad = 0.5 * params.air_density * params.area * params.rotor_radius**3 * cpmax \
        / lam**3 / params.gearbox**3
    return k_rad * RPM**2


@dataclass(frozen=True)
class SteadyPoint:
    u: float
    omega_g: float     # rpm
    theta: float       # deg
    tau: float         # kN m
    power: float       # kW electrical
    region: str


def steady_state(u: float, params: TurbineParams, k_opt: float, R: float = 1.0,
                 theta_min: float | None = None) -> SteadyPoint:
    """Closed-loop equilibrium implied by the torque/pitch control laws.

    Below rated the torque follows k_opt*omega^2; near rated the speed is held at
    R*omega_0 with torque below rated; above rated torque is rated and pitch
    regulates speed.
    """
    theta_min = params.theta_fine if theta_min is None else theta_min
    G = params.gearbox
    w_rat = R * params.omega_0
    eta = params.generator_efficiency

    def torque_gap(wg, theta):
        wr = wg * RPM / G
        ta = aero_power_kw(wr, u, theta, params) / wr  # kN m rotor side
        return ta / G

    def locus(wg):
        return torque_gap(wg, theta_min) - k_opt * wg**2 / 1000.0

    lo, hi = 1.0, 3.0 * params.omega_0
    if locus(lo) <= 0:
        return SteadyPoint(u, 0.0, theta_min, 0.0, 0.0, "stalled")
    # in very strong wind the fine-pitch locus has no root below 3 omega_0;
    # that point lies above rated anyway
    wg = optimize.brentq(locus, lo, hi, xtol=1e-10) if locus(hi) < 0 else hi
    tau = k_opt * wg**2 / 1000.0
    if wg <= w_rat and tau <= params.tau_rated:
        return SteadyPoint(u, wg, theta_min, tau, eta * tau * wg * RPM, "2")
    wg = w_rat
    tau = torque_gap(wg, theta_min)
    if tau <= params.tau_rated:
        return SteadyPoint(u, wg, theta_min, tau, eta * tau * wg * RPM, "2.5")
    tau = params.tau_rated
    f = lambda th: torque_gap(wg, th) - tau
    if f(90.0) > 0:
        raise CalibrationError(f"cannot regulate at u={u}")
    th = optimize.brentq(f, theta_min, 90.0, xtol=1e-10)
    return SteadyPoint(u, wg, th, tau, eta * tau * wg * RPM, "3")


def rated_wind_speed(params: TurbineParams, R: float = 1.0) -> float:
    """Lowest wind speed at which rated torque is reached at R*omega_0 and fine pitch."""
    wr = R * params.omega_r0
    target = params.tau_rated * params.gearbox * wr  # kW at rated torque
    f = lambda u: aero_power_kw(wr, u, params.theta_fine, params) - target
    grid = np.arange(3.0, 30.01, 0.25)
    vals = np.array([f(u) for u in grid])
    above = np.nonzero(vals >= 0)[0]
    if above.size == 0 or above[0] == 0:
        raise CalibrationError("rated power never reached at fine pitch")
    i = above[0]
    return optimize.brentq(f, grid[i - 1], grid[i], xtol=1e-10)


@dataclass(frozen=True)
class Surrogate:
    """Calibrated plant: parameters with fitted aero coefficients plus derived gains."""

    params: TurbineParams
    k_opt: float              # N m / rpm^2
    lambda_opt: float
    cp_max: float
    rated_wind: float         # m/s
    residuals: dict = field(default_factory=dict, compare=False)


def calibrate_surrogate(params: TurbineParams | None = None, rated_wind: float = 11.4,
                        tol: float = 0.3) -> Surrogate:
    """Fit the Cp amplitude so rated power is first reached at ``rated_wind``.

    The shape of the surface (optimum tip-speed ratio, pitch sensitivity) is
    kept; only ``cp_max`` moves. Rated wind speed scales like cp_max**(-1/3),
    so the residual is monotone on the bracket.
    """
    params = params or TurbineParams()
    base = np.asarray(params.aero, dtype=float)

    def with_scale(s):
        a = base.copy()
        a[0] = s
        return replace(params, aero=tuple(a))

    def resid(s):
        try:
            return rated_wind_speed(with_scale(s)) - rated_wind
        except CalibrationError:
            return float("inf")

    try:
        s = optimize.brentq(resid, CP_BRACKET[0], CP_BRACKET[1], xtol=1e-12)
    except ValueError as exc:
        raise CalibrationError(
            f"no cp_max in {CP_BRACKET} reaches rated wind {rated_wind} m/s: "
            f"residuals {resid(CP_BRACKET[0]):+.3f}, {resid(CP_BRACKET[1]):+.3f}") from exc
    p = with_scale(s)
    lam, cpmax = optimal_tip_speed(p)
    k_opt = optimal_torque_gain(p)
    u_rated = rated_wind_speed(p)
    # below-rated tracking check: the k_opt locus must sit at lambda*
    u_chk = 0.75 * u_rated
    sp = steady_state(u_chk, p, k_opt)
    lam_ss = sp.omega_g * RPM / p.gearbox * p.rotor_radius / u_chk
    residuals = {
        "rated_wind": u_rated - rated_wind,
        "lambda_tracking": lam_ss / lam - 1.0,
        "rated_power": p.generator_efficiency * p.rated_mech_power() / p.rated_power - 1.0,
    }
    if abs(residuals["rated_wind"]) > tol or abs(residuals["lambda_tracking"]) > 0.05 \
            or abs(residuals["rated_power"]) > 0.05:
        raise CalibrationError(f"calibration anchors missed: {residuals}")
    if cpmax >= BETZ:
        raise CalibrationError(f"Cp_max {cpmax:.3f} exceeds the Betz limit")
    return Surrogate(p, k_opt, lam, cpmax, u_rated, residuals)


@lru_cache(maxsize=None)
def default_surrogate() -> Surrogate:
    return calibrate_surrogate(TurbineParams())


def default_params() -> TurbineParams:
    return default_surrogate().params
