"""Wind speed estimator: a three-state extended Kalman filter on the rigid
drivetrain model, driven by the measured generator speed."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .signals import ConfigError
from .turbine import RPM, TurbineParams, aero_torque, default_params

U_MIN = 0.5


class EstimatorError(RuntimeError):
    """Covariance could not be kept positive definite."""


@njit(cache=True)
def _symmetrize(P):
    for i in range(3):
        for j in range(i + 1, 3):
            v = 0.5 * (P[i, j] + P[j, i])
            P[i, j] = v
            P[j, i] = v


@njit(cache=True)
def ekf_kernel(x, P, omega_meas, theta, tau_g, aero, rho, radius, J, G, omega_floor,
               q_omega, q_mean, sigma_turb, r_meas, length_scale, dt):
    """One predict/update cycle. Returns the rotor-average estimate, or -1.0
    when the covariance had to be repaired more than once (caller decides)."""
    u = x[1] + x[2]
    if u < U_MIN:
        u = U_MIN
    ta = aero_torque(x[0], u, theta, aero, rho, radius, omega_floor)
    hw = 1e-4 * max(x[0], omega_floor)
    dta_dw = (aero_torque(x[0] + hw, u, theta, aero, rho, radius, omega_floor)
              - aero_torque(x[0] - hw, u, theta, aero, rho, radius, omega_floor)) / (2.0 * hw)
    hu = 1e-3 * u
    dta_du = (aero_torque(x[0], u + hu, theta, aero, rho, radius, omega_floor)
              - aero_torque(x[0], u - hu, theta, aero, rho, radius, omega_floor)) / (2.0 * hu)
    ubar = x[1] if x[1] > U_MIN else U_MIN
    a = math.exp(-dt * ubar / length_scale)

    # predict
    x0 = x[0] + dt * (ta - G * tau_g * 1000.0) / J
    if x0 < 0.0:
        x0 = 0.0
    x2 = a * x[2]
    F = np.zeros((3, 3))
    F[0, 0] = 1.0 + dt * dta_dw / J
    F[0, 1] = dt * dta_du / J
    F[0, 2] = dt * dta_du / J
    F[1, 1] = 1.0
    F[2, 1] = -dt / length_scale * a * x[2] if x[1] > U_MIN else 0.0
    F[2, 2] = a
    P[:, :] = F @ P @ F.T
    P[0, 0] += q_omega * dt
    P[1, 1] += q_mean * dt
    P[2, 2] += sigma_turb * sigma_turb * (1.0 - a * a)
    x[0] = x0
    x[2] = x2

    # update on the generator speed (rpm)
    h = G / RPM
    S = h * h * P[0, 0] + r_meas
    K = np.empty(3)
    for i in range(3):
        K[i] = P[i, 0] * h / S
    innov = omega_meas - h * x[0]
    for i in range(3):
        x[i] += K[i] * innov
    # Joseph form keeps P symmetric positive semi-definite
    A = np.eye(3)
    for i in range(3):
        A[i, 0] -= K[i] * h
    P[:, :] = A @ P @ A.T
    for i in range(3):
        for j in range(3):
            P[i, j] += K[i] * K[j] * r_meas
    _symmetrize(P)
    status = 1.0
    for i in range(3):
        if not (P[i, i] > 0.0) or not math.isfinite(P[i, i]):
            status = -1.0
    if status < 0.0:
        for i in range(3):
            if not math.isfinite(P[i, i]) or P[i, i] <= 0.0:
                P[i, i] = 1e-6
            P[i, i] += 1e-9
    u_hat = x[1] + x[2]
    if u_hat < U_MIN:
        u_hat = U_MIN
    return u_hat * status


@dataclass(frozen=True)
class EkfConfig:
    q_omega: float = 1e-7          # (rad/s)^2 per s, rotor-speed model error
    q_mean: float = 5e-4           # (m/s)^2 per s, random walk of the mean wind
    sigma_turb: float = 0.7        # m/s, stationary std of the turbulent state
    meas_std: float = 1.0          # rpm, generator speed measurement noise
    length_scale: float = 150.0    # m, tau_u = L / u_mean
    p0: tuple = (1e-4, 1.0, 1.0)   # initial covariance diagonal

    def __post_init__(self):
        for name in ("q_omega", "q_mean", "sigma_turb", "meas_std", "length_scale"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"EKF {name} must be positive")
        if any(v <= 0 for v in self.p0):
            raise ConfigError("initial covariance must be positive")

    @property
    def r_meas(self) -> float:
        return self.meas_std**2


class WindSpeedEstimator:
    """Stateful EKF; ``step`` returns the rotor-average wind estimate in m/s."""

    def __init__(self, cfg: EkfConfig | None = None, params: TurbineParams | None = None,
                 dt: float = 0.01, omega_g0: float = 1174.0, u0: float = 10.0):
        self.cfg = cfg or EkfConfig()
        self.params = params or default_params()
        self.dt = float(dt)
        self.aero = self.params.aero_array
        self.x = np.array([omega_g0 * RPM / self.params.gearbox, u0, 0.0])
        self.P = np.diag(np.asarray(self.cfg.p0, dtype=float))
        self.repairs = 0

    @property
    def u_hat(self) -> float:
        return max(self.x[1] + self.x[2], U_MIN)

    def step(self, omega_g_meas: float, theta: float, tau_g: float) -> float:
        if not all(math.isfinite(v) for v in (omega_g_meas, theta, tau_g)):
            raise ValueError("non-finite estimator input")
        p, c = self.params, self.cfg
        out = ekf_kernel(self.x, self.P, float(omega_g_meas), float(theta), float(tau_g),
                         self.aero, p.air_density, p.rotor_radius, p.J_tot, p.gearbox,
                         0.01 * p.omega_r0, c.q_omega, c.q_mean, c.sigma_turb, c.r_meas,
                         c.length_scale, self.dt)
        if out < 0:
            self.repairs += 1
            if self.repairs > 10:
                raise EstimatorError("EKF covariance repeatedly lost positive definiteness")
            out = -out
        return out


def write_trace(path, time, u_true, u_hat, p_diag=None) -> None:
    """Estimator trace as CSV: time, truth, estimate and optionally diag(P)."""
    cols = [np.asarray(time, float), np.asarray(u_true, float), np.asarray(u_hat, float)]
    header = ["time_s", "u_true", "u_hat"]
    if p_diag is not None:
        pd = np.asarray(p_diag, float)
        cols += [pd[:, 0], pd[:, 1], pd[:, 2]]
        header += ["P_omega", "P_mean", "P_turb"]
    n = cols[0].size
    if any(c.size != n for c in cols):
        raise ValueError("trace columns differ in length")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([f"{v:.6g}" for v in row])


def ekf_step(est: WindSpeedEstimator, omega_g_meas, theta, tau_g) -> float:
    return est.step(omega_g_meas, theta, tau_g)


def rde(u_true, u_est) -> float:
    """Explained-variance score 1 - var(err)/var(u_true - mean)."""
    a = np.asarray(getattr(u_true, "samples", u_true), dtype=float)
    b = np.asarray(getattr(u_est, "samples", u_est), dtype=float)
    if a.shape != b.shape:
        raise ValueError("series lengths differ")
    var = np.var(a)
    if var == 0:
        raise ValueError("truth has zero variance; RDE undefined")
    return 1.0 - np.var(a - b) / var


def estimate_lag(u_true, u_est, dt: float, max_lag: float = 10.0) -> float:
    """Lag (s) of the cross-correlation peak; positive when the estimate trails."""
    a = np.asarray(getattr(u_true, "samples", u_true), dtype=float)
    b = np.asarray(getattr(u_est, "samples", u_est), dtype=float)
    a = a - a.mean()
    b = b - b.mean()
    n = int(round(max_lag / dt))
    lags = np.arange(-n, n + 1)
    cc = np.array([np.dot(a[max(0, -k):a.size - max(0, k)], b[max(0, k):b.size - max(0, -k)])
                   for k in lags])
    return float(lags[int(np.argmax(cc))] * dt)
