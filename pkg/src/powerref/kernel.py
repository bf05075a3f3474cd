"""Compiled closed-loop simulation loop.

Every controller block is called through its numba kernel so a 600 s run at
dt = 0.01 s takes a fraction of a second. Configuration arrives as a flat
named tuple built by :mod:`powerref.harness`.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from numba import njit

from .pictrl import pitch_pi_kernel, torque_pi_kernel, torque_regime_kernel
from .prc import collective_load_kernel, derate_kernel, gust_kernel
from .setpoint import spc_kernel
from .signals import biquad_reset, biquad_step, lpf2_coeffs, notch_coeffs, pchip_eval, ring_push
from .turbine import RPM, blade_loads, plant_step_kernel
from .wse import ekf_kernel

# recorded channels, in order
CHANNELS = ("t", "u", "u_hat", "omega_g_rpm", "theta_deg", "tau_kNm", "P_kW", "R", "Rmax",
            "mode", "T_kN", "mby1_kNm", "mFA_kNm", "mby2_kNm", "mby3_kNm", "du1",
            "omega_hat", "m_hat", "m0_kNm", "theta_min", "omega_tau", "omega_theta",
            "theta_cmd")
NCH = len(CHANNELS)
CH = {name: i for i, name in enumerate(CHANNELS)}

# summary slots filled by the kernel (statistics after the discard window)
SUMMARY = ("mean_power", "max_omega_g", "max_flap", "max_thrust", "max_m0", "derate_time",
           "mean_R", "max_theta_rate")
NSUM = len(SUMMARY)


class SimParams(NamedTuple):
    dt: float
    # plant
    aero: np.ndarray
    rho: float
    radius: float
    J: float
    G: float
    wn_act: float
    zeta_act: float
    rate_limit: float
    omega_floor: float
    hub_height: float
    flap_arm: float
    flap_1p: float
    flap_3p: float
    eta: float
    # pitch PI
    kp_theta: float
    ki_theta: float
    theta_k: float
    # torque PI
    kp_tau: float
    ki_tau: float
    k_opt: float
    omega_min: float
    tau_rated: float
    ref_torque: bool
    # set point smoothing and power control
    spc_on: bool
    g1: float
    g2: float
    spc_tau: float
    omega_0: float
    theta_fine: float
    fpc_x: np.ndarray
    fpc_y: np.ndarray
    fpc_d: np.ndarray
    # peak shaving
    mpps_on: bool
    mpps_tau: float
    mpps_x: np.ndarray
    mpps_y: np.ndarray
    mpps_d: np.ndarray
    # slow reference
    prc0_on: bool
    prc0_tau: float
    rmax_x: np.ndarray
    rmax_y: np.ndarray
    rmax_d: np.ndarray
    r_const: float
    # transient reference
    prc1_on: bool
    gust_steps: int
    n_delays: int
    w0: float
    d_omega: float
    d_m: float
    k_omega: float
    k_m: float
    omega_lim: float
    m_lim: float
    r_floor: float
    min_dwell: float
    absolute: bool
    notch_width: float
    notch_depth: float
    load_tau: float
    w3p_tau: float
    # estimator
    use_wse: bool
    q_omega: float
    q_mean: float
    sigma_turb: float
    r_meas: float
    length_scale: float
    p0: np.ndarray
    # initial condition
    omega_g0: float
    theta0: float
    tau0: float
    # bookkeeping
    discard_steps: int
    stride: int


@njit(cache=True)
def ref_torque_law(omega_g, theta, k_opt, tau_rated, omega_0):
    """Reference-style torque: optimal locus, 10 % slip ramp, constant power."""
    rated_speed = 0.99 * omega_0
    sync = rated_speed / 1.1
    rated_torque = tau_rated * omega_0 / rated_speed
    slope = rated_torque / (rated_speed - sync)
    if omega_g >= rated_speed or theta >= 1.0:
        return tau_rated * omega_0 / max(omega_g, 1.0)
    opt = k_opt * omega_g * omega_g / 1000.0
    ramp = slope * (omega_g - sync)
    if ramp < opt and omega_g > sync:
        return ramp
    return opt


@njit(cache=True)
def simulate(p, wind, noise, rec, summary, snapshot):
    """Run the loop over ``wind``; returns -1 on success or the failing step."""
    n = wind.shape[0]
    dt = p.dt
    G = p.G

    # plant
    x = np.empty(4)
    x[0] = p.omega_g0 * RPM / G
    x[1] = p.theta0
    x[2] = 0.0
    x[3] = 0.0
    loads = np.empty(5)
    blade_loads(wind[0], x[1], x[0], x[3], p.aero, p.rho, p.radius, p.hub_height,
                p.flap_arm, p.flap_1p, p.flap_3p, loads)
    tau = p.tau0

    # controllers
    pitch_st = np.array([p.theta0 * math.pi / 180.0, 0.0])
    torque_st = np.array([p.tau0, 0.0])
    c_spc = np.empty(5)
    s_spc = np.zeros(2)
    lpf2_coeffs(p.spc_tau, dt, c_spc)
    bias0 = p.g1 * max(p.theta0 - p.theta_fine, 0.0) - p.g2 * (p.tau_rated - p.tau0)
    biquad_reset(c_spc, s_spc, bias0)

    u0 = wind[0]
    c_mpps = np.empty(5)
    s_mpps = np.zeros(2)
    lpf2_coeffs(p.mpps_tau, dt, c_mpps)
    biquad_reset(c_mpps, s_mpps, u0)
    c_prc0 = np.empty(5)
    s_prc0 = np.zeros(2)
    lpf2_coeffs(p.prc0_tau, dt, c_prc0)
    biquad_reset(c_prc0, s_prc0, u0)

    nbuf = p.n_delays * p.gust_steps + 1
    gbuf = np.zeros(nbuf)
    gmeta = np.zeros(2, dtype=np.int64)
    m_init = (loads[1] + loads[2] + loads[3]) / 3.0
    c_notch = np.empty(5)
    s_notch = np.zeros(2)
    c_lp = np.empty(5)
    s_lp = np.zeros(2)
    c_w3 = np.empty(5)
    s_w3 = np.zeros(2)
    lpf2_coeffs(p.load_tau, dt, c_lp)
    lpf2_coeffs(p.w3p_tau, dt, c_w3)
    w3p0 = 3.0 * x[0]
    biquad_reset(c_w3, s_w3, w3p0)
    notch_coeffs(max(w3p0, 1e-3), p.notch_width, p.notch_depth, dt, c_notch)
    biquad_reset(c_notch, s_notch, m_init)
    biquad_reset(c_lp, s_lp, m_init)
    auto = np.zeros(2)

    xe = np.array([x[0], u0, 0.0])
    Pe = np.zeros((3, 3))
    for i in range(3):
        Pe[i, i] = p.p0[i]

    sum_p = 0.0
    cnt = 0
    max_w = 0.0
    max_flap = 0.0
    max_thrust = 0.0
    max_m0 = 0.0
    derate_steps = 0
    sum_r = 0.0
    max_rate = 0.0
    theta_prev = x[1]

    for k in range(n):
        u = wind[k]
        omega_g = x[0] * G / RPM
        theta_meas = x[1]

        # wind speed estimate
        if p.use_wse:
            u_hat = ekf_kernel(xe, Pe, omega_g + noise[k], theta_meas, tau, p.aero, p.rho,
                               p.radius, p.J, G, p.omega_floor, p.q_omega, p.q_mean,
                               p.sigma_turb, p.r_meas, p.length_scale, dt)
            if u_hat < 0.0:
                u_hat = -u_hat
        else:
            u_hat = u

        # peak shaving and slow reference
        theta_ps = p.theta_fine
        if p.mpps_on:
            theta_ps = pchip_eval(p.mpps_x, p.mpps_y, p.mpps_d,
                                  biquad_step(c_mpps, s_mpps, u_hat))
        if p.prc0_on:
            rmax = pchip_eval(p.rmax_x, p.rmax_y, p.rmax_d, biquad_step(c_prc0, s_prc0, u_hat))
        else:
            rmax = p.r_const

        # transient reference
        du = 0.0
        w_hat = omega_g
        m0 = 0.0
        m_hat = 0.0
        R = rmax
        if p.prc1_on:
            ring_push(gbuf, gmeta, u_hat)
            du = gust_kernel(gbuf, gmeta, p.n_delays, p.gust_steps, p.w0)
            m0 = collective_load_kernel(loads[1], loads[2], loads[3], omega_g, G, c_notch,
                                        s_notch, p.notch_width, p.notch_depth, c_lp, s_lp,
                                        c_w3, s_w3, dt)
            w_hat = omega_g + p.d_omega * du
            m_hat = m0 + p.d_m * du
            R, _, _ = derate_kernel(auto, w_hat, m_hat, rmax, p.k_omega, p.k_m, p.omega_lim,
                                    p.m_lim, p.r_floor, p.min_dwell, p.absolute, dt)
        if R > 1.2:
            R = 1.2

        # power controller
        omega_rat = R * p.omega_0
        if R >= 1.0:
            theta_pc = p.theta_fine
        else:
            theta_pc = pchip_eval(p.fpc_x, p.fpc_y, p.fpc_d, R)
        theta_min = theta_pc if theta_pc > theta_ps else theta_ps

        # set point smoothing
        if p.spc_on:
            w_tau, w_theta, _ = spc_kernel(c_spc, s_spc, theta_meas, theta_pc, tau,
                                           p.tau_rated, omega_rat, p.g1, p.g2)
        else:
            w_tau = omega_rat
            w_theta = omega_rat

        # PI loops
        theta_c = pitch_pi_kernel(pitch_st, omega_g, w_theta, theta_meas, theta_min,
                                  p.kp_theta, p.ki_theta, p.theta_k, dt)
        if p.ref_torque:
            tau = ref_torque_law(omega_g, theta_meas, p.k_opt, p.tau_rated, p.omega_0)
        else:
            sp, lo, hi = torque_regime_kernel(omega_g, w_tau, p.omega_min, p.k_opt,
                                              p.tau_rated)
            tau = torque_pi_kernel(torque_st, omega_g, sp, lo, hi, p.kp_tau, p.ki_tau, dt)

        # plant
        plant_step_kernel(x, theta_c, tau, u, dt, p.aero, p.rho, p.radius, p.J, G, p.wn_act,
                          p.zeta_act, p.rate_limit, p.omega_floor)
        blade_loads(u, x[1], x[0], x[3], p.aero, p.rho, p.radius, p.hub_height, p.flap_arm,
                    p.flap_1p, p.flap_3p, loads)

        omega_new = x[0] * G / RPM
        power = p.eta * tau * x[0] * G
        ok = math.isfinite(omega_new) and math.isfinite(x[1]) and math.isfinite(tau) \
            and math.isfinite(u_hat) and math.isfinite(R)
        if not ok:
            return k
        snapshot[0] = k
        snapshot[1] = x[0]
        snapshot[2] = x[1]
        snapshot[3] = x[2]
        snapshot[4] = x[3]
        snapshot[5] = tau
        snapshot[6] = R
        snapshot[7] = u_hat

        if k >= p.discard_steps:
            sum_p += power
            sum_r += R
            cnt += 1
            if omega_new > max_w:
                max_w = omega_new
            for b in range(1, 4):
                if loads[b] > max_flap:
                    max_flap = loads[b]
            if loads[0] > max_thrust:
                max_thrust = loads[0]
            if m0 > max_m0:
                max_m0 = m0
            if auto[0] == 1:
                derate_steps += 1
            rate = abs(x[1] - theta_prev) / dt
            if rate > max_rate:
                max_rate = rate
        theta_prev = x[1]

        if k % p.stride == 0:
            j = k // p.stride
            if j < rec.shape[0]:
                rec[j, 0] = (k + 1) * dt
                rec[j, 1] = u
                rec[j, 2] = u_hat
                rec[j, 3] = omega_new
                rec[j, 4] = x[1]
                rec[j, 5] = tau
                rec[j, 6] = power
                rec[j, 7] = R
                rec[j, 8] = rmax
                rec[j, 9] = auto[0]
                rec[j, 10] = loads[0]
                rec[j, 11] = loads[1]
                rec[j, 12] = loads[4]
                rec[j, 13] = loads[2]
                rec[j, 14] = loads[3]
                rec[j, 15] = du
                rec[j, 16] = w_hat
                rec[j, 17] = m_hat
                rec[j, 18] = m0
                rec[j, 19] = theta_min
                rec[j, 20] = w_tau
                rec[j, 21] = w_theta
                rec[j, 22] = theta_c

    if cnt > 0:
        summary[0] = sum_p / cnt
        summary[6] = sum_r / cnt
    summary[1] = max_w
    summary[2] = max_flap
    summary[3] = max_thrust
    summary[4] = max_m0
    summary[5] = derate_steps * dt
    summary[7] = max_rate
    return -1
