"""Controller presets, configuration, single runs, seeded campaigns and the
R^max tuning loop."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import kernel
from .pictrl import PitchPiConfig, TorquePiConfig, retune_pitch_gains
from .prc import (OMEGA_HARD_LIMIT, GustConfig, LoadFilterConfig, Prc0Config, TransientConfig,
                  constant_table, validate_prc)
from .setpoint import MppsConfig, SpcConfig, calibrate_fpc, default_fpc
from .signals import ConfigError, LookupTable1D
from .turbine import Surrogate, TurbineParams, calibrate_surrogate, default_surrogate, \
    steady_state
from .wind import SiteDistribution, WindSeries, default_bins, gen_turbulence, weibull_weight
from .wse import EkfConfig

PRESET_NAMES = ("REF", "BL-1.000", "BL-1.050", "PR-1.100", "PR-1.150", "custom")
DLC_CODES = {"NTM": 12, "ETM": 13}
REF_PITCH = PitchPiConfig(kp=0.01882681, ki=0.008068634, theta_k=6.302336)


class SimulationError(RuntimeError):
    """A run produced a non-finite state."""

    def __init__(self, step: int, snapshot: dict):
        super().__init__(f"non-finite state at step {step}; last good state {snapshot}")
        self.step = step
        self.snapshot = snapshot


# --------------------------------------------------------------------------
# shipped tables
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def shipped_tables() -> dict:
    text = resources.files("powerref").joinpath("data/tables.yaml").read_text()
    raw = yaml.safe_load(text)
    return {k: LookupTable1D.from_dict(v) for k, v in raw.items()}


# --------------------------------------------------------------------------
# presets and configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ControllerPreset:
    name: str
    mpps: bool = False
    prc0: bool = False
    prc1: bool = False
    omega_reg: float = 0.275
    rmax_table: LookupTable1D | None = None
    r_const: float = 1.0
    use_wse: bool = True
    reference: bool = False            # reference-style controller without SPC/PC
    allow_steady_derating: bool = False

    def __post_init__(self):
        if self.name not in PRESET_NAMES:
            raise ConfigError(f"unknown preset {self.name!r}; choose from {PRESET_NAMES}")
        if self.prc0 and self.rmax_table is None:
            raise ConfigError("PRC0 enabled without an R^max table")
        if not 0.5 <= self.r_const <= 1.2:
            raise ConfigError("constant R^max must lie in [0.5, 1.2]")
        if self.omega_reg <= 0:
            raise ConfigError("omega_reg must be positive")

    @property
    def rmax_peak(self) -> float:
        if self.prc0:
            return float(np.max(self.rmax_table.values))
        return self.r_const

    def describe(self) -> str:
        parts = [f"omega_reg={self.omega_reg}"]
        parts += [n for n, on in (("MPPS", self.mpps), ("PRC0", self.prc0), ("PRC1", self.prc1))
                  if on]
        if not self.prc0:
            parts.append(f"Rmax={self.r_const}")
        return f"{self.name}: " + ", ".join(parts)


def preset(name: str, **overrides) -> ControllerPreset:
    """Named controller configuration; keyword overrides build a variant."""
    tables = shipped_tables()
    base = {
        "REF": dict(reference=True, use_wse=False),
        "BL-1.000": dict(use_wse=False),
        "BL-1.050": dict(mpps=True, prc0=True, omega_reg=0.4, rmax_table=tables["BL-1.050"]),
        "PR-1.100": dict(mpps=True, prc1=True, r_const=1.10),
        "PR-1.150": dict(mpps=True, prc0=True, prc1=True, rmax_table=tables["PR-1.150"],
                         allow_steady_derating=True),
        "custom": dict(),
    }
    if name not in base:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    kw = dict(base[name])
    kw.update(overrides)
    return ControllerPreset(name=name, **kw)


@dataclass(frozen=True)
class SimConfig:
    """Everything except the controller toggles: plant, block settings, timing."""

    surrogate: Surrogate = field(default_factory=default_surrogate)
    pitch: PitchPiConfig = field(default_factory=PitchPiConfig)
    torque: TorquePiConfig | None = None
    spc: SpcConfig = field(default_factory=SpcConfig)
    fpc: LookupTable1D | None = None
    mpps: MppsConfig = field(default_factory=MppsConfig)
    prc0_time_constant: float = 100.0
    gust: GustConfig = field(default_factory=GustConfig)
    load_filter: LoadFilterConfig = field(default_factory=LoadFilterConfig)
    transient: TransientConfig = field(default_factory=TransientConfig)
    ekf: EkfConfig = field(default_factory=EkfConfig)
    dt: float = 0.01
    discard: float = 60.0
    stride: int = 1

    def __post_init__(self):
        if self.dt <= 0 or self.discard < 0 or self.stride < 1:
            raise ConfigError("dt must be positive, discard non-negative and stride >= 1")
        if self.torque is None:
            p = self.surrogate.params
            object.__setattr__(self, "torque", TorquePiConfig(
                k_opt=self.surrogate.k_opt, omega_min=p.omega_min, tau_rated=p.tau_rated))
        if self.fpc is None:
            fpc = default_fpc() if self.surrogate is default_surrogate() \
                else calibrate_fpc(self.surrogate)
            object.__setattr__(self, "fpc", fpc)

    @property
    def params(self) -> TurbineParams:
        return self.surrogate.params


def _table_arrays(t: LookupTable1D):
    return (np.ascontiguousarray(t.breakpoints), np.ascontiguousarray(t.values),
            np.ascontiguousarray(t.slopes))


def initial_point(u0: float, pre: ControllerPreset, cfg: SimConfig):
    """Steady operating point used to start a run at the first wind sample."""
    if pre.reference:
        r0 = 1.0
    elif pre.prc0:
        r0 = min(float(pre.rmax_table(u0)), 1.2)
    else:
        r0 = pre.r_const
    theta_min = cfg.params.theta_fine
    if pre.mpps and not pre.reference:
        theta_min = max(theta_min, cfg.mpps.table(u0))
    # start no faster than the de-rating threshold so runs do not open in a transient
    if pre.prc1:
        r0 = min(r0, cfg.transient.omega_lim / cfg.params.omega_0)
    sp = steady_state(u0, cfg.params, cfg.torque.k_opt, R=r0, theta_min=theta_min)
    if sp.omega_g <= 0:
        sp = steady_state(max(u0, 4.0), cfg.params, cfg.torque.k_opt, R=r0,
                          theta_min=theta_min)
    return sp


def build_params(pre: ControllerPreset, cfg: SimConfig, u0: float, n_steps: int) -> kernel.SimParams:
    p = cfg.params
    pitch = REF_PITCH if pre.reference else retune_pitch_gains(cfg.pitch, pre.omega_reg) \
        if pre.omega_reg != cfg.pitch.omega_reg else cfg.pitch
    steps = cfg.gust.delay / cfg.dt
    if abs(steps - round(steps)) > 1e-6:
        raise ConfigError("gust delay spacing must be a multiple of dt")
    rmax_tab = pre.rmax_table if pre.rmax_table is not None else constant_table(pre.r_const)
    fx, fy, fd = _table_arrays(cfg.fpc)
    mx, my, md = _table_arrays(cfg.mpps.table)
    rx, ry, rd = _table_arrays(rmax_tab)
    sp = initial_point(u0, pre, cfg)
    ekf = cfg.ekf
    t = cfg.transient
    lf = cfg.load_filter
    return kernel.SimParams(
        dt=float(cfg.dt), aero=p.aero_array, rho=p.air_density, radius=p.rotor_radius,
        J=p.J_tot, G=p.gearbox, wn_act=2.0 * math.pi * p.actuator_cutoff,
        zeta_act=p.actuator_damping, rate_limit=p.pitch_rate_limit,
        omega_floor=0.01 * p.omega_r0, hub_height=p.hub_height, flap_arm=p.flap_arm,
        flap_1p=p.flap_1p, flap_3p=p.flap_3p, eta=p.generator_efficiency,
        kp_theta=pitch.kp, ki_theta=pitch.ki, theta_k=pitch.theta_k,
        kp_tau=cfg.torque.kp, ki_tau=cfg.torque.ki, k_opt=cfg.torque.k_opt,
        omega_min=cfg.torque.omega_min, tau_rated=cfg.torque.tau_rated,
        ref_torque=pre.reference,
        spc_on=not pre.reference, g1=cfg.spc.g1, g2=cfg.spc.g2, spc_tau=cfg.spc.time_constant,
        omega_0=p.omega_0, theta_fine=p.theta_fine, fpc_x=fx, fpc_y=fy, fpc_d=fd,
        mpps_on=pre.mpps and not pre.reference, mpps_tau=cfg.mpps.time_constant,
        mpps_x=mx, mpps_y=my, mpps_d=md,
        prc0_on=pre.prc0 and not pre.reference, prc0_tau=cfg.prc0_time_constant,
        rmax_x=rx, rmax_y=ry, rmax_d=rd, r_const=1.0 if pre.reference else pre.r_const,
        prc1_on=pre.prc1 and not pre.reference, gust_steps=int(round(steps)),
        n_delays=cfg.gust.n_delays, w0=cfg.gust.w0, d_omega=t.d_omega, d_m=t.d_m,
        k_omega=t.k_omega, k_m=t.k_m, omega_lim=t.omega_lim, m_lim=t.m_lim,
        r_floor=t.r_floor, min_dwell=t.min_dwell, absolute=t.decrement == "absolute",
        notch_width=lf.notch_width, notch_depth=lf.notch_depth, load_tau=lf.lowpass,
        w3p_tau=lf.speed_filter,
        use_wse=pre.use_wse, q_omega=ekf.q_omega, q_mean=ekf.q_mean,
        sigma_turb=ekf.sigma_turb, r_meas=ekf.r_meas, length_scale=ekf.length_scale,
        p0=np.asarray(ekf.p0, dtype=float),
        omega_g0=sp.omega_g, theta0=sp.theta, tau0=sp.tau,
        discard_steps=int(round(cfg.discard / cfg.dt)), stride=int(cfg.stride),
    )


def check_preset(pre: ControllerPreset, cfg: SimConfig, gfact: float | None = None) -> None:
    """Configuration-time consistency of the power reference stack."""
    if pre.prc1:
        prc0 = Prc0Config(pre.rmax_table if pre.prc0 else constant_table(pre.r_const),
                          cfg.prc0_time_constant)
        validate_prc(prc0, cfg.transient, cfg.params.omega_0, gfact=gfact,
                     allow_steady_derating=pre.allow_steady_derating)


# --------------------------------------------------------------------------
# single runs
# --------------------------------------------------------------------------

@dataclass
class RunResult:
    preset: str
    wind_label: str
    seed: int | None
    mean_wind: float
    dt: float
    stride: int
    data: np.ndarray
    summary: dict

    def __getitem__(self, channel: str) -> np.ndarray:
        return self.data[:, kernel.CH[channel]]

    @property
    def time(self) -> np.ndarray:
        return self["t"]

    def to_csv(self, path) -> None:
        cols = kernel.CHANNELS[:13]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(cols)
            for row in self.data[:, :13]:
                w.writerow([f"{v:.6g}" for v in row])


def run_single(pre: ControllerPreset, wind: WindSeries, cfg: SimConfig | None = None,
               noise_seed: int | None = None, check: bool = True) -> RunResult:
    """Simulate one preset on one wind record.

    Generator-speed measurement noise for the estimator is drawn from
    ``noise_seed`` (defaults to the wind seed), so a run is a pure function of
    its inputs.
    """
    cfg = cfg or SimConfig()
    if abs(wind.dt - cfg.dt) > 1e-12:
        raise ConfigError(f"wind dt {wind.dt} differs from simulation dt {cfg.dt}")
    if check:
        check_preset(pre, cfg)
    u = np.ascontiguousarray(wind.samples, dtype=float)
    n = u.size
    seed = noise_seed if noise_seed is not None else (wind.seed or 0)
    noise = np.random.default_rng(seed).normal(0.0, cfg.ekf.meas_std, n)
    sp = build_params(pre, cfg, float(u[0]), n)
    rec = np.zeros(((n + cfg.stride - 1) // cfg.stride, kernel.NCH))
    summ = np.zeros(kernel.NSUM)
    snap = np.zeros(8)
    status = kernel.simulate(sp, u, noise, rec, summ, snap)
    if status >= 0:
        keys = ("step", "omega_r", "theta", "theta_dot", "azimuth", "tau", "R", "u_hat")
        raise SimulationError(int(status), dict(zip(keys, snap.tolist())))
    summary = dict(zip(kernel.SUMMARY, summ.tolist()))
    return RunResult(pre.name, wind.label, wind.seed, wind.mean, cfg.dt, cfg.stride, rec,
                     summary)


# --------------------------------------------------------------------------
# campaigns
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CampaignConfig:
    bins: tuple = tuple(float(b) for b in default_bins())
    seeds: int = 6
    seed_base: int = 0
    duration: float = 600.0
    dt: float = 0.01
    discard: float = 60.0
    dlc: str = "NTM"
    presets: tuple = ("BL-1.000", "BL-1.050", "PR-1.100", "PR-1.150")
    out_dir: str | None = None
    workers: int = 1
    site: SiteDistribution = field(default_factory=SiteDistribution)

    def __post_init__(self):
        if self.seeds < 1:
            raise ConfigError("at least one seed per bin is required")
        if self.dlc not in DLC_CODES:
            raise ConfigError(f"dlc must be one of {tuple(DLC_CODES)}")
        if self.duration <= self.discard:
            raise ConfigError("duration must exceed the discard window")
        for b in self.bins:
            if not self.site.cut_in <= b <= self.site.cut_out:
                raise ConfigError(f"wind bin {b} outside [cut-in, cut-out]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def weights(self) -> np.ndarray:
        return weibull_weight(self.site, self.bins)


def wind_seed(bin_center: float, seed: int, dlc: str, seed_base: int = 0) -> int:
    """Independent stream per (bin, seed, DLC), shared by every preset."""
    ss = np.random.SeedSequence([seed_base, int(round(bin_center * 100)), seed, DLC_CODES[dlc]])
    return int(ss.generate_state(1)[0])


def campaign_wind(bin_center: float, seed: int, cfg: CampaignConfig) -> WindSeries:
    return gen_turbulence(bin_center, cfg.dlc, wind_seed(bin_center, seed, cfg.dlc,
                                                         cfg.seed_base),
                          cfg.duration, cfg.dt)


@dataclass
class CellResult:
    preset: str
    bin: float
    seed: int
    summary: dict | None = None
    fa_damage: float = math.nan       # sum(count * range^4) of the tower FA moment
    flap_damage: float = math.nan     # sum(count * range^10) of blade 1 flap
    omega_peak_ubar: float = math.nan  # 100 s filtered wind estimate at the speed maximum
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _ubar_at_peak(res: RunResult, tau: float) -> float:
    from scipy.signal import lfilter, lfilter_zi
    from .signals import lpf2_coeffs
    dt = res.dt * res.stride
    c = np.empty(5)
    lpf2_coeffs(tau, dt, c)
    b, a = c[:3], np.array([1.0, c[3], c[4]])
    x = res["u_hat"]
    y, _ = lfilter(b, a, x, zi=lfilter_zi(b, a) * x[0])
    skip = int(round(60.0 / dt))
    w = res["omega_g_rpm"]
    i = skip + int(np.argmax(w[skip:])) if w.size > skip else int(np.argmax(w))
    return float(y[i])


def _run_cell(task):
    """Worker: all presets on one (bin, seed) wind record."""
    from .analysis import BLADE_WOHLER, TOWER_WOHLER, rainflow
    bin_center, seed, presets, ccfg, scfg = task
    wind = campaign_wind(bin_center, seed, ccfg)
    out = []
    skip = int(round(scfg.discard / scfg.dt))
    for pre in presets:
        cell = CellResult(pre.name if pre.name != "custom" else "custom", bin_center, seed)
        try:
            res = run_single(pre, wind, scfg, check=False)
            cell.summary = res.summary
            cell.fa_damage = rainflow(res["mFA_kNm"][skip:]).damage_sum(TOWER_WOHLER)
            cell.flap_damage = rainflow(res["mby1_kNm"][skip:]).damage_sum(BLADE_WOHLER)
            cell.omega_peak_ubar = _ubar_at_peak(res, scfg.prc0_time_constant)
        except Exception as exc:  # recorded per cell, the campaign carries on
            cell.error = f"{type(exc).__name__}: {exc}"
        out.append(cell)
    return out


@dataclass
class CampaignSummary:
    config: CampaignConfig
    labels: tuple
    cells: list

    def cell_list(self, label: str) -> list[CellResult]:
        return [c for c in self.cells if c.preset == label]

    def failures(self) -> list[CellResult]:
        return [c for c in self.cells if not c.ok]

    def _by_bin(self, label: str, key):
        groups = {}
        for c in self.cell_list(label):
            if not c.ok:
                continue
            groups.setdefault(c.bin, []).append(key(c))
        missing = [b for b in self.config.bins if b not in groups]
        if missing:
            raise ValueError(f"{label}: no successful runs in bins {missing}")
        return groups

    def power_per_bin(self, label: str) -> np.ndarray:
        g = self._by_bin(label, lambda c: c.summary["mean_power"])
        return np.array([np.mean(g[b]) for b in self.config.bins])

    def lifetime_power(self, label: str) -> float:
        from .analysis import aep
        return aep(self.power_per_bin(label), self.config.weights)

    def capacity_factor(self, label: str) -> float:
        from .analysis import gross_capacity_factor
        return gross_capacity_factor(self.power_per_bin(label), self.config.site,
                                     self.config.bins)

    def max_of(self, label: str, key: str) -> float:
        return max(c.summary[key] for c in self.cell_list(label) if c.ok)

    def characteristic_of(self, label: str, key: str) -> float:
        from .analysis import characteristic
        return characteristic(self._by_bin(label, lambda c: c.summary[key]))

    def tower_del(self, label: str) -> float:
        from .analysis import LIFETIME_S, TOWER_WOHLER, damage_equivalent_load
        g = self._by_bin(label, lambda c: c.fa_damage)
        scale = LIFETIME_S / (self.config.duration - self.config.discard)
        return damage_equivalent_load([g[b] for b in self.config.bins], TOWER_WOHLER,
                                      self.config.weights, scale)

    def violations(self, label: str, limit: float = OMEGA_HARD_LIMIT) -> list[CellResult]:
        return [c for c in self.cell_list(label)
                if c.ok and c.summary["max_omega_g"] > limit]

    def table(self, baseline: str | None = None) -> list[dict]:
        """One row per preset mirroring the summary-of-results columns."""
        baseline = baseline or ("BL-1.000" if "BL-1.000" in self.labels else self.labels[0])
        metrics = {
            "avg_power_kW": lambda l: self.lifetime_power(l),
            "char_flap_kNm": lambda l: self.characteristic_of(l, "max_flap"),
            "max_flap_kNm": lambda l: self.max_of(l, "max_flap"),
            "char_thrust_kN": lambda l: self.characteristic_of(l, "max_thrust"),
            "max_thrust_kN": lambda l: self.max_of(l, "max_thrust"),
            "max_omega_g_rpm": lambda l: self.max_of(l, "max_omega_g"),
            "tower_fa_del_kNm": lambda l: self.tower_del(l),
        }
        base = {k: f(baseline) for k, f in metrics.items()}
        rows = []
        for label in self.labels:
            row = {"preset": label}
            for k, f in metrics.items():
                v = f(label)
                row[k] = v
                row[k + "_pct"] = 100.0 * (v / base[k] - 1.0) if base[k] else math.nan
            row["violations"] = len(self.violations(label))
            row["failures"] = sum(1 for c in self.cell_list(label) if not c.ok)
            rows.append(row)
        return rows

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = self.table()
        with open(out / "summary.csv", "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
        (out / "summary.txt").write_text(format_table(rows, self.config))
        c = self.config
        meta = {"dlc": c.dlc, "bins": [float(b) for b in c.bins], "seeds": c.seeds,
                "seed_base": c.seed_base, "duration": c.duration, "dt": c.dt,
                "discard": c.discard, "labels": list(self.labels),
                "site": asdict(c.site)}
        (out / "campaign.yaml").write_text(yaml.safe_dump(meta, sort_keys=False))
        with open(out / "cells.csv", "w", newline="") as f:
            w = csv.writer(f)
            keys = list(kernel.SUMMARY)
            w.writerow(["preset", "bin", "seed", *keys, "fa_damage", "flap_damage",
                        "ubar_at_peak", "error"])
            for c in self.cells:
                vals = [c.summary[k] for k in keys] if c.ok else [""] * len(keys)
                w.writerow([c.preset, c.bin, c.seed, *vals, c.fa_damage, c.flap_damage,
                            c.omega_peak_ubar, c.error or ""])
        with open(out / "long.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["preset", "dlc", "wind_bin", "seed", "metric", "value"])
            for c in self.cells:
                if not c.ok:
                    continue
                for k, v in c.summary.items():
                    w.writerow([c.preset, self.config.dlc, c.bin, c.seed, k, v])
        return out


def format_table(rows: list[dict], cfg: CampaignConfig | None = None) -> str:
    cols = [("avg_power_kW", "P avg kW"), ("char_flap_kNm", "char flap"),
            ("max_flap_kNm", "max flap"), ("char_thrust_kN", "char T"),
            ("max_thrust_kN", "max T"), ("max_omega_g_rpm", "max wg"),
            ("tower_fa_del_kNm", "FA DEL")]
    lines = []
    if cfg is not None:
        lines.append(f"DLC {cfg.dlc}: {len(cfg.bins)} bins x {cfg.seeds} seeds, "
                     f"{cfg.duration:g} s records ({cfg.discard:g} s discarded)")
    head = f"{'preset':<10}" + "".join(f"{name:>20}" for _, name in cols) + f"{'viol':>6}"
    lines.append(head)
    for r in rows:
        cells = "".join(f"{r[k]:>11.1f} ({r[k + '_pct']:+6.2f}%)" for k, _ in cols)
        lines.append(f"{r['preset']:<10}{cells}{r['violations']:>6d}")
    return "\n".join(lines) + "\n"


def _labelled(presets) -> list[tuple[str, ControllerPreset]]:
    out = []
    for p in presets:
        if isinstance(p, tuple):
            out.append(p)
        elif isinstance(p, ControllerPreset):
            out.append((p.name, p))
        else:
            out.append((p, preset(p)))
    return out


def run_campaign(cfg: CampaignConfig, presets=None, sim: SimConfig | None = None,
                 write: bool = True) -> CampaignSummary:
    """Run every preset on the same seeded winds; failures are kept per cell.

    ``presets`` holds names, ControllerPreset objects or (label, preset) pairs.
    """
    labelled = _labelled(presets if presets is not None else cfg.presets)
    sim = sim or SimConfig(dt=cfg.dt, discard=cfg.discard)
    if abs(sim.dt - cfg.dt) > 1e-12:
        sim = replace(sim, dt=cfg.dt)
    for _, pre in labelled:
        check_preset(pre, sim)
    pres = tuple(pre for _, pre in labelled)
    tasks = [(float(b), s, pres, cfg, sim) for b in cfg.bins for s in range(cfg.seeds)]
    if cfg.workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            batches = list(ex.map(_run_cell, tasks))
    else:
        batches = [_run_cell(t) for t in tasks]
    cells = []
    for batch in batches:
        for (label, _), cell in zip(labelled, batch):
            cell.preset = label
            cells.append(cell)
    summary = CampaignSummary(cfg, tuple(label for label, _ in labelled), cells)
    if write and cfg.out_dir:
        summary.write(cfg.out_dir)
    return summary


# --------------------------------------------------------------------------
# R^max tuning
# --------------------------------------------------------------------------

@dataclass
class TuneResult:
    table: LookupTable1D
    feasible: bool
    iterations: int
    history: list          # (values, violations, worst max omega) per iteration

    def report(self) -> str:
        lines = [f"{'iter':>4} {'viol':>5} {'worst rpm':>10}  R^max"]
        for i, (vals, nviol, worst) in enumerate(self.history):
            lines.append(f"{i:>4d} {nviol:>5d} {worst:>10.1f}  "
                         + " ".join(f"{v:.3f}" for v in vals))
        status = "feasible" if self.feasible else "NOT feasible"
        lines.append(f"result: {status} after {self.iterations} iterations")
        return "\n".join(lines) + "\n"


def _taper(bp, vals, start: float | None) -> np.ndarray:
    """Running minimum of ``vals`` over the breakpoints at or above ``start``."""
    out = np.array(vals, dtype=float)
    if start is None:
        return out
    hi = np.nonzero(np.asarray(bp) >= start)[0]
    if hi.size:
        out[hi] = np.minimum.accumulate(out[hi])
    return out


def tune_rmax(cfg: CampaignConfig | None = None, start: LookupTable1D | None = None,
              sim: SimConfig | None = None, margin: float = 10.0, max_iter: int = 12,
              cap: float | None = None, limit: float = OMEGA_HARD_LIMIT,
              base: str = "PR-1.150", taper_from: float | None = 18.0) -> TuneResult:
    """Iterate ETM campaigns, shaping R^max until no run exceeds ``limit``.

    Every run is attributed to the two breakpoints bracketing its 100 s
    filtered wind estimate at the moment of the speed maximum. A breakpoint
    whose worst attributed run violates the limit is lowered by the excess
    plus the margin, converted with the rated speed and divided by the peak
    sensitivity observed on the previous step; a breakpoint with more
    than ``margin`` of headroom is raised by half of the spare headroom,
    never above ``cap``. Breakpoints no run reaches follow their nearest
    attributed neighbour. From ``taper_from`` upward the table is kept
    non-increasing toward cut-out.
    """
    cfg = cfg or CampaignConfig(dlc="ETM")
    if cfg.dlc != "ETM":
        cfg = replace(cfg, dlc="ETM")
    sim = sim or SimConfig(dt=cfg.dt, discard=cfg.discard)
    pre0 = preset(base)
    if not pre0.prc1:
        raise ConfigError("R^max tuning requires PRC1 to be enabled")
    table = start if start is not None else pre0.rmax_table
    table = LookupTable1D(table.breakpoints,
                          _taper(table.breakpoints, table.values, taper_from))
    cap = cap if cap is not None else float(np.max(table.values))
    bp = np.asarray(table.breakpoints, dtype=float)
    vals = np.asarray(table.values, dtype=float).copy()
    omega_0 = sim.params.omega_0
    history = []
    best = None
    prev = None
    for it in range(max_iter + 1):
        tab = LookupTable1D(bp, vals)
        pre = replace(pre0, rmax_table=tab, prc0=True, allow_steady_derating=True)
        summ = run_campaign(cfg, [(base, pre)], sim, write=False)
        ok = [c for c in summ.cells if c.ok]
        if len(ok) != len(summ.cells):
            raise RuntimeError(f"{len(summ.cells) - len(ok)} tuning runs failed: "
                               f"{summ.failures()[0].error}")
        peaks = np.array([c.summary["max_omega_g"] for c in ok])
        nviol = int(np.sum(peaks > limit))
        history.append((vals.copy(), nviol, float(peaks.max())))
        if nviol == 0 and (best is None or vals.mean() > best.mean()):
            best = vals.copy()
        # worst peak attributed to each breakpoint
        worst = np.full(bp.size, -np.inf)
        for c, pk in zip(ok, peaks):
            ub = float(np.clip(c.omega_peak_ubar, bp[0], bp[-1]))
            k = int(np.clip(np.searchsorted(bp, ub) - 1, 0, bp.size - 2))
            frac = (ub - bp[k]) / (bp[k + 1] - bp[k])
            for j, share in ((k, 1.0 - frac), (k + 1, frac)):
                if share > 0.25 or (share > 0 and pk > limit):
                    worst[j] = max(worst[j], pk)
        seen = np.isfinite(worst)
        headroom = limit - worst
        if nviol == 0 and np.all((headroom[seen] < margin) | (vals[seen] >= cap - 1e-9)):
            break
        if it == max_iter:
            break
        new = vals.copy()
        for j in np.nonzero(seen)[0]:
            if headroom[j] < 0:
                # the peak moves less than one-for-one with the rated speed;
                # scale the cut by the response seen on the previous step
                gain = 1.0
                if prev is not None and np.isfinite(prev[1][j]):
                    dv = (prev[0][j] - vals[j]) * omega_0
                    if dv > 1e-6:
                        gain = float(np.clip((prev[1][j] - worst[j]) / dv, 0.25, 1.0))
                new[j] -= (margin - headroom[j]) / (gain * omega_0)
            elif headroom[j] > margin:
                new[j] += 0.5 * (headroom[j] - margin) / omega_0
        prev = (vals.copy(), worst.copy())
        idx = np.nonzero(seen)[0]
        for j in np.nonzero(~seen)[0]:
            new[j] = new[idx[np.argmin(np.abs(idx - j))]]
        new = _taper(bp, np.clip(new, 0.5, cap), taper_from)
        if np.allclose(new, vals, rtol=0.0, atol=1e-6):
            break
        vals = new
    feasible = history[-1][1] == 0
    if not feasible and best is not None:
        vals, feasible = best, True
    return TuneResult(LookupTable1D(bp, np.round(vals, 4)), feasible, len(history) - 1,
                      history)


def write_tables(tables: dict, path) -> None:
    data = {k: {"breakpoints": [float(b) for b in t.breakpoints],
                "values": [float(v) for v in t.values]} for k, t in tables.items()}
    Path(path).write_text(yaml.safe_dump(data, sort_keys=False))


# --------------------------------------------------------------------------
# scenarios and configuration files
# --------------------------------------------------------------------------

LULL_GUST = dict(base=10.0, lull_depth=4.0, lull_duration=20.0, rise_time=8.0)


def lull_gust_wind(dt: float = 0.01, **overrides) -> WindSeries:
    """Default lull followed by a sharp rise above the starting wind."""
    from .wind import gen_lull_gust
    kw = dict(LULL_GUST)
    kw.update(overrides)
    return gen_lull_gust(kw["base"], kw["lull_depth"], kw["lull_duration"], kw["rise_time"], dt)


def _table_from(raw) -> LookupTable1D:
    if isinstance(raw, (int, float)):
        return constant_table(float(raw))
    return LookupTable1D.from_dict(raw)


def load_campaign_config(path) -> tuple[CampaignConfig, list, SimConfig]:
    """Read a campaign YAML file; see the README for the schema."""
    raw = yaml.safe_load(Path(path).read_text()) or {}
    unknown = set(raw) - {"dlc", "bins", "seeds", "seed_base", "duration", "dt", "discard",
                          "presets", "out_dir", "workers", "site", "turbine", "tables"}
    if unknown:
        raise ConfigError(f"unknown campaign keys: {sorted(unknown)}")
    site = SiteDistribution(**raw.get("site", {}))
    kw = {k: raw[k] for k in ("dlc", "seeds", "seed_base", "duration", "dt", "discard",
                              "out_dir", "workers") if k in raw}
    if "bins" in raw:
        kw["bins"] = tuple(float(b) for b in raw["bins"])
    tables = {k: _table_from(v) for k, v in (raw.get("tables") or {}).items()}
    presets = []
    for entry in raw.get("presets", ["BL-1.000", "BL-1.050", "PR-1.100", "PR-1.150"]):
        if isinstance(entry, str):
            entry = {"name": entry}
        entry = dict(entry)
        name = entry.pop("name")
        label = entry.pop("label", name)
        if label in tables:
            entry["rmax_table"] = tables[label]
        elif "rmax_table" in entry:
            entry["rmax_table"] = _table_from(entry["rmax_table"])
        presets.append((label, preset(name, **entry)))
    ccfg = CampaignConfig(site=site, presets=tuple(label for label, _ in presets), **kw)
    sim_kw = dict(dt=ccfg.dt, discard=ccfg.discard)
    if raw.get("turbine"):
        params = replace(TurbineParams(), **raw["turbine"])
        sim_kw["surrogate"] = calibrate_surrogate(params)
    return ccfg, presets, SimConfig(**sim_kw)


def load_campaign_output(out_dir) -> CampaignSummary:
    """Rebuild a summary from the files ``CampaignSummary.write`` produced."""
    out = Path(out_dir)
    meta_path, cells_path = out / "campaign.yaml", out / "cells.csv"
    if not meta_path.exists() or not cells_path.exists():
        raise FileNotFoundError(f"{out} does not hold campaign output")
    meta = yaml.safe_load(meta_path.read_text())
    labels = tuple(meta.pop("labels"))
    site = SiteDistribution(**meta.pop("site"))
    cfg = CampaignConfig(site=site, presets=labels, bins=tuple(meta.pop("bins")), **meta)
    cells = []
    with open(cells_path, newline="") as f:
        for row in csv.DictReader(f):
            cell = CellResult(row["preset"], float(row["bin"]), int(row["seed"]))
            if row["error"]:
                cell.error = row["error"]
            else:
                cell.summary = {k: float(row[k]) for k in kernel.SUMMARY}
                cell.fa_damage = float(row["fa_damage"])
                cell.flap_damage = float(row["flap_damage"])
                cell.omega_peak_ubar = float(row["ubar_at_peak"])
            cells.append(cell)
    return CampaignSummary(cfg, labels, cells)
