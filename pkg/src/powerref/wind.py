"""Wind inputs: seeded point turbulence (NTM/ETM), deterministic lull-gust
events and the site wind-speed distribution."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .signals import ConfigError

I_REF_CLASS_A = 0.16
V_AVE_CLASS_I = 10.0  # 0.2 * V_ref for a class I site
KAIMAL_SCALE = 8.1 * 42.0  # longitudinal integral scale, hub height > 60 m
MIN_WIND = 0.5


@dataclass
class WindSeries:
    dt: float
    samples: np.ndarray
    mean: float
    seed: int | None = None
    label: str = "deterministic"

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if np.any(self.samples <= 0):
            raise ValueError("wind samples must be positive")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size * self.dt

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dt

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["time_s", "wind_mps"])
            for t, u in zip(self.time, self.samples):
                w.writerow([f"{t:.6f}", f"{u:.6f}"])

    @classmethod
    def from_csv(cls, path, label: str = "file") -> "WindSeries":
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:2]] != ["time_s", "wind_mps"]:
                raise ValueError(f"{path}: expected header 'time_s,wind_mps'")
            rows = [(float(r[0]), float(r[1])) for r in reader if r]
        if len(rows) < 2:
            raise ValueError(f"{path}: need at least two samples")
        t = np.array([r[0] for r in rows])
        u = np.array([r[1] for r in rows])
        steps = np.diff(t)
        dt = float(np.median(steps))
        if np.max(np.abs(steps - dt)) > 1e-6 * max(dt, 1.0):
            raise ValueError(f"{path}: samples are not uniformly spaced")
        return cls(dt=dt, samples=u, mean=float(u.mean()), label=label)


def turbulence_sigma(mean: float, model: str, i_ref: float = I_REF_CLASS_A) -> float:
    """Longitudinal standard deviation for the normal or extreme turbulence model."""
    model = model.upper()
    if model == "NTM":
        return i_ref * (0.75 * mean + 5.6)
    if model == "ETM":
        c = 2.0
        return c * i_ref * (0.072 * (V_AVE_CLASS_I / c + 3.0) * (mean / c - 4.0) + 10.0)
    raise ValueError(f"unknown turbulence model {model!r}")


def kaimal_psd(freq, mean: float, sigma: float, length_scale: float = KAIMAL_SCALE):
    """One-sided Kaimal spectrum (m^2/s^2/Hz)."""
    lv = length_scale / mean
    return sigma**2 * 4.0 * lv / (1.0 + 6.0 * freq * lv) ** (5.0 / 3.0)


def gen_turbulence(mean: float, intensity_model: str, seed: int, duration: float,
                   dt: float, i_ref: float = I_REF_CLASS_A,
                   length_scale: float = KAIMAL_SCALE) -> WindSeries:
    """Seeded Kaimal point turbulence by inverse FFT with uniform random phases.

    Amplitudes are deterministic, so the realised variance over the record is
    the target variance before the positivity clip.
    """
    if dt <= 0 or duration <= 0:
        raise ValueError("dt and duration must be positive")
    n = int(round(duration / dt))
    sigma = turbulence_sigma(mean, intensity_model, i_ref)
    freq = np.fft.rfftfreq(n, dt)
    psd = kaimal_psd(freq, mean, sigma, length_scale)
    psd[0] = 0.0
    if n % 2 == 0:
        psd[-1] = 0.0
    amp = np.sqrt(psd)
    # cosine amplitudes a_k: record variance is sum(a_k^2)/2
    amp *= sigma / math.sqrt(0.5 * np.sum(amp**2))
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, freq.size)
    spectrum = amp * np.exp(1j * phases) * (n / 2.0)
    fluct = np.fft.irfft(spectrum, n)
    samples = np.maximum(mean + fluct, MIN_WIND)
    return WindSeries(dt=dt, samples=samples, mean=mean, seed=seed,
                      label=intensity_model.upper())


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return 0.5 - 0.5 * np.cos(np.pi * x)


def gen_lull_gust(base: float, lull_depth: float, lull_duration: float, rise_time: float,
                  dt: float, lead: float = 60.0, tail: float = 300.0,
                  overshoot: float = 0.5) -> WindSeries:
    """Deterministic negative gust: drop by ``lull_depth``, hold, then rise past ``base``.

    The rise ends at ``base + overshoot*lull_depth`` and the wind holds there
    for ``tail`` seconds. Ramps are raised-cosine, so the profile is C1.
    """
    if base - lull_depth <= 0:
        raise ValueError("base - lull_depth must be positive")
    if dt <= 0 or rise_time <= 0 or lull_duration < 0:
        raise ValueError("dt and rise_time must be positive")
    total = lead + rise_time + lull_duration + rise_time + tail
    t = np.arange(int(round(total / dt))) * dt
    high = base + overshoot * lull_depth
    t1 = lead
    t2 = t1 + rise_time
    t3 = t2 + lull_duration
    down = -lull_depth * _smoothstep((t - t1) / rise_time)
    up = (high - (base - lull_depth)) * _smoothstep((t - t3) / rise_time)
    u = base + down + up
    return WindSeries(dt=dt, samples=u, mean=float(u.mean()), label="lull-gust")


def gen_constant(speed: float, duration: float, dt: float) -> WindSeries:
    n = int(round(duration / dt))
    return WindSeries(dt=dt, samples=np.full(n, float(speed)), mean=float(speed))


@dataclass(frozen=True)
class SiteDistribution:
    shape: float = 2.17
    scale: float = 10.3
    cut_in: float = 5.0
    cut_out: float = 25.0

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0 or not (0 <= self.cut_in < self.cut_out):
            raise ConfigError("invalid Weibull site distribution")

    def pdf(self, u):
        return stats.weibull_min.pdf(u, self.shape, scale=self.scale)

    def cdf(self, u):
        return stats.weibull_min.cdf(u, self.shape, scale=self.scale)

    @property
    def mode(self) -> float:
        k = self.shape
        return self.scale * ((k - 1.0) / k) ** (1.0 / k) if k > 1 else 0.0


def weibull_weight(dist: SiteDistribution, bin_centers) -> np.ndarray:
    """Probability of each bin (width = bin spacing), renormalised to sum to one."""
    c = np.asarray(bin_centers, dtype=float)
    if c.size == 0:
        raise ValueError("no wind bins given")
    if c.size == 1:
        w = np.array([1.0])
        return w
    if np.any(np.diff(c) <= 0):
        raise ValueError("bin centers must be ascending")
    edges = np.concatenate([[c[0] - (c[1] - c[0]) / 2],
                            (c[:-1] + c[1:]) / 2,
                            [c[-1] + (c[-1] - c[-2]) / 2]])
    edges = np.maximum(edges, 0.0)
    p = np.diff(dist.cdf(edges))
    return p / p.sum()


def default_bins(dist: SiteDistribution | None = None, spacing: float = 2.0) -> np.ndarray:
    dist = dist or SiteDistribution()
    return np.arange(dist.cut_in, dist.cut_out + 1e-9, spacing)


def load_wind(spec: str, dt: float, duration: float, seed: int = 0) -> WindSeries:
    """Parse a CLI wind argument: a CSV path, ``const:U``, ``ntm:U``, ``etm:U`` or
    ``lullgust:BASE,DEPTH,HOLD,RISE``."""
    p = Path(spec)
    if p.suffix.lower() == ".csv" or p.exists():
        return WindSeries.from_csv(p)
    kind, _, arg = spec.partition(":")
    kind = kind.lower()
    if kind == "const":
        return gen_constant(float(arg), duration, dt)
    if kind in ("ntm", "etm"):
        return gen_turbulence(float(arg), kind.upper(), seed, duration, dt)
    if kind == "lullgust":
        base, depth, hold, rise = (float(v) for v in arg.split(","))
        return gen_lull_gust(base, depth, hold, rise, dt)
    raise ValueError(f"cannot interpret wind spec {spec!r}")
