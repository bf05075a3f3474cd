"""Filter and interpolation primitives shared by the controller blocks.

Every primitive is split into a numba kernel working on plain arrays (so the
simulation loop can call it without Python overhead) and a small class that
owns the arrays for interactive use and testing.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

SQRT2_2 = math.sqrt(2.0) / 2.0


class ConfigError(ValueError):
    """Raised for invalid configuration values."""


# --------------------------------------------------------------------------
# biquad kernels (direct form II transposed)
# coefficients c = [n0, n1, n2, d1, d2], state s = [s1, s2]
# --------------------------------------------------------------------------

@njit(cache=True)
def bilinear(b2, b1, b0, a2, a1, a0, k, out):
    """Tustin map of (b2 s^2 + b1 s + b0)/(a2 s^2 + a1 s + a0), with s = k(z-1)/(z+1)."""
    k2 = k * k
    A0 = a2 * k2 + a1 * k + a0
    out[0] = (b2 * k2 + b1 * k + b0) / A0
    out[1] = (2.0 * b0 - 2.0 * b2 * k2) / A0
    out[2] = (b2 * k2 - b1 * k + b0) / A0
    out[3] = (2.0 * a0 - 2.0 * a2 * k2) / A0
    out[4] = (a2 * k2 - a1 * k + a0) / A0


@njit(cache=True)
def lpf2_coeffs(time_constant, dt, out):
    wn = 2.0 * math.pi / time_constant
    bilinear(0.0, 0.0, wn * wn, 1.0, math.sqrt(2.0) * wn, wn * wn, 2.0 / dt, out)


@njit(cache=True)
def notch_coeffs(center, width, depth, dt, out):
    # prewarped so the discrete gain at the center frequency is exact
    k = center / math.tan(0.5 * center * dt)
    w2 = center * center
    bilinear(1.0, 2.0 * center * depth, w2, 1.0, 2.0 * center * width, w2, k, out)


@njit(cache=True)
def biquad_step(c, s, x):
    y = c[0] * x + s[0]
    s[0] = c[1] * x - c[3] * y + s[1]
    s[1] = c[2] * x - c[4] * y
    return y


@njit(cache=True)
def biquad_reset(c, s, value):
    """Place a unity-DC-gain biquad at steady state with output ``value``."""
    s[0] = (1.0 - c[0]) * value
    s[1] = (c[2] - c[4]) * value


# --------------------------------------------------------------------------
# ring buffer kernels; meta = [head, count] (int64)
# --------------------------------------------------------------------------

@njit(cache=True)
def ring_push(buf, meta, x):
    n = buf.shape[0]
    if meta[1] == 0:
        buf[:] = x  # backfill with the first sample
        meta[0] = 0
        meta[1] = 1
        buf[0] = x
        return
    meta[0] = (meta[0] + 1) % n
    buf[meta[0]] = x
    if meta[1] < n:
        meta[1] += 1


@njit(cache=True)
def ring_get(buf, meta, lag):
    """Value pushed ``lag`` steps ago (clamped to the oldest slot)."""
    n = buf.shape[0]
    if lag > n - 1:
        lag = n - 1
    return buf[(meta[0] - lag) % n]


# --------------------------------------------------------------------------
# monotone cubic (PCHIP) evaluation
# --------------------------------------------------------------------------

@njit(cache=True)
def pchip_eval(xs, ys, ds, q):
    n = xs.shape[0]
    if q <= xs[0]:
        return ys[0]
    if q >= xs[n - 1]:
        return ys[n - 1]
    i = np.searchsorted(xs, q, side="right") - 1
    h = xs[i + 1] - xs[i]
    t = (q - xs[i]) / h
    t2 = t * t
    t3 = t2 * t
    h00 = 2.0 * t3 - 3.0 * t2 + 1.0
    h10 = t3 - 2.0 * t2 + t
    h01 = -2.0 * t3 + 3.0 * t2
    h11 = t3 - t2
    return h00 * ys[i] + h10 * h * ds[i] + h01 * ys[i + 1] + h11 * h * ds[i + 1]


def pchip_slopes(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Fritsch-Carlson derivative estimates with the three-point end rule."""
    h = np.diff(xs)
    delta = np.diff(ys) / h
    n = xs.size
    d = np.zeros(n)
    if n == 2:
        d[:] = delta[0]
        return d
    for k in range(1, n - 1):
        if delta[k - 1] * delta[k] <= 0.0:
            d[k] = 0.0
        else:
            w1 = 2.0 * h[k] + h[k - 1]
            w2 = h[k] + 2.0 * h[k - 1]
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k])
    d[0] = _edge_slope(h[0], h[1], delta[0], delta[1])
    d[-1] = _edge_slope(h[-1], h[-2], delta[-1], delta[-2])
    return d


def _edge_slope(h0, h1, m0, m1):
    d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1)
    if np.sign(d) != np.sign(m0):
        return 0.0
    if np.sign(m0) != np.sign(m1) and abs(d) > abs(3.0 * m0):
        return 3.0 * m0
    return d


# --------------------------------------------------------------------------
# object wrappers
# --------------------------------------------------------------------------

def _check_finite(x):
    if not math.isfinite(x):
        raise ValueError(f"non-finite filter input: {x!r}")


class LowPass2:
    """Second-order low-pass with natural frequency 2*pi/tau and damping sqrt(2)/2."""

    def __init__(self, time_constant: float, dt: float, initial: float = 0.0):
        if not (time_constant > 0 and dt > 0):
            raise ConfigError("time constant and dt must be positive")
        self.time_constant = float(time_constant)
        self.dt = float(dt)
        self.coeffs = np.empty(5)
        lpf2_coeffs(self.time_constant, self.dt, self.coeffs)
        self.state = np.zeros(2)
        self.reset(initial)

    def reset(self, value: float = 0.0) -> None:
        biquad_reset(self.coeffs, self.state, float(value))

    def step(self, x: float) -> float:
        _check_finite(x)
        return biquad_step(self.coeffs, self.state, float(x))

    def dc_gain(self) -> float:
        c = self.coeffs
        return (c[0] + c[1] + c[2]) / (1.0 + c[3] + c[4])

    def filter(self, xs) -> np.ndarray:
        return np.array([self.step(x) for x in xs])


class MovingNotch:
    """Notch whose center frequency is supplied every step."""

    def __init__(self, width: float, depth: float, dt: float):
        if width <= 0 or depth < 0 or dt <= 0:
            raise ConfigError("notch width/dt must be positive, depth non-negative")
        self.width = float(width)
        self.depth = float(depth)
        self.dt = float(dt)
        self.coeffs = np.empty(5)
        self.state = np.zeros(2)
        self._primed = False

    def reset(self, value: float, center: float) -> None:
        notch_coeffs(center, self.width, self.depth, self.dt, self.coeffs)
        biquad_reset(self.coeffs, self.state, float(value))
        self._primed = True

    def step(self, x: float, center: float) -> float:
        _check_finite(x)
        if not center > 0:
            raise ValueError(f"notch center frequency must be positive, got {center}")
        if not self._primed:
            self.reset(x, center)
        notch_coeffs(center, self.width, self.depth, self.dt, self.coeffs)
        return biquad_step(self.coeffs, self.state, float(x))


class DelayBuffer:
    """Fixed-length history of a uniformly sampled signal."""

    def __init__(self, span: float, dt: float):
        if span < 0 or dt <= 0:
            raise ConfigError("delay span must be >= 0 and dt > 0")
        self.dt = float(dt)
        self.buf = np.zeros(int(round(span / dt)) + 1)
        self.meta = np.zeros(2, dtype=np.int64)

    @property
    def capacity(self) -> int:
        return self.buf.size

    def push(self, x: float) -> None:
        ring_push(self.buf, self.meta, float(x))

    def sample(self, delay: float) -> float:
        if self.meta[1] == 0:
            raise IndexError("sample from empty delay buffer")
        return ring_get(self.buf, self.meta, int(round(delay / self.dt)))


class LookupTable1D:
    """Shape-preserving cubic table, clamped to the end values outside its range."""

    def __init__(self, breakpoints, values):
        xs = np.asarray(breakpoints, dtype=float)
        ys = np.asarray(values, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise ConfigError("table needs matching 1-D breakpoints/values, at least 2")
        if np.any(np.diff(xs) <= 0):
            raise ConfigError("table breakpoints must be strictly ascending")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ConfigError("table entries must be finite")
        self.breakpoints = xs
        self.values = ys
        self.slopes = pchip_slopes(xs, ys)

    def __call__(self, x: float) -> float:
        return pchip_eval(self.breakpoints, self.values, self.slopes, float(x))

    def eval_many(self, xs) -> np.ndarray:
        return np.array([self(x) for x in np.asarray(xs, dtype=float)])

    def to_dict(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LookupTable1D":
        return cls(d["breakpoints"], d["values"])

    def __repr__(self) -> str:
        pairs = ", ".join(f"{x:g}: {y:.4g}" for x, y in zip(self.breakpoints, self.values))
        return f"LookupTable1D({{{pairs}}})"
