"""Sensitivity functions s(t) and their frequency-domain filters |s~(f)|^2.

Two families are supported: a sinusoid under a Blackman envelope (smooth,
spectrally concentrated) and piecewise-constant functions (step sequences,
including CPMG-like square waves and optimizer outputs).  Both have exact
closed-form transforms, evaluated here without sampling error.  Filters are
summarized by their center frequency f0, resolution bandwidth (FWHM of
|s~(f)|^2) and amplification a = integral(|s~|^2 df) / rbw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Blackman envelope coefficients b0 + b1*cos(pi t/t_w) + b2*cos(2 pi t/t_w)
B0 = 21.0 / 50.0
B1 = 1.0 / 2.0
B2 = 2.0 / 25.0

__all__ = [
    "B0",
    "B1",
    "B2",
    "BlackmanFilterSpec",
    "PiecewiseSensitivity",
    "FrequencyFilter",
    "blackman_sensitivity",
    "blackman_filter_amplitude",
    "blackman_frequency_filter",
    "piecewise_filter_amplitude",
    "piecewise_frequency_filter",
    "fwhm",
    "amplification",
]


@dataclass(frozen=True)
class BlackmanFilterSpec:
    """Blackman-windowed sinusoid: k oscillations within the half-duration t_w."""

    t_w: float
    k: int
    s0: float = 1.0

    def __post_init__(self):
        if self.t_w <= 0:
            raise ValueError("t_w must be positive")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("k must be a positive integer")
        if self.s0 <= 0:
            raise ValueError("s0 must be positive")

    @property
    def f0(self) -> float:
        return self.k / self.t_w

    @property
    def duration(self) -> float:
        return 2.0 * self.t_w


@dataclass(frozen=True, eq=False)
class PiecewiseSensitivity:
    """s(t) = values[i] on [breakpoints[i], breakpoints[i+1]), zero outside."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.ndim != 1 or vals.ndim != 1 or bp.size != vals.size + 1:
            raise ValueError("need N+1 breakpoints for N interval values")
        if vals.size < 1:
            raise ValueError("need at least one interval")
        if not np.all(np.diff(bp) > 0):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @property
    def duration(self) -> float:
        return float(self.breakpoints[-1] - self.breakpoints[0])


@dataclass(frozen=True, eq=False)
class FrequencyFilter:
    """Sampled |s~(f)|^2 with its summary numbers."""

    f_grid: np.ndarray
    magnitude_sq: np.ndarray
    f0: float
    rbw: float
    amplification: float


def blackman_sensitivity(spec: BlackmanFilterSpec, t) -> np.ndarray:
    """Evaluate s(t); the rect factor takes the value 1/2 exactly at |t| = t_w."""
    t = np.asarray(t, dtype=float)
    x = t / spec.t_w
    env = B0 + B1 * np.cos(np.pi * x) + B2 * np.cos(2 * np.pi * x)
    rect = np.where(np.abs(x) < 1.0, 1.0, np.where(np.abs(x) == 1.0, 0.5, 0.0))
    return spec.s0 * rect * env * np.sin(2 * np.pi * spec.k * x)


def _tones(spec: BlackmanFilterSpec):
    k = float(spec.k)
    g = np.array([k, k + 0.5, k - 0.5, k + 1.0, k - 1.0]) / spec.t_w
    w = np.array([B0, B1 / 2, B1 / 2, B2 / 2, B2 / 2])
    return g, w


def _sinc(x):
    # sin(x)/x with sinc(0)=1
    return np.sinc(x / np.pi)


def blackman_filter_amplitude(spec: BlackmanFilterSpec, f) -> np.ndarray:
    """Closed-form s~(f), purely imaginary and odd; |s~(f0)| = b0 s0 t_w exactly."""
    f = np.asarray(f, dtype=float)
    g, w = _tones(spec)
    tw = spec.t_w
    acc = np.zeros(f.shape)
    for gj, wj in zip(g, w):
        acc = acc + wj * (_sinc(2 * np.pi * (gj - f) * tw) - _sinc(2 * np.pi * (gj + f) * tw))
    return -1j * tw * spec.s0 * acc


def fwhm(f_grid, magnitude_sq) -> float:
    """Width of the positive-frequency main lobe at half its peak, by linear interpolation."""
    f = np.asarray(f_grid, dtype=float)
    m = np.asarray(magnitude_sq, dtype=float)
    pos = np.nonzero(f > 0)[0]
    if pos.size < 3:
        raise ValueError("need samples at positive frequencies")
    i_peak = pos[np.argmax(m[pos])]
    half = 0.5 * m[i_peak]
    if half <= 0:
        raise ValueError("filter is degenerate (zero peak)")

    i = i_peak
    while i + 1 < m.size and m[i + 1] >= half:
        i += 1
    if i + 1 >= m.size:
        raise ValueError("no half-maximum crossing above the peak")
    f_hi = f[i] + (f[i + 1] - f[i]) * (m[i] - half) / (m[i] - m[i + 1])

    i = i_peak
    while i - 1 >= 0 and m[i - 1] >= half:
        i -= 1
    if i - 1 < 0:
        raise ValueError("no half-maximum crossing below the peak")
    f_lo = f[i] - (f[i] - f[i - 1]) * (m[i] - half) / (m[i] - m[i - 1])
    return float(f_hi - f_lo)


def _filter_from_samples(f, mag_sq, f0) -> FrequencyFilter:
    if np.max(mag_sq) == 0.0:
        return FrequencyFilter(f, mag_sq, 0.0, float("nan"), 0.0)
    rbw = fwhm(f, mag_sq)
    amp = float(np.trapezoid(mag_sq, f)) / rbw
    return FrequencyFilter(f, mag_sq, float(f0), rbw, amp)


def blackman_frequency_filter(
    spec: BlackmanFilterSpec, df: float | None = None, f_max: float | None = None
) -> FrequencyFilter:
    """Sample the closed-form filter on a symmetric grid containing 0 and +-f0."""
    if df is None:
        df = 1.0 / (128.0 * spec.t_w)  # ~105 samples across the main lobe FWHM
    if f_max is None:
        f_max = 4.0 * spec.f0 + 8.0 / spec.t_w  # tails fall ~f^-8; beyond this they are negligible
    m = int(np.ceil(f_max / df))
    f = np.arange(-m, m + 1) * df
    amp = blackman_filter_amplitude(spec, f)
    return _filter_from_samples(f, np.abs(amp) ** 2, spec.f0)


def piecewise_values(pw: PiecewiseSensitivity, t) -> np.ndarray:
    """Evaluate the step sequence at times t; zero outside its span."""
    t = np.asarray(t, dtype=float)
    idx = np.searchsorted(pw.breakpoints, t, side="right") - 1
    valid = (idx >= 0) & (idx < pw.values.size)
    out = np.zeros(t.shape)
    out[valid] = pw.values[idx[valid]]
    return out


def piecewise_filter_amplitude(pw: PiecewiseSensitivity, f) -> np.ndarray:
    """Exact s~(f) as a sum of interval transforms; finite at f = 0."""
    f = np.asarray(f, dtype=float)
    bp = pw.breakpoints
    acc = np.zeros(f.shape, dtype=complex)
    for i, s_i in enumerate(pw.values):
        if s_i == 0.0:
            continue
        w = bp[i + 1] - bp[i]
        c = bp[i + 1] + bp[i]
        acc = acc + s_i * w * np.exp(-1j * np.pi * f * c) * _sinc(np.pi * f * w)
    return acc


def piecewise_frequency_filter(
    pw: PiecewiseSensitivity, df: float | None = None, f_max: float | None = None
) -> FrequencyFilter:
    """Filter of a step sequence; grid wide enough for the slow sinc tails."""
    total = pw.duration
    nz = pw.values[pw.values != 0.0]
    flips = int(np.sum(np.diff(np.sign(nz)) != 0)) if nz.size else 0
    f0_est = flips / (2.0 * total) if flips else 1.0 / total
    if df is None:
        df = 1.0 / (64.0 * total)
    if f_max is None:
        f_max = 4.0 * f0_est + 16.0 / total
    m = int(np.ceil(f_max / df))
    f = np.arange(-m, m + 1) * df
    mag_sq = np.abs(piecewise_filter_amplitude(pw, f)) ** 2
    if np.max(mag_sq) == 0.0:
        return _filter_from_samples(f, mag_sq, 0.0)
    pos = np.nonzero(f > 0)[0]
    f0 = f[pos[np.argmax(mag_sq[pos])]]
    return _filter_from_samples(f, mag_sq, f0)


def amplification(obj) -> float:
    """a = integral(|s~(f)|^2 df) / rbw for a filter or a Blackman spec."""
    if isinstance(obj, BlackmanFilterSpec):
        return blackman_frequency_filter(obj).amplification
    if isinstance(obj, FrequencyFilter):
        return float(np.trapezoid(obj.magnitude_sq, obj.f_grid)) / obj.rbw
    raise TypeError("expected BlackmanFilterSpec or FrequencyFilter")
