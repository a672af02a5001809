"""Shared numerical primitives: uniform grids, discrete Fourier transforms with a
fixed sign convention, generalized Laguerre polynomials, and reproducible
random-number streams.

The Fourier convention used throughout the package is

    s~(f) = integral s(t) exp(-i 2 pi f t) dt,

so the inverse carries exp(+i 2 pi f t).  All transforms of sampled data are
trapezoid-weighted Riemann sums on uniform grids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform sampling grid.

    Used for time axes and, with the same mechanics, for frequency axes of
    transformed series.

    Parameters
    ----------
    t_start, t_end : float
        First and last sample location, ``t_end > t_start``.
    n : int
        Number of samples, at least 2.  Spacing is ``(t_end - t_start)/(n-1)``.
    """

    t_start: float
    t_end: float
    n: int

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("grid needs at least 2 samples")
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / (self.n - 1)

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def nyquist(self) -> float:
        return 0.5 / self.dt

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.n)

    @classmethod
    def symmetric(cls, half_span: float, n: int) -> "TimeGrid":
        """Grid covering ``[-half_span, +half_span]``."""
        return cls(-half_span, half_span, n)


@dataclass(frozen=True)
class ComplexSeries:
    """Sampled complex-valued function on a uniform grid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (self.grid.n,):
            raise ValueError(
                f"values shape {vals.shape} does not match grid length {self.grid.n}"
            )
        object.__setattr__(self, "values", vals)


def quadrature(values: np.ndarray, grid: TimeGrid) -> complex | float:
    """Trapezoid integral of sampled values over the grid."""
    values = np.asarray(values)
    if values.shape[-1] != grid.n:
        raise ValueError("values length does not match grid")
    return np.trapezoid(values, dx=grid.dt, axis=-1)


def fourier_transform(series: ComplexSeries, pad_factor: int = 1) -> ComplexSeries:
    """Continuous-convention Fourier transform of a sampled series.

    Approximates ``s~(f) = integral s(t) exp(-i 2 pi f t) dt`` by a
    trapezoid-weighted FFT.  The returned series lives on the conjugate
    frequency grid (monotonic, fftshifted), with resolution ``1/(pad_factor
    * n * dt)``.

    Parameters
    ----------
    series : ComplexSeries
        Input samples on a uniform time grid.
    pad_factor : int
        Zero-padding multiplier for finer frequency sampling.  Use >= 4 when
        peak widths have to be resolved.

    Returns
    -------
    ComplexSeries
        Transform samples; the ``grid`` of the result is the frequency axis.
    """
    if pad_factor < 1:
        raise ValueError("pad_factor must be >= 1")
    g = series.grid
    dt = g.dt
    weighted = series.values.copy()
    weighted[0] *= 0.5
    weighted[-1] *= 0.5
    n_pad = g.n * pad_factor
    spectrum = np.fft.fft(weighted, n=n_pad)
    freqs = np.fft.fftfreq(n_pad, d=dt)
    spectrum = np.fft.fftshift(spectrum)
    freqs = np.fft.fftshift(freqs)
    spectrum = dt * spectrum * np.exp(-2j * np.pi * freqs * g.t_start)
    f_grid = TimeGrid(float(freqs[0]), float(freqs[-1]), n_pad)
    return ComplexSeries(f_grid, spectrum)


def laguerre(n: int, a: int, x: np.ndarray | float) -> np.ndarray | float:
    """Generalized Laguerre polynomial ``L_n^a(x)`` by the three-term recurrence.

    Parameters
    ----------
    n : int
        Degree, ``n >= 0``.
    a : int
        Order, ``a >= 0``.
    x : array_like
        Evaluation points.

    Notes
    -----
    The recurrence ``(m+1) L_{m+1} = (2m+1+a-x) L_m - (m+a) L_{m-1}`` is
    numerically benign for the moderate degrees used here and is exact for
    polynomial data up to rounding.
    """
    if n < 0 or a < 0:
        raise ValueError("degree and order must be non-negative")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return prev if prev.shape else float(prev)
    cur = 1.0 + a - x
    for m in range(1, n):
        prev, cur = cur, ((2 * m + 1 + a - x) * cur - (m + a) * prev) / (m + 1)
    return cur if cur.shape else float(cur)


@dataclass
class RandomStream:
    """Reproducible substream of pseudorandom numbers.

    A stream is addressed by ``(seed, stream_index)``.  The pair is mixed
    through numpy's SeedSequence entropy hash, so distinct indices give
    statistically independent streams and the same pair always reproduces the
    same draws.  Each call consumes the stream in order.
    """

    seed: int
    stream_index: int = 0
    _gen: np.random.Generator | None = field(default=None, repr=False)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence([self.seed, self.stream_index])
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def normal(self, size=None) -> np.ndarray | float:
        return self.generator.standard_normal(size)

    def uniform(self, size=None) -> np.ndarray | float:
        return self.generator.random(size)


def rng_stream(seed: int, stream_index: int = 0) -> RandomStream:
    """Stream addressed by ``(seed, stream_index)``; see RandomStream."""
    if seed < 0 or stream_index < 0:
        raise ValueError("seed and stream_index must be non-negative")
    return RandomStream(seed, stream_index)
