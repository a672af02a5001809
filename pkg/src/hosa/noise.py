"""Synthetic oscillator-frequency noise.

Models describe the two-sided power spectral density S(f) of the angular
frequency deviation Delta(t) in (rad/s)^2/Hz.  Continuous (banded) models are
sampled in the frequency domain: independent complex Gaussian coefficients
with Hermitian symmetry and magnitude sqrt(S(f) df) are inverse-transformed to
a real, stationary, circular time series.  A sinusoidal model is a pair of
spectral delta lines and is sampled directly in the time domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import RandomStream, TimeGrid


class NoiseModel:
    """Base interface; concrete models implement psd/lines/sampling."""

    def psd(self, f: np.ndarray | float) -> np.ndarray | float:
        """Continuous part of the two-sided PSD, (rad/s)^2/Hz."""
        raise NotImplementedError

    def spectral_lines(self) -> tuple[tuple[float, float], ...]:
        """Discrete delta lines as (frequency_hz, weight_rad2_per_s2) pairs."""
        return ()

    def sample(self, grid: TimeGrid, stream: RandomStream) -> np.ndarray:
        """One realization of Delta(t) on the grid, rad/s."""
        raise NotImplementedError

    def band_power(self) -> float:
        """Total integrated power <Delta^2>, (rad/s)^2."""
        raise NotImplementedError

    def max_frequency(self) -> float:
        """Highest frequency with support, Hz.  Used to pick step sizes."""
        raise NotImplementedError


def _sample_banded(model: NoiseModel, grid: TimeGrid, stream: RandomStream) -> np.ndarray:
    """Frequency-domain synthesis of a realization of a banded model."""
    if model.max_frequency() > grid.nyquist * (1 + 1e-12):
        raise ValueError(
            f"model support up to {model.max_frequency():g} Hz exceeds grid "
            f"Nyquist frequency {grid.nyquist:g} Hz"
        )
    n = grid.n
    dt = grid.dt
    df = 1.0 / (n * dt)
    freqs = np.fft.rfftfreq(n, d=dt)
    sigma = np.sqrt(np.asarray(model.psd(freqs), dtype=float) * df)
    sigma[0] = 0.0  # never any DC component
    if n % 2 == 0:
        sigma[-1] = 0.0
    m = sigma.size
    draws = stream.normal((2, m))
    coeff = (draws[0] + 1j * draws[1]) / math.sqrt(2.0)
    spectrum = n * sigma * coeff
    spectrum[0] = 0.0
    if n % 2 == 0:
        spectrum[-1] = 0.0
    return np.fft.irfft(spectrum, n)


@dataclass(frozen=True)
class SinusoidalNoise(NoiseModel):
    """Single tone Delta(t) = delta0 * cos(2 pi f_noise t + phase).

    ``phase=None`` draws the phase uniformly per realization; a float fixes
    it.  The PSD is a pair of delta lines of weight delta0^2/4 at +-f_noise.
    """

    delta0: float
    f_noise: float
    phase: float | None = None

    def __post_init__(self) -> None:
        if self.delta0 < 0:
            raise ValueError("delta0 must be non-negative")
        if self.f_noise <= 0:
            raise ValueError("f_noise must be positive")

    def psd(self, f):
        return np.zeros_like(np.asarray(f, dtype=float))

    def spectral_lines(self):
        w = 0.25 * self.delta0**2
        return ((-self.f_noise, w), (self.f_noise, w))

    def sample(self, grid, stream):
        phi = 2 * np.pi * stream.uniform() if self.phase is None else self.phase
        return self.delta0 * np.cos(2 * np.pi * self.f_noise * grid.times + phi)

    def band_power(self):
        return 0.5 * self.delta0**2

    def max_frequency(self):
        return self.f_noise


@dataclass(frozen=True)
class WhiteBandNoise(NoiseModel):
    """Flat two-sided PSD of the given level for f_min <= |f| <= f_max."""

    level: float
    f_min: float
    f_max: float

    def __post_init__(self) -> None:
        if self.level < 0:
            raise ValueError("level must be non-negative")
        if not 0 <= self.f_min < self.f_max:
            raise ValueError("need 0 <= f_min < f_max")

    def psd(self, f):
        af = np.abs(np.asarray(f, dtype=float))
        return np.where((af >= self.f_min) & (af <= self.f_max), self.level, 0.0)

    def sample(self, grid, stream):
        return _sample_banded(self, grid, stream)

    def band_power(self):
        return 2.0 * self.level * (self.f_max - self.f_min)

    def max_frequency(self):
        return self.f_max


@dataclass(frozen=True)
class PowerLawNoise(NoiseModel):
    """S(f) = amplitude * |f|^exponent for f_min <= |f| <= f_max.

    ``amplitude`` is the density at 1 Hz.  A positive lower cutoff is
    required for exponent <= -1, where the integrated power otherwise
    diverges.
    """

    amplitude: float
    exponent: float
    f_min: float
    f_max: float

    def __post_init__(self) -> None:
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        if not 0 <= self.f_min < self.f_max:
            raise ValueError("need 0 <= f_min < f_max")
        if self.exponent <= -1 and self.f_min <= 0:
            raise ValueError(
                "exponent <= -1 requires a positive f_min, the band power "
                "diverges at DC otherwise"
            )

    def psd(self, f):
        af = np.abs(np.asarray(f, dtype=float))
        in_band = (af >= self.f_min) & (af <= self.f_max)
        out = np.zeros_like(af)
        np.power(af, self.exponent, out=out, where=in_band)
        return self.amplitude * np.where(in_band, out, 0.0)

    def sample(self, grid, stream):
        return _sample_banded(self, grid, stream)

    def band_power(self):
        p = self.exponent
        if p == -1:
            integral = math.log(self.f_max / self.f_min)
        else:
            integral = (self.f_max ** (p + 1) - self.f_min ** (p + 1)) / (p + 1)
        return 2.0 * self.amplitude * integral

    def max_frequency(self):
        return self.f_max


@dataclass(frozen=True)
class CompositeNoise(NoiseModel):
    """Independent sum of component models; PSDs and realizations add."""

    components: tuple[NoiseModel, ...]

    def __post_init__(self) -> None:
        if not self.components:
            raise ValueError("composite needs at least one component")
        object.__setattr__(self, "components", tuple(self.components))

    def psd(self, f):
        return sum(c.psd(f) for c in self.components)

    def spectral_lines(self):
        lines: list[tuple[float, float]] = []
        for c in self.components:
            lines.extend(c.spectral_lines())
        return tuple(lines)

    def sample(self, grid, stream):
        total = np.zeros(grid.n)
        for c in self.components:
            total += c.sample(grid, stream)
        return total

    def band_power(self):
        return sum(c.band_power() for c in self.components)

    def max_frequency(self):
        return max(c.max_frequency() for c in self.components)


def psd(model: NoiseModel, f: np.ndarray | float) -> np.ndarray | float:
    """Continuous two-sided PSD of the model at frequencies f (Hz)."""
    return model.psd(f)


def sample_realization(model: NoiseModel, grid: TimeGrid, stream: RandomStream) -> np.ndarray:
    """Draw one realization of Delta(t) on the grid from the given stream."""
    return model.sample(grid, stream)


def autocorrelation_estimate(realizations: np.ndarray, grid: TimeGrid) -> tuple[TimeGrid, np.ndarray]:
    """Ensemble-averaged autocorrelation R(tau) of zero-mean realizations.

    Parameters
    ----------
    realizations : ndarray, shape (n_realizations, n_samples)
        Ensemble of noise traces on the grid.
    grid : TimeGrid
        Sampling grid of the traces.

    Returns
    -------
    (lag_grid, values)
        Unbiased estimate of R(tau) on lags 0 .. (n-1)*dt; R(0) is the
        sample variance.
    """
    reps = np.atleast_2d(np.asarray(realizations, dtype=float))
    if reps.shape[1] != grid.n:
        raise ValueError("realization length does not match grid")
    n = grid.n
    m = 2 * n
    spec = np.fft.rfft(reps, n=m, axis=1)
    corr = np.fft.irfft(np.abs(spec) ** 2, n=m, axis=1)[:, :n]
    counts = np.arange(n, 0, -1, dtype=float)
    values = corr.mean(axis=0) / counts
    lag_grid = TimeGrid(0.0, (n - 1) * grid.dt, n)
    return lag_grid, values
