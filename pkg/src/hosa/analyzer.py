"""Monte Carlo campaigns, scans, and power-spectral-density reconstruction.

Orchestrates the two measurement protocols end to end: draw a noise
realization, run the forward model (displacement trajectory and sideband
spin flip, or superposition staircase and parity readout), draw one
Bernoulli detection outcome per repetition, and invert the averaged signal
into a PSD estimate normalized by the filter's amplification and resolution
bandwidth.

Reproducibility contract: repetition j of scan row i consumes the
substream ``seed, i*N + j`` and nothing else, so results are independent
of chunking and thread schedule.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .coherent import (
    ReadoutModel,
    drive_from_filter,
    final_displacement_ensemble,
    quadratic_fit,
    spin_flip_probability,
    trajectory_grid,
)
from .filters import (
    BlackmanFilterSpec,
    blackman_frequency_filter,
    piecewise_frequency_filter,
)
from .fock import (
    QUADRATIC_PHASE_LIMIT,
    PulseSequence,
    phase_accumulation,
    readout_probability,
    sensitivity_from_sequence,
    sequence_to_json,
)
from .noise import CompositeNoise, NoiseModel, PowerLawNoise, SinusoidalNoise, WhiteBandNoise
from .numerics import TimeGrid, rng_stream

# displaced-thermal readout stays within 5% of p0 + p2|alpha|^2 below this
ALPHA_WINDOW = 0.47

_CHUNK = 256  # realizations integrated per vectorized block

# synthesize noise on a record this many times longer than the protocol and
# slice: a length-T record only resolves df = 1/T, which undersamples filter
# peaks a few bins wide and biases band-integrated responses low
_PAD = 8

CSV_HEADER = "x_hz,signal_mean,signal_sigma,phi_sq,psd_rad2_per_hz,rbw_hz,flags"


@dataclass(frozen=True)
class ExperimentConfig:
    """One measurement campaign: a filter, a noise model, and shot statistics.

    The readout field supplies the sideband parameters (eta, truncation,
    pulse area) for the coherent method; its nbar is ignored and replaced
    by ``nbar_base + heating_rate * duration``, the occupation accumulated
    by the end of the protocol.  The number-state method reads out through
    the superposition parity and takes no readout model.
    """

    method: str
    filter: BlackmanFilterSpec | PulseSequence
    noise: NoiseModel
    repetitions: int
    seed: int
    readout: ReadoutModel | None = None
    nbar_base: float = 0.0
    heating_rate: float = 0.0
    sigma_p: float | None = None
    drive_limit: float | None = None
    shot_noise: bool = True

    def __post_init__(self):
        if self.method not in ("coherent", "fock"):
            raise ValueError("method must be 'coherent' or 'fock'")
        if self.method == "coherent" and not isinstance(self.filter, BlackmanFilterSpec):
            raise ValueError("coherent method needs a BlackmanFilterSpec filter")
        if self.method == "fock":
            if not isinstance(self.filter, PulseSequence):
                raise ValueError("fock method needs a PulseSequence filter")
            if self.readout is not None:
                raise ValueError("fock method reads out through the sequence itself")
        if not isinstance(self.noise, NoiseModel):
            raise ValueError("noise must be a NoiseModel")
        if int(self.repetitions) != self.repetitions or self.repetitions < 1:
            raise ValueError("repetitions must be a positive integer")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if not (math.isfinite(self.nbar_base) and self.nbar_base >= 0):
            raise ValueError("nbar_base must be non-negative")
        if not (math.isfinite(self.heating_rate) and self.heating_rate >= 0):
            raise ValueError("heating_rate must be non-negative")
        if self.sigma_p is not None and not 0 <= self.sigma_p < 1:
            raise ValueError("sigma_p must lie in [0, 1)")
        if self.drive_limit is not None and self.drive_limit <= 0:
            raise ValueError("drive_limit must be positive")

    @property
    def duration(self) -> float:
        if self.method == "coherent":
            return self.filter.duration
        return self.filter.total_duration

    @property
    def nbar(self) -> float:
        return self.nbar_base + self.heating_rate * self.duration


def effective_readout(config: ExperimentConfig) -> ReadoutModel:
    """Readout model with the heated occupation substituted for nbar."""
    template = config.readout if config.readout is not None else ReadoutModel()
    return replace(template, nbar=config.nbar)


def _drive_peak(spec: BlackmanFilterSpec) -> float:
    drive = drive_from_filter(spec)
    t = np.linspace(-spec.t_w, spec.t_w, 8193)
    return float(np.max(np.abs(drive.amplitude(t))))


def _check_drive_limit(config: ExperimentConfig) -> None:
    if config.method != "coherent" or config.drive_limit is None:
        return
    peak = _drive_peak(config.filter)
    if peak > config.drive_limit * (1 + 1e-9):
        cap = config.filter.s0 * config.drive_limit / peak
        raise ValueError(
            f"drive amplitude {peak:.6g} rad/s exceeds the limit "
            f"{config.drive_limit:.6g} rad/s; cap s0 at {cap:.6g}"
        )


def capped_s0(s0: float, f0: float, drive_limit: float | None) -> float:
    """Largest allowed filter amplitude, s0 <= drive_limit / (2 pi f0)."""
    if drive_limit is None:
        return s0
    return min(s0, drive_limit / (2 * math.pi * f0))


def _sample_window(model: NoiseModel, grid: TimeGrid, stream) -> np.ndarray:
    """One realization on the grid, synthesized on a _PAD-times-longer record."""
    if isinstance(model, SinusoidalNoise):
        return model.sample(grid, stream)  # exact tone, no resolution limit
    if isinstance(model, CompositeNoise):
        return sum(_sample_window(c, grid, stream) for c in model.components)
    long_grid = TimeGrid(
        grid.t_start,
        grid.t_start + _PAD * (grid.t_end - grid.t_start),
        _PAD * (grid.n - 1) + 1,
    )
    return model.sample(long_grid, stream)[: grid.n]


def _coherent_probs(config: ExperimentConfig, stream_base: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-repetition flip probability and Bernoulli outcome."""
    spec = config.filter
    _check_drive_limit(config)
    f_hi = config.noise.max_frequency()
    grid = trajectory_grid(spec, f_hi if f_hi > 0 else None)
    drive = drive_from_filter(spec)
    readout = effective_readout(config)
    n = config.repetitions
    probs = np.empty(n)
    outcomes = np.empty(n)
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        rows = np.empty((hi - lo, grid.n))
        uniforms = np.empty(hi - lo)
        for j in range(lo, hi):
            stream = rng_stream(config.seed, stream_base + j)
            rows[j - lo] = _sample_window(config.noise, grid, stream)
            uniforms[j - lo] = stream.uniform()
        alphas = final_displacement_ensemble(drive, grid, rows)
        mags = np.abs(alphas)
        # widen the number-state truncation for outlier displacements
        need = int(np.ceil(mags.max() ** 2 + 10.0 * math.sqrt(mags.max() ** 2 + 1.0) + 20.0))
        chunk_readout = (
            replace(readout, n_max=need) if need > readout.n_max else readout
        )
        probs[lo:hi] = [spin_flip_probability(m, chunk_readout) for m in mags]
        outcomes[lo:hi] = (uniforms < probs[lo:hi]).astype(float)
    return probs, outcomes


def _fock_grid(seq: PulseSequence, f_hi: float) -> TimeGrid:
    total = seq.total_duration
    n = max(2001, int(np.ceil(total * 20.0 * max(f_hi, 1.0 / total))) + 1)
    return TimeGrid(-total / 2, total / 2, n)


def _fock_probs(config: ExperimentConfig, stream_base: int) -> tuple[np.ndarray, np.ndarray]:
    seq = config.filter
    pw = sensitivity_from_sequence(seq)
    grid = _fock_grid(seq, config.noise.max_frequency())
    n = config.repetitions
    probs = np.empty(n)
    outcomes = np.empty(n)
    for j in range(n):
        stream = rng_stream(config.seed, stream_base + j)
        delta = _sample_window(config.noise, grid, stream)
        u = stream.uniform()
        probs[j] = readout_probability(phase_accumulation(pw, grid, delta))
        outcomes[j] = float(u < probs[j])
    return probs, outcomes


def run_monte_carlo(
    config: ExperimentConfig, stream_base: int = 0
) -> tuple[float, float]:
    """Empirical detection mean and its standard error.

    Each repetition draws one noise realization and one Bernoulli outcome
    from its own substream, so the result is exactly reproducible and
    independent of internal chunking.  With ``shot_noise=False`` the
    Bernoulli step is skipped and the mean of the per-repetition detection
    probabilities is returned instead, with the ensemble standard error.
    """
    if config.method == "coherent":
        probs, outcomes = _coherent_probs(config, stream_base)
    else:
        probs, outcomes = _fock_probs(config, stream_base)
    if config.shot_noise:
        mean = float(outcomes.mean())
        sigma = math.sqrt(mean * (1.0 - mean) / outcomes.size)
    else:
        mean = float(probs.mean())
        sigma = float(probs.std(ddof=1) / math.sqrt(probs.size)) if probs.size > 1 else 0.0
    return mean, sigma


class PsdEstimate(NamedTuple):
    phi_sq: float
    psd: float
    flags: tuple[str, ...]


def _filter_normalization(config: ExperimentConfig) -> tuple[float, float]:
    """(amplification, rbw) of the configured filter."""
    if config.method == "coherent":
        filt = blackman_frequency_filter(config.filter)
    else:
        filt = piecewise_frequency_filter(sensitivity_from_sequence(config.filter))
    return filt.amplification, filt.rbw


def estimate_psd(signal_mean: float, config: ExperimentConfig) -> PsdEstimate:
    """Invert the averaged detection signal into a PSD at the filter center.

    Coherent method: <|alpha|^2> = (P - p0)/p2, then S = <|alpha|^2> /
    (a rbw); the reported phi_sq is the equivalent spin phase variance
    4<|alpha|^2>.  Number-state method: phi_sq = 4 P (small-angle parity
    readout), then S = phi_sq / (a rbw).  Negative intermediates clamp to
    zero with a 'clamped' flag; estimates outside the quadratic windows
    are flagged, not rejected.
    """
    flags: list[str] = []
    a, rbw = _filter_normalization(config)
    if config.method == "coherent":
        readout = effective_readout(config)
        p0, p2 = quadratic_fit(readout)
        alphas = np.linspace(0.0, 2.5, 501)
        ceiling = max(spin_flip_probability(x, readout) for x in alphas)
        if signal_mean > ceiling:
            raise ValueError(
                f"signal {signal_mean:.6g} exceeds the readout ceiling {ceiling:.6g}; "
                "outside the monotonic inversion range"
            )
        alpha_sq = (signal_mean - p0) / p2
        if alpha_sq <= 0.0:
            alpha_sq = 0.0
            flags.append("clamped")
        if alpha_sq > ALPHA_WINDOW**2:
            flags.append("readout_window")
        phi_sq = 4.0 * alpha_sq
        psd = alpha_sq / (a * rbw)
        if config.drive_limit is not None:
            floor = float(sensitivity_floor(config, config.filter.f0))
            if psd <= floor:
                flags.append("below_floor")
    else:
        phi_sq = 4.0 * signal_mean
        if math.sqrt(phi_sq) > QUADRATIC_PHASE_LIMIT:
            flags.append("quadratic_window")
        psd = phi_sq / (a * rbw)
    return PsdEstimate(phi_sq, psd, tuple(flags))


def sensitivity_floor(config: ExperimentConfig, f0) -> np.ndarray:
    """Smallest resolvable PSD versus filter center, at the drive limit.

    The detection noise sigma_P (shot noise at the dark signal unless
    overridden) sets the smallest resolvable displacement |alpha_min|^2 =
    sigma_P / p2; dividing by the filter normalization at the capped
    amplitude s0 = drive_limit / (2 pi f0) gives a floor growing as f0^2.
    """
    if config.method != "coherent":
        raise ValueError("sensitivity_floor applies to the coherent method")
    if config.drive_limit is None:
        raise ValueError("sensitivity_floor needs drive_limit")
    readout = effective_readout(config)
    p0, p2 = quadratic_fit(readout)
    sigma = config.sigma_p
    if sigma is None:
        sigma = math.sqrt(p0 * (1.0 - p0) / config.repetitions)
    alpha_min_sq = sigma / p2
    spec = config.filter
    unit = BlackmanFilterSpec(spec.t_w, spec.k, 1.0)
    filt = blackman_frequency_filter(unit)
    norm = filt.amplification * filt.rbw  # integral |s~|^2 df at s0 = 1
    f0 = np.asarray(f0, dtype=float)
    s0 = config.drive_limit / (2 * np.pi * f0)
    return alpha_min_sq / (norm * s0**2)


@dataclass(frozen=True, eq=False)
class ScanResult:
    """Rows of a scan plus the resolved configuration that produced them."""

    mode: str
    x_hz: np.ndarray
    signal_mean: np.ndarray
    signal_sigma: np.ndarray
    phi_sq: np.ndarray
    psd: np.ndarray
    rbw_hz: np.ndarray
    flags: tuple[str, ...]
    config: dict

    def __post_init__(self):
        n = self.x_hz.size
        for name in ("signal_mean", "signal_sigma", "phi_sq", "psd", "rbw_hz"):
            if getattr(self, name).size != n:
                raise ValueError(f"column {name} length mismatch")
        if len(self.flags) != n:
            raise ValueError("flags length mismatch")

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for i in range(self.x_hz.size):
            fields = [
                repr(float(self.x_hz[i])),
                repr(float(self.signal_mean[i])),
                repr(float(self.signal_sigma[i])),
                repr(float(self.phi_sq[i])),
                repr(float(self.psd[i])),
                repr(float(self.rbw_hz[i])),
                self.flags[i],
            ]
            lines.append(",".join(fields))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        rows = [
            {
                "x_hz": float(self.x_hz[i]),
                "signal_mean": float(self.signal_mean[i]),
                "signal_sigma": float(self.signal_sigma[i]),
                "phi_sq": float(self.phi_sq[i]),
                "psd_rad2_per_hz": float(self.psd[i]),
                "rbw_hz": float(self.rbw_hz[i]),
                "flags": self.flags[i],
            }
            for i in range(self.x_hz.size)
        ]
        return json.dumps(
            {"mode": self.mode, "config": self.config, "rows": rows}, indent=2
        )


def config_summary(config: ExperimentConfig) -> dict:
    """JSON-ready echo of every resolved config field, units in key names."""
    if isinstance(config.filter, BlackmanFilterSpec):
        filt = {
            "type": "blackman",
            "t_w_s": config.filter.t_w,
            "k": config.filter.k,
            "s0": config.filter.s0,
        }
    else:
        filt = {
            "type": "sequence",
            "total_duration_s": config.filter.total_duration,
            "pulses": json.loads(sequence_to_json(config.filter)),
        }
    readout = effective_readout(config) if config.method == "coherent" else None
    return {
        "method": config.method,
        "filter": filt,
        "noise": _noise_summary(config.noise),
        "repetitions": config.repetitions,
        "seed": config.seed,
        "nbar_base": config.nbar_base,
        "heating_rate_per_s": config.heating_rate,
        "nbar_effective": config.nbar,
        "sigma_p": config.sigma_p,
        "drive_limit_rad_s": config.drive_limit,
        "shot_noise": config.shot_noise,
        "readout": None
        if readout is None
        else {
            "eta": readout.eta,
            "nbar": readout.nbar,
            "n_max": readout.n_max,
            "pulse_area_rad": readout.pulse_area,
        },
    }


def _noise_summary(model: NoiseModel) -> dict:
    if isinstance(model, SinusoidalNoise):
        return {
            "type": "sinusoidal",
            "delta0_rad_s": model.delta0,
            "f_noise_hz": model.f_noise,
            "phase_rad": model.phase,
        }
    if isinstance(model, WhiteBandNoise):
        return {
            "type": "white_band",
            "level_rad2_s2_per_hz": model.level,
            "f_min_hz": model.f_min,
            "f_max_hz": model.f_max,
        }
    if isinstance(model, PowerLawNoise):
        return {
            "type": "power_law",
            "amplitude_rad2_s2_per_hz": model.amplitude,
            "exponent": model.exponent,
            "f_min_hz": model.f_min,
            "f_max_hz": model.f_max,
        }
    if isinstance(model, CompositeNoise):
        return {
            "type": "composite",
            "components": [_noise_summary(c) for c in model.components],
        }
    return {"type": type(model).__name__}


def _run_rows(configs, threads):
    """run_monte_carlo per row config, substreams offset by row index."""
    n = configs[0].repetitions

    def job(i):
        return run_monte_carlo(configs[i], stream_base=i * n)

    if threads is not None and threads == 1:
        return [job(i) for i in range(len(configs))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(job, range(len(configs))))


def scan_noise_frequency(
    config: ExperimentConfig, f_list, threads: int | None = None
) -> ScanResult:
    """Response and PSD estimate versus the frequency of a sinusoidal tone.

    A sinusoidal line reconstructs as line power divided by the resolution
    bandwidth, not a density; compare psd columns between scans with the
    same rbw only.
    """
    if not isinstance(config.noise, SinusoidalNoise):
        raise ValueError("scan_noise_frequency needs a SinusoidalNoise model")
    f_arr = np.asarray(list(f_list), dtype=float)
    if f_arr.size == 0 or np.any(f_arr <= 0):
        raise ValueError("f_list must contain positive frequencies")
    configs = [
        replace(config, noise=replace(config.noise, f_noise=float(f))) for f in f_arr
    ]
    stats = _run_rows(configs, threads)
    a, rbw = _filter_normalization(config)
    means = np.array([s[0] for s in stats])
    sigmas = np.array([s[1] for s in stats])
    phi_sq = np.empty(f_arr.size)
    psd = np.empty(f_arr.size)
    flags = []
    for i, mean in enumerate(means):
        est = estimate_psd(float(mean), configs[i])
        phi_sq[i] = est.phi_sq
        psd[i] = est.psd
        flags.append("+".join(est.flags))
    return ScanResult(
        "noise_frequency",
        f_arr,
        means,
        sigmas,
        phi_sq,
        psd,
        np.full(f_arr.size, rbw),
        tuple(flags),
        config_summary(config),
    )


def scan_filters(
    config: ExperimentConfig, k_list, threads: int | None = None
) -> ScanResult:
    """PSD reconstruction versus filter center f0 = k / t_w.

    Each row rebuilds the filter at the same window, capping s0 at the
    drive limit, runs the campaign, and inverts the signal; rows at or
    below the sensitivity floor are flagged.
    """
    if config.method != "coherent":
        raise ValueError("scan_filters applies to the coherent method")
    ks = [int(k) for k in k_list]
    if not ks or any(k < 1 for k in ks):
        raise ValueError("k_list must contain positive integers")
    base = config.filter
    configs = []
    for k in ks:
        f0 = k / base.t_w
        s0 = capped_s0(base.s0, f0, config.drive_limit)
        configs.append(replace(config, filter=BlackmanFilterSpec(base.t_w, k, s0)))
    stats = _run_rows(configs, threads)
    x = np.array([k / base.t_w for k in ks])
    means = np.array([s[0] for s in stats])
    sigmas = np.array([s[1] for s in stats])
    phi_sq = np.empty(x.size)
    psd = np.empty(x.size)
    rbw_col = np.empty(x.size)
    flags = []
    for i, cfg in enumerate(configs):
        est = estimate_psd(float(means[i]), cfg)
        phi_sq[i] = est.phi_sq
        psd[i] = est.psd
        _, rbw_col[i] = _filter_normalization(cfg)
        flags.append("+".join(est.flags))
    return ScanResult(
        "filters",
        x,
        means,
        sigmas,
        phi_sq,
        psd,
        rbw_col,
        tuple(flags),
        config_summary(config),
    )


@dataclass(frozen=True, eq=False)
class AmplitudeScanResult:
    """Detection signal versus filter amplitude at fixed noise; the signal
    rises quadratically in s0 and saturates once phases leave the
    small-angle regime."""

    s0: np.ndarray
    amplification: np.ndarray
    signal_mean: np.ndarray
    signal_sigma: np.ndarray
    config: dict

    def to_csv(self) -> str:
        lines = ["s0,amplification,signal_mean,signal_sigma"]
        for i in range(self.s0.size):
            lines.append(
                ",".join(
                    repr(float(v))
                    for v in (
                        self.s0[i],
                        self.amplification[i],
                        self.signal_mean[i],
                        self.signal_sigma[i],
                    )
                )
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        rows = [
            {
                "s0": float(self.s0[i]),
                "amplification": float(self.amplification[i]),
                "signal_mean": float(self.signal_mean[i]),
                "signal_sigma": float(self.signal_sigma[i]),
            }
            for i in range(self.s0.size)
        ]
        return json.dumps(
            {"mode": "amplitude", "config": self.config, "rows": rows}, indent=2
        )


def scan_drive_amplitude(
    config: ExperimentConfig, s0_list, threads: int | None = None
) -> AmplitudeScanResult:
    """Sweep the filter amplitude s0 at a fixed noise model."""
    if config.method != "coherent":
        raise ValueError("scan_drive_amplitude applies to the coherent method")
    s0s = np.asarray(list(s0_list), dtype=float)
    if s0s.size == 0 or np.any(s0s <= 0):
        raise ValueError("s0_list must contain positive amplitudes")
    base = config.filter
    configs = [
        replace(config, filter=BlackmanFilterSpec(base.t_w, base.k, float(s0)))
        for s0 in s0s
    ]
    stats = _run_rows(configs, threads)
    amps = np.empty(s0s.size)
    for i, cfg in enumerate(configs):
        a, _ = _filter_normalization(cfg)
        amps[i] = a
    return AmplitudeScanResult(
        s0s,
        amps,
        np.array([s[0] for s in stats]),
        np.array([s[1] for s in stats]),
        config_summary(config),
    )
