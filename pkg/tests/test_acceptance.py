"""End-to-end acceptance criteria, one test per criterion.

Each test prints one line with the measured quantity next to its required
tolerance, then asserts it.  Criteria 4 and 10 state requirements the
implemented physics does not meet; they are implemented faithfully and fail,
with the measured shortfall quantified in the printed line.
"""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from hosa.analyzer import ExperimentConfig, scan_filters, scan_noise_frequency, sensitivity_floor
from hosa.coherent import (
    ReadoutModel,
    displaced_thermal_populations,
    drive_from_filter,
    final_displacement_ensemble,
    fourth_order_response,
    predistort,
    quadratic_fit,
    small_angle_response,
    spin_flip_probability,
    trajectory_grid,
)
from hosa.filters import (
    BlackmanFilterSpec,
    blackman_frequency_filter,
    fwhm,
    piecewise_filter_amplitude,
)
from hosa.fock import (
    optimize_sequence,
    piecewise_frequency_filter,
    propagate_sequence_numeric,
    rabi_mismatch_sensitivity,
    readout_probability,
    reference_target,
    sensitivity_from_sequence,
)
from hosa.noise import PowerLawNoise, SinusoidalNoise, WhiteBandNoise
from hosa.numerics import TimeGrid, rng_stream


def report(line: str) -> None:
    print(f"\n  {line}")


def test_criterion_01_blackman_bandwidth():
    worst = 0.0
    for t_w, k in ((250e-6, 2), (1e-3, 7), (1e-3, 35)):
        filt = blackman_frequency_filter(BlackmanFilterSpec(t_w, k, 1.0))
        keep = filt.f_grid > 0
        width = fwhm(filt.f_grid[keep], filt.magnitude_sq[keep])
        worst = max(worst, abs(width * t_w / 0.822 - 1.0))
    report(f"criterion 1: max FWHM deviation from 0.822/t_w = {worst:.2%} (required <= 1%)")
    assert worst <= 0.01


def test_criterion_02_amplification_constants():
    devs = []
    for t_w, k, s0 in ((1e-3, 2, 1.0), (1e-3, 7, 2.0), (250e-6, 35, 0.5)):
        filt = blackman_frequency_filter(BlackmanFilterSpec(t_w, k, s0))
        a = filt.amplification / (t_w**2 * s0**2)
        integral = filt.amplification * filt.rbw / (t_w * s0**2)
        devs.append((k, a, integral))
        assert a == pytest.approx(0.371, abs=0.002)
        assert integral == pytest.approx(0.305, abs=0.003)
    filt1 = blackman_frequency_filter(BlackmanFilterSpec(1e-3, 1, 1.0))
    a1 = filt1.amplification / 1e-6
    report(
        "criterion 2: amplification/(t_w^2 s0^2) = "
        + ", ".join(f"{a:.4f} (k={k})" for k, a, _ in devs)
        + f", {a1:.4f} (k=1); required 0.371+-0.002 (k>=2), 0.369+-0.002 (k=1)"
    )
    assert a1 == pytest.approx(0.369, abs=0.002)


def test_criterion_03_band_integral_identity():
    spec = BlackmanFilterSpec(t_w=500e-6, k=10, s0=1.0)
    model = WhiteBandNoise(1e-3, 1e4, 3e4)
    grid = trajectory_grid(spec, model.max_frequency())
    drv = drive_from_filter(spec)
    reps = 2000
    # synthesize on an 8x longer record so the sample grid resolves the
    # filter peak (a length-T record only resolves df = 1/T)
    pad = 8
    long_grid = TimeGrid(
        grid.t_start, grid.t_start + pad * (grid.t_end - grid.t_start),
        pad * (grid.n - 1) + 1,
    )
    chunks, rows, j = [], np.empty((256, grid.n)), 0
    for i in range(reps):
        rows[j] = model.sample(long_grid, rng_stream(55, i))[: grid.n]
        j += 1
        if j == rows.shape[0] or i == reps - 1:
            chunks.append(np.abs(final_displacement_ensemble(drv, grid, rows[:j])) ** 2)
            j = 0
    v = np.concatenate(chunks)
    mc, se = float(np.mean(v)), float(np.std(v) / math.sqrt(reps))
    pred = small_angle_response(spec, model)
    report(
        f"criterion 3: Monte Carlo <|alpha|^2> = {mc:.4e} vs band integral "
        f"{pred:.4e}, deviation {(mc - pred) / se:+.2f} SE (required within 3 SE)"
    )
    assert abs(mc - pred) <= 3 * se


def test_criterion_04_readout_linearity():
    ro = ReadoutModel(nbar=0.0)
    _, p2 = quadratic_fit(ro)
    alphas = np.linspace(0.01, 0.4699, 470)
    devs = np.array(
        [abs(spin_flip_probability(a, ro) - p2 * a * a) / spin_flip_probability(a, ro)
         for a in alphas]
    )
    worst = float(devs.max())
    report(
        f"criterion 4: max |P - p2 alpha^2|/P = {worst:.2%} over |alpha| < 0.47 "
        "(required <= 5%; known model shortfall)"
    )
    assert worst <= 0.05


def test_criterion_05_quadratic_fit_constants():
    p0, p2 = quadratic_fit(ReadoutModel(nbar=0.17))
    report(
        f"criterion 5: p0 = {p0:.4f} (required 0.14+-0.014), "
        f"p2 = {p2:.4f} (required 0.64+-0.064)"
    )
    assert p0 == pytest.approx(0.14, abs=0.014)
    assert p2 == pytest.approx(0.64, abs=0.064)


def test_criterion_06_sensitivity_floor():
    cfg = ExperimentConfig(
        method="coherent",
        filter=BlackmanFilterSpec(1e-3, 7, 1.0),
        noise=SinusoidalNoise(0.0, 7000.0),
        repetitions=1000,
        seed=1,
        nbar_base=0.17,
        sigma_p=0.006,
        drive_limit=2 * math.pi * 2.1e6,
    )
    _, p2 = quadratic_fit(ReadoutModel(nbar=0.17))
    alpha_min = math.sqrt(0.006 / p2)
    f0 = np.array([5e3, 2e4, 1e5])
    coeff = sensitivity_floor(cfg, f0) / f0**2
    spread = float(np.max(np.abs(coeff / 7.1e-12 - 1.0)))
    report(
        f"criterion 6: alpha_min = {alpha_min:.4f} (required 0.10+-0.005), "
        f"floor coefficient = {coeff[0]:.3e} (required 7.1e-12 within 5%)"
    )
    assert alpha_min == pytest.approx(0.10, abs=0.005)
    assert spread <= 0.05


def test_criterion_07_fourth_order_subharmonic():
    spec = BlackmanFilterSpec(t_w=500e-6, k=25, s0=1.0)
    drv = drive_from_filter(spec)
    f_n = 25e3
    grid = trajectory_grid(spec, f_n)
    reps = 1000

    def ensemble(d0):
        model = SinusoidalNoise(d0, f_n)
        rows = np.stack([model.sample(grid, rng_stream(31, i)) for i in range(reps)])
        return float(np.mean(np.abs(final_displacement_ensemble(drv, grid, rows)) ** 2))

    d_hi, d_lo = 2 * math.pi * 2e3, 2 * math.pi * 900.0
    mc_hi = ensemble(d_hi)
    pred_hi = small_angle_response(spec, SinusoidalNoise(d_hi, f_n)) + fourth_order_response(
        spec, d_hi, f_n
    )
    rel = mc_hi / pred_hi - 1.0
    mc_lo = ensemble(d_lo)
    sub_hi = mc_hi - small_angle_response(spec, SinusoidalNoise(d_hi, f_n))
    sub_lo = mc_lo - small_angle_response(spec, SinusoidalNoise(d_lo, f_n))
    ratio = sub_lo / sub_hi
    expect = (900.0 / 2000.0) ** 4
    report(
        f"criterion 7: ensemble vs closed form {rel:+.2%} (required within 10%); "
        f"suppression ratio {ratio:.5f} vs (900/2000)^4 = {expect:.5f} "
        f"({ratio / expect - 1.0:+.2%}, required within 20%)"
    )
    assert abs(rel) <= 0.10
    assert ratio == pytest.approx(expect, rel=0.20)


def test_criterion_08_number_state_filter():
    opt = optimize_sequence(reference_target(5000.0))
    seq = opt.sequence
    pw = sensitivity_from_sequence(seq, "half_value")
    filt = piecewise_frequency_filter(pw)
    d0 = 600.0
    f_scan = np.linspace(opt.center_hz - opt.rbw_hz, opt.center_hz + opt.rbw_hz, 13)
    total = seq.total_duration
    n = max(4001, int(np.ceil(total * 40 * f_scan.max())) + 1)
    grid = TimeGrid(0.0, total, n)
    phases = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    est = []
    for f in f_scan:
        acc = 0.0
        for ph in phases:
            delta = d0 * np.cos(2 * np.pi * f * grid.times + ph)
            acc += propagate_sequence_numeric(seq, grid, delta, 8)
        est.append(acc / phases.size)
    # phase-averaged small-angle parity signal: <P> = |s~(f)|^2 d0^2 / 8
    mag_num = 8.0 * np.array(est) / d0**2
    mag_ana = np.abs(piecewise_filter_amplitude(pw, f_scan)) ** 2
    w_num = mag_num - mag_num.min()
    w_ana = mag_ana - mag_ana.min()
    c_num = float(np.sum(f_scan * w_num) / np.sum(w_num))
    c_ana = float(np.sum(f_scan * w_ana) / np.sum(w_ana))
    i0 = int(np.argmin(np.abs(f_scan - filt.f0)))
    peak_rel = abs(mag_num[i0] / mag_ana[i0] - 1.0)
    report(
        f"criterion 8: center shift {abs(c_num - c_ana):.1f} Hz "
        f"(required <= rbw/10 = {opt.rbw_hz / 10:.1f} Hz); "
        f"peak magnitude deviation {peak_rel:.2%} (required <= 15%)"
    )
    assert abs(c_num - c_ana) <= opt.rbw_hz / 10
    assert peak_rel <= 0.15


def test_criterion_09_closed_loop_psd():
    # amplitude chosen so the k = 7 row sits near the zero-bias operating
    # point of the quadratic inversion (<|alpha|^2> ~= 0.04)
    s0 = 8.103078539185756
    ks = [7, 11, 15, 19, 23, 27, 31, 35]
    base = dict(
        method="coherent",
        filter=BlackmanFilterSpec(1e-3, 7, s0),
        repetitions=2000,
        shot_noise=False,
    )
    white = ExperimentConfig(
        noise=WhiteBandNoise(2.0, 2000.0, 40000.0), seed=90, **base
    )
    res_w = scan_filters(white, ks, threads=4)
    ratios = res_w.psd / 2.0
    worst = float(np.max(np.abs(ratios - 1.0)))

    pink = ExperimentConfig(
        noise=PowerLawNoise(17500.0, -1.0, 2000.0, 40000.0), seed=91, **base
    )
    res_p = scan_filters(pink, ks, threads=4)
    slope = float(np.polyfit(np.log(res_p.x_hz), np.log(res_p.psd), 1)[0])
    report(
        f"criterion 9: flat WhiteBand worst pointwise deviation {worst:.2%} "
        f"(required <= 10%); 1/f log-log slope {slope:.4f} (required -1 +- 0.15)"
    )
    assert worst <= 0.10
    assert slope == pytest.approx(-1.0, abs=0.15)


def test_criterion_10_rabi_mismatch():
    s5k = rabi_mismatch_sensitivity(optimize_sequence(reference_target(5000.0)).sequence)
    s500 = rabi_mismatch_sensitivity(optimize_sequence(reference_target(500.0)).sequence)
    report(
        f"criterion 10: |dP/P per dOmega/Omega| = {abs(s5k):.3f} at 5 kHz "
        f"(required in [3, 7]) and {abs(s500):.3f} at 500 Hz (required in "
        "[0.4, 1.0]; known model shortfall)"
    )
    assert 3.0 <= abs(s5k) <= 7.0
    assert 0.4 <= abs(s500) <= 1.0


def test_criterion_11_property_suite():
    # norm preservation: the propagator raises beyond 1e-8 drift
    opt = optimize_sequence(reference_target(5000.0))
    seq = opt.sequence
    total = seq.total_duration
    grid = TimeGrid(0.0, total, 20001)
    delta = 800.0 * np.cos(2 * np.pi * opt.center_hz * grid.times)
    p = propagate_sequence_numeric(seq, grid, delta, 8)
    assert 0.0 <= p <= 1.0

    # probability bounds across the readout
    ro = ReadoutModel(nbar=0.17)
    for a in np.linspace(0.0, 2.0, 41):
        assert 0.0 <= spin_flip_probability(float(a), ro) <= 1.0
    phi = np.linspace(-8.0, 8.0, 1001)
    br = readout_probability(phi)
    assert np.all(br >= 0.0) and np.all(br <= 1.0)

    # displaced thermal populations against a truncated matrix oracle
    dim, alpha, nbar = 80, 0.3, 0.17
    a_op = np.diag(np.sqrt(np.arange(1, dim)), 1)
    d_op = expm(alpha * a_op.conj().T - np.conjugate(alpha) * a_op)
    thermal = (nbar / (1 + nbar)) ** np.arange(dim) / (1 + nbar)
    rho = d_op @ np.diag(thermal) @ d_op.conj().T
    pops = displaced_thermal_populations(alpha, nbar, 30)
    oracle = np.real(np.diag(rho))[:31]
    mat_dev = float(np.max(np.abs(pops - oracle)))
    assert mat_dev < 1e-6

    # predistortion round trip through the inverted lowpass
    spec = BlackmanFilterSpec(t_w=400e-6, k=8, s0=0.9)
    drv = drive_from_filter(spec)
    f0c = 3.55e6
    n = 1 << 17
    t = np.linspace(-spec.t_w, spec.t_w, n, endpoint=False)
    dt = t[1] - t[0]
    freqs = np.fft.fftfreq(n, dt)
    c1, c2 = 1.0 / (2 * math.pi * 150e3), 1.0 / (2 * math.pi * 400e3) ** 2
    oi, oq = predistort(drv, c1, c2, f0c, t)
    u = oi * np.cos(2 * np.pi * f0c * t) + oq * np.sin(2 * np.pi * f0c * t)
    resp = 1.0 + 2j * np.pi * freqs * c1 - (2 * np.pi * freqs) ** 2 * c2
    filtered = np.fft.fft(u) * dt / resp
    want = np.fft.fft(drv.amplitude(t) * np.cos(2 * np.pi * f0c * t)) * dt
    band = np.abs(np.abs(freqs) - f0c) < drv.b.max() / (2 * np.pi) + 2.0 / spec.t_w
    rt_err = float(np.max(np.abs(filtered[band] - want[band])) / np.max(np.abs(want[band])))
    assert rt_err < 1e-3

    # determinism: scans are byte-identical across reruns and thread counts
    cfg = ExperimentConfig(
        method="coherent",
        filter=BlackmanFilterSpec(1e-3, 7, 8.0),
        noise=SinusoidalNoise(300.0, 7000.0),
        repetitions=60,
        seed=17,
    )
    f_list = [6600.0, 7000.0, 7400.0]
    csv_a = scan_noise_frequency(cfg, f_list, threads=1).to_csv()
    csv_b = scan_noise_frequency(cfg, f_list, threads=4).to_csv()
    assert csv_a == csv_b

    report(
        "criterion 11: norm guard at 1e-8 held; probabilities bounded; "
        f"matrix-oracle deviation {mat_dev:.1e} (< 1e-6); predistortion round "
        f"trip {rt_err:.1e} (< 1e-3); reruns byte-identical"
    )
