import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import expm

from hosa.coherent import (
    DriveWaveform,
    ReadoutModel,
    displaced_thermal_populations,
    drive_from_filter,
    final_displacement_ensemble,
    fourth_order_response,
    integrate_trajectory,
    predistort,
    quadratic_fit,
    rabi_ratio,
    small_angle_response,
    spin_flip_probability,
    trajectory_grid,
)
from hosa.filters import (
    B0,
    BlackmanFilterSpec,
    blackman_filter_amplitude,
    blackman_sensitivity,
)
from hosa.noise import SinusoidalNoise, WhiteBandNoise
from hosa.numerics import TimeGrid, quadrature, rng_stream


def test_drive_coefficients():
    spec = BlackmanFilterSpec(t_w=250e-6, k=5, s0=1.2)
    drv = drive_from_filter(spec)
    assert drv.a[0] == pytest.approx(2 * np.pi * B0 * spec.k / spec.t_w * spec.s0, rel=1e-12)
    assert drv.max_amplitude == pytest.approx(2 * np.pi * spec.f0 * spec.s0, rel=1e-12)
    assert float(drv.amplitude(0.0)) == pytest.approx(2 * np.pi * spec.f0 * spec.s0, rel=1e-12)


def test_drive_window():
    spec = BlackmanFilterSpec(t_w=250e-6, k=5)
    drv = drive_from_filter(spec)
    assert float(drv.amplitude(spec.t_w)) == pytest.approx(0.0, abs=1e-9)
    assert float(drv.amplitude(1.01 * spec.t_w)) == 0.0
    grid = TimeGrid(-spec.t_w, spec.t_w, 20001)
    area = quadrature(drv.amplitude(grid.times), grid)
    assert abs(area) < 1e-6 * drv.max_amplitude * spec.t_w


def test_drive_validation():
    with pytest.raises(ValueError):
        DriveWaveform(a=np.zeros(3), b=np.zeros(4), t_w=1e-4)
    with pytest.raises(ValueError):
        DriveWaveform(a=np.zeros(3), b=np.zeros(3), t_w=0.0)


def test_zero_noise_tracks_sensitivity():
    spec = BlackmanFilterSpec(t_w=250e-6, k=5, s0=1.0)
    drv = drive_from_filter(spec)
    grid = trajectory_grid(spec)
    tr = integrate_trajectory(drv, grid, np.zeros(grid.n))
    assert np.max(np.abs(tr.alpha.imag)) == 0.0
    err = np.max(np.abs(tr.alpha.real - blackman_sensitivity(spec, grid.times)))
    assert err < 2e-4 * spec.s0


def test_pure_rotation():
    spec = BlackmanFilterSpec(t_w=200e-6, k=4)
    drv = DriveWaveform(a=np.zeros(5), b=drive_from_filter(spec).b, t_w=spec.t_w)
    grid = trajectory_grid(spec)
    delta0 = 2 * np.pi * 1234.0
    tr = integrate_trajectory(drv, grid, np.full(grid.n, delta0), alpha_init=0.7 + 0.2j)
    expected = (0.7 + 0.2j) * np.exp(-1j * delta0 * 2 * spec.t_w)
    assert abs(tr.final - expected) < 1e-12
    assert np.max(np.abs(np.abs(tr.alpha) - abs(0.7 + 0.2j))) < 1e-13


def test_norm_preserved_under_noise_only():
    spec = BlackmanFilterSpec(t_w=200e-6, k=4)
    drv = DriveWaveform(a=np.zeros(5), b=drive_from_filter(spec).b, t_w=spec.t_w)
    grid = trajectory_grid(spec, 5e4)
    delta = WhiteBandNoise(1e1, 1e3, 5e4).sample(grid, rng_stream(8, 0))
    tr = integrate_trajectory(drv, grid, delta, alpha_init=1.0 + 0.0j)
    assert np.max(np.abs(np.abs(tr.alpha) - 1.0)) < 1e-8


def test_formal_solution_oracle():
    # independent reference: quadrature of the formal solution on a 16x finer grid
    spec = BlackmanFilterSpec(t_w=250e-6, k=3, s0=1.0)
    drv = drive_from_filter(spec)
    rng = np.random.default_rng(5)
    tones = [
        (2 * np.pi * rng.uniform(150, 450), rng.uniform(2e3, 3 * spec.f0), rng.uniform(0, 2 * np.pi))
        for _ in range(3)
    ]

    def delta_of(t):
        return sum(amp * np.cos(2 * np.pi * f * t + ph) for amp, f, ph in tones)

    coarse = TimeGrid(-spec.t_w, spec.t_w, 3001)
    result = integrate_trajectory(drv, coarse, delta_of(coarse.times)).final

    fine = TimeGrid(-spec.t_w, spec.t_w, 48001)
    t = fine.times
    d = delta_of(t)
    i1 = np.concatenate([[0.0], cumulative_trapezoid(d, t)])
    inner = np.trapezoid(drv.amplitude(t) * np.exp(1j * i1), t)
    reference = np.exp(-1j * i1[-1]) * inner
    assert abs(result - reference) / abs(reference) < 1e-4


def test_ensemble_matches_single_integrations():
    spec = BlackmanFilterSpec(t_w=150e-6, k=3)
    drv = drive_from_filter(spec)
    grid = trajectory_grid(spec, 2e4)
    model = WhiteBandNoise(1e-2, 1e3, 2e4)
    rows = np.stack([model.sample(grid, rng_stream(2, i)) for i in range(4)])
    fins = final_displacement_ensemble(drv, grid, rows)
    for row, fin in zip(rows, fins):
        assert abs(integrate_trajectory(drv, grid, row).final - fin) < 1e-13


def test_monte_carlo_matches_small_angle():
    spec = BlackmanFilterSpec(t_w=500e-6, k=10, s0=1.0)
    model = WhiteBandNoise(1e-3, 1e4, 3e4)
    grid = trajectory_grid(spec, model.max_frequency())
    drv = drive_from_filter(spec)
    reps = 400
    rows = np.stack([model.sample(grid, rng_stream(99, i)) for i in range(reps)])
    v = np.abs(final_displacement_ensemble(drv, grid, rows)) ** 2
    mc, se = np.mean(v), np.std(v) / np.sqrt(reps)
    assert abs(mc - small_angle_response(spec, model)) < 3 * se


def test_small_angle_sinusoid_peak():
    spec = BlackmanFilterSpec(t_w=400e-6, k=6, s0=0.8)
    d0 = 2 * np.pi * 40.0
    resp = small_angle_response(spec, SinusoidalNoise(d0, spec.f0))
    assert resp == pytest.approx(0.5 * d0**2 * (B0 * spec.s0 * spec.t_w) ** 2, rel=0.01)


def test_small_angle_out_of_band_rejection():
    spec = BlackmanFilterSpec(t_w=400e-6, k=6, s0=0.8)
    d0 = 2 * np.pi * 40.0
    passband = small_angle_response(spec, SinusoidalNoise(d0, spec.f0))
    outside = small_angle_response(spec, SinusoidalNoise(d0, 3 * spec.f0))
    assert outside < 1e-6 * passband
    assert small_angle_response(spec, SinusoidalNoise(0.0, spec.f0)) == 0.0


def test_small_angle_warns_outside_regime():
    spec = BlackmanFilterSpec(t_w=400e-6, k=6, s0=1.0)
    with pytest.warns(RuntimeWarning):
        small_angle_response(spec, SinusoidalNoise(2 * np.pi * 5e3, spec.f0))


def test_response_linearity_in_power():
    # common random phases: doubling the amplitude quadruples the response
    spec = BlackmanFilterSpec(t_w=250e-6, k=4, s0=1.0)
    drv = drive_from_filter(spec)
    grid = trajectory_grid(spec)
    phases = np.array([2 * np.pi * rng_stream(10, i).uniform() for i in range(200)])
    carrier = np.cos(2 * np.pi * spec.f0 * grid.times[None, :] + phases[:, None])
    d0 = 2 * np.pi * 20.0
    v1 = np.abs(final_displacement_ensemble(drv, grid, d0 * carrier)) ** 2
    v2 = np.abs(final_displacement_ensemble(drv, grid, 2 * d0 * carrier)) ** 2
    assert np.mean(v2) / np.mean(v1) == pytest.approx(4.0, rel=0.02)


def test_fourth_order_zero_frequency():
    spec = BlackmanFilterSpec(t_w=250e-6, k=2)
    assert fourth_order_response(spec, 2 * np.pi * 100, 0.0) == 0.0


def test_fourth_order_amplitude_scaling():
    spec = BlackmanFilterSpec(t_w=250e-6, k=2)
    lo = fourth_order_response(spec, 1.0, spec.f0 / 2)
    hi = fourth_order_response(spec, 2.0, spec.f0 / 2)
    assert hi == pytest.approx(16 * lo, rel=1e-12)


def test_fourth_order_sign_structure():
    # phase-averaged quadrature of the second-order double integral; the
    # odd-symmetry (upper-sign) closed form must match, the even one must not
    spec = BlackmanFilterSpec(t_w=250e-6, k=2, s0=1.0)
    f_n = spec.f0 / 2
    d0 = 2 * np.pi * 1000.0
    t = np.linspace(-spec.t_w, spec.t_w, 20001)
    a0 = blackman_sensitivity(spec, t)
    acc = 0.0
    phases = np.linspace(0, 2 * np.pi, 256, endpoint=False)
    for phi in phases:
        d = d0 * np.cos(2 * np.pi * f_n * t + phi)
        i1 = np.concatenate([[0.0], cumulative_trapezoid(d, t)])
        b = np.trapezoid(a0 * d * i1, t)
        acc += b * b
    oracle = acc / phases.size
    upper = fourth_order_response(spec, d0, f_n, odd_symmetry=True)
    lower = fourth_order_response(spec, d0, f_n, odd_symmetry=False)
    assert abs(oracle / upper - 1) < 1e-3
    assert abs(oracle / lower - 1) > 0.2


def test_subharmonic_matches_trajectories():
    # deep-sideband regime: the response at f0/2 is purely the 4th-order term
    spec = BlackmanFilterSpec(t_w=500e-6, k=25, s0=1.0)
    drv = drive_from_filter(spec)
    f_n = 25e3
    d0 = 2 * np.pi * 2e3
    grid = trajectory_grid(spec, f_n)
    model = SinusoidalNoise(d0, f_n)
    reps = 1000
    rows = np.stack([model.sample(grid, rng_stream(31, i)) for i in range(reps)])
    mc = np.mean(np.abs(final_displacement_ensemble(drv, grid, rows)) ** 2)
    predicted = small_angle_response(spec, model) + fourth_order_response(spec, d0, f_n)
    assert mc == pytest.approx(predicted, rel=0.1)


def test_rabi_ratio_values():
    assert rabi_ratio(1, 0, 0.357) == pytest.approx(0.335, abs=5e-4)
    assert rabi_ratio(3, 3, 0.0) == 1.0
    assert rabi_ratio(0, 1, 0.2) == rabi_ratio(1, 0, 0.2)
    with pytest.raises(ValueError):
        rabi_ratio(-1, 0, 0.1)


@given(eta=st.floats(0.01, 0.99))
@settings(max_examples=50, deadline=None)
def test_rabi_ratio_laguerre_identity(eta):
    ratio = rabi_ratio(2, 1, eta) / rabi_ratio(1, 0, eta)
    assert ratio == pytest.approx((2 - eta**2) / np.sqrt(2), rel=1e-10)


def test_populations_poisson_limit():
    lam = 0.35**2
    p = displaced_thermal_populations(0.35, 0.0, 30)
    n = np.arange(31)
    fact = np.array([float(math.factorial(int(m))) for m in n])
    expected = np.exp(-lam) * lam**n / fact
    np.testing.assert_allclose(p, expected, rtol=1e-10, atol=1e-300)


def test_populations_thermal_limit():
    nbar = 0.4
    p = displaced_thermal_populations(0.0, nbar, 60)
    n = np.arange(61)
    np.testing.assert_allclose(p, nbar**n / (1 + nbar) ** (n + 1), rtol=1e-12)


def test_populations_matrix_oracle():
    # truncated displacement operator acting on a thermal density matrix
    dim = 80
    alpha, nbar = 0.3, 0.17
    a = np.diag(np.sqrt(np.arange(1, dim)), 1)
    d = expm(alpha * a.conj().T - np.conjugate(alpha) * a)
    thermal = (nbar / (1 + nbar)) ** np.arange(dim) / (1 + nbar)
    rho = d @ np.diag(thermal) @ d.conj().T
    mine = displaced_thermal_populations(alpha, nbar, dim - 1)
    assert np.max(np.abs(mine[:40] - np.diag(rho).real[:40])) < 1e-6


def test_populations_truncation_error():
    with pytest.raises(ValueError, match="truncation"):
        displaced_thermal_populations(3.0, 0.5, 10)


def test_spin_flip_forbidden_from_ground_state():
    assert spin_flip_probability(0.0, ReadoutModel(eta=0.357, nbar=0.0)) == 0.0


@given(alpha=st.floats(0.0, 2.5), nbar=st.floats(0.0, 1.0))
@settings(max_examples=60, deadline=None)
def test_spin_flip_bounds(alpha, nbar):
    p = spin_flip_probability(alpha, ReadoutModel(eta=0.357, nbar=nbar, n_max=150))
    assert 0.0 <= p <= 1.0


def test_spin_flip_turnover_shape():
    ro = ReadoutModel(eta=0.357, nbar=0.055, n_max=150)
    al = np.linspace(0.0, 2.5, 126)
    p = np.array([spin_flip_probability(a, ro) for a in al])
    i = int(np.argmax(p))
    assert 0.3 < al[i] < 2.0
    assert np.all(np.diff(p[: i + 1]) > 0)
    assert p[-1] < 0.9 * p[i]


def test_quadratic_fit_values():
    p0, p2 = quadratic_fit(ReadoutModel(eta=0.357, nbar=0.17, n_max=80))
    assert p0 == pytest.approx(0.1393161, rel=1e-5)
    assert p2 == pytest.approx(0.6217474, rel=1e-5)
    p0_cold, p2_cold = quadratic_fit(ReadoutModel(eta=0.357, nbar=1e-12, n_max=80))
    assert p0_cold == pytest.approx(0.0, abs=1e-9)
    assert p2_cold == pytest.approx(0.93121, rel=1e-4)


def test_quadratic_fit_monotone_in_temperature():
    p2s = [
        quadratic_fit(ReadoutModel(eta=0.357, nbar=nb, n_max=150))[1]
        for nb in (0.0, 0.25, 0.5, 1.0)
    ]
    assert all(a > b for a, b in zip(p2s, p2s[1:]))


def test_predistort_identity_without_filter():
    spec = BlackmanFilterSpec(t_w=400e-6, k=8, s0=0.9)
    drv = drive_from_filter(spec)
    t = np.linspace(-spec.t_w, spec.t_w, 1001)
    oi, oq = predistort(drv, 0.0, 0.0, 3.55e6, t)
    np.testing.assert_allclose(oi, drv.amplitude(t), rtol=1e-12, atol=1e-12)
    assert np.all(oq == 0.0)


def test_predistort_carrier_phasor():
    drv = DriveWaveform(a=np.array([1e3, 0, 0, 0, 0]), b=np.zeros(5), t_w=1e-3)
    c1, c2 = 1.0 / (2 * np.pi * 150e3), 2e-13
    w0 = 2 * np.pi * 3.55e6
    oi, oq = predistort(drv, c1, c2, 3.55e6, np.array([0.0]))
    assert oq[0] / oi[0] == pytest.approx(-c1 * w0 / (1 - c2 * w0**2), rel=1e-12)


def test_predistort_round_trip():
    spec = BlackmanFilterSpec(t_w=400e-6, k=8, s0=0.9)
    drv = drive_from_filter(spec)
    f0c = 3.55e6
    n = 2**20
    t = np.linspace(-spec.t_w, spec.t_w, n, endpoint=False)
    dt = t[1] - t[0]
    freqs = np.fft.fftfreq(n, dt)
    band_hw = drv.b.max() / (2 * np.pi) + 2.0 / spec.t_w
    band = np.abs(np.abs(freqs) - f0c) < band_hw
    target = drv.amplitude(t) * np.cos(2 * np.pi * f0c * t)
    target_f = np.fft.fft(target) * dt
    for c1, c2 in ((1.0 / (2 * np.pi * 150e3), 0.0), (1.0 / (2 * np.pi * 150e3), 1.0 / (2 * np.pi * 400e3) ** 2)):
        oi, oq = predistort(drv, c1, c2, f0c, t)
        u = oi * np.cos(2 * np.pi * f0c * t) + oq * np.sin(2 * np.pi * f0c * t)
        filtered = np.fft.fft(u) * dt / (1.0 + 2j * np.pi * freqs * c1 - (2 * np.pi * freqs) ** 2 * c2)
        err = np.max(np.abs(filtered[band] - target_f[band])) / np.max(np.abs(target_f[band]))
        assert err < 1e-3
