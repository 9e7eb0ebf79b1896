import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from nwtransmon.errors import ConfigError, TraceTooShort
from nwtransmon.tls import (DEFAULT_DELTA_F, DEFAULT_DT, DEFAULT_TAU_WAIT, DetectorModel, PsdEstimate,
                            RamseyBeatParams, RtnParams, TelegraphTrace, detector_trace, estimate_psd,
                            fit_rtn_psd, generate_pink_noise, ramsey_beating, rtn_psd_analytic,
                            simulate_rtn, simulate_tls_experiment, trace_rngs)

from oracles import direct_periodogram, markov_chain_loop

P = RtnParams(10.5, 0.57)
DM = DetectorModel(0.76, DEFAULT_TAU_WAIT, DEFAULT_DELTA_F, DEFAULT_DT)


def test_params_validation():
    with pytest.raises(ConfigError):
        RtnParams(0.0, 0.0)
    with pytest.raises(ConfigError):
        RtnParams(-1.0, 1.0)
    with pytest.raises(ConfigError):
        DetectorModel(1.2, 1e-7, 1e6, 1e-4)
    with pytest.raises(ConfigError):
        DetectorModel(0.8, 1e-7, 1e6, 1e-4, eps0=0.3, eps1=0.3)
    dm = DetectorModel(0.8, 1e-7, 1e6, 1e-4, eps0=0.15)
    assert dm.eps1 == pytest.approx(0.05)
    assert DM.eps0 == DM.eps1 == pytest.approx(0.12)
    assert DetectorModel.matched(0.76, DEFAULT_DELTA_F, DEFAULT_DT).tau_wait == pytest.approx(297.1e-9, rel=1e-3)


def test_absorbing_state():
    tr = simulate_rtn(RtnParams(3.0, 0.0), 1e-3, 10_000, seed=1, initial=1)
    assert np.all(tr.samples == 1)


def test_seeded_rtn_is_reproducible():
    a = simulate_rtn(P, DEFAULT_DT, 50_000, seed=42)
    b = simulate_rtn(P, DEFAULT_DT, 50_000, seed=42)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, simulate_rtn(P, DEFAULT_DT, 50_000, seed=43).samples)


def test_coarse_sampling_warns():
    with pytest.warns(RuntimeWarning):
        simulate_rtn(P, 0.1, 100, seed=0)


def _dwell_lengths(samples, state):
    edges = np.flatnonzero(np.diff(samples)) + 1
    runs = np.split(samples, edges)
    # drop the censored first and last runs
    return np.array([r.size for r in runs[1:-1] if r[0] == state])


def test_rtn_statistics_match_step_by_step_chain():
    dt, n = DEFAULT_DT, 2_000_000
    fast = simulate_rtn(P, dt, n, seed=5, initial=1).samples
    slow = markov_chain_loop(P.gamma_up, P.gamma_down, dt, n, np.random.default_rng(6), start=1)
    decay = 1 - math.exp(-P.total * dt)
    p_leave_up = P.gamma_down / P.total * decay
    for s in (fast, slow):
        up = _dwell_lengths(s, 1)
        # geometric dwell: mean 1/p, standard error sqrt(1-p)/p/sqrt(n)
        se = math.sqrt(1 - p_leave_up) / p_leave_up / math.sqrt(up.size)
        assert abs(up.mean() - 1 / p_leave_up) < 4 * se
        # the exact discrete mean exceeds 1/gamma_down by only ~ Gamma dt / 2
        assert abs(up.mean() * dt - 1 / P.gamma_down) < 4 * se * dt + 0.01 / P.gamma_down


def test_transition_probabilities_are_exact():
    dt = 2e-3
    s = simulate_rtn(P, dt, 2_000_000, seed=9).samples
    prev, nxt = s[:-1], s[1:]
    p_ud = np.mean(nxt[prev == 1] == 0)
    p_du = np.mean(nxt[prev == 0] == 1)
    decay = 1 - math.exp(-P.total * dt)
    assert p_ud == pytest.approx(P.gamma_down / P.total * decay, rel=0.05)
    assert p_du == pytest.approx(P.gamma_up / P.total * decay, rel=0.05)


def test_pink_noise_zero_and_slope():
    assert np.all(generate_pink_noise(0.0, 1e-3, 1000, seed=0) == 0)
    rngs = trace_rngs(11, 40)
    n, dt, amp = 2 ** 14, 1e-3, 102e3
    x = [estimate_psd(TelegraphTrace(generate_pink_noise(amp, dt, n, rng=r), dt)) for r in rngs]
    f = x[0].frequencies
    s = np.mean([e.values for e in x], axis=0)
    band = (f >= 1.0) & (f <= 100.0)
    slope = np.polyfit(np.log10(f[band]), np.log10(s[band]), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.1)
    near = (f > 0.8) & (f < 1.25)
    assert np.mean(s[near] * f[near]) == pytest.approx(amp ** 2, rel=0.15)


def test_pink_noise_non_power_of_two_length():
    y = generate_pink_noise(1.0, 1e-3, 1000, seed=2)
    assert y.shape == (1000,) and np.all(np.isfinite(y))


def test_detector_maximal_contrast_and_perfect_fidelity():
    dm = DetectorModel(1.0, 1 / (2 * DEFAULT_DELTA_F), DEFAULT_DELTA_F, DEFAULT_DT)
    states = simulate_rtn(P, DEFAULT_DT, 5000, seed=1).samples
    freqs = np.where(states == 1, DEFAULT_DELTA_F / 2, -DEFAULT_DELTA_F / 2)
    det = detector_trace(freqs, dm, seed=2)
    assert np.array_equal(det.samples, 2 * states - 1)


def test_detector_sign_zero_maps_to_plus():
    det = detector_trace(np.zeros(100), DetectorModel(1.0, 1e-7, 1e6, 1e-4), seed=0)
    assert np.all(det.samples == 1)


def test_detector_zero_fidelity_is_uncorrelated():
    states = simulate_rtn(RtnParams(5.0, 5.0), DEFAULT_DT, 200_000, seed=3).samples
    freqs = np.where(states == 1, DEFAULT_DELTA_F / 2, -DEFAULT_DELTA_F / 2)
    det = detector_trace(freqs, DetectorModel(0.0, DEFAULT_TAU_WAIT, DEFAULT_DELTA_F, DEFAULT_DT), seed=4)
    corr = np.corrcoef(det.samples, 2 * states - 1)[0, 1]
    assert abs(corr) < 5 / math.sqrt(states.size)


def test_detector_asymmetric_errors():
    dm = DetectorModel(0.7, DEFAULT_TAU_WAIT, DEFAULT_DELTA_F, DEFAULT_DT, eps0=0.25, eps1=0.05)
    n = 200_000
    plus = detector_trace(np.full(n, DEFAULT_DELTA_F / 2), dm, seed=1).samples
    minus = detector_trace(np.full(n, -DEFAULT_DELTA_F / 2), dm, seed=2).samples
    assert np.mean(plus == -1) == pytest.approx(0.25, abs=0.005)
    assert np.mean(minus == 1) == pytest.approx(0.05, abs=0.003)


def test_psd_constant_trace_and_grid_sinusoid():
    dt, n = 1e-3, 256
    est = estimate_psd(TelegraphTrace(np.full(n, 3.0), dt))
    assert est.values[0] == pytest.approx(9.0 * n * dt)
    assert np.allclose(est.values[1:], 0.0, atol=1e-20)
    k = 17
    x = np.cos(2 * np.pi * k * np.arange(n) / n)
    est = estimate_psd(TelegraphTrace(x, dt))
    assert np.argmax(est.values) == k
    others = np.delete(est.values, k)
    assert np.all(others < 1e-20 * est.values[k])


def test_psd_matches_direct_dft_sum():
    x = np.random.default_rng(0).standard_normal(301)
    est = estimate_psd(TelegraphTrace(x, 2e-3))
    f, ref = direct_periodogram(x, 2e-3)
    np.testing.assert_allclose(est.frequencies, f, rtol=1e-12)
    np.testing.assert_allclose(est.values, ref, rtol=1e-9, atol=1e-15)


@given(st.integers(64, 3000), st.integers(1, 4), st.integers(0, 2 ** 31))
@settings(max_examples=40, deadline=None)
def test_parseval_mean_square_and_variance(n, segments, seed):
    if n // segments < 64:
        n = 64 * segments
    x = np.random.default_rng(seed).choice([-1.0, 1.0], n) + 0.3
    tr = TelegraphTrace(x, 1e-3)
    seg = x[: (n // segments) * segments].reshape(segments, -1)
    est = estimate_psd(tr, segments)
    assert est.band_power() == pytest.approx(np.mean(seg ** 2), rel=1e-10)
    assert est.band_power(include_dc=False) == pytest.approx(np.mean(seg.var(axis=1)), rel=1e-10)
    one = estimate_psd(tr, segments, sided="one")
    assert one.band_power() == pytest.approx(est.band_power(), rel=1e-12)
    detr = estimate_psd(tr, segments, detrend=True)
    assert detr.band_power() == pytest.approx(np.mean(seg.var(axis=1)), rel=1e-10)


def test_psd_errors_and_hann():
    with pytest.raises(TraceTooShort):
        estimate_psd(TelegraphTrace(np.ones(100), 1e-3), segments=2)
    with pytest.raises(ConfigError):
        estimate_psd(TelegraphTrace(np.ones(100), 1e-3), window="kaiser")
    x = np.random.default_rng(1).standard_normal(4096)
    hann = estimate_psd(TelegraphTrace(x, 1e-3), 4, window="hann")
    assert hann.band_power() == pytest.approx(1.0, rel=0.1)


def test_analytic_psd_examples():
    ref = 8 * 0.76 ** 2 * 10.5 * 0.57 / 11.07 ** 3 + (1 - 0.76 ** 2) * 4e-4
    assert rtn_psd_analytic(0.0, P, DM) == pytest.approx(ref, rel=1e-12)
    assert rtn_psd_analytic(0.0, P, DM) == pytest.approx(0.02055526247667576, rel=1e-12)
    perfect = DetectorModel(1.0, DEFAULT_TAU_WAIT, DEFAULT_DELTA_F, DEFAULT_DT)
    f = np.array([1.0, 10.0, 100.0])
    lor = 8 * P.gamma_up * P.gamma_down / (P.total * (P.total ** 2 + (2 * np.pi * f) ** 2))
    np.testing.assert_allclose(rtn_psd_analytic(f, P, perfect), lor, rtol=1e-12)


def test_analytic_psd_band_integral_is_detector_variance():
    nyq = 1 / (2 * DEFAULT_DT)
    integral = 2 * quad(lambda f: rtn_psd_analytic(f, P, DM), 0, nyq, points=[1, 10], limit=200)[0]
    var = 1 - DM.fidelity ** 2 * P.mean_sign ** 2
    # the Lorentzian tail beyond Nyquist is ~ 4 F^2 G_u G_d / (pi^2 G nyq) ~ 1e-3 of the total
    assert integral == pytest.approx(var, rel=2e-3)
    states = simulate_rtn(P, DEFAULT_DT, 2_000_000, seed=8).samples
    freqs = np.where(states == 1, DEFAULT_DELTA_F / 2, -DEFAULT_DELTA_F / 2)
    det = detector_trace(freqs, DM, seed=9).samples.astype(float)
    assert det.var() == pytest.approx(var, rel=0.05)


def test_experiment_matches_analytic_psd_and_thread_invariance():
    est1 = simulate_tls_experiment(P, 0.0, DM, 2.0, 60, seed=12, threads=1)
    est4 = simulate_tls_experiment(P, 0.0, DM, 2.0, 60, seed=12, threads=4)
    assert np.array_equal(est1.values, est4.values)
    model = rtn_psd_analytic(est1.frequencies[1:-1], P, DM)
    ratio = est1.values[1:-1] / model
    assert np.mean(ratio) == pytest.approx(1.0, abs=0.02)


def test_averaging_halves_variance():
    floor = (1 - DM.fidelity ** 2) * DEFAULT_DT
    a = simulate_tls_experiment(P, 0.0, DM, 1.0, 20, seed=1)
    b = simulate_tls_experiment(P, 0.0, DM, 1.0, 40, seed=1)
    hi = a.frequencies > 200
    va = np.var(a.values[hi] / floor)
    vb = np.var(b.values[hi] / floor)
    assert va / vb == pytest.approx(2.0, rel=0.15)


def test_pink_overlay_raises_low_frequency_shoulder():
    p = RtnParams(9.25, 0.5)
    pure = simulate_tls_experiment(p, 0.0, DM, 6.6, 20, seed=4)
    pink = simulate_tls_experiment(p, 102e3, DM, 6.6, 20, seed=4)
    low = (pure.frequencies > 20) & (pure.frequencies < 200)
    assert np.mean(pink.values[low]) > 1.2 * np.mean(pure.values[low])


def test_fit_recovers_rates_and_flags_symmetric_degeneracy():
    est = simulate_tls_experiment(P, 0.0, DM, 6.6, 100, seed=21)
    fit = fit_rtn_psd(est)
    assert fit.params.gamma_up == pytest.approx(10.5, rel=0.1)
    assert fit.params.gamma_down == pytest.approx(0.57, rel=0.1)
    assert fit.fidelity == pytest.approx(0.76, rel=0.02)
    assert not fit.degenerate
    sym = fit_rtn_psd(simulate_tls_experiment(RtnParams(5.0, 5.0), 0.0, DM, 6.6, 50, seed=2))
    assert sym.degenerate
    assert sym.params.gamma_up >= sym.params.gamma_down
    assert sym.gamma_sum == pytest.approx(10.0, rel=0.1)


def test_fit_pure_white_input():
    rngs = trace_rngs(5, 50)
    rows = [estimate_psd(TelegraphTrace(r.choice([-1, 1], 8192).astype(np.int8), DEFAULT_DT)).values for r in rngs]
    est = PsdEstimate(np.fft.rfftfreq(8192, DEFAULT_DT), np.mean(rows, axis=0), 50, 8192, DEFAULT_DT)
    fit = fit_rtn_psd(est)
    assert fit.fidelity < 0.1
    assert fit.lorentzian_weight < 1e-2
    assert fit.degenerate


def test_ramsey_beating():
    p = RamseyBeatParams(f_a=0.8e6, f_b=-0.8e6, tau_a=2.2e-6, tau_b=2.0e-6, detuning=12e6)
    assert ramsey_beating(p, 0.0) == pytest.approx(1.0)
    same = RamseyBeatParams(1e6, 1e6, 2e-6, 2e-6)
    t = np.linspace(0, 5e-6, 101)
    np.testing.assert_allclose(ramsey_beating(same, t), (1 + np.exp(-t / 2e-6) * np.cos(2 * np.pi * 1e6 * t)) / 2)
    # envelope |cos(pi df t)| vanishes at t = (2m + 1) / (2 df): nodes 625 ns apart, first at 312.5 ns
    equal = RamseyBeatParams(0.8e6, -0.8e6, 2e-6, 2e-6, detuning=12e6)
    tt = np.linspace(0, 2e-6, 200_001)
    s = 2 * ramsey_beating(equal, tt) - 1
    env = np.abs(s) * np.exp(tt / 2e-6)
    nodes = []
    for centre in (312.5e-9, 937.5e-9, 1562.5e-9):
        win = np.abs(tt - centre) < 100e-9
        nodes.append(tt[win][np.argmin(env[win])])
    assert np.diff(nodes) == pytest.approx([625e-9, 625e-9], abs=5e-9)
    with pytest.raises(ConfigError):
        RamseyBeatParams(1e6, 0.0, 0.0, 1e-6)
