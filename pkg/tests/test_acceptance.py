"""Acceptance suite: one test per criterion, each printing a single pass/fail line."""
import json
import math
import time
from pathlib import Path

import numpy as np

from nwtransmon.cli import run
from nwtransmon.dephasing import NoisePsdModel, echo_filter_function, echo_filter_function_literal, echo_time_1e
from nwtransmon.devices import (FieldModel, GatemonDevice, ResonatorCoupling, SplitJunctionDevice,
                                gatemon_spectrum_vs_field, split_junction_spectrum, t1_purcell)
from nwtransmon.inference import (ONE_OVER_F_FACTOR, DephasingSample, SpectrumDataset, fit_dephasing_quadratic,
                                  fit_field_spectrum, fit_flux_spectrum, fit_qd)
from nwtransmon.qubit import CooperPairBox, JunctionChannel, PeriodicPotential, abs_series
from nwtransmon.tls import (DEFAULT_DELTA_F, DEFAULT_DT, DEFAULT_TAU_WAIT, DetectorModel, RtnParams,
                            TelegraphTrace, estimate_psd, fit_rtn_psd, generate_pink_noise, rtn_psd_analytic,
                            simulate_rtn, simulate_tls_experiment, trace_rngs)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
E_C = 300e6


def _finish(record, number, ok, text):
    record(number, ok, text)
    assert ok, text


def test_criterion_1_abs_transmon_limit(acceptance_record):
    start = time.perf_counter()
    rng = np.random.default_rng(20240101)
    worst = 0.0
    for _ in range(20):
        gap, T, ec = rng.uniform(20e9, 80e9), rng.uniform(1e-3, 0.05), rng.uniform(100e6, 400e6)
        f_abs = CooperPairBox(ec, (abs_series([JunctionChannel(gap, T)]),)).converged().transitions().f01
        f_cos = CooperPairBox(ec, (PeriodicPotential.cosine(gap * T / 4),)).converged().transitions().f01
        worst = max(worst, abs(f_abs / f_cos - 1))
    elapsed = time.perf_counter() - start
    _finish(acceptance_record, 1, worst < 0.005 and elapsed < 5,
            f"ABS vs cosine f01, worst relative deviation {worst:.2e} (< 5e-3) in {elapsed:.2f} s (< 5 s)")


def _flux_dataset(noise, seed, points):
    dev = SplitJunctionDevice(E_C, (JunctionChannel(46e9, 0.5),), (JunctionChannel(38.5e9, 0.57),))
    phi = np.linspace(-0.5, 0.5, points)
    sp = split_junction_spectrum(dev, phi)
    rng = np.random.default_rng(seed)
    vals = [getattr(sp, n) + noise * rng.standard_normal(phi.size) for n in ("f01", "f12", "f02_half")]
    sig = None if noise == 0 else np.full(phi.size, noise)
    return SpectrumDataset(phi, *vals, sigma_f01=sig, sigma_f12=sig, sigma_f02_half=sig)


def test_criterion_2_flux_fit_round_trip(acceptance_record):
    times, errs = [], []
    start = time.perf_counter()
    exact = fit_flux_spectrum(_flux_dataset(0.0, 0, 101), E_C, threads=4)
    times.append(time.perf_counter() - start)
    truth = {"delta_a": 46e9, "delta_b": 38.5e9, "t_a": 0.5, "t_b": 0.57}
    rel = max(abs(exact.params[k] / v - 1) for k, v in truth.items())
    # 301 flux points put the 1 GHz bound on Delta_B at about 3.4 standard errors
    for seed in (1, 2):
        start = time.perf_counter()
        rep = fit_flux_spectrum(_flux_dataset(1e6, seed, 301), E_C, threads=4)
        times.append(time.perf_counter() - start)
        errs.append((abs(rep.params["delta_a"] - 46e9), abs(rep.params["delta_b"] - 38.5e9)))
    da = max(e[0] for e in errs)
    db = max(e[1] for e in errs)
    ok = rel < 1e-6 and da < 2e9 and db < 1e9 and max(times) < 60
    _finish(acceptance_record, 2, ok,
            f"flux fit noiseless rel error {rel:.1e} (< 1e-6); 1 MHz noise, 301 points, 2 seeds "
            f"|dDelta_A| <= {da / 1e9:.2f} GHz (< 2), |dDelta_B| <= {db / 1e9:.2f} GHz (< 1); "
            f"slowest fit {max(times):.1f} s (< 60 s)")


def test_criterion_3_field_fit_round_trip(acceptance_record):
    dev = GatemonDevice(E_C, (JunctionChannel(43e9, 0.95), JunctionChannel(43e9, 0.62)))
    fm = FieldModel(43e9, 0.0839)
    B = np.linspace(0.0, 0.075, 31)
    sp = gatemon_spectrum_vs_field(dev, fm, B)
    worst, slowest = 0.0, 0.0
    for seed in (1, 2, 3):
        rng = np.random.default_rng(seed)
        sig = np.full(B.size, 2e6)
        data = SpectrumDataset(B, sp.f01 + 2e6 * rng.standard_normal(B.size),
                               f02_half=sp.f02_half + 2e6 * rng.standard_normal(B.size),
                               sigma_f01=sig, sigma_f02_half=sig, control_kind="field")
        start = time.perf_counter()
        rep = fit_field_spectrum(data, 43e9, E_C)
        slowest = max(slowest, time.perf_counter() - start)
        worst = max(worst, abs(rep.params["b_c"] - 0.0839))
    _finish(acceptance_record, 3, worst < 1e-3 and slowest < 60,
            f"field fit with 2 MHz noise over 3 seeds |dB_c| <= {worst * 1e3:.3f} mT (< 1 mT); "
            f"slowest fit {slowest:.1f} s (< 60 s)")


def test_criterion_4_filter_identity(acceptance_record):
    x = np.random.default_rng(4).uniform(1e-3, 200.0, 10_000)
    identity = np.max(np.abs(np.tan(x / 2) ** 2 * np.sin(x) ** 2 / (4 * np.sin(x / 2) ** 4) - 1))
    t = 2.5e-6
    f = x / (math.pi * t)
    impl = np.max(np.abs(np.array([echo_filter_function_literal(v, t) / echo_filter_function(v, t)
                                   for v in f]) - 1))
    w = echo_filter_function(1.0 / t, t)
    at_pole = abs(w / (4 * t ** 2 / math.pi ** 2) - 1)
    ok = identity < 1e-12 and impl < 1e-12 and math.isfinite(w) and at_pole < 1e-12
    _finish(acceptance_record, 4, ok,
            f"tan^2(x/2)sin^2(x) = 4sin^4(x/2) worst {identity:.1e}, literal vs implemented W worst {impl:.1e} "
            f"(< 1e-12); W(1/t) = 4t^2/pi^2 to {at_pole:.1e}")


def test_criterion_5_dephasing_closed_forms(acceptance_record):
    start = time.perf_counter()
    f01 = 5e9
    s_w = 3.6e-15
    white = []
    for D in (1e8, 1e9, 3e9):
        t = echo_time_1e(NoisePsdModel(white=s_w), D, f01)
        white.append(abs(t / (4.0 / ((2 * math.pi * D) ** 2 * s_w)) - 1))
    A = (13e-6) ** 2
    pink = []
    for D in (1e8, 1e9, 3e9):
        t = echo_time_1e(NoisePsdModel(one_over_f=A, sided="double"), D, f01)
        assert f01 * t > 1e3
        pink.append(abs(t / (1.0 / (2 * math.pi * D * math.sqrt(A * math.log(2)))) - 1))
    elapsed = time.perf_counter() - start
    ok = max(white) < 0.005 and max(pink) < 0.03 and elapsed < 10
    _finish(acceptance_record, 5, ok,
            f"white t_1e worst {max(white):.1e} (< 5e-3); 1/f t_1e worst {max(pink):.1e} (< 3e-2); "
            f"{elapsed:.2f} s (< 10 s)")


def test_criterion_6_dephasing_decomposition(acceptance_record):
    a, b, c = math.pi ** 2 * (60e-9) ** 2, ONE_OVER_F_FACTOR * 13e-6, 2000.0
    D = np.linspace(0.0, 3e9, 25)
    bl, cl = ONE_OVER_F_FACTOR * 26e-6, 66_000.0
    Dl = np.linspace(0.0, 2e9, 15)
    quad_err, lin_err = 0.0, 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        y = a * D ** 2 + b * D + c
        fit = fit_dephasing_quadratic([DephasingSample(d, v * (1 + 0.01 * e), sigma=0.01 * v)
                                       for d, v, e in zip(D, y, rng.standard_normal(D.size))])
        quad_err = max(quad_err, abs(fit.sqrt_A / 13e-6 - 1), abs(fit.S_W / (60e-9) ** 2 - 1), abs(fit.c / c - 1))
        yl = bl * Dl + cl
        lin = fit_dephasing_quadratic([DephasingSample(d, v * (1 + 0.01 * e), sigma=0.01 * v)
                                       for d, v, e in zip(Dl, yl, rng.standard_normal(Dl.size))], "linear")
        lin_err = max(lin_err, abs(lin.sqrt_A / 26e-6 - 1), abs(lin.c / cl - 1))
    _finish(acceptance_record, 6, quad_err < 0.05 and lin_err < 0.05,
            f"1% noise over 20 seeds: flux sqrt_A, S_W, c worst {quad_err:.1e}; "
            f"gatemon sqrt_A, c worst {lin_err:.1e} (< 5e-2)")


def _mean_variance_of_chain_average(p_up, rho, n):
    # exact variance of the time average of a stationary two-state chain
    k = np.arange(1, n)
    return p_up * (1 - p_up) / n ** 2 * (n + 2.0 * np.sum((n - k) * rho ** k))


def test_criterion_7_rtn_suite(acceptance_record):
    start = time.perf_counter()
    P = RtnParams(10.5, 0.57)
    dm = DetectorModel(0.76, DEFAULT_TAU_WAIT, DEFAULT_DELTA_F, DEFAULT_DT)
    n = int(round(6.6 / DEFAULT_DT))
    n_traces = 200

    fractions = np.array([simulate_rtn(P, DEFAULT_DT, n, rng=r).samples.mean() for r in trace_rngs(70, n_traces)])
    p_up = P.gamma_up / P.total
    sigma = math.sqrt(_mean_variance_of_chain_average(p_up, math.exp(-P.total * DEFAULT_DT), n) / n_traces)
    z = abs(fractions.mean() - p_up) / sigma

    est = simulate_tls_experiment(P, 0.0, dm, 6.6, n_traces, seed=71, threads=4)
    f, s = est.frequencies[1:], est.values[1:]
    model = rtn_psd_analytic(f, P, dm)
    chi2 = float(np.mean(((s - model) / (model / math.sqrt(est.n_averages))) ** 2))

    # the rate fit uses 1000 traces: with 200 the counting scatter alone is ~4% per rate
    fit = fit_rtn_psd(simulate_tls_experiment(P, 0.0, dm, 6.6, 1000, seed=72, threads=4))
    e_up = abs(fit.params.gamma_up / P.gamma_up - 1)
    e_down = abs(fit.params.gamma_down / P.gamma_down - 1)
    elapsed = time.perf_counter() - start
    ok = z < 3 and 0.7 <= chi2 <= 1.3 and e_up < 0.1 and e_down < 0.1 and elapsed < 120
    _finish(acceptance_record, 7, ok,
            f"up-fraction {fractions.mean():.4f} vs {p_up:.4f} at {z:.2f} sigma (< 3); "
            f"200-trace per-bin chi2 {chi2:.3f} (in [0.7, 1.3]); fitted rates off by "
            f"{e_up:.1%} / {e_down:.1%} (< 10%, 1000 traces); {elapsed:.1f} s (< 120 s)")


def test_criterion_8_parseval(acceptance_record):
    dt = DEFAULT_DT
    rng = np.random.default_rng(8)
    P = RtnParams(10.5, 0.57)
    fixtures = {
        "telegraph": simulate_rtn(P, dt, 16_500, seed=1).as_sign().astype(float),
        "pink": generate_pink_noise(102e3, dt, 16_500, seed=2),
        "white": rng.standard_normal(5000),
        "offset signs": rng.choice([-1.0, 1.0], 4097) + 0.3,
        "sinusoid": np.cos(2 * np.pi * 17 * np.arange(1024) / 1024),
    }
    worst = 0.0
    for x in fixtures.values():
        for segments in (1, 2, 5):
            est = estimate_psd(TelegraphTrace(x, dt), segments)
            seg = x[: (x.size // segments) * segments].reshape(segments, -1)
            worst = max(worst, abs(est.band_power(include_dc=False) / np.mean(seg.var(axis=1)) - 1),
                        abs(est.band_power() / np.mean(seg ** 2) - 1))
    _finish(acceptance_record, 8, worst < 1e-10,
            f"band integral vs variance over {len(fixtures)} fixtures x 3 segmentations, worst {worst:.1e} (< 1e-10)")


def test_criterion_9_qd_fits(acceptance_record):
    rc = ResonatorCoupling(6.732e9, 60.8e6)
    kappa = 1e6
    plateaus = {4.6e5: np.linspace(5.0e9, 5.8e9, 12), 2.7e5: np.linspace(4.4e9, 5.0e9, 12)}
    worst = {}
    for q_d, f01 in plateaus.items():
        t1 = 1.0 / (2 * np.pi * f01 / q_d + 1.0 / np.asarray(t1_purcell(f01, rc, kappa)))
        errs = []
        for seed in range(10):
            noisy = t1 * (1 + 0.03 * np.random.default_rng(seed).standard_normal(f01.size))
            errs.append(abs(fit_qd(f01, noisy, rc, kappa, sigma_t1=0.03 * noisy).q_d / q_d - 1))
        worst[q_d] = max(errs)
    ok = all(v < 0.05 for v in worst.values())
    _finish(acceptance_record, 9, ok,
            "Q_d from 3%-noise plateaus over 10 seeds, worst error "
            + ", ".join(f"{k:.1e}: {v:.1%}" for k, v in worst.items()) + " (< 5%)")


def _write(tmp_path, name, data):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def test_criterion_10_determinism(acceptance_record, tmp_path):
    split = {"kind": "split_junction", "E_C_hz": E_C, "channels_a": [{"gap_hz": 46e9, "transmission": 0.5}],
             "channels_b": [{"gap_hz": 38.5e9, "transmission": 0.57}]}
    spec_cfg = _write(tmp_path, "sweep.json", {"device": split, "sweep": {"start": -0.5, "stop": 0.5, "points": 21}})
    assert run(["spectrum", "-c", spec_cfg, "-o", str(tmp_path / "data")]) == 0
    flux_fit = _write(tmp_path, "fit.json", {"fit": {"kind": "flux", "E_C_hz": E_C},
                                            "dataset": str(tmp_path / "data" / "spectrum.csv")})
    commands = {
        "spectrum": ["spectrum", "-c", str(CONFIGS / "spectrum_gatemon_field.json")],
        "sensitivity": ["sensitivity", "-c", str(CONFIGS / "sensitivity_flux.json")],
        "fit flux": ["fit", "-c", flux_fit],
        "fit dephasing": ["fit", "-c", str(CONFIGS / "fit_dephasing.json")],
        "tls": ["tls", "-c", str(CONFIGS / "tls_rtn.json")],
        "dephasing-limit": ["dephasing-limit", "-c", str(CONFIGS / "dephasing_limit.json")],
        "t1-model": ["t1-model", "-c", str(CONFIGS / "t1_model.json")],
    }
    failures = []
    for name, argv in commands.items():
        outputs = []
        for k, threads in enumerate((1, 1, 4)):
            out = tmp_path / f"{name.replace(' ', '_')}_{k}"
            assert run(argv + ["--seed", "12345", "--threads", str(threads), "-o", str(out)]) == 0
            outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "run_manifest.json"})
        if not outputs[0] or outputs[0] != outputs[1] or outputs[0] != outputs[2]:
            failures.append(name)
    _finish(acceptance_record, 10, not failures,
            f"{len(commands)} seeded commands bit-identical across two runs and threads {{1, 4}}"
            + (f"; differing: {failures}" if failures else ""))

