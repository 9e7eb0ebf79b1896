"""Command-line interface: ``nwtransmon <command> --config run.json``.

Commands: spectrum, fit, tls, dephasing-limit, t1-model, sensitivity.
Outputs are CSV/JSON tables written to the output directory (``--output-dir``,
the config's ``output_dir``, ``$NWTRANSMON_OUTPUT_DIR`` or the working
directory, in that order) together with ``run_manifest.json``.

Exit codes: 0 success, 2 configuration or input error, 3 fit failure,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_digest, load_config
from .dephasing import EchoWindow, NoisePsdModel, echo_time_1e, mean_square_phase
from .devices import (FieldModel, GateCurve, GatemonDevice, RelaxationModel, ResonatorCoupling,
                      SplitJunctionDevice, Spectrum, _map, control_sensitivity, gatemon_spectrum_vs_field,
                      split_junction_spectrum, t1_purcell, t1_total)
from .errors import ConfigError, FitError, NoDecay, NumericalError
from .inference import (CONTROL_COLUMNS, DephasingSample, SpectrumDataset, fit_dephasing_quadratic,
                        fit_dressed_coupling, fit_field_spectrum, fit_flux_spectrum, fit_qd,
                        interpolate_min_dephasing)
from .io import read_csv, write_csv, write_json
from .qubit import JunctionChannel
from .tls import (DetectorModel, RtnParams, estimate_psd, fit_rtn_psd, rtn_psd_analytic,
                  simulate_tls_experiment, simulate_tls_trace, trace_rngs)

log = logging.getLogger("nwtransmon")

ENV_OUTPUT_DIR = "NWTRANSMON_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_FIT, EXIT_NUMERICAL = 0, 2, 3, 4
HORIZON_SENTINEL = "exceeds horizon"


# ---------------------------------------------------------------------------
# builders


def _channels(items) -> tuple[JunctionChannel, ...]:
    return tuple(JunctionChannel(c.gap_hz, c.transmission) for c in items)


def build_device(cfg):
    if cfg.kind == "split_junction":
        return SplitJunctionDevice(cfg.E_C_hz, _channels(cfg.channels_a), _channels(cfg.channels_b),
                                   n_g=cfg.n_g, n_cut=cfg.n_cut)
    curve = None
    if cfg.gate_curve is not None:
        curve = GateCurve(cfg.gate_curve.voltages_v, cfg.gate_curve.transmissions)
    return GatemonDevice(cfg.E_C_hz, _channels(cfg.channels), n_g=cfg.n_g, n_cut=cfg.n_cut,
                         gate_curve=curve)


def _field_model(cfg) -> FieldModel:
    if cfg.kind != "gatemon" or cfg.b_c_t is None:
        raise ConfigError("field control needs a gatemon device with b_c_t")
    return FieldModel(cfg.channels[0].gap_hz, cfg.b_c_t)


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# commands; each returns the list of files it wrote


def cmd_spectrum(cfg, out: Path, args) -> list[Path]:
    dev = build_device(cfg.device)
    sweep = cfg.sweep.array()
    control = cfg.control or ("flux" if cfg.device.kind == "split_junction" else
                              ("field" if cfg.device.b_c_t is not None else "gate"))
    if control == "flux":
        if cfg.device.kind != "split_junction":
            raise ConfigError("flux sweeps need a split-junction device")
        sp = split_junction_spectrum(dev, sweep, threads=cfg.threads)
    elif control == "field":
        sp = gatemon_spectrum_vs_field(dev, _field_model(cfg.device), sweep, threads=cfg.threads)
    else:
        if cfg.device.kind != "gatemon" or dev.gate_curve is None:
            raise ConfigError("gate sweeps need a gatemon device with a gate curve")
        sets = _map(lambda v: dev.at_gate(v).box().converged().transitions(), sweep, cfg.threads)
        sp = Spectrum.from_sets(sweep, sets)
    path = write_csv(out / "spectrum.csv", {
        CONTROL_COLUMNS[control]: sp.control, "f01_hz": sp.f01, "f12_hz": sp.f12,
        "f02half_hz": sp.f02_half,
    })
    return [path]


def cmd_sensitivity(cfg, out: Path, args) -> list[Path]:
    dev = build_device(cfg.device)
    sweep = cfg.sweep.array()
    control = {"gate-T": "gate"}.get(cfg.control, cfg.control)
    fm = _field_model(cfg.device) if control == "field" else None

    def point(x):
        if control == "flux":
            f01 = dev.f01(x)
        elif control == "field":
            f01 = dev.f01(fm.suppression(x))
        else:
            f01 = dev.at_gate(x).f01()
        return f01, control_sensitivity(dev, control, x, fm=fm, rtol=cfg.rtol)

    rows = _map(point, sweep, cfg.threads)
    path = write_csv(out / "sensitivity.csv", {
        CONTROL_COLUMNS[control]: sweep,
        "f01_hz": [r[0] for r in rows],
        "df01_dcontrol_hz_per_unit": [r[1] for r in rows],
    })
    return [path]


def _resolve_dataset(cfg, args) -> Path:
    if args.dataset is not None:
        return Path(args.dataset)
    if cfg.dataset is None:
        raise ConfigError("fit needs a dataset path (argument or config 'dataset')")
    p = Path(cfg.dataset)
    if not p.is_absolute() and args.config is not None:
        p = Path(args.config).parent / p
    return p


def _spectrum_residual_columns(data: SpectrumDataset, model: Spectrum) -> dict:
    cols = {CONTROL_COLUMNS[data.control_kind]: data.control}
    names = {"f01": "f01", "f12": "f12", "f02_half": "f02half"}
    for name, tag in names.items():
        obs = getattr(data, name)
        if obs is None:
            continue
        pred = getattr(model, name)
        cols[f"{tag}_hz"] = obs
        cols[f"{tag}_model_hz"] = pred
        cols[f"{tag}_residual_hz"] = obs - pred
    return cols


def cmd_fit(cfg, out: Path, args) -> list[Path]:
    opts = cfg.fit
    path = _resolve_dataset(cfg, args)
    if not path.exists():
        raise ConfigError(f"{path}: dataset not found")
    kind = opts.kind
    if kind == "flux":
        data = SpectrumDataset.from_csv(path, "flux")
        rep = fit_flux_spectrum(data, opts.E_C_hz, dict(opts.init), threads=cfg.threads)
        p = rep.params
        dev = SplitJunctionDevice(opts.E_C_hz, (JunctionChannel(p["delta_a"], p["t_a"]),),
                                  (JunctionChannel(p["delta_b"], p["t_b"]),))
        resid = _spectrum_residual_columns(data, split_junction_spectrum(dev, data.control,
                                                                         threads=cfg.threads))
        result = rep.as_dict()
    elif kind == "field":
        data = SpectrumDataset.from_csv(path, "field")
        rep = fit_field_spectrum(data, opts.delta0_hz, opts.E_C_hz, dict(opts.init), threads=cfg.threads)
        p = rep.params
        dev = GatemonDevice(opts.E_C_hz, (JunctionChannel(opts.delta0_hz, p["t_a"]),
                                          JunctionChannel(opts.delta0_hz, p["t_b"])))
        model = gatemon_spectrum_vs_field(dev, FieldModel(opts.delta0_hz, p["b_c"]), data.control,
                                          threads=cfg.threads)
        resid = _spectrum_residual_columns(data, model)
        result = rep.as_dict()
    elif kind == "dephasing":
        cols = read_csv(path, required=["sensitivity_hz_per_unit", "gamma_phi_per_s"],
                        optional=["sigma_gamma_phi_per_s"])
        sig = cols.get("sigma_gamma_phi_per_s")
        samples = [DephasingSample(d, g, None if sig is None else s)
                   for d, g, s in zip(cols["sensitivity_hz_per_unit"], cols["gamma_phi_per_s"],
                                      sig if sig is not None else [None] * len(cols["gamma_phi_per_s"]))]
        rep = fit_dephasing_quadratic(samples, opts.model)
        pred = rep.predict(cols["sensitivity_hz_per_unit"])
        resid = {"sensitivity_hz_per_unit": cols["sensitivity_hz_per_unit"],
                 "gamma_phi_per_s": cols["gamma_phi_per_s"], "gamma_phi_model_per_s": pred,
                 "residual_per_s": cols["gamma_phi_per_s"] - pred}
        result = rep.as_dict()
    elif kind == "qd":
        cols = read_csv(path, required=["f01_hz", "t1_s"], optional=["sigma_t1_s"])
        rc = ResonatorCoupling(opts.f_bare_hz, opts.g_hz)
        rep = fit_qd(cols["f01_hz"], cols["t1_s"], rc, opts.kappa_hz, sigma_t1=cols.get("sigma_t1_s"))
        model = t1_total(cols["f01_hz"], RelaxationModel(opts.kappa_hz, rep.q_d), rc)
        resid = {"f01_hz": cols["f01_hz"], "t1_s": cols["t1_s"], "t1_model_s": model,
                 "t1_purcell_s": t1_purcell(cols["f01_hz"], rc, opts.kappa_hz),
                 "residual_s": cols["t1_s"] - model}
        result = rep.as_dict()
    elif kind == "coupling":
        cols = read_csv(path, required=["f_r_hz", "f01_hz"], optional=["sigma_f_r_hz"])
        rep = fit_dressed_coupling(cols["f_r_hz"], cols["f01_hz"], opts.f_bare_hz,
                                   sigma_fr=cols.get("sigma_f_r_hz"))
        model = opts.f_bare_hz - rep.g ** 2 / (cols["f01_hz"] - opts.f_bare_hz)
        resid = {"f01_hz": cols["f01_hz"], "f_r_hz": cols["f_r_hz"], "f_r_model_hz": model,
                 "residual_hz": cols["f_r_hz"] - model}
        result = rep.as_dict()
    else:
        cols = read_csv(path, required=["control", "gamma_phi_per_s"])
        rep = interpolate_min_dephasing(cols["control"], cols["gamma_phi_per_s"])
        x = cols["control"]
        pred = (rep.gamma_min + rep.slope_left * np.maximum(rep.x0 - x, 0.0)
                + rep.slope_right * np.maximum(x - rep.x0, 0.0))
        resid = {"control": x, "gamma_phi_per_s": cols["gamma_phi_per_s"], "gamma_phi_model_per_s": pred,
                 "residual_per_s": cols["gamma_phi_per_s"] - pred}
        result = rep.as_dict()
    report = {"kind": kind, "dataset_sha256": _sha256_file(path), "result": result}
    return [write_json(out / "fit_report.json", report), write_csv(out / "fit_residuals.csv", resid)]


def cmd_tls(cfg, out: Path, args) -> list[Path]:
    p = RtnParams(cfg.gamma_up_per_s, cfg.gamma_down_per_s)
    dm = DetectorModel(cfg.fidelity, cfg.tau_wait_s, cfg.delta_f_hz, cfg.dt_s, eps0=cfg.eps0, eps1=cfg.eps1)
    seed = cfg.seed
    n = int(round(cfg.t_total_s / cfg.dt_s))
    est = simulate_tls_experiment(p, cfg.pink_amplitude_hz_per_rthz, dm, cfg.t_total_s, cfg.n_traces,
                                  seed, segments=cfg.segments, threads=cfg.threads)
    # trace 0 of the experiment, regenerated from its own stream
    states, freqs, det = simulate_tls_trace(p, cfg.pink_amplitude_hz_per_rthz, dm, n,
                                            trace_rngs(seed, cfg.n_traces)[0])
    files = [write_csv(out / "tls_trace.csv", {
        "time_s": states.times, "tls_state": states.samples, "frequency_offset_hz": freqs,
        "detector": det.samples,
    })]
    f = est.frequencies[1:]
    files.append(write_csv(out / "tls_psd.csv", {
        "frequency_hz": f, "psd_per_hz": est.values[1:], "psd_rtn_model_per_hz": rtn_psd_analytic(f, p, dm),
    }))
    summary = {
        "n_traces": cfg.n_traces, "segments": cfg.segments, "samples_per_trace": n,
        "n_averages": est.n_averages, "frequency_resolution_hz": est.df,
        "psd_convention": "two-sided density on f >= 0",
        "band_power": est.band_power(),
    }
    if cfg.fit.enabled:
        fit = fit_rtn_psd(est, fidelity=cfg.fidelity if cfg.fit.fix_fidelity else None,
                          with_one_over_f=cfg.fit.with_one_over_f)
        summary["fit"] = fit.as_dict()
    files.append(write_json(out / "tls_fit.json", summary))
    return files


def _noise_model(cfg, args) -> NoisePsdModel:
    nc = cfg.noise
    table = args.psd if args.psd is not None else nc.table
    kw = dict(white=nc.white, one_over_f=nc.one_over_f, sided=nc.sided, extrapolate=nc.extrapolate)
    if table is None:
        return NoisePsdModel(**kw)
    p = Path(table)
    if args.psd is None and not p.is_absolute() and args.config is not None:
        p = Path(args.config).parent / p
    tab = NoisePsdModel.from_csv(p, sided=nc.sided, extrapolate=nc.extrapolate)
    return NoisePsdModel(white=nc.white, one_over_f=nc.one_over_f, table_f=tab.table_f,
                         table_s=tab.table_s, sided=nc.sided, extrapolate=nc.extrapolate)


def cmd_dephasing_limit(cfg, out: Path, args) -> list[Path]:
    psd = _noise_model(cfg, args)
    results = []
    times = []
    for D in cfg.sensitivities:
        try:
            t = echo_time_1e(psd, abs(D), cfg.f01_hz, t_max=cfg.t_max_s)
        except NoDecay:
            t = math.inf
        times.append(t)
        results.append({
            "sensitivity_hz_per_unit": D,
            "t_echo_1e_s": t if math.isfinite(t) else HORIZON_SENTINEL,
            "gamma_phi_per_s": 1.0 / t if math.isfinite(t) else 0.0,
        })
    finite = [t for t in times if math.isfinite(t)]
    t_lo = cfg.curve.t_start_s or (min(finite) / 100.0 if finite else 1e-9)
    t_hi = cfg.curve.t_stop_s or (min(max(finite) * 10.0, cfg.t_max_s) if finite else cfg.t_max_s)
    if not t_hi > t_lo:
        raise ConfigError("curve range is empty")
    grid = np.geomspace(t_lo, t_hi, cfg.curve.points)
    rows_d, rows_t, rows_m = [], [], []
    for D in cfg.sensitivities:
        for t in grid:
            msp = mean_square_phase(psd, abs(D), EchoWindow(float(t), cfg.f01_hz)) if D else 0.0
            rows_d.append(D)
            rows_t.append(t)
            rows_m.append(msp)
    rows_m = np.asarray(rows_m)
    files = [write_csv(out / "msp_curve.csv", {
        "sensitivity_hz_per_unit": rows_d, "t_s": rows_t, "mean_square_phase_rad2": rows_m,
        "echo_coherence": np.exp(-rows_m / 2.0),
    })]
    report = {"f01_hz": cfg.f01_hz, "t_max_s": cfg.t_max_s, "noise_sided": cfg.noise.sided,
              "results": results}
    files.append(write_json(out / "dephasing_limit.json", report))
    return files


def cmd_t1_model(cfg, out: Path, args) -> list[Path]:
    rc = ResonatorCoupling(cfg.resonator.f_bare_hz, cfg.resonator.g_hz)
    f01 = cfg.f01_sweep.array()
    tp = np.atleast_1d(t1_purcell(f01, rc, cfg.resonator.kappa_hz))
    td = cfg.q_d / (2.0 * np.pi * f01)
    tt = np.atleast_1d(t1_total(f01, RelaxationModel(cfg.resonator.kappa_hz, cfg.q_d), rc))
    return [write_csv(out / "t1_model.csv", {"f01_hz": f01, "t1_purcell_s": tp, "t1_dielectric_s": td,
                                             "t1_total_s": tt})]


COMMANDS = {
    "spectrum": (cmd_spectrum, "transition frequencies vs flux, field or gate voltage"),
    "fit": (cmd_fit, "fit a dataset (spectrum, dephasing, Q_d, coupling, two-slope minimum)"),
    "tls": (cmd_tls, "simulate and analyse the real-time TLS detector signal"),
    "dephasing-limit": (cmd_dephasing_limit, "echo dephasing time from a noise spectrum"),
    "t1-model": (cmd_t1_model, "Purcell plus dielectric T1 vs qubit frequency"),
    "sensitivity": (cmd_sensitivity, "df01/dcontrol along a sweep"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nwtransmon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", "-c", required=True, help="JSON run configuration")
        sp.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (overrides config)")
        sp.add_argument("--output-dir", "-o", default=None, help="output directory")
        sp.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
        if name == "fit":
            sp.add_argument("dataset", nargs="?", default=None, help="dataset CSV (overrides config)")
        if name == "dephasing-limit":
            sp.add_argument("psd", nargs="?", default=None, help="PSD table CSV (overrides config)")
    return parser


def _output_dir(args, cfg) -> Path:
    for cand in (args.output_dir, cfg.output_dir, os.environ.get(ENV_OUTPUT_DIR)):
        if cand:
            return Path(cand)
    return Path(".")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s: %(message)s")
    for attr in ("dataset", "psd"):
        if not hasattr(args, attr):
            setattr(args, attr, None)
    started = _now()
    try:
        cfg, raw = load_config(args.command, args.config)
        overrides = {}
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be >= 0")
            overrides["seed"] = args.seed
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            overrides["threads"] = args.threads
        if args.command == "tls" and cfg.seed is None and "seed" not in overrides:
            # unseeded runs draw fresh entropy; it is recorded for reproduction
            overrides["seed"] = int(np.random.SeedSequence().entropy)
        cfg = cfg.model_copy(update=overrides)
        out = _output_dir(args, cfg)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"{out}: cannot create output directory ({exc.strerror})") from exc
        log.info("running %s -> %s", args.command, out)
        files = COMMANDS[args.command][0](cfg, out, args)
        write_json(out / "run_manifest.json", {
            "command": args.command, "config_sha256": config_digest(raw), "seed": cfg.seed,
            "threads": cfg.threads, "version": __version__, "started_utc": started,
            "finished_utc": _now(), "outputs": sorted(f.name for f in files),
        })
    except ConfigError as exc:
        print(f"nwtransmon: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitError as exc:
        print(f"nwtransmon: fit failed ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_FIT
    except NumericalError as exc:
        print(f"nwtransmon: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
