"""Charge two-level fluctuator: telegraph simulation, single-shot detection and spectra.

Pipeline of a simulated real-time TLS measurement:

1. :func:`simulate_rtn` -- two-state Markov chain sampled every ``dt``.
2. States map to qubit frequency offsets, optionally with 1/f frequency noise
   from :func:`generate_pink_noise`.
3. :func:`detector_trace` -- thresholded Ramsey outcome with readout errors.
4. :func:`estimate_psd` -- periodogram, averaged over segments and traces.

:func:`rtn_psd_analytic` is the matching closed-form spectrum and
:func:`fit_rtn_psd` fits it back to an estimate.

Random streams: every trace of :func:`simulate_tls_experiment` draws from its
own generator, ``np.random.default_rng(SeedSequence(seed).spawn(n)[i])``, so
results do not depend on how traces are scheduled over threads.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.special import digamma, polygamma

from .errors import ConfigError, FitDiverged, KneeOutOfBand, TraceTooShort

__all__ = [
    "RtnParams",
    "DetectorModel",
    "TelegraphTrace",
    "PsdEstimate",
    "RamseyBeatParams",
    "RtnFit",
    "simulate_rtn",
    "generate_pink_noise",
    "detector_trace",
    "estimate_psd",
    "rtn_psd_analytic",
    "fit_rtn_psd",
    "simulate_tls_trace",
    "simulate_tls_experiment",
    "ramsey_beating",
    "trace_rngs",
]

MIN_SEGMENT = 64

# measurement defaults for the fluctuator detector
DEFAULT_DELTA_F = 1.683e6  # Hz
DEFAULT_TAU_WAIT = 297e-9  # s
DEFAULT_DT = 400e-6  # s
DEFAULT_T_TOTAL = 6.6  # s


@dataclass(frozen=True)
class RtnParams:
    """Switching rates in 1/s: ``gamma_up`` into the up state, ``gamma_down`` out of it."""

    gamma_up: float
    gamma_down: float

    def __post_init__(self):
        if self.gamma_up < 0 or self.gamma_down < 0:
            raise ConfigError("switching rates must be >= 0")
        if self.gamma_up == 0 and self.gamma_down == 0:
            raise ConfigError("at least one switching rate must be positive")

    @property
    def total(self) -> float:
        return self.gamma_up + self.gamma_down

    @property
    def up_fraction(self) -> float:
        return self.gamma_up / self.total

    @property
    def mean_sign(self) -> float:
        """Stationary mean of the +/-1 telegraph signal (up = +1)."""
        return (self.gamma_up - self.gamma_down) / self.total


@dataclass(frozen=True)
class DetectorModel:
    """Single-shot Ramsey frequency detector.

    ``fidelity = 1 - eps0 - eps1``; if the error split is not given it is
    taken symmetric, ``eps0 = eps1 = (1 - F)/2``. ``eps0`` is the flip
    probability of a +1 outcome, ``eps1`` of a -1 outcome.
    """

    fidelity: float
    tau_wait: float
    delta_f: float
    dt: float
    eps0: float | None = None
    eps1: float | None = None

    def __post_init__(self):
        F = self.fidelity
        if not 0.0 <= F <= 1.0:
            raise ConfigError(f"fidelity must lie in [0, 1], got {F}")
        if not (self.tau_wait > 0 and self.dt > 0):
            raise ConfigError("tau_wait and dt must be positive")
        e0, e1 = self.eps0, self.eps1
        if e0 is None and e1 is None:
            e0 = e1 = (1.0 - F) / 2.0
        elif e0 is None:
            e0 = 1.0 - F - e1
        elif e1 is None:
            e1 = 1.0 - F - e0
        if e0 < -1e-12 or e1 < -1e-12 or abs(1.0 - e0 - e1 - F) > 1e-9:
            raise ConfigError(f"inconsistent detector errors eps0={e0}, eps1={e1} for F={F}")
        object.__setattr__(self, "eps0", max(e0, 0.0))
        object.__setattr__(self, "eps1", max(e1, 0.0))

    @classmethod
    def matched(cls, fidelity: float, delta_f: float, dt: float, **kw) -> "DetectorModel":
        """Detector with ``tau_wait = 1/(2 delta_f)``, the maximal-contrast setting."""
        return cls(fidelity, 1.0 / (2.0 * delta_f), delta_f, dt, **kw)


@dataclass(frozen=True, eq=False)
class TelegraphTrace:
    """Uniformly sampled trace: state labels (0/1) or detector outcomes (-1/+1)."""

    samples: np.ndarray
    dt: float

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 1 or s.size < 2:
            raise ConfigError("a trace needs at least 2 samples")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.samples.size)

    @property
    def duration(self) -> float:
        return self.dt * self.samples.size

    def as_sign(self) -> np.ndarray:
        """+/-1 representation; state labels map 1 -> +1, 0 -> -1."""
        s = self.samples
        if s.dtype.kind in "iub" and s.size and s.min() >= 0:
            return 2 * s.astype(np.int8) - 1
        return s


@dataclass(frozen=True, eq=False)
class PsdEstimate:
    """Averaged periodogram on the non-negative frequency grid ``k / T_seg``.

    ``sided="double"`` reports the two-sided density S(f) = S(-f) at f >= 0
    (the normalisation of the periodogram as defined); ``"one"`` reports
    ``2 S(f)`` except at DC and Nyquist.
    """

    frequencies: np.ndarray
    values: np.ndarray
    n_averages: int
    segment_length: int
    dt: float
    sided: str = "double"

    @property
    def df(self) -> float:
        return 1.0 / (self.segment_length * self.dt)

    def band_power(self, include_dc: bool = True) -> float:
        """Integral of the density over the full two-sided band.

        Equals the mean square of the trace; without the DC bin it equals the
        (segment-averaged) variance.
        """
        if self.sided == "one":
            weights = np.ones(self.values.size)
        else:
            weights = np.full(self.values.size, 2.0)
            weights[0] = 1.0
            if self.segment_length % 2 == 0:
                weights[-1] = 1.0
        if not include_dc:
            weights[0] = 0.0
        return float(np.sum(weights * self.values) * self.df)


@dataclass(frozen=True)
class RamseyBeatParams:
    """Two-frequency Ramsey fringe; ``f_a``/``f_b`` are offsets added to ``detuning``."""

    f_a: float
    f_b: float
    tau_a: float
    tau_b: float
    detuning: float = 0.0

    def __post_init__(self):
        if not (self.tau_a > 0 and self.tau_b > 0):
            raise ConfigError("decay constants must be positive")


def _rng(seed=None, rng=None) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(seed)


def trace_rngs(seed, n: int) -> list[np.random.Generator]:
    """Independent generators for ``n`` traces derived from one master seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def simulate_rtn(p: RtnParams, dt: float, n: int, seed=None, *, initial: int | None = None,
                 rng: np.random.Generator | None = None) -> TelegraphTrace:
    """Two-state Markov chain with exact per-step switching probabilities.

    Over one step the up -> down probability is
    ``gamma_down/Gamma * (1 - exp(-Gamma dt))`` (and symmetrically for
    down -> up), the exact two-state propagator, so the stationary up
    fraction is exactly ``gamma_up/Gamma`` for any ``dt``. Dwell times are
    drawn as geometric run lengths. ``initial`` defaults to a draw from the
    stationary distribution. Samples are 1 (up) and 0 (down).
    """
    if n < 2:
        raise ConfigError("need at least 2 samples")
    g = p.total
    if g * dt > 0.1:
        warnings.warn(f"Gamma*dt = {g * dt:.3g}: sampling is coarse compared to switching",
                      RuntimeWarning, stacklevel=2)
    rng = _rng(seed, rng)
    decay = -math.expm1(-g * dt)
    leave = {1: p.gamma_down / g * decay, 0: p.gamma_up / g * decay}
    state = int(rng.random() < p.up_fraction) if initial is None else int(initial)

    out = np.empty(n, dtype=np.int8)
    pos = 0
    while pos < n:
        q = leave[state]
        run = n - pos if q <= 0 else int(min(rng.geometric(q), n - pos))
        out[pos:pos + run] = state
        pos += run
        state = 1 - state
    return TelegraphTrace(out, dt)


def generate_pink_noise(amplitude_at_1hz: float, dt: float, n: int, seed=None, *,
                        rng: np.random.Generator | None = None) -> np.ndarray:
    """Gaussian noise with two-sided PSD ``amplitude^2 / |f|``.

    White noise is shaped by ``1/sqrt(f)`` in the frequency domain (DC bin
    zeroed) on a power-of-two grid and truncated to ``n`` samples. With
    ``amplitude`` in Hz/sqrt(Hz) the output is a frequency offset in Hz.
    """
    rng = _rng(seed, rng)
    if amplitude_at_1hz == 0:
        return np.zeros(n)
    n_fft = 1 << max(1, (n - 1).bit_length())
    ft = np.fft.rfft(rng.standard_normal(n_fft))
    f = np.fft.rfftfreq(n_fft, dt)
    gain = np.zeros_like(f)
    gain[1:] = amplitude_at_1hz / np.sqrt(f[1:] * dt)
    return np.fft.irfft(ft * gain, n_fft)[:n]


def detector_trace(freq_trace, dm: DetectorModel, seed=None, *,
                   rng: np.random.Generator | None = None) -> TelegraphTrace:
    """Thresholded Ramsey outcome ``sign(sin(2 pi f tau_wait))`` with readout flips.

    ``sign(0)`` is taken as +1. A +1 outcome flips with probability ``eps0``,
    a -1 outcome with ``eps1``.
    """
    rng = _rng(seed, rng)
    f = np.asarray(freq_trace, dtype=float)
    d = np.where(np.sin(2.0 * np.pi * f * dm.tau_wait) >= 0, 1, -1).astype(np.int8)
    flip_p = np.where(d > 0, dm.eps0, dm.eps1)
    d[rng.random(d.size) < flip_p] *= -1
    return TelegraphTrace(d, dm.dt)


def estimate_psd(trace: TelegraphTrace, segments: int = 1, *, sided: str = "double",
                 window: str = "rect", detrend: bool = False) -> PsdEstimate:
    """Segment-averaged periodogram ``S(f) = dt^2/T |sum_n x_n exp(-2 pi i f n dt)|^2``.

    The trace is cut into ``segments`` equal pieces (a remainder is dropped),
    each of duration ``T``. With the default rectangular window and no
    detrending the two-sided band integral equals the mean square of the
    trace exactly. ``window="hann"`` tapers each segment (power-normalised).
    """
    if segments < 1:
        raise ConfigError("segments must be >= 1")
    if sided not in ("one", "double"):
        raise ConfigError(f"sided must be 'one' or 'double', got {sided!r}")
    x = np.asarray(trace.as_sign(), dtype=float)
    seg_len = x.size // segments
    if seg_len < MIN_SEGMENT:
        raise TraceTooShort(f"{x.size} samples in {segments} segments: need >= {MIN_SEGMENT} per segment")
    chunks = x[: seg_len * segments].reshape(segments, seg_len)
    if detrend:
        chunks = chunks - chunks.mean(axis=1, keepdims=True)
    if window == "hann":
        w = np.hanning(seg_len)
        chunks = chunks * (w / np.sqrt(np.mean(w ** 2)))
    elif window != "rect":
        raise ConfigError(f"unknown window {window!r}")

    dt = trace.dt
    ft = np.fft.rfft(chunks, axis=1)
    values = (dt * dt / (seg_len * dt)) * np.mean(np.abs(ft) ** 2, axis=0)
    if sided == "one":
        values[1:] *= 2.0
        if seg_len % 2 == 0:
            values[-1] /= 2.0
    return PsdEstimate(np.fft.rfftfreq(seg_len, dt), values, segments, seg_len, dt, sided)


def rtn_psd_analytic(f, p: RtnParams, dm: DetectorModel):
    """Two-sided PSD of the detected telegraph signal (1/Hz).

    ``8 F^2 G_u G_d / (G (G^2 + (2 pi f)^2)) + (1 - F^2) dt`` with
    ``G = G_u + G_d``: a Lorentzian from the switching plus the white floor
    of uncorrelated readout errors.
    """
    f = np.asarray(f, dtype=float)
    g = p.total
    F = dm.fidelity
    out = 8.0 * F ** 2 * p.gamma_up * p.gamma_down / (g * (g ** 2 + (2.0 * np.pi * f) ** 2))
    out = out + (1.0 - F ** 2) * dm.dt
    return out if out.ndim else float(out)


@dataclass
class RtnFit:
    """Result of :func:`fit_rtn_psd`.

    Only ``gamma_up + gamma_down`` and ``F^2 gamma_up gamma_down`` shape the
    Lorentzian; a spectrum cannot tell which state is which, so rates are
    reported with ``gamma_up >= gamma_down``. ``degenerate`` flags fits where
    the asymmetry is not resolved from the symmetric case.
    """

    params: RtnParams
    fidelity: float
    stderr: dict
    covariance: np.ndarray
    residual_norm: float
    degenerate: bool
    one_over_f: float = 0.0
    nfev: int = 0
    message: str = ""

    @property
    def gamma_sum(self) -> float:
        return self.params.total

    @property
    def lorentzian_weight(self) -> float:
        """Share of the detector variance carried by the telegraph term, ``4 F^2 r (1 - r)``."""
        r = self.params.up_fraction
        return self.fidelity ** 2 * 4.0 * r * (1.0 - r)

    def as_dict(self) -> dict:
        return {
            "gamma_up_per_s": self.params.gamma_up,
            "gamma_down_per_s": self.params.gamma_down,
            "fidelity": self.fidelity,
            "one_over_f_per_hz": self.one_over_f,
            "gamma_sum_per_s": self.gamma_sum,
            "lorentzian_weight": self.lorentzian_weight,
            "stderr": self.stderr,
            "residual_norm": self.residual_norm,
            "degenerate": self.degenerate,
            "nfev": self.nfev,
            "message": self.message,
        }


def _initial_guess(f, s, dt):
    n = f.size
    floor = float(np.median(s[n // 2:]))
    F0 = math.sqrt(min(max(1.0 - floor / dt, 0.05), 0.999))
    plateau = float(np.mean(s[: max(3, n // 1000)]))
    excess = s - floor
    knee_idx = np.nonzero(excess < 0.5 * (plateau - floor))[0]
    f_knee = f[knee_idx[0]] if knee_idx.size else f[n // 10]
    g0 = max(2.0 * np.pi * f_knee, 2.0 * np.pi * f[0])
    prod = max(plateau - floor, 1e-12 * plateau) * g0 ** 3 / (8.0 * F0 ** 2)
    rr = min(max(prod / g0 ** 2, 1e-4), 0.25)
    r0 = 0.5 * (1.0 - math.sqrt(1.0 - 4.0 * rr))
    return math.log(g0), min(max(r0, 1e-4), 0.49), F0


def fit_rtn_psd(est: PsdEstimate, dt: float | None = None, *, fidelity: float | None = None,
                with_one_over_f: bool = False, f_max: float | None = None) -> RtnFit:
    """Fit the detected-RTN spectrum to an estimate in log space.

    Free parameters are ``Gamma = gamma_up + gamma_down``, the asymmetry
    ``r = gamma_down/Gamma`` in (0, 1/2], the fidelity ``F`` (unless fixed)
    and optionally a ``B/|f|`` term. ``dt`` (the detector sampling interval)
    defaults to the estimate's. Residuals are ``log S_model - log S_est``
    corrected for the log-bias of an average of ``n_averages`` periodograms;
    their variance ``psi'(n)`` sets the absolute standard errors.
    """
    if est.sided != "double":
        raise ConfigError("fit_rtn_psd expects a two-sided estimate")
    dt = est.dt if dt is None else dt
    keep = est.frequencies > 0
    if f_max is not None:
        keep &= est.frequencies <= f_max
    f = est.frequencies[keep]
    s = est.values[keep]
    if f.size < 8 or np.any(s <= 0):
        raise FitDiverged("estimate has too few positive bins for a fit")
    k = est.n_averages
    log_target = np.log(s) - (digamma(k) - math.log(k))
    sigma_log = math.sqrt(float(polygamma(1, k)))

    lg0, r0, F0 = _initial_guess(f, s, dt)
    x0 = [lg0, r0]
    lo = [math.log(1e-6 * f[0]), 1e-9]
    hi = [math.log(1e3 * f[-1]), 0.5]
    if fidelity is None:
        x0.append(F0)
        lo.append(0.0)
        hi.append(1.0)
    if with_one_over_f:
        x0.append(math.log(max(1e-3 * float(np.mean(s[:3])) * f[0], 1e-300)))
        lo.append(-700.0)
        hi.append(math.log(1e3 * float(np.max(s) * f[-1])))
    x0 = np.clip(x0, np.array(lo) + 1e-12, np.array(hi) - 1e-12)

    def unpack(x):
        g = math.exp(x[0])
        r = x[1]
        i = 2
        F = fidelity if fidelity is not None else x[i]
        if fidelity is None:
            i += 1
        b = math.exp(x[i]) if with_one_over_f else 0.0
        return g, r, F, b

    def model(x):
        g, r, F, b = unpack(x)
        lor = 8.0 * F ** 2 * r * (1.0 - r) * g / (g ** 2 + (2.0 * np.pi * f) ** 2)
        return lor + (1.0 - F ** 2) * dt + b / f

    def resid(x):
        with np.errstate(divide="ignore"):
            return (np.log(model(x)) - log_target) / sigma_log

    res = least_squares(resid, x0, bounds=(lo, hi), method="trf", x_scale="jac",
                        xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=2000)
    # a budget-exhausted but finite result is kept and flagged degenerate:
    # it arises when the Lorentzian weight vanishes and the rates are unidentifiable
    exhausted = res.status == 0
    if not (res.success or exhausted) or not np.all(np.isfinite(res.x)):
        raise FitDiverged(f"RTN fit failed: {res.message}")
    g, r, F, b = unpack(res.x)
    if not f[0] <= g / (2.0 * np.pi) <= f[-1]:
        raise KneeOutOfBand(f"fitted knee {g / (2 * np.pi):.4g} Hz outside [{f[0]:.4g}, {f[-1]:.4g}] Hz")

    J = res.jac
    cov_x = np.linalg.pinv(J.T @ J)
    # delta method from (log G, r, F, ...) to the reported quantities
    grads = {
        "gamma_up": np.zeros(len(res.x)),
        "gamma_down": np.zeros(len(res.x)),
        "gamma_sum": np.zeros(len(res.x)),
        "asymmetry": np.zeros(len(res.x)),
    }
    grads["gamma_up"][:2] = [g * (1.0 - r), -g]
    grads["gamma_down"][:2] = [g * r, g]
    grads["gamma_sum"][0] = g
    grads["asymmetry"][1] = 1.0
    if fidelity is None:
        grads["fidelity"] = np.zeros(len(res.x))
        grads["fidelity"][2] = 1.0
    if with_one_over_f:
        grads["one_over_f"] = np.zeros(len(res.x))
        grads["one_over_f"][-1] = b
    stderr = {name: float(math.sqrt(max(v @ cov_x @ v, 0.0))) for name, v in grads.items()}
    degenerate = bool(exhausted or 0.5 - r < 2.0 * stderr["asymmetry"])

    return RtnFit(
        params=RtnParams(g * (1.0 - r), g * r),
        fidelity=float(F),
        stderr=stderr,
        covariance=cov_x,
        residual_norm=float(np.linalg.norm(res.fun)),
        degenerate=degenerate,
        one_over_f=b,
        nfev=int(res.nfev),
        message=str(res.message),
    )


def simulate_tls_trace(p: RtnParams, pink_amplitude: float, dm: DetectorModel, n: int,
                       rng: np.random.Generator, *, f_offset: float | None = None):
    """One simulated measurement: ``(states, frequency offsets in Hz, detector trace)``.

    The up state sits at ``f_offset`` (default ``delta_f/2``) from the Ramsey
    reference and the down state at ``f_offset - delta_f``; with the matched
    ``tau_wait`` they map to detector outcomes +1 and -1.
    """
    f_up = dm.delta_f / 2.0 if f_offset is None else f_offset
    states = simulate_rtn(p, dm.dt, n, rng=rng)
    freqs = np.where(states.samples == 1, f_up, f_up - dm.delta_f).astype(float)
    if pink_amplitude:
        freqs = freqs + generate_pink_noise(pink_amplitude, dm.dt, n, rng=rng)
    return states, freqs, detector_trace(freqs, dm, rng=rng)


def simulate_tls_experiment(p: RtnParams, pink_amplitude: float, dm: DetectorModel, t_total: float,
                            n_traces: int, seed=None, *, segments: int = 1, threads: int = 1,
                            f_offset: float | None = None) -> PsdEstimate:
    """Average the detector-signal PSD over ``n_traces`` simulated measurements.

    Each trace lasts ``t_total`` (``round(t_total/dt)`` samples) and uses its
    own random stream (see module docstring); the average is taken in trace
    order, so the result is identical for any ``threads``.
    """
    n = int(round(t_total / dm.dt))
    if n < 1000:
        raise ConfigError(f"t_total/dt = {n} < 1000 samples")
    if n_traces < 1:
        raise ConfigError("n_traces must be >= 1")
    rngs = trace_rngs(seed, n_traces)

    def one(i):
        _, _, det = simulate_tls_trace(p, pink_amplitude, dm, n, rngs[i], f_offset=f_offset)
        return estimate_psd(det, segments).values

    if threads <= 1:
        rows = [one(i) for i in range(n_traces)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, range(n_traces)))
    seg_len = n // segments
    return PsdEstimate(np.fft.rfftfreq(seg_len, dm.dt), np.mean(np.stack(rows), axis=0),
                       n_traces * segments, seg_len, dm.dt)


def ramsey_beating(p: RamseyBeatParams, t_grid):
    """Excited-state population of a Ramsey fringe split between two frequencies.

    ``(1 + s)/2`` with ``s = [exp(-t/tau_a) cos(2 pi f1 t) + exp(-t/tau_b) cos(2 pi f2 t)]/2``,
    ``f1 = detuning + f_a`` and ``f2 = detuning + f_b``.
    """
    t = np.asarray(t_grid, dtype=float)
    s = 0.5 * (np.exp(-t / p.tau_a) * np.cos(2.0 * np.pi * (p.detuning + p.f_a) * t)
               + np.exp(-t / p.tau_b) * np.cos(2.0 * np.pi * (p.detuning + p.f_b) * t))
    return (1.0 + s) / 2.0
