"""Noise spectra, the spin-echo filter function and Gaussian echo dephasing.

The mean-squared phase accumulated during a single-echo sequence of total
length ``t`` is

    <phi^2(t)> = (2 pi D)^2 * integral_{f_min}^{f_max} S(f) W(f, t) df,

with ``D = |df01/dlambda|`` and ``W`` the echo filter function. The integral
runs over positive frequencies, so ``S`` must be the one-sided spectrum. A
:class:`NoisePsdModel` declared double-sided is doubled before integration.
For Gaussian noise the echo signal decays as ``exp(-<phi^2>/2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, NoDecay, OutOfTable, QuadratureNotConverged
from .io import read_csv

__all__ = [
    "NoisePsdModel",
    "EchoWindow",
    "psd_eval",
    "echo_filter_function",
    "echo_filter_function_literal",
    "mean_square_phase",
    "coherence_decay",
    "coherence_series",
    "echo_time_1e",
    "white_echo_time",
    "one_over_f_echo_time",
]

PSD_COLUMNS = ("frequency_hz", "psd_units2_per_hz")


@dataclass(frozen=True, eq=False)
class NoisePsdModel:
    """White + 1/f + tabulated noise spectrum in control units^2/Hz.

    Parameters
    ----------
    white : float
        Frequency-independent level S_W.
    one_over_f : float
        Amplitude A of the ``A/|f|`` component (A is the value at 1 Hz).
    table_f, table_s : array_like, optional
        Tabulated spectrum, interpolated log-log. Frequencies strictly
        increasing and positive, values >= 0.
    extrapolate : bool
        Allow evaluating the table outside its range by holding the edge
        slopes. Otherwise :func:`psd_eval` raises :class:`OutOfTable` and the
        dephasing integral ignores the table outside its range.
    sided : {"one", "double"}
        Convention of all components. A double-sided ``S(f)`` describes
        positive and negative frequencies, so its one-sided equivalent is
        ``2 S(f)``.
    unit : str
        Control unit label (``"phi0"``, ``"V"``, ``"T"``), informational.
    """

    white: float = 0.0
    one_over_f: float = 0.0
    table_f: np.ndarray | None = None
    table_s: np.ndarray | None = None
    extrapolate: bool = False
    sided: str = "one"
    unit: str = ""

    def __post_init__(self):
        if self.white < 0 or self.one_over_f < 0:
            raise ConfigError("noise levels must be >= 0")
        if self.sided not in ("one", "double"):
            raise ConfigError(f"sided must be 'one' or 'double', got {self.sided!r}")
        if (self.table_f is None) != (self.table_s is None):
            raise ConfigError("table_f and table_s must be given together")
        if self.table_f is not None:
            f = np.asarray(self.table_f, dtype=float)
            s = np.asarray(self.table_s, dtype=float)
            if f.ndim != 1 or f.shape != s.shape or f.size < 2:
                raise ConfigError("PSD table needs >= 2 matching (frequency, value) pairs")
            if np.any(f <= 0) or np.any(np.diff(f) <= 0):
                raise ConfigError("PSD table frequencies must be positive and strictly increasing")
            if np.any(s < 0):
                raise ConfigError("PSD table values must be >= 0")
            object.__setattr__(self, "table_f", f)
            object.__setattr__(self, "table_s", s)

    @classmethod
    def from_csv(cls, path, **kwargs) -> "NoisePsdModel":
        cols = read_csv(path, required=PSD_COLUMNS)
        return cls(table_f=cols[PSD_COLUMNS[0]], table_s=cols[PSD_COLUMNS[1]], **kwargs)

    @property
    def one_sided_factor(self) -> float:
        return 2.0 if self.sided == "double" else 1.0

    @property
    def is_zero(self) -> bool:
        no_table = self.table_s is None or not np.any(self.table_s > 0)
        return self.white == 0 and self.one_over_f == 0 and no_table

    def __call__(self, f):
        return psd_eval(self, f)

    def _table(self, f, strict: bool):
        f = np.asarray(f, dtype=float)
        lo, hi = self.table_f[0], self.table_f[-1]
        outside = (f < lo) | (f > hi)
        if strict and not self.extrapolate and np.any(outside):
            raise OutOfTable(f"frequency outside tabulated range [{lo}, {hi}] Hz")
        # zeros in the table break log interpolation; floor them at a tiny value
        logs = np.log(np.maximum(self.table_s, np.finfo(float).tiny))
        logf = np.log(self.table_f)
        with np.errstate(divide="ignore"):
            x = np.log(f)
        if self.extrapolate:
            slope_lo = (logs[1] - logs[0]) / (logf[1] - logf[0])
            slope_hi = (logs[-1] - logs[-2]) / (logf[-1] - logf[-2])
            y = np.interp(x, logf, logs)
            y = np.where(x < logf[0], logs[0] + slope_lo * (x - logf[0]), y)
            y = np.where(x > logf[-1], logs[-1] + slope_hi * (x - logf[-1]), y)
            out = np.exp(y)
        else:
            out = np.where(outside, 0.0, np.exp(np.interp(x, logf, logs)))
        return np.where(np.isin(f, self.table_f[self.table_s == 0]), 0.0, out)

    def _evaluate(self, f, strict: bool):
        f = np.asarray(f, dtype=float)
        out = np.full(f.shape, float(self.white))
        if self.one_over_f:
            if strict and np.any(f == 0):
                raise ConfigError("1/f component is undefined at f = 0")
            with np.errstate(divide="ignore"):
                out = out + self.one_over_f / np.abs(f)
        if self.table_f is not None:
            out = out + self._table(f, strict)
        return out

    def one_sided(self, f):
        """One-sided spectrum for integration; table is zero outside its range."""
        return self.one_sided_factor * self._evaluate(f, strict=False)


def psd_eval(psd: NoisePsdModel, f):
    """Sum of the components at ``f`` in the model's own convention."""
    out = psd._evaluate(f, strict=True)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class EchoWindow:
    """Evolution time ``t`` and integration band ``[f_min, f_max]`` (f_max = f01)."""

    t: float
    f_max: float
    f_min: float = 0.0

    def __post_init__(self):
        if not self.t > 0:
            raise ConfigError("echo time must be positive")
        if not 0 <= self.f_min < self.f_max:
            raise ConfigError("need 0 <= f_min < f_max")


def echo_filter_function(f, t: float):
    """Single-echo filter ``4 sin^4(pi f t / 2) / (pi f)^2`` in s^2, zero at f = 0.

    Algebraically identical to ``tan^2(pi f t/2) sin^2(pi f t) / (pi f)^2``
    but free of the removable singularities at ``f t`` = odd integers.
    """
    f = np.asarray(f, dtype=float)
    x = 0.5 * np.pi * f * t
    safe = np.where(f == 0, 1.0, f)
    out = np.where(f == 0, 0.0, 4.0 * np.sin(x) ** 4 / (np.pi * safe) ** 2)
    return out if out.ndim else float(out)


def echo_filter_function_literal(f, t: float):
    """``tan^2(pi f t/2) sin^2(pi f t) / (pi f)^2`` as written; inf/nan at its poles."""
    f = np.asarray(f, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.tan(0.5 * np.pi * f * t) ** 2 * np.sin(np.pi * f * t) ** 2 / (np.pi * f) ** 2
    return out if out.ndim else float(out)


Psd = Union[NoisePsdModel, Sequence[NoisePsdModel]]

# Periods of the filter function resolved panel by panel before switching to
# its period average. The neglected oscillating remainder is bounded by
# ~ 4 / (pi^3 (f t)^2) of the white-noise result, i.e. < 1e-6 here.
_OSC_PERIODS = 400
_TAIL_PANELS_PER_DECADE = 8


def _models(psd: Psd) -> tuple[NoisePsdModel, ...]:
    return (psd,) if isinstance(psd, NoisePsdModel) else tuple(psd)


def _one_sided(models, f):
    return sum(m.one_sided(f) for m in models)


def _gauss_panels(fn, edges, n):
    x, w = np.polynomial.legendre.leggauss(n)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    nodes = a + half * (1.0 + x)
    return float(np.sum(half * w * fn(nodes)))


def _phase_integral(models, t, f_min, f_max, n):
    """integral of S_1(f) W(f, t) df over [f_min, f_max] with n-point panels."""
    period = 2.0 / t
    f_osc = min(f_max, f_min + _OSC_PERIODS * period)
    zeros = period * np.arange(math.ceil(f_min / period), math.floor(f_osc / period) + 1)
    breaks = [m.table_f for m in models if m.table_f is not None]
    inner = np.concatenate([zeros, *breaks]) if breaks else zeros
    inner = inner[(inner > f_min) & (inner < f_osc)]
    edges = np.unique(np.concatenate([[f_min], inner, [f_osc]]))

    total = _gauss_panels(lambda f: _one_sided(models, f) * echo_filter_function(f, t), edges, n)
    if f_max > f_osc:
        # mean of 4 sin^4 is 3/2: smooth tail 3 S_1(f) / (2 pi^2 f^2)
        decades = math.log10(f_max / f_osc)
        tail = np.geomspace(f_osc, f_max, max(2, int(math.ceil(decades * _TAIL_PANELS_PER_DECADE)) + 1))
        if breaks:
            b = np.concatenate(breaks)
            tail = np.unique(np.concatenate([tail, b[(b > f_osc) & (b < f_max)]]))
        total += _gauss_panels(lambda f: 1.5 * _one_sided(models, f) / (np.pi * f) ** 2, tail, n)
    return total


def mean_square_phase(psd: Psd, D: float, window: EchoWindow, *, rtol: float = 1e-6) -> float:
    """Mean-squared echo phase in rad^2.

    ``psd`` is a model or a sequence of models whose one-sided spectra add.
    The band is split at the filter zeros ``f = 2m/t`` (and at table nodes)
    into Gauss-Legendre panels; the result is accepted when 16- and 24-point
    rules agree to ``rtol``.
    """
    if not math.isfinite(D):
        raise ConfigError("sensitivity D must be finite")
    models = _models(psd)
    if D == 0 or all(m.is_zero for m in models):
        return 0.0
    lo = _phase_integral(models, window.t, window.f_min, window.f_max, 16)
    hi = _phase_integral(models, window.t, window.f_min, window.f_max, 24)
    if abs(hi - lo) > rtol * abs(hi):
        raise QuadratureNotConverged(f"echo phase integral changed by {abs(hi - lo) / abs(hi):.2e} "
                                     f"under refinement (rtol {rtol:.1e})")
    return (2.0 * math.pi * D) ** 2 * hi


def coherence_decay(msp):
    """Gaussian-noise echo amplitude ``exp(-<phi^2>/2)``."""
    msp = np.asarray(msp, dtype=float)
    if np.any(msp < 0):
        raise ConfigError("mean-squared phase must be >= 0")
    out = np.exp(-msp / 2.0)
    return out if out.ndim else float(out)


def coherence_series(msp: float, n_terms: int = 20) -> float:
    """Truncated moment series ``sum_n (-1)^n (msp/2)^n / n!`` of <cos phi>."""
    x = msp / 2.0
    return math.fsum((-x) ** n / math.factorial(n) for n in range(n_terms + 1))


def white_echo_time(white_one_sided: float, D: float) -> float:
    """Closed-form 1/e echo time ``4 / ((2 pi D)^2 S_W)`` for one-sided white noise."""
    return 4.0 / ((2.0 * math.pi * D) ** 2 * white_one_sided)


def one_over_f_echo_time(amplitude_double_sided: float, D: float) -> float:
    """Closed-form 1/e echo time ``1 / (2 pi D sqrt(A ln 2))`` for double-sided A/|f| noise."""
    return 1.0 / (2.0 * math.pi * abs(D) * math.sqrt(amplitude_double_sided * math.log(2.0)))


def echo_time_1e(psd: Psd, D: float, f01: float, *, t_max: float = 1.0, t_min: float = 1e-12,
                 rtol: float = 1e-10) -> float:
    """Echo time at which ``<phi^2(t)> = 2``, i.e. the echo amplitude is 1/e.

    Raises :class:`NoDecay` when the phase variance stays below 2 up to
    ``t_max``.
    """
    models = _models(psd)
    if D == 0 or all(m.is_zero for m in models):
        raise NoDecay("no noise or zero sensitivity: coherence never decays")

    def g(log_t):
        t = math.exp(log_t)
        return mean_square_phase(models, D, EchoWindow(t, f01)) - 2.0

    t = 1e-6
    val = g(math.log(t))
    if val < 0:
        while val < 0:
            if t >= t_max:
                raise NoDecay(f"<phi^2> = {val + 2:.3g} rad^2 at t_max = {t_max} s")
            t_lo, t = t, min(4.0 * t, t_max)
            val = g(math.log(t))
        t_hi = t
    else:
        while val >= 0:
            if t <= t_min:
                return t_min
            t_hi, t = t, t / 4.0
            val = g(math.log(t))
        t_lo = t
    return math.exp(brentq(g, math.log(t_lo), math.log(t_hi), xtol=rtol, rtol=rtol))
