"""Concrete devices built on the Cooper-pair-box core.

* :class:`SplitJunctionDevice` -- two ABS junctions in a SQUID loop, tuned by flux.
* :class:`GatemonDevice` -- a single nanowire junction (one or more channels),
  tuned by gate voltage through its transmissions and by in-plane field
  through the induced gap.

Also the dressed qubit-resonator model and the Purcell/dielectric T1 models.
Units: Hz for energies and frequencies, Phi_0 for flux, tesla for field, volt
for gate voltage.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import (BranchAmbiguity, ConfigError, FieldAboveCritical, NoInformation,
                     OnResonance, StepUnderflow)
from .qubit import (ChargeBasisConfig, CooperPairBox, JunctionChannel, TransitionSet, abs_series,
                    converged_config)

__all__ = [
    "FieldModel",
    "SplitJunctionDevice",
    "GatemonDevice",
    "GateCurve",
    "Spectrum",
    "ResonatorCoupling",
    "RelaxationModel",
    "gap_vs_field",
    "split_junction_spectrum",
    "gatemon_spectrum_vs_field",
    "control_sensitivity",
    "derivative",
    "dressed_frequencies",
    "infer_f01_from_fr",
    "t1_purcell",
    "t1_total",
]


@dataclass(frozen=True)
class FieldModel:
    """BCS-like closing of the induced gap with parallel field."""

    delta0: float
    b_c: float

    def __post_init__(self):
        if not (self.delta0 > 0 and self.b_c > 0):
            raise ConfigError("FieldModel needs delta0 > 0 and b_c > 0")

    def suppression(self, B):
        """Delta(B)/Delta(0)."""
        B = np.asarray(B, dtype=float)
        if np.any(np.abs(B) > self.b_c):
            raise FieldAboveCritical(f"|B| = {np.max(np.abs(B))} T exceeds B_c = {self.b_c} T")
        out = np.sqrt(np.clip(1.0 - (B / self.b_c) ** 2, 0.0, None))
        return out if out.ndim else float(out)


def gap_vs_field(B, fm: FieldModel):
    """Induced gap ``Delta(0) sqrt(1 - (B/B_c)^2)`` in Hz."""
    return fm.delta0 * fm.suppression(B)


def _scale_gaps(channels, factor):
    return tuple(JunctionChannel(ch.gap * factor, ch.transmission) for ch in channels)


@dataclass(frozen=True)
class SplitJunctionDevice:
    """``H = 4 E_C (N - n_g)^2 + V_A(delta) + V_B(2 pi Phi/Phi_0 - delta)``."""

    E_C: float
    channels_a: tuple[JunctionChannel, ...]
    channels_b: tuple[JunctionChannel, ...]
    flux: float = 0.0
    n_g: float = 0.0
    n_cut: int = 30

    def __post_init__(self):
        object.__setattr__(self, "channels_a", tuple(self.channels_a))
        object.__setattr__(self, "channels_b", tuple(self.channels_b))
        if not self.E_C > 0:
            raise ConfigError("E_C must be positive")

    def box(self, flux: float | None = None) -> CooperPairBox:
        flux = self.flux if flux is None else flux
        pot_a = abs_series(self.channels_a)
        # V_B is even, so V_B(theta - delta) = V_B(delta - theta)
        pot_b = abs_series(self.channels_b, shift=2.0 * np.pi * flux)
        return CooperPairBox(self.E_C, (pot_a, pot_b), ChargeBasisConfig(self.n_cut, self.n_g))

    def f01(self, flux: float | None = None) -> float:
        return self.box(flux).transitions().f01


@dataclass(frozen=True, eq=False)
class GateCurve:
    """User-supplied lookup table gate voltage -> channel transmissions.

    No physical gate model exists for these junctions; the table is
    interpolated with a shape-preserving cubic so transmissions stay within
    the range of the data.
    """

    voltages: np.ndarray
    transmissions: np.ndarray  # shape (n_points, n_channels)

    def __post_init__(self):
        v = np.asarray(self.voltages, dtype=float)
        t = np.asarray(self.transmissions, dtype=float)
        if t.ndim == 1:
            t = t[:, None]
        if v.ndim != 1 or t.shape[0] != v.size or v.size < 2:
            raise ConfigError("gate curve needs >= 2 voltages and one transmission row per voltage")
        if np.any(np.diff(v) <= 0):
            raise ConfigError("gate curve voltages must be strictly increasing")
        if np.any((t < 0) | (t > 1)):
            raise ConfigError("gate curve transmissions must lie in [0, 1]")
        object.__setattr__(self, "voltages", v)
        object.__setattr__(self, "transmissions", t)
        object.__setattr__(self, "_interp", PchipInterpolator(v, t, axis=0, extrapolate=False))

    def __call__(self, v_g: float) -> np.ndarray:
        if not self.voltages[0] <= v_g <= self.voltages[-1]:
            raise ConfigError(f"V_G = {v_g} V outside gate curve range")
        return np.clip(self._interp(v_g), 0.0, 1.0)


@dataclass(frozen=True)
class GatemonDevice:
    """Single-junction transmon with all ABS channels at the same phase."""

    E_C: float
    channels: tuple[JunctionChannel, ...]
    n_g: float = 0.0
    n_cut: int = 30
    gate_curve: GateCurve | None = None

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if not self.E_C > 0:
            raise ConfigError("E_C must be positive")

    def box(self, gap_factor: float = 1.0) -> CooperPairBox:
        pot = abs_series(_scale_gaps(self.channels, gap_factor))
        return CooperPairBox(self.E_C, (pot,), ChargeBasisConfig(self.n_cut, self.n_g))

    def at_gate(self, v_g: float) -> "GatemonDevice":
        if self.gate_curve is None:
            raise ConfigError("device has no gate curve")
        ts = self.gate_curve(v_g)
        if ts.size != len(self.channels):
            raise ConfigError("gate curve channel count does not match device")
        chans = tuple(JunctionChannel(ch.gap, float(t)) for ch, t in zip(self.channels, ts))
        return replace(self, channels=chans)

    def f01(self, gap_factor: float = 1.0) -> float:
        return self.box(gap_factor).transitions().f01


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Transition frequencies (Hz) tabulated against a control parameter."""

    control: np.ndarray
    f01: np.ndarray
    f12: np.ndarray
    f02_half: np.ndarray

    @classmethod
    def from_sets(cls, control, sets: Sequence[TransitionSet]) -> "Spectrum":
        return cls(np.asarray(control, dtype=float),
                   np.array([s.f01 for s in sets]),
                   np.array([s.f12 for s in sets]),
                   np.array([s.f02_half for s in sets]))

    def __len__(self):
        return self.control.size

    def __getitem__(self, i) -> TransitionSet:
        return TransitionSet(float(self.f01[i]), float(self.f12[i]), float(self.f02_half[i]))

    def column(self, name: str) -> np.ndarray:
        return getattr(self, name)


def _map(fn: Callable, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def split_junction_spectrum(dev: SplitJunctionDevice, flux_sweep, *, threads: int = 1,
                            check_cutoff: bool = True) -> Spectrum:
    """Lowest transitions at each flux point (Phi_0 units)."""
    flux_sweep = np.atleast_1d(np.asarray(flux_sweep, dtype=float))
    pot_a = abs_series(dev.channels_a)
    pot_b = abs_series(dev.channels_b)
    cfg = ChargeBasisConfig(dev.n_cut, dev.n_g)
    if check_cutoff:
        # flux = 0 has the deepest potential and hence the widest charge distribution
        cfg = converged_config(dev.E_C, (pot_a, pot_b), cfg)

    def point(phi):
        box = CooperPairBox(dev.E_C, (pot_a, pot_b.shifted(2.0 * np.pi * phi)), cfg)
        return box.transitions()

    return Spectrum.from_sets(flux_sweep, _map(point, flux_sweep, threads))


def gatemon_spectrum_vs_field(dev: GatemonDevice, fm: FieldModel, B_sweep, *, threads: int = 1,
                              check_cutoff: bool = True) -> Spectrum:
    """Transitions vs in-plane field; channel gaps scale as Delta(B)/Delta(0)."""
    B_sweep = np.atleast_1d(np.asarray(B_sweep, dtype=float))
    factors = np.atleast_1d(fm.suppression(B_sweep))
    base = abs_series(dev.channels)
    cfg = ChargeBasisConfig(dev.n_cut, dev.n_g)
    if check_cutoff:
        cfg = converged_config(dev.E_C, base, cfg)

    def point(factor):
        return CooperPairBox(dev.E_C, (base.scaled(factor),), cfg).transitions()

    return Spectrum.from_sets(B_sweep, _map(point, factors, threads))


def derivative(f: Callable[[float], float], x: float, h0: float, *, lo: float = -math.inf,
               hi: float = math.inf, rtol: float = 1e-6, atol: float = 0.0,
               min_step: float | None = None) -> float:
    """Central difference with one Richardson step, halving h until stable.

    Converges when two successive extrapolated estimates agree within
    ``max(rtol*|D|, atol)``. Steps are shrunk to stay inside ``[lo, hi]``.
    """
    if min_step is None:
        min_step = h0 * 2.0 ** -30
    h = h0
    prev = None
    while h >= min_step:
        if x - h < lo or x + h > hi:
            h /= 2.0
            continue
        d_h = (f(x + h) - f(x - h)) / (2.0 * h)
        d_h2 = (f(x + h / 2) - f(x - h / 2)) / h
        est = (4.0 * d_h2 - d_h) / 3.0
        if prev is not None and abs(est - prev) <= max(rtol * abs(est), atol):
            return est
        prev = est
        h /= 2.0
    raise StepUnderflow(f"derivative at x={x} did not stabilise above step {min_step:.3e}")


_CONTROL_SCALE = {"flux": 1.0, "gate": 1.0, "field": 1.0}


def control_sensitivity(dev, control: str, point: float, *, fm: FieldModel | None = None,
                        rtol: float = 1e-6) -> float:
    """Signed derivative of f01 with respect to a control, in Hz per control unit.

    ``control`` is ``"flux"`` (split junction, Phi_0), ``"gate"`` (gatemon with
    a gate curve, volt) or ``"field"`` (gatemon with ``fm``, tesla). The first
    step is 1e-3 of the control's natural unit.
    """
    control = {"gate-T": "gate"}.get(control, control)
    lo, hi = -math.inf, math.inf
    if control == "flux":
        if not isinstance(dev, SplitJunctionDevice):
            raise ConfigError("flux control needs a SplitJunctionDevice")
        pot_a = abs_series(dev.channels_a)
        pot_b = abs_series(dev.channels_b)
        cfg = ChargeBasisConfig(dev.n_cut, dev.n_g)

        def f(phi):
            return CooperPairBox(dev.E_C, (pot_a, pot_b.shifted(2.0 * np.pi * phi)), cfg).transitions().f01
    elif control == "gate":
        if not isinstance(dev, GatemonDevice) or dev.gate_curve is None:
            raise ConfigError("gate control needs a GatemonDevice with a gate curve")
        lo, hi = dev.gate_curve.voltages[0], dev.gate_curve.voltages[-1]

        def f(v):
            return dev.at_gate(v).f01()
    elif control == "field":
        if not isinstance(dev, GatemonDevice) or fm is None:
            raise ConfigError("field control needs a GatemonDevice and a FieldModel")
        lo, hi = -fm.b_c, fm.b_c
        base = abs_series(dev.channels)
        cfg = ChargeBasisConfig(dev.n_cut, dev.n_g)

        def f(b):
            return CooperPairBox(dev.E_C, (base.scaled(fm.suppression(b)),), cfg).transitions().f01
    else:
        raise ConfigError(f"unknown control {control!r}")

    scale = _CONTROL_SCALE[control]
    if not lo <= point <= hi:
        raise ConfigError(f"{control} point {point} outside valid range [{lo}, {hi}]")
    f0 = f(point)
    return derivative(f, point, 1e-3 * scale, lo=lo, hi=hi, rtol=rtol, atol=1e-9 * abs(f0) / scale)


@dataclass(frozen=True)
class ResonatorCoupling:
    """Readout resonator: bare frequency and coupling g/2pi, both in Hz."""

    f_bare: float
    g: float

    def __post_init__(self):
        if not self.g >= 0:
            raise ConfigError("coupling g must be >= 0")


def dressed_frequencies(f_q_bare, rc: ResonatorCoupling):
    """Dressed ``(f_R, f01)`` of the resonant two-level Jaynes-Cummings model.

    The resonator-like branch is the one that tends to ``f_bare`` at large
    detuning: the lower branch when the qubit is above the resonator.
    """
    f_q = np.asarray(f_q_bare, dtype=float)
    mean = 0.5 * (f_q + rc.f_bare)
    half = 0.5 * np.hypot(f_q - rc.f_bare, 2.0 * rc.g)
    above = f_q >= rc.f_bare
    f_r = np.where(above, mean - half, mean + half)
    f_01 = np.where(above, mean + half, mean - half)
    if f_r.ndim == 0:
        return float(f_r), float(f_01)
    return f_r, f_01


def infer_f01_from_fr(f_r_measured: float, rc: ResonatorCoupling, *, tol: float = 1.0) -> float:
    """Dressed qubit frequency from a measured resonator frequency.

    The dressed detunings of the two branches multiply to ``-g^2``, so
    ``f01 = f_bare - g^2 / (f_R - f_bare)``.
    """
    shift = f_r_measured - rc.f_bare
    if abs(shift) <= tol:
        raise NoInformation(f"resonator shift {shift} Hz is below tolerance {tol} Hz")
    if rc.g <= 0:
        raise NoInformation("coupling g must be positive to invert the dressed model")
    if abs(shift) >= rc.g:
        raise BranchAmbiguity(f"resonator shift {shift:.4g} Hz exceeds g = {rc.g:.4g} Hz")
    return rc.f_bare - rc.g ** 2 / shift


@dataclass(frozen=True)
class RelaxationModel:
    """Purcell + dielectric loss; ``kappa`` is the resonator linewidth kappa/2pi in Hz."""

    kappa: float
    q_d: float

    def __post_init__(self):
        if not (self.kappa >= 0 and self.q_d > 0):
            raise ConfigError("RelaxationModel needs kappa >= 0 and q_d > 0")


def t1_purcell(f01, rc: ResonatorCoupling, kappa: float):
    """Single-mode dispersive Purcell limit ``Delta^2 / (2 pi kappa g^2)`` in seconds.

    Frequencies are linear (Hz); the decay rate is ``2 pi kappa (g/Delta)^2``.
    """
    f01 = np.asarray(f01, dtype=float)
    detuning = f01 - rc.f_bare
    if np.any(np.abs(detuning) < kappa):
        raise OnResonance("qubit within one linewidth of the resonator; dispersive model invalid")
    rate = 2.0 * np.pi * kappa * rc.g ** 2 / detuning ** 2
    with np.errstate(divide="ignore"):
        out = 1.0 / rate
    return out if out.ndim else float(out)


def t1_total(f01, rm: RelaxationModel, rc: ResonatorCoupling):
    """``1/T1 = 1/T1_P + 2 pi f01 / Q_d``."""
    f01 = np.asarray(f01, dtype=float)
    rate = 1.0 / t1_purcell(f01, rc, rm.kappa) + 2.0 * np.pi * f01 / rm.q_d
    out = 1.0 / rate
    return out if out.ndim else float(out)
