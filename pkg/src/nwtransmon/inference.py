"""Fitting procedures: qubit spectra, dephasing decomposition, Q_d and dressed coupling.

Nonlinear fits use a bounded trust-region least-squares solver with
central-difference Jacobians and fall back to a bounded Nelder-Mead
search if that fails. Reported standard errors are linearised: with
uncertainties given they are absolute (``(J^T W J)^-1``), otherwise the
covariance is scaled by the reduced chi-square, following the ``curve_fit``
conventions.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares, minimize, minimize_scalar, nnls

from .devices import (FieldModel, GatemonDevice, ResonatorCoupling, SplitJunctionDevice,
                      gatemon_spectrum_vs_field, split_junction_spectrum, t1_purcell)
from .errors import (BoundsHitWarning, ConfigError, FitDiverged, IllConditioned, NoBracket,
                     NonPhysicalRateWarning, NumericalError, PurcellDominated)
from .io import read_csv
from .qubit import JunctionChannel

__all__ = [
    "DephasingSample",
    "DephasingFit",
    "SpectrumDataset",
    "FitReport",
    "QdFit",
    "CouplingFit",
    "VFit",
    "pure_dephasing_rate",
    "dephasing_samples",
    "fit_dephasing_quadratic",
    "fit_flux_spectrum",
    "fit_field_spectrum",
    "fit_qd",
    "fit_dressed_coupling",
    "interpolate_min_dephasing",
    "ONE_OVER_F_FACTOR",
]

# Gamma = 2 pi sqrt(ln 2) sqrt(A) |D| for 1/f noise under a single echo
ONE_OVER_F_FACTOR = 2.0 * math.pi * math.sqrt(math.log(2.0))

TRANSITIONS = ("f01", "f12", "f02_half")
_CSV_NAMES = {"f01": "f01_hz", "f12": "f12_hz", "f02_half": "f02half_hz"}
CONTROL_COLUMNS = {"flux": "flux_phi0", "field": "field_t", "gate": "gate_v"}


# ---------------------------------------------------------------------------
# dephasing decomposition


def pure_dephasing_rate(T2_echo, T1):
    """``1/T2_echo - 1/(2 T1)`` in 1/s; negative (non-physical) results are warned about."""
    t2 = np.asarray(T2_echo, dtype=float)
    t1 = np.asarray(T1, dtype=float)
    if np.any(t2 <= 0) or np.any(t1 <= 0):
        raise ConfigError("T2_echo and T1 must be positive")
    rate = 1.0 / t2 - 0.5 / t1
    if np.any(rate < 0):
        warnings.warn("T2_echo exceeds 2 T1: negative pure dephasing rate", NonPhysicalRateWarning,
                      stacklevel=2)
    return rate if rate.ndim else float(rate)


@dataclass(frozen=True)
class DephasingSample:
    """One operating point: sensitivity ``|df01/dlambda|`` and echo dephasing rate."""

    sensitivity: float
    gamma_phi_echo: float
    sigma: float | None = None
    t1: float | None = None
    t2_echo: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.sensitivity) or not math.isfinite(self.gamma_phi_echo):
            raise ConfigError("dephasing samples must be finite")
        if self.sensitivity < 0:
            object.__setattr__(self, "sensitivity", abs(self.sensitivity))
        if self.sigma is not None and not self.sigma > 0:
            raise ConfigError("sample uncertainty must be positive")


def dephasing_samples(sensitivity, t2_echo, t1, *, control=None, t1_table=None) -> list[DephasingSample]:
    """Build samples from measured coherence times.

    ``t1`` is either pointwise (scalar or one value per sample) or, if
    ``t1_table=(control_grid, t1_grid)`` is given together with ``control``,
    interpolated linearly from the table at each sample's control value.
    """
    D = np.abs(np.atleast_1d(np.asarray(sensitivity, dtype=float)))
    t2 = np.broadcast_to(np.asarray(t2_echo, dtype=float), D.shape)
    if t1_table is not None:
        if control is None:
            raise ConfigError("t1_table needs the control value of each sample")
        grid, vals = (np.asarray(a, dtype=float) for a in t1_table)
        order = np.argsort(grid)
        ctrl = np.broadcast_to(np.asarray(control, dtype=float), D.shape)
        if np.any(ctrl < grid.min()) or np.any(ctrl > grid.max()):
            raise ConfigError("control values outside the T1 table")
        t1v = np.interp(ctrl, grid[order], vals[order])
    else:
        t1v = np.broadcast_to(np.asarray(t1, dtype=float), D.shape)
    rates = np.atleast_1d(pure_dephasing_rate(t2, t1v))
    return [DephasingSample(float(d), float(r), t1=float(a), t2_echo=float(b))
            for d, r, a, b in zip(D, rates, t1v, t2)]


@dataclass(frozen=True, eq=False)
class DephasingFit:
    """``Gamma = a D^2 + b D + c``; noise amplitudes follow from ``(a, b)``.

    ``sqrt_A = b/(2 pi sqrt(ln 2))`` (1/f amplitude at 1 Hz, control units)
    and ``S_W = a/pi^2`` (one-sided white level, control units^2/Hz).
    """

    a: float
    b: float
    c: float
    covariance: np.ndarray
    residual_norm: float
    model: str
    n_samples: int
    at_bound: tuple[bool, bool, bool] = (False, False, False)

    @property
    def sqrt_A(self) -> float:
        return self.b / ONE_OVER_F_FACTOR

    @property
    def S_W(self) -> float:
        return self.a / math.pi ** 2

    @property
    def stderr(self) -> dict:
        s = np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))
        return {"a": float(s[0]), "b": float(s[1]), "c": float(s[2]),
                "sqrt_A": float(s[1] / ONE_OVER_F_FACTOR), "S_W": float(s[0] / math.pi ** 2)}

    def predict(self, D):
        D = np.abs(np.asarray(D, dtype=float))
        return self.a * D ** 2 + self.b * D + self.c

    def as_dict(self) -> dict:
        return {"model": self.model, "a": self.a, "b": self.b, "c": self.c,
                "sqrt_A": self.sqrt_A, "S_W": self.S_W, "stderr": self.stderr,
                "covariance": self.covariance, "residual_norm": self.residual_norm,
                "n_samples": self.n_samples,
                "at_bound": dict(zip("abc", (bool(x) for x in self.at_bound)))}


def fit_dephasing_quadratic(samples: Sequence[DephasingSample], model: str = "quadratic") -> DephasingFit:
    """Non-negative least squares of the echo dephasing rate in the sensitivity.

    ``model="linear"`` fixes ``a = 0``. Inverse-variance weights are used
    when every sample carries ``sigma``.
    """
    if model not in ("quadratic", "linear"):
        raise ConfigError(f"model must be 'quadratic' or 'linear', got {model!r}")
    n_min = 4 if model == "quadratic" else 3
    if len(samples) < n_min:
        raise ConfigError(f"{model} fit needs at least {n_min} samples, got {len(samples)}")
    D = np.array([s.sensitivity for s in samples])
    y = np.array([s.gamma_phi_echo for s in samples])
    sig = [s.sigma for s in samples]
    weighted = all(v is not None for v in sig)
    w = 1.0 / np.array(sig) if weighted else np.ones_like(y)

    cols = [D ** 2, D, np.ones_like(D)] if model == "quadratic" else [D, np.ones_like(D)]
    X = np.column_stack(cols) * w[:, None]
    scale = np.max(np.abs(X), axis=0)
    if np.any(scale == 0):
        raise IllConditioned("all sensitivities are zero: noise coefficients undetermined")
    Xs = X / scale
    sv = np.linalg.svd(Xs, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise IllConditioned("sensitivity values too degenerate to separate the fit terms")
    if model == "quadratic":
        nz = np.unique(D[D > 0])
        if D.max() < 3.0 * D.min() or nz.size < 2:
            raise IllConditioned("quadratic fit needs sensitivities spanning a factor >= 3")

    coef_s, rnorm = nnls(Xs, y * w)
    coef = coef_s / scale
    free = coef_s > 0
    cov_full = np.zeros((X.shape[1], X.shape[1]))
    dof = len(y) - int(free.sum())
    if free.any():
        Xf = Xs[:, free]
        cov_s = np.linalg.pinv(Xf.T @ Xf)
        if not weighted:
            cov_s = cov_s * (rnorm ** 2 / dof if dof > 0 else np.nan)
        idx = np.nonzero(free)[0]
        cov_full[np.ix_(idx, idx)] = cov_s / np.outer(scale[free], scale[free])
    if model == "linear":
        coef = np.concatenate([[0.0], coef])
        cov = np.zeros((3, 3))
        cov[1:, 1:] = cov_full
        at_bound = (True,) + tuple(bool(not f) for f in free)
    else:
        cov = cov_full
        at_bound = tuple(bool(not f) for f in free)
    resid = y - (coef[0] * D ** 2 + coef[1] * D + coef[2])
    return DephasingFit(float(coef[0]), float(coef[1]), float(coef[2]), cov,
                        float(np.linalg.norm(resid * w)), model, len(samples), at_bound)


# ---------------------------------------------------------------------------
# spectrum fits


@dataclass(frozen=True, eq=False)
class SpectrumDataset:
    """Measured transitions vs a control (flux in Phi_0 or field in T).

    Missing observations are NaN. Uncertainties (Hz) are optional; when all
    are absent the fit uses unit weights.
    """

    control: np.ndarray
    f01: np.ndarray
    f12: np.ndarray | None = None
    f02_half: np.ndarray | None = None
    sigma_f01: np.ndarray | None = None
    sigma_f12: np.ndarray | None = None
    sigma_f02_half: np.ndarray | None = None
    control_kind: str = "flux"

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.control, dtype=float))
        object.__setattr__(self, "control", c)
        for name in TRANSITIONS:
            for attr in (name, "sigma_" + name):
                v = getattr(self, attr)
                if v is None:
                    continue
                v = np.broadcast_to(np.asarray(v, dtype=float), c.shape).copy()
                object.__setattr__(self, attr, v)
            sig = getattr(self, "sigma_" + name)
            if sig is not None and np.any(~(sig[np.isfinite(sig)] > 0)):
                raise ConfigError(f"uncertainties of {name} must be positive")
        if self.control_kind not in CONTROL_COLUMNS:
            raise ConfigError(f"unknown control kind {self.control_kind!r}")
        if not np.all(np.isfinite(c)):
            raise ConfigError("control values must be finite")

    @property
    def weighted(self) -> bool:
        return any(getattr(self, "sigma_" + n) is not None for n in TRANSITIONS if getattr(self, n) is not None)

    def observations(self):
        """``(transition names, values, sigmas)`` flattened over finite entries, with index masks."""
        out = []
        for name in TRANSITIONS:
            v = getattr(self, name)
            if v is None:
                continue
            mask = np.isfinite(v)
            sig = getattr(self, "sigma_" + name)
            s = np.ones_like(v) if sig is None else sig
            if sig is not None:
                mask &= np.isfinite(sig)
            out.append((name, mask, v[mask], s[mask]))
        return out

    @property
    def n_observations(self) -> int:
        return int(sum(m.sum() for _, m, _, _ in self.observations()))

    @classmethod
    def from_csv(cls, path, control_kind: str = "flux") -> "SpectrumDataset":
        ctrl = CONTROL_COLUMNS[control_kind]
        optional = []
        for n in TRANSITIONS[1:]:
            optional.append(_CSV_NAMES[n])
        for n in TRANSITIONS:
            optional.append("sigma_" + _CSV_NAMES[n])
        data = read_csv(path, required=[ctrl, "f01_hz"], optional=optional)
        kw = {}
        for n in TRANSITIONS:
            if _CSV_NAMES[n] in data:
                kw[n] = data[_CSV_NAMES[n]]
            if "sigma_" + _CSV_NAMES[n] in data:
                kw["sigma_" + n] = data["sigma_" + _CSV_NAMES[n]]
        return cls(data[ctrl], control_kind=control_kind, **kw)

    def to_columns(self) -> dict:
        cols = {CONTROL_COLUMNS[self.control_kind]: self.control}
        for n in TRANSITIONS:
            if getattr(self, n) is not None:
                cols[_CSV_NAMES[n]] = getattr(self, n)
        for n in TRANSITIONS:
            if getattr(self, "sigma_" + n) is not None:
                cols["sigma_" + _CSV_NAMES[n]] = getattr(self, "sigma_" + n)
        return cols


@dataclass(eq=False)
class FitReport:
    """Nonlinear fit result with linearised uncertainties."""

    params: dict
    stderr: dict
    covariance: np.ndarray
    residuals: np.ndarray
    residual_norm: float
    dof: int
    bounds_hit: dict
    success: bool
    nfev: int
    method: str
    message: str
    fixed: dict = field(default_factory=dict)

    @property
    def reduced_chi2(self) -> float:
        return self.residual_norm ** 2 / self.dof if self.dof > 0 else math.nan

    def as_dict(self) -> dict:
        return {"params": self.params, "stderr": self.stderr, "fixed": self.fixed,
                "covariance": self.covariance, "residual_norm": self.residual_norm,
                "reduced_chi2": self.reduced_chi2, "dof": self.dof, "bounds_hit": self.bounds_hit,
                "success": self.success, "nfev": self.nfev, "method": self.method,
                "message": self.message}


def _fit(resid: Callable, x0, lo, hi, names: Sequence[str], x_scale, weighted: bool) -> tuple:
    """Bounded nonlinear least squares with a simplex fallback."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x0 = np.clip(np.asarray(x0, dtype=float), lo + 1e-9 * (hi - lo), hi - 1e-9 * (hi - lo))
    res = None
    method = "trf"
    try:
        res = least_squares(resid, x0, bounds=(lo, hi), method="trf", jac="3-point",
                            x_scale=x_scale, xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=400)
        ok = res.success and np.all(np.isfinite(res.fun))
    except (NumericalError, np.linalg.LinAlgError, ValueError):
        ok = False
    if not ok:
        method = "nelder-mead"
        start = res.x if res is not None and np.all(np.isfinite(res.x)) else x0

        def cost(x):
            try:
                r = resid(x)
            except (NumericalError, np.linalg.LinAlgError, ValueError):
                return math.inf
            return float(r @ r)

        nm = minimize(cost, start, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                      options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
        if not np.isfinite(nm.fun):
            raise FitDiverged(f"fit failed to converge: {nm.message}")
        # Jacobian at the simplex optimum for the covariance
        res = least_squares(resid, nm.x, bounds=(lo, hi), method="trf", jac="3-point",
                            x_scale=x_scale, max_nfev=1)
        res.x = nm.x
    x = res.x
    r = res.fun
    J = res.jac
    dof = r.size - x.size
    cov = np.linalg.pinv(J.T @ J)
    if not weighted:
        cov = cov * (float(r @ r) / dof if dof > 0 else math.nan)
    span = hi - lo
    hit = {n: bool(min(xi - l, h - xi) <= 1e-6 * s) for n, xi, l, h, s in zip(names, x, lo, hi, span)}
    if any(hit.values()):
        warnings.warn(f"parameters at bounds: {[n for n, v in hit.items() if v]}", BoundsHitWarning,
                      stacklevel=3)
    return x, cov, r, dof, hit, method, int(res.nfev), str(res.message)


def _residual_builder(data: SpectrumDataset, forward: Callable):
    obs = data.observations()
    if not obs:
        raise ConfigError("dataset has no observations")

    def resid(x):
        sp = forward(x)
        parts = []
        for name, mask, vals, sig in obs:
            parts.append((getattr(sp, name)[mask] - vals) / sig)
        return np.concatenate(parts)

    return resid


def _report(names, x, cov, r, dof, hit, method, nfev, msg, units_scale, fixed=None) -> FitReport:
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    scale = np.asarray(units_scale, dtype=float)
    params = {n: float(v * s) for n, v, s in zip(names, x, scale)}
    stderr = {n: float(v * s) for n, v, s in zip(names, sd, scale)}
    return FitReport(params, stderr, cov * np.outer(scale, scale), r, float(np.linalg.norm(r)), dof,
                     hit, True, nfev, method, msg, fixed or {})


def _transmon_ej(f01: float, E_C: float) -> float:
    return (f01 + E_C) ** 2 / (8.0 * E_C)


def fit_flux_spectrum(data: SpectrumDataset, E_C: float, init: dict | None = None, *,
                      threads: int = 1, n_cut: int = 30) -> FitReport:
    """Fit ``Delta_A, Delta_B, T_A, T_B`` (one channel per junction) to a flux spectrum.

    Default initialisation: the transmon estimate ``E_J = (f01 + E_C)^2/(8 E_C)``
    applied to the largest and smallest observed ``f01`` gives the sum and
    difference of the junction energies, each transmission starts at 0.5 and
    ``Delta = 4 E_J / T``. Junction A is the one with the larger ``E_J``.
    Gaps are reported in Hz.
    """
    if data.control_kind != "flux":
        raise ConfigError("flux fit needs a flux-controlled dataset")
    n_par = 4
    if data.n_observations <= n_par:
        raise ConfigError("need more observations than free parameters")
    if np.ptp(data.control) < 0.5:
        raise ConfigError("flux data must span at least half a flux period")
    f = data.f01[np.isfinite(data.f01)]
    ej_sum = _transmon_ej(float(f.max()), E_C)
    ej_diff = min(_transmon_ej(float(f.min()), E_C), 0.9 * ej_sum)
    guess = {"delta_a": 8.0 * (ej_sum + ej_diff) / 2.0, "delta_b": 8.0 * (ej_sum - ej_diff) / 2.0,
             "t_a": 0.5, "t_b": 0.5}
    guess.update(init or {})
    names = ("delta_a", "delta_b", "t_a", "t_b")
    gscale = 1e9
    x0 = [guess["delta_a"] / gscale, guess["delta_b"] / gscale, guess["t_a"], guess["t_b"]]
    lo = [1e-3, 1e-3, 1e-6, 1e-6]
    hi = [1e4, 1e4, 1.0 - 1e-9, 1.0 - 1e-9]

    def device(x):
        return SplitJunctionDevice(E_C, (JunctionChannel(x[0] * gscale, x[2]),),
                                   (JunctionChannel(x[1] * gscale, x[3]),), n_cut=n_cut)

    def forward(x):
        return split_junction_spectrum(device(x), data.control, threads=threads, check_cutoff=False)

    resid = _residual_builder(data, forward)
    x, cov, r, dof, hit, method, nfev, msg = _fit(resid, x0, lo, hi, names, [1.0, 1.0, 0.05, 0.05],
                                                  data.weighted)
    # the charge cutoff is checked once at the solution
    split_junction_spectrum(device(x), data.control[:1], check_cutoff=True)
    return _report(names, x, cov, r, dof, hit, method, nfev, msg, [gscale, gscale, 1.0, 1.0],
                   fixed={"E_C": E_C})


def fit_field_spectrum(data: SpectrumDataset, delta0: float, E_C: float, init: dict | None = None, *,
                       threads: int = 1, n_cut: int = 30) -> FitReport:
    """Fit two-channel transmissions ``T_A, T_B`` and the critical field ``B_c``.

    ``delta0`` and ``E_C`` are held fixed. ``B_c`` is bounded below just above
    the largest field in the data so the model stays defined. Default
    initialisation: ``B_c = 1.1 max(B)`` and the summed transmission from the
    transmon estimate at the lowest field, split 60/40 between the channels
    (reported with ``T_A >= T_B``). ``B_c`` is reported in tesla.
    """
    if data.control_kind != "field":
        raise ConfigError("field fit needs a field-controlled dataset")
    if data.n_observations <= 3:
        raise ConfigError("need more observations than free parameters")
    B = data.control
    b_max = float(np.max(np.abs(B)))
    i0 = int(np.argmin(np.abs(B)))
    f_low = data.f01[i0] if np.isfinite(data.f01[i0]) else np.nanmax(data.f01)
    t_sum = min(4.0 * _transmon_ej(float(f_low), E_C) / delta0, 1.98)
    guess = {"t_a": min(0.6 * t_sum, 0.99), "t_b": min(0.4 * t_sum, 0.99), "b_c": 1.1 * b_max}
    guess.update(init or {})
    names = ("t_a", "t_b", "b_c")
    b_lo = b_max * (1.0 + 1e-6) if b_max > 0 else 1e-9
    x0 = [guess["t_a"], guess["t_b"], max(guess["b_c"], b_lo * (1 + 1e-3))]
    lo = [1e-6, 1e-6, b_lo]
    hi = [1.0 - 1e-9, 1.0 - 1e-9, max(100.0 * b_max, 10.0 * x0[2])]

    def forward(x):
        dev = GatemonDevice(E_C, (JunctionChannel(delta0, x[0]), JunctionChannel(delta0, x[1])),
                            n_cut=n_cut)
        return gatemon_spectrum_vs_field(dev, FieldModel(delta0, x[2]), B, threads=threads,
                                         check_cutoff=False)

    resid = _residual_builder(data, forward)
    x, cov, r, dof, hit, method, nfev, msg = _fit(resid, x0, lo, hi, names, [0.05, 0.05, 0.01 * x0[2]],
                                                  data.weighted)
    if x[1] > x[0]:
        perm = [1, 0, 2]
        x = x[perm]
        cov = cov[np.ix_(perm, perm)]
        hit = {"t_a": hit["t_b"], "t_b": hit["t_a"], "b_c": hit["b_c"]}
    return _report(names, x, cov, r, dof, hit, method, nfev, msg, [1.0, 1.0, 1.0],
                   fixed={"delta0": delta0, "E_C": E_C})


# ---------------------------------------------------------------------------
# relaxation and dressed-state fits


@dataclass(frozen=True)
class QdFit:
    q_d: float
    stderr: float
    residual_norm: float
    n_points: int
    dielectric_fraction: float

    def as_dict(self) -> dict:
        return {"q_d": self.q_d, "stderr": self.stderr, "residual_norm": self.residual_norm,
                "n_points": self.n_points, "dielectric_fraction": self.dielectric_fraction}


def fit_qd(f01, t1, rc: ResonatorCoupling, kappa: float, *, sigma_t1=None) -> QdFit:
    """Dielectric quality factor from ``1/T1 = 1/T1_P + 2 pi f01 / Q_d``.

    Least squares in rate space for ``1/Q_d``, which is linear: the Purcell
    rate is subtracted and the remainder regressed on ``2 pi f01`` (weighted
    by the propagated T1 uncertainties when given). ``dielectric_fraction``
    is the largest share of the dielectric term in the modelled total rate.
    """
    f01 = np.atleast_1d(np.asarray(f01, dtype=float))
    t1 = np.atleast_1d(np.asarray(t1, dtype=float))
    if f01.shape != t1.shape or f01.size < 3:
        raise ConfigError("fit_qd needs >= 3 matching (f01, T1) points")
    if np.any(t1 <= 0):
        raise ConfigError("T1 values must be positive")
    gamma_p = 1.0 / np.atleast_1d(t1_purcell(f01, rc, kappa))
    x = 2.0 * np.pi * f01
    y = 1.0 / t1 - gamma_p
    if sigma_t1 is not None:
        w = t1 ** 2 / np.broadcast_to(np.asarray(sigma_t1, dtype=float), t1.shape)
    else:
        w = np.ones_like(t1)
    xw, yw = x * w, y * w
    inv_q = float(xw @ yw / (xw @ xw))
    if not inv_q > 0:
        raise FitDiverged("T1 data are at or beyond the Purcell limit: no dielectric loss resolved")
    resid = yw - inv_q * xw
    dof = f01.size - 1
    if sigma_t1 is not None:
        var = 1.0 / (xw @ xw)
    else:
        var = float(resid @ resid) / dof / (xw @ xw)
    q_d = 1.0 / inv_q
    frac = inv_q * x / (inv_q * x + gamma_p)
    if np.all(frac < 0.1):
        warnings.warn("Purcell decay dominates every point; Q_d is poorly constrained", PurcellDominated,
                      stacklevel=2)
    return QdFit(q_d, math.sqrt(var) * q_d ** 2, float(np.linalg.norm(resid)), int(f01.size),
                 float(frac.max()))


@dataclass(frozen=True)
class CouplingFit:
    g: float
    stderr: float
    residual_norm: float
    n_points: int

    def as_dict(self) -> dict:
        return {"g": self.g, "stderr": self.stderr, "residual_norm": self.residual_norm,
                "n_points": self.n_points}


def fit_dressed_coupling(f_r, f01, f_bare: float, *, sigma_fr=None) -> CouplingFit:
    """Coupling ``g`` (Hz) from dressed resonator/qubit frequency pairs.

    The dressed detunings satisfy ``(f_R - f_bare)(f01 - f_bare) = -g^2``, so
    ``f_R = f_bare - g^2/(f01 - f_bare)`` is linear in ``g^2`` and fitted in
    closed form (``g^2`` clipped at zero).
    """
    f_r = np.atleast_1d(np.asarray(f_r, dtype=float))
    f01 = np.atleast_1d(np.asarray(f01, dtype=float))
    if f_r.shape != f01.shape or f_r.size < 2:
        raise ConfigError("need >= 2 (f_R, f01) pairs")
    det = f01 - f_bare
    if np.any(det == 0) or not np.all(np.isfinite(det)) or not np.all(np.isfinite(f_r)):
        raise FitDiverged("qubit frequency equal to the bare resonator frequency")
    u = -1.0 / det
    y = f_r - f_bare
    w = np.ones_like(u) if sigma_fr is None else 1.0 / np.broadcast_to(np.asarray(sigma_fr, float), u.shape)
    uw, yw = u * w, y * w
    g2 = float(uw @ yw / (uw @ uw))
    resid = yw - g2 * uw
    if sigma_fr is None:
        var_g2 = float(resid @ resid) / (u.size - 1) / (uw @ uw)
    else:
        var_g2 = 1.0 / (uw @ uw)
    g2c = max(g2, 0.0)
    g = math.sqrt(g2c)
    # d g = d(g^2) / (2 g); at g = 0 report the g^2 scale instead
    sd = math.sqrt(var_g2) / (2.0 * g) if g > 0 else math.sqrt(math.sqrt(var_g2))
    return CouplingFit(g, sd, float(np.linalg.norm(yw - g2c * uw)), int(u.size))


# ---------------------------------------------------------------------------
# two-slope minimum of the dephasing rate


@dataclass(frozen=True)
class VFit:
    """Two-slope fit ``gamma_min + s_L (x0 - x)_+ + s_R (x - x0)_+``.

    Slopes are magnitudes of the rate change per unit ``x`` away from the vertex.
    """

    x0: float
    gamma_min: float
    slope_left: float
    slope_right: float
    residual_norm: float

    @property
    def mean_slope(self) -> float:
        return 0.5 * (self.slope_left + self.slope_right)

    @property
    def sqrt_A(self) -> float:
        """1/f amplitude implied by the mean slope when ``x`` is a sensitivity."""
        return self.mean_slope / ONE_OVER_F_FACTOR

    def as_dict(self) -> dict:
        return {"x0": self.x0, "gamma_min": self.gamma_min, "slope_left": self.slope_left,
                "slope_right": self.slope_right, "mean_slope": self.mean_slope, "sqrt_A": self.sqrt_A,
                "residual_norm": self.residual_norm}


def _v_solve(x, y, x0):
    A = np.column_stack([np.ones_like(x), np.maximum(x0 - x, 0.0), np.maximum(x - x0, 0.0)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - A @ coef
    return coef, float(r @ r)


def interpolate_min_dephasing(x, gamma) -> VFit:
    """Locate the minimum of a V-shaped rate trace by a continuous two-slope fit.

    ``x`` is typically the signed sensitivity ``df01/dV_G`` (or the gate
    voltage). The vertex is scanned over the data and refined by a bounded
    scalar search; the two slopes and offset are linear given the vertex.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(gamma, dtype=float)
    if x.shape != y.shape or x.size < 5:
        raise ConfigError("need >= 5 points for a two-slope fit")
    order = np.argsort(x)
    x, y = x[order], y[order]
    k = int(np.argmin(y))
    if k == 0 or k == x.size - 1:
        raise NoBracket("rates are lowest at the edge of the window: no minimum bracketed")
    # interior vertex candidates: the data points and the midpoints between them
    cands = np.concatenate([x[1:-1], 0.5 * (x[1:] + x[:-1])])
    sse = [_v_solve(x, y, c)[1] for c in cands]
    best = cands[int(np.argmin(sse))]
    i = np.searchsorted(x, best)
    a = x[max(i - 1, 0)]
    b = x[min(i + 1, x.size - 1)]
    ref = minimize_scalar(lambda c: _v_solve(x, y, c)[1], bounds=(a, b), method="bounded",
                          options={"xatol": 1e-12 * max(np.ptp(x), 1e-300)})
    x0 = float(ref.x) if ref.fun <= min(sse) else float(best)
    coef, sse0 = _v_solve(x, y, x0)
    if coef[1] <= 0 or coef[2] <= 0:
        raise NoBracket("fitted slopes do not form a minimum")
    return VFit(x0, float(coef[0]), float(coef[1]), float(coef[2]), math.sqrt(sse0))
