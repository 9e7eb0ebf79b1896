"""Charge-basis Cooper-pair-box engine with arbitrary periodic junction potentials.

Energies are frequencies in Hz (E/h) throughout. A junction potential is stored
as a cosine series about a phase offset,

    V(phi) = sum_k c_k cos(k (phi - shift)),

which in the charge basis couples |n> and |n +/- k> with weight c_k/2.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence, Union

import numpy as np
import scipy.linalg

from .errors import ConfigError, CutoffTooSmall, NonPeriodicInput

__all__ = [
    "JunctionChannel",
    "PeriodicPotential",
    "ChargeBasisConfig",
    "TransitionSet",
    "CooperPairBox",
    "abs_channel_energy",
    "potential_to_series",
    "abs_series",
    "build_hamiltonian",
    "transitions",
    "converged_config",
    "charge_dispersion",
]

DEFAULT_ORDER = 16
MAX_ORDER = 1024
DEFAULT_N_CUT = 30
MAX_N_CUT = 960


@dataclass(frozen=True)
class JunctionChannel:
    """A single short-junction Andreev channel.

    Parameters
    ----------
    gap : float
        Induced gap Delta/h in Hz.
    transmission : float
        Channel transmission probability, 0 <= T <= 1.
    """

    gap: float
    transmission: float

    def __post_init__(self):
        if not self.gap >= 0:
            raise ConfigError(f"gap must be >= 0, got {self.gap}")
        if not 0.0 <= self.transmission <= 1.0:
            raise ConfigError(f"transmission must lie in [0, 1], got {self.transmission}")

    @property
    def josephson_energy(self) -> float:
        """Small-phase curvature of the ABS potential, Delta*T/4."""
        return self.gap * self.transmission / 4.0


def abs_channel_energy(phase, channel: JunctionChannel):
    """Ground Andreev level ``-Delta * sqrt(1 - T sin^2(phi/2))`` in Hz."""
    s = np.sin(np.asarray(phase, dtype=float) / 2.0)
    # clip guards the T = 1, phi = pi point against -0.0 rounding
    out = -channel.gap * np.sqrt(np.clip(1.0 - channel.transmission * s * s, 0.0, None))
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class PeriodicPotential:
    """Cosine series ``sum_k c_k cos(k (phi - shift))``, k = 0..order.

    ``residual`` is the max reconstruction error (Hz) measured when the series
    was computed from a callable; zero for series given analytically.
    """

    coeffs: np.ndarray
    shift: float = 0.0
    residual: float = 0.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).ravel()
        if c.size < 1:
            raise ConfigError("a potential needs at least the constant coefficient")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def order(self) -> int:
        return self.coeffs.size - 1

    @classmethod
    def cosine(cls, e_j: float, shift: float = 0.0) -> "PeriodicPotential":
        """Standard tunnel junction ``-E_J cos(phi - shift)``."""
        return cls(np.array([0.0, -e_j]), shift=shift)

    def __call__(self, phi):
        phi = np.asarray(phi, dtype=float)
        k = np.arange(self.coeffs.size)
        out = np.cos(np.multiply.outer(phi - self.shift, k)) @ self.coeffs
        return out if out.ndim else float(out)

    def shifted(self, shift: float) -> "PeriodicPotential":
        return replace(self, shift=shift)

    def scaled(self, factor: float) -> "PeriodicPotential":
        return replace(self, coeffs=self.coeffs * factor, residual=self.residual * abs(factor))

    def __add__(self, other: "PeriodicPotential") -> "PeriodicPotential":
        if not isinstance(other, PeriodicPotential):
            return NotImplemented
        if not math.isclose(self.shift, other.shift, rel_tol=0.0, abs_tol=1e-15):
            raise ConfigError("only potentials with the same shift can be summed; "
                              "pass them separately to build_hamiltonian instead")
        n = max(self.coeffs.size, other.coeffs.size)
        c = np.zeros(n)
        c[: self.coeffs.size] += self.coeffs
        c[: other.coeffs.size] += other.coeffs
        return PeriodicPotential(c, self.shift, self.residual + other.residual)


def potential_to_series(V: Callable, order: int = DEFAULT_ORDER, *, period_tol: float = 1e-9,
                        n_quad: int | None = None) -> PeriodicPotential:
    """Cosine coefficients of a 2pi-periodic, even potential by trapezoidal quadrature.

    The trapezoidal rule on a uniform periodic grid is spectrally accurate, so
    for smooth potentials the coefficients are exact up to aliasing from
    harmonics above ``n_quad``. The reconstruction error is measured on the
    grid midpoints and stored as ``residual``.
    """
    if order < 1:
        raise ConfigError(f"series order must be >= 1, got {order}")
    m = n_quad or max(512, 8 * order)
    ends = np.asarray(V(np.array([-np.pi, np.pi, 0.0, 2.0 * np.pi])), dtype=float)
    scale = max(1.0, float(np.max(np.abs(ends))))
    gap = max(abs(ends[0] - ends[1]), abs(ends[2] - ends[3]))
    if gap > period_tol * scale:
        raise NonPeriodicInput(f"V differs by {gap:.3e} one period apart: not 2pi-periodic")

    phi = 2.0 * np.pi * np.arange(m) / m
    ft = np.fft.rfft(np.asarray(V(phi), dtype=float)) / m
    c = 2.0 * ft.real[: order + 1]
    c[0] = ft.real[0]

    mid = phi + np.pi / m
    series = PeriodicPotential(c)
    residual = float(np.max(np.abs(series(mid) - np.asarray(V(mid), dtype=float))))
    return PeriodicPotential(c, residual=residual)


def abs_series(channels: Iterable[JunctionChannel], order: int | None = None, *,
               rtol: float = 1e-10, shift: float = 0.0) -> PeriodicPotential:
    """Cosine series of the summed ABS potential of ``channels``.

    With ``order=None`` the order starts at 16 and doubles until the
    reconstruction residual drops below ``rtol`` times the summed gap.
    High-transmission channels need more harmonics: the coefficients decay
    like exp(-k arccosh((2 - T)/T)), and only algebraically at T = 1.
    """
    channels = tuple(channels)

    def V(phi):
        return sum((abs_channel_energy(phi, ch) for ch in channels), np.zeros_like(phi))

    scale = sum(ch.gap for ch in channels)
    if order is not None:
        return potential_to_series(V, order).shifted(shift)
    if scale == 0.0:
        return PeriodicPotential(np.zeros(DEFAULT_ORDER + 1), shift=shift)
    k = DEFAULT_ORDER
    while True:
        pot = potential_to_series(V, k)
        if pot.residual <= rtol * scale:
            break
        if k >= MAX_ORDER:
            warnings.warn(f"ABS series residual {pot.residual:.3e} Hz above tolerance at "
                          f"order {k}", RuntimeWarning, stacklevel=2)
            break
        k *= 2
    return pot.shifted(shift)


@dataclass(frozen=True)
class ChargeBasisConfig:
    """Charge basis truncation |n| <= n_cut and offset charge n_g (Cooper pairs)."""

    n_cut: int = DEFAULT_N_CUT
    n_g: float = 0.0

    def __post_init__(self):
        if int(self.n_cut) != self.n_cut or self.n_cut < 1:
            raise ConfigError(f"n_cut must be an integer >= 1, got {self.n_cut}")

    @property
    def dim(self) -> int:
        return 2 * self.n_cut + 1


PotentialLike = Union[PeriodicPotential, Sequence[PeriodicPotential]]


def _as_terms(potential: PotentialLike) -> tuple[PeriodicPotential, ...]:
    if isinstance(potential, PeriodicPotential):
        return (potential,)
    return tuple(potential)


def build_hamiltonian(E_C: float, potential: PotentialLike, cfg: ChargeBasisConfig = ChargeBasisConfig(),
                      *, rtol: float | None = None) -> np.ndarray:
    """Charge-basis matrix of ``4 E_C (N - n_g)^2 + sum_i V_i(phi)``.

    ``potential`` is a single series or a sequence of series with individual
    phase shifts (a split junction has two). The matrix is real symmetric when
    every shift is zero, complex Hermitian otherwise. If ``rtol`` is given the
    cutoff is first checked with :func:`converged_config`, raising
    :class:`CutoffTooSmall` when ``cfg.n_cut`` is insufficient.
    """
    if not E_C > 0:
        raise ConfigError(f"E_C must be positive, got {E_C}")
    terms = _as_terms(potential)
    if rtol is not None:
        ok = converged_config(E_C, terms, cfg, rtol=rtol, max_n_cut=cfg.n_cut)
        if ok.n_cut != cfg.n_cut:  # pragma: no cover - converged_config raises first
            raise CutoffTooSmall(f"n_cut={cfg.n_cut} not converged")

    n = np.arange(-cfg.n_cut, cfg.n_cut + 1)
    dim = n.size
    is_complex = any(t.shift != 0.0 for t in terms)
    # the potential is Hermitian Toeplitz: <m|V|n> depends only on m - n
    band = np.zeros(dim, dtype=complex if is_complex else float)
    for term in terms:
        c = term.coeffs[:dim]
        k = np.arange(c.size)
        w = 0.5 * c
        w[0] = c[0]
        band[: c.size] += w * np.exp(-1j * k * term.shift) if is_complex else w
    if is_complex:
        band[0] = band[0].real
    H = scipy.linalg.toeplitz(band)
    H[np.diag_indices(dim)] += 4.0 * E_C * (n - cfg.n_g) ** 2
    return H


@dataclass(frozen=True)
class TransitionSet:
    """Lowest transition frequencies in Hz; ``f02_half`` is (f01 + f12)/2."""

    f01: float
    f12: float
    f02_half: float

    @classmethod
    def from_levels(cls, levels) -> "TransitionSet":
        e = np.sort(np.asarray(levels, dtype=float))
        f01 = float(e[1] - e[0])
        f12 = float(e[2] - e[1])
        return cls(f01, f12, (f01 + f12) / 2.0)


def eigenvalues(H: np.ndarray, k_levels: int | None = None) -> np.ndarray:
    """Sorted lowest ``k_levels`` eigenvalues of a Hermitian matrix."""
    if k_levels is None or k_levels >= H.shape[0]:
        return scipy.linalg.eigvalsh(H)
    return scipy.linalg.eigh(H, eigvals_only=True, subset_by_index=[0, k_levels - 1])


def transitions(H: np.ndarray, k_levels: int = 3) -> TransitionSet:
    if k_levels < 3:
        raise ConfigError(f"k_levels must be >= 3, got {k_levels}")
    return TransitionSet.from_levels(eigenvalues(H, k_levels))


def converged_config(E_C: float, potential: PotentialLike, cfg: ChargeBasisConfig = ChargeBasisConfig(),
                     *, rtol: float = 1e-9, max_n_cut: int = MAX_N_CUT) -> ChargeBasisConfig:
    """Smallest ``n_cut`` (doubling from ``cfg.n_cut``) whose f01 agrees with the doubled cutoff."""
    terms = _as_terms(potential)
    n_cut = cfg.n_cut
    f_prev = transitions(build_hamiltonian(E_C, terms, replace(cfg, n_cut=n_cut))).f01
    while True:
        f_next = transitions(build_hamiltonian(E_C, terms, replace(cfg, n_cut=2 * n_cut))).f01
        if abs(f_next - f_prev) <= rtol * abs(f_next):
            return replace(cfg, n_cut=n_cut)
        n_cut *= 2
        f_prev = f_next
        if n_cut > max_n_cut:
            raise CutoffTooSmall(f"f01 not converged to rtol={rtol} up to n_cut={max_n_cut}")


@dataclass(frozen=True)
class CooperPairBox:
    """A charge qubit: charging energy plus one or more shifted junction potentials."""

    E_C: float
    potentials: tuple[PeriodicPotential, ...]
    cfg: ChargeBasisConfig = field(default_factory=ChargeBasisConfig)

    def __post_init__(self):
        object.__setattr__(self, "potentials", _as_terms(self.potentials))
        if not self.E_C > 0:
            raise ConfigError(f"E_C must be positive, got {self.E_C}")

    def hamiltonian(self) -> np.ndarray:
        return build_hamiltonian(self.E_C, self.potentials, self.cfg)

    def levels(self, k_levels: int = 3) -> np.ndarray:
        return eigenvalues(self.hamiltonian(), k_levels)

    def transitions(self) -> TransitionSet:
        return transitions(self.hamiltonian())

    def with_offset_charge(self, n_g: float) -> "CooperPairBox":
        return replace(self, cfg=replace(self.cfg, n_g=n_g))

    def converged(self, rtol: float = 1e-9) -> "CooperPairBox":
        return replace(self, cfg=converged_config(self.E_C, self.potentials, self.cfg, rtol=rtol))


def charge_dispersion(device, level_pair: tuple[int, int] = (0, 1)) -> float:
    """Peak-to-peak offset-charge dispersion |f_ij(n_g=1/2) - f_ij(n_g=0)| in Hz.

    ``device`` is a :class:`CooperPairBox` or anything with a ``box()`` method.
    """
    box = device.box() if hasattr(device, "box") else device
    i, j = sorted(level_pair)
    k = j + 1

    def f_ij(n_g):
        e = box.with_offset_charge(n_g).levels(max(k, 3))
        return e[j] - e[i]

    return float(abs(f_ij(0.5) - f_ij(0.0)))
