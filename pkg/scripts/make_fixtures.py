"""Regenerate the synthetic datasets under ``configs/data``.

Run from the repository root: ``python3 scripts/make_fixtures.py``.
"""
import math
from pathlib import Path

import numpy as np

from nwtransmon.devices import SplitJunctionDevice, split_junction_spectrum
from nwtransmon.inference import ONE_OVER_F_FACTOR
from nwtransmon.io import write_csv
from nwtransmon.qubit import JunctionChannel

OUT = Path(__file__).resolve().parent.parent / "configs" / "data"


def flux_spectrum(seed: int = 1, noise_hz: float = 1e6) -> None:
    dev = SplitJunctionDevice(300e6, (JunctionChannel(46e9, 0.5),), (JunctionChannel(38.5e9, 0.57),))
    phi = np.linspace(-0.5, 0.5, 101)
    sp = split_junction_spectrum(dev, phi)
    rng = np.random.default_rng(seed)
    cols = {"flux_phi0": phi}
    for name, tag in (("f01", "f01"), ("f12", "f12"), ("f02_half", "f02half")):
        cols[f"{tag}_hz"] = getattr(sp, name) + noise_hz * rng.standard_normal(phi.size)
    for tag in ("f01", "f12", "f02half"):
        cols[f"sigma_{tag}_hz"] = np.full(phi.size, noise_hz)
    write_csv(OUT / "flux_spectrum_synthetic.csv", cols)


def flux_dephasing(seed: int = 2, rel_noise: float = 0.01) -> None:
    a = math.pi ** 2 * (60e-9) ** 2
    b = ONE_OVER_F_FACTOR * 13e-6
    c = 2000.0
    D = np.linspace(0.0, 3e9, 25)
    y = a * D ** 2 + b * D + c
    sig = rel_noise * y
    rng = np.random.default_rng(seed)
    write_csv(OUT / "dephasing_flux_synthetic.csv", {
        "sensitivity_hz_per_unit": D,
        "gamma_phi_per_s": y + sig * rng.standard_normal(D.size),
        "sigma_gamma_phi_per_s": sig,
    })


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    flux_spectrum()
    flux_dephasing()
