"""Nanowire transmon modelling: spectra, dephasing and charge-TLS analysis."""

__version__ = "0.1.0"
