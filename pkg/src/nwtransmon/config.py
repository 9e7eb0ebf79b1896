"""Validated JSON run configurations for the command-line interface.

Every model forbids unknown keys. Physical quantities carry their unit in
the key name (``_hz``, ``_s``, ``_t``).
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

__all__ = [
    "ChannelConfig",
    "SweepConfig",
    "SplitJunctionConfig",
    "GatemonConfig",
    "SpectrumConfig",
    "FitConfig",
    "TlsConfig",
    "DephasingLimitConfig",
    "T1ModelConfig",
    "SensitivityConfig",
    "load_config",
    "config_digest",
]


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ChannelConfig(Strict):
    gap_hz: float = Field(gt=0)
    transmission: float = Field(ge=0, le=1)


class SweepConfig(Strict):
    """Either an explicit list of ``values`` or ``start``/``stop``/``points``."""

    start: float | None = None
    stop: float | None = None
    points: int | None = Field(default=None, ge=1)
    values: list[float] | None = None

    @model_validator(mode="after")
    def _one_form(self):
        ranged = (self.start, self.stop, self.points)
        if self.values is not None:
            if any(v is not None for v in ranged) or not self.values:
                raise ValueError("give either non-empty 'values' or start/stop/points, not both")
        elif any(v is None for v in ranged):
            raise ValueError("sweep needs start, stop and points")
        return self

    def array(self) -> np.ndarray:
        if self.values is not None:
            return np.asarray(self.values, dtype=float)
        return np.linspace(self.start, self.stop, self.points)


class GateCurveConfig(Strict):
    voltages_v: list[float]
    transmissions: list[list[float]]


class SplitJunctionConfig(Strict):
    kind: Literal["split_junction"]
    E_C_hz: float = Field(gt=0)
    channels_a: list[ChannelConfig] = Field(min_length=1)
    channels_b: list[ChannelConfig] = Field(min_length=1)
    n_g: float = 0.0
    n_cut: int = Field(default=30, ge=2)


class GatemonConfig(Strict):
    kind: Literal["gatemon"]
    E_C_hz: float = Field(gt=0)
    channels: list[ChannelConfig] = Field(min_length=1)
    n_g: float = 0.0
    n_cut: int = Field(default=30, ge=2)
    b_c_t: float | None = Field(default=None, gt=0)
    gate_curve: GateCurveConfig | None = None


DeviceConfig = Annotated[Union[SplitJunctionConfig, GatemonConfig], Field(discriminator="kind")]


class RunOptions(Strict):
    seed: int | None = Field(default=None, ge=0)
    threads: int = Field(default=1, ge=1)
    output_dir: str | None = None


class SpectrumConfig(RunOptions):
    device: DeviceConfig
    sweep: SweepConfig
    control: Literal["flux", "field", "gate"] | None = None


class SensitivityConfig(RunOptions):
    device: DeviceConfig
    control: Literal["flux", "gate", "gate-T", "field"]
    sweep: SweepConfig
    rtol: float = Field(default=1e-6, gt=0)


class FluxFitOptions(Strict):
    kind: Literal["flux"]
    E_C_hz: float = Field(gt=0)
    init: dict[Literal["delta_a", "delta_b", "t_a", "t_b"], float] = Field(default_factory=dict)


class FieldFitOptions(Strict):
    kind: Literal["field"]
    E_C_hz: float = Field(gt=0)
    delta0_hz: float = Field(gt=0)
    init: dict[Literal["t_a", "t_b", "b_c"], float] = Field(default_factory=dict)


class DephasingFitOptions(Strict):
    kind: Literal["dephasing"]
    model: Literal["quadratic", "linear"] = "quadratic"


class QdFitOptions(Strict):
    kind: Literal["qd"]
    f_bare_hz: float = Field(gt=0)
    g_hz: float = Field(ge=0)
    kappa_hz: float = Field(ge=0)


class CouplingFitOptions(Strict):
    kind: Literal["coupling"]
    f_bare_hz: float = Field(gt=0)


class MinDephasingOptions(Strict):
    kind: Literal["min_dephasing"]


FitOptions = Annotated[
    Union[FluxFitOptions, FieldFitOptions, DephasingFitOptions, QdFitOptions, CouplingFitOptions,
          MinDephasingOptions],
    Field(discriminator="kind"),
]


class FitConfig(RunOptions):
    fit: FitOptions
    dataset: str | None = None


class TlsFitOptions(Strict):
    enabled: bool = True
    with_one_over_f: bool = False
    fix_fidelity: bool = False


class TlsConfig(RunOptions):
    gamma_up_per_s: float = Field(ge=0)
    gamma_down_per_s: float = Field(ge=0)
    fidelity: float = Field(ge=0, le=1)
    eps0: float | None = Field(default=None, ge=0, le=1)
    eps1: float | None = Field(default=None, ge=0, le=1)
    delta_f_hz: float = Field(default=1.683e6, gt=0)
    tau_wait_s: float = Field(default=297e-9, gt=0)
    dt_s: float = Field(default=400e-6, gt=0)
    t_total_s: float = Field(default=6.6, gt=0)
    n_traces: int = Field(default=200, ge=1)
    segments: int = Field(default=1, ge=1)
    pink_amplitude_hz_per_rthz: float = Field(default=0.0, ge=0)
    fit: TlsFitOptions = TlsFitOptions()


class NoiseConfig(Strict):
    white: float = Field(default=0.0, ge=0)
    one_over_f: float = Field(default=0.0, ge=0)
    sided: Literal["one", "double"] = "one"
    table: str | None = None
    extrapolate: bool = False


class CurveConfig(Strict):
    points: int = Field(default=200, ge=2)
    t_start_s: float | None = Field(default=None, gt=0)
    t_stop_s: float | None = Field(default=None, gt=0)


class DephasingLimitConfig(RunOptions):
    noise: NoiseConfig = NoiseConfig()
    sensitivities: list[float] = Field(min_length=1)
    f01_hz: float = Field(gt=0)
    t_max_s: float = Field(default=1.0, gt=0)
    curve: CurveConfig = CurveConfig()


class ResonatorConfig(Strict):
    f_bare_hz: float = Field(gt=0)
    g_hz: float = Field(ge=0)
    kappa_hz: float = Field(ge=0)


class T1ModelConfig(RunOptions):
    resonator: ResonatorConfig
    q_d: float = Field(gt=0)
    f01_sweep: SweepConfig


COMMAND_CONFIGS = {
    "spectrum": SpectrumConfig,
    "fit": FitConfig,
    "tls": TlsConfig,
    "dephasing-limit": DephasingLimitConfig,
    "t1-model": T1ModelConfig,
    "sensitivity": SensitivityConfig,
}


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def load_config(command: str, path) -> tuple[BaseModel, bytes]:
    """Parse and validate a JSON config; returns the model and the raw bytes."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    try:
        return COMMAND_CONFIGS[command].model_validate(data), raw
    except ValidationError as exc:
        raise ConfigError(f"{path}: {_format_validation(exc)}") from exc


def config_digest(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()
