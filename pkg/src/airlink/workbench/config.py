"""Scenario configuration schema.

A scenario is a JSON document validated by the pydantic models below. The
canonical serialization (:func:`dump_config`) is what ``presets emit``
writes and what the run hash is computed over, so emit -> parse -> emit is
byte stable.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Literal, Optional

import pydantic
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..channel import Scatterer, ScattererScene, Tap, TapSet, scene_to_taps
from ..errors import ValidationError

SCHEMA_VERSION = "airlink.scenario/1"

System = Literal["wcdma_rake", "wifi_adapteq", "wimax_ofdm", "channel_analysis"]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ScattererModel(_Model):
    pos: tuple[float, float]
    reflectivity: tuple[float, float] = (1.0, 0.0)


class SceneModel(_Model):
    tx_pos: tuple[float, float]
    rx_pos: tuple[float, float]
    scatterers: list[ScattererModel] = []
    los_blocked: bool = False
    rx_velocity: float = 0.0
    carrier_freq: float = Field(2.4e9, gt=0)
    path_loss_exponent: float = 1.0

    def build(self) -> ScattererScene:
        return ScattererScene(
            tuple(self.tx_pos), tuple(self.rx_pos),
            tuple(Scatterer(tuple(s.pos), complex(*s.reflectivity)) for s in self.scatterers),
            self.los_blocked, self.rx_velocity, self.carrier_freq, self.path_loss_exponent,
        )


class TapModel(_Model):
    delay_s: float = Field(ge=0)
    gain: tuple[float, float] = (1.0, 0.0)
    doppler_hz: float = 0.0
    label: Optional[str] = None


class DopplerModel(_Model):
    enabled: bool = False
    shift_hz: float = 0.0


class RakeModel(_Model):
    chip_rate: float = Field(3.84e6, gt=0)
    spreading_factor: int = Field(16, ge=1)
    code_degree: int = Field(9, ge=2, le=11)
    code_seed: int = Field(1, ge=1)
    n_fingers: int = Field(4, ge=1)
    max_delay_chips: int = Field(32, ge=0)
    threshold_factor: float = Field(0.5, ge=0, le=1)
    floor_factor: float = Field(4.0, ge=0)
    n_pilot: int = Field(64, ge=1)
    n_data_symbols: int = Field(2000, ge=1)
    finger_kind: Literal["conventional", "mmse"] = "conventional"
    tx_magnitudes_db: Optional[list[float]] = None


class OfdmModel(_Model):
    preset: Optional[Literal["wifi", "wimax"]] = "wimax"
    n_fft: Optional[int] = None
    cp_len: Optional[int] = None
    used_half_width: Optional[int] = None
    sample_rate: Optional[float] = None
    n_symbols: int = Field(20, ge=1)
    n_train: int = Field(4, ge=0)
    estimator: Literal["ls", "lms", "known"] = "ls"
    mu: float = Field(0.5, ge=0)
    track: bool = False
    track_mu: float = Field(0.1, ge=0)
    timing_offset: int = Field(0, ge=0)


class EqualizerModel(_Model):
    sample_rate: float = Field(20e6, gt=0)
    n_taps: int = Field(11, ge=1)
    delay: int = Field(5, ge=0)
    mu: float = Field(0.01, ge=0)
    n_train: int = Field(2000, ge=1)
    n_data: int = Field(4000, ge=1)


class AnalysisModel(_Model):
    bandwidth: float = Field(5e6, gt=0)
    fs: float = Field(40e6, gt=0)
    span_s: float = Field(1e-6, gt=0)
    separations_ns: Optional[list[float]] = None
    target_broadening_pct: Optional[float] = None
    offsets_m: Optional[list[float]] = None


class ScenarioConfig(_Model):
    schema_version: Literal["airlink.scenario/1"] = SCHEMA_VERSION
    name: str = Field(min_length=1)
    description: str = ""
    system: System
    seed: int = Field(ge=0, lt=2**64)
    scene: Optional[SceneModel] = None
    taps: Optional[list[TapModel]] = None
    normalize_taps: bool = True
    modulation: Literal["BPSK", "QPSK", "QAM16"] = "QPSK"
    snr_db: list[Optional[float]] = [20.0]
    doppler: DopplerModel = DopplerModel()
    rake: Optional[RakeModel] = None
    ofdm: Optional[OfdmModel] = None
    equalizer: Optional[EqualizerModel] = None
    analysis: Optional[AnalysisModel] = None
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        problems = []
        if (self.scene is None) == (self.taps is None):
            problems.append("exactly one of 'scene' or 'taps' must be given")
        if self.taps is not None and not self.taps:
            problems.append("taps: at least one tap is required")
        if not self.snr_db:
            problems.append("snr_db: at least one SNR point is required")
        if any(s is not None and not math.isfinite(s) for s in self.snr_db):
            problems.append("snr_db: use null for a noiseless point, not a non-finite number")
        if self.equalizer is not None and self.equalizer.delay >= self.equalizer.n_taps:
            problems.append("equalizer.delay: must be smaller than equalizer.n_taps")
        if self.scene is not None:
            try:
                self.scene.build()
            except ValueError as exc:
                problems.append(f"scene: {exc}")
        if self.ofdm is not None:
            from .chains import ofdm_params
            try:
                ofdm_params(self)
            except ValueError as exc:
                problems.append(f"ofdm: {exc}")
            else:
                if self.ofdm.timing_offset > ofdm_params(self).cp_len:
                    problems.append("ofdm.timing_offset: larger than the cyclic prefix")
        if problems:
            raise ValueError("; ".join(problems))
        if self.system == "wcdma_rake" and self.rake is None:
            self.rake = RakeModel()
        if self.system == "wimax_ofdm" and self.ofdm is None:
            self.ofdm = OfdmModel()
        if self.system == "wifi_adapteq" and self.equalizer is None:
            self.equalizer = EqualizerModel()
        if self.system == "channel_analysis" and self.analysis is None:
            self.analysis = AnalysisModel()
        return self

    def tapset(self) -> TapSet:
        """Channel taps, delays relative to the first arrival."""
        if self.scene is not None:
            taps = scene_to_taps(self.scene.build())
        else:
            taps = TapSet(tuple(Tap(t.delay_s, complex(*t.gain), t.doppler_hz) for t in self.taps))
        taps = taps.relative()
        if self.normalize_taps:
            taps = taps.normalize()
        if not self.doppler.enabled:
            taps = taps.without_doppler()
        return taps

    def channel_key(self) -> str:
        return json.dumps({"scene": None if self.scene is None else self.scene.model_dump(mode="json"),
                           "taps": None if self.taps is None else [t.model_dump(mode="json") for t in self.taps]},
                          sort_keys=True)


def _format_errors(exc: pydantic.ValidationError) -> list[str]:
    out = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        msg = err["msg"].removeprefix("Value error, ")
        for part in msg.split("; "):
            out.append(f"{loc}: {part}" if loc else part)
    return out


def parse_config(data) -> ScenarioConfig:
    """Validate a dict or JSON string; raises :class:`ValidationError` listing every problem."""
    try:
        if isinstance(data, (str, bytes)):
            return ScenarioConfig.model_validate_json(data)
        return ScenarioConfig.model_validate(data)
    except pydantic.ValidationError as exc:
        raise ValidationError(_format_errors(exc)) from None


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError([f"{path}: cannot read config ({exc.strerror or exc})"]) from None
    return parse_config(text)


def dump_config(config: ScenarioConfig) -> str:
    """Canonical JSON text for a config (sorted keys, two-space indent)."""
    return json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def config_hash(config: ScenarioConfig) -> str:
    return hashlib.sha256(dump_config(config).encode()).hexdigest()
