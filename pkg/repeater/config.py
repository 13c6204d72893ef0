"""Command-line settings: built-in defaults, an optional JSON config file, then flags."""

from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Type, TypeVar
import json
import logging

from pydantic import BaseModel, ConfigDict, Field

from repeater.channel import DEFAULT_ATTENUATION_KM, DEFAULT_SIGNAL_SPEED_M_PER_S, ChannelParams
from repeater.chain import Placement, Strategy
from repeater.errors import ConfigurationError
from repeater.gates import GateQuality
from repeater.mcsim import DEFAULT_BLOCK_SIZE, Protocol, PurifyVariant, SimConfig
from repeater.waiting import EndPurifyMode

logger = logging.getLogger(__name__)

SettingsT = TypeVar("SettingsT", bound=BaseModel)


class RateSettings(BaseModel):
    """Scenario flags; defaults follow the 1280 km, two-round headline scenario."""

    model_config = ConfigDict(extra="forbid")

    total_km: float = Field(default=1280.0, gt=0)
    segment_km: float = Field(default=20.0, gt=0)
    attenuation_km: float = Field(default=DEFAULT_ATTENUATION_KM, gt=0)
    signal_speed: float = Field(default=DEFAULT_SIGNAL_SPEED_M_PER_S, gt=0)
    fidelity: float = Field(default=0.98, gt=0.5, lt=1.0)
    purif_rounds: int = Field(default=2, ge=0)
    purif_placement: Placement = Placement.FIRST_LEVEL
    rows: int = Field(default=1, ge=1)
    gate_loss: float = Field(default=1e-5, ge=0.0, lt=1.0)
    end_purify_mode: EndPurifyMode = EndPurifyMode.TWO_CHAINS

    def channel(self) -> ChannelParams:
        return ChannelParams(
            total_length_km=self.total_km,
            segment_length_km=self.segment_km,
            attenuation_length_km=self.attenuation_km,
            signal_speed_m_per_s=self.signal_speed,
        )

    def gate_quality(self) -> GateQuality:
        return GateQuality.from_gate_loss(self.gate_loss)

    def strategy(self) -> Strategy:
        return Strategy(
            nesting_levels=self.channel().nesting_levels(),
            purif_rounds=self.purif_rounds,
            purif_placement=self.purif_placement,
            multiplex_rows=self.rows,
            gate_quality=self.gate_quality(),
            end_purify_mode=self.end_purify_mode,
        )


class SweepSettings(RateSettings):
    figure: Optional[int] = None
    f_min: float = Field(default=0.55, gt=0.5, lt=1.0)
    f_max: float = Field(default=0.99, gt=0.5, lt=1.0)
    steps: int = Field(default=50, ge=2)
    workers: int = Field(default=1, ge=1)
    no_progress: bool = False


class McSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    protocol: Protocol = Protocol.PARALLEL
    n: int = Field(default=0, ge=0)
    rows: int = Field(default=1, ge=1)
    p0: float = Field(default=0.5, ge=0.0, le=1.0)
    p1: List[float] = Field(default_factory=lambda: [1.0])
    trials: int = Field(default=100_000, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    variant: PurifyVariant = PurifyVariant.REALISTIC
    workers: int = Field(default=1, ge=1)
    block_size: int = Field(default=DEFAULT_BLOCK_SIZE, ge=1)
    histogram: bool = False

    def sim_config(self) -> SimConfig:
        return SimConfig(
            seed=self.seed,
            trials=self.trials,
            protocol=self.protocol,
            n=self.n,
            rows=self.rows,
            variant=self.variant,
            p0=self.p0,
            p1=tuple(self.p1),
            block_size=self.block_size,
            workers=self.workers,
            keep_histogram=self.histogram,
        )


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    """Read a JSON object of settings; keys use underscores in place of flag dashes."""
    if not path:
        return {}
    try:
        with open(Path(path), "r") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigurationError(f"Config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config file {path} must hold a JSON object")
    logger.info(f"Loaded {len(data)} setting(s) from {path}")
    return data


def resolve_settings(
    model: Type[SettingsT], file_values: Mapping[str, Any], flag_values: Mapping[str, Any]
) -> SettingsT:
    """Merge defaults < file < flags; flags left as None count as not given."""
    merged = dict(file_values)
    fields = model.model_fields
    merged.update({k: v for k, v in flag_values.items() if v is not None and k in fields})
    return model.model_validate(merged)
