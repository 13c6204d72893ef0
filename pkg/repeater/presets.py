"""Rate-vs-fidelity curves, sweep descriptions and the figure presets."""

from enum import Enum
from typing import Annotated, Any, Dict, List, Literal, Optional, Sequence, Union
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from repeater.channel import ChannelParams, success_probability
from repeater.chain import (
    Placement,
    Strategy,
    direct_transmission_rate,
    invert_fidelity,
    fidelity_trace,
    relay_rate,
    scenario_rate,
)
from repeater.errors import (
    ConfigurationError,
    ConvergenceError,
    DegenerateGateError,
    DomainExitError,
    UnreachableTargetError,
)
from repeater.gates import GateQuality
from repeater.waiting import (
    EndPurifyMode,
    purification_time_bounds,
    rate_parallel_approx,
    z_parallel_rows,
)

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["strategy_label", "f_final", "f_initial", "p0", "effective_p", "rate_hz", "status"]


class RowStatus(str, Enum):
    OK = "ok"
    UNREACHABLE = "unreachable"
    DOMAIN_EXIT = "domain_exit"
    NO_CONVERGENCE = "no_convergence"
    DEGENERATE_GATE = "degenerate_gate"


class CsvRow(BaseModel):
    strategy_label: str
    f_final: float
    f_initial: Optional[float] = None
    p0: Optional[float] = None
    effective_p: Optional[float] = None
    rate_hz: Optional[float] = None
    status: RowStatus = RowStatus.OK


class CurveBase(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: str
    channel: ChannelParams

    def rate_row(self, f_final: float) -> CsvRow:
        raise NotImplementedError

    def evaluate(self, f_final: float) -> CsvRow:
        """Row for one target fidelity; points the model cannot evaluate become status rows."""
        try:
            return self.rate_row(f_final)
        except UnreachableTargetError:
            status = RowStatus.UNREACHABLE
        except DomainExitError:
            status = RowStatus.DOMAIN_EXIT
        except ConvergenceError as e:
            logger.warning(f"{self.label} at F={f_final:.6f}: {e}")
            status = RowStatus.NO_CONVERGENCE
        except DegenerateGateError as e:
            logger.warning(f"{self.label} at F={f_final:.6f}: {e}")
            status = RowStatus.DEGENERATE_GATE
        return CsvRow(strategy_label=self.label, f_final=f_final, status=status)


class ScenarioCurve(CurveBase):
    kind: Literal["scenario"] = "scenario"
    strategy: Strategy

    def rate_row(self, f_final: float) -> CsvRow:
        result = scenario_rate(f_final, self.strategy, self.channel)
        return CsvRow(
            strategy_label=self.label,
            f_final=f_final,
            f_initial=result.initial_fidelity,
            p0=result.p0,
            effective_p=result.effective_p,
            rate_hz=result.rate_hz,
        )


class ApproxCurve(CurveBase):
    """Parallel scheme under the (2/3)^n approximation."""

    kind: Literal["approx"] = "approx"
    gate_quality: GateQuality = GateQuality()

    def rate_row(self, f_final: float) -> CsvRow:
        n = self.channel.nesting_levels()
        F0 = invert_fidelity(f_final, Strategy(nesting_levels=n, gate_quality=self.gate_quality))
        p0 = success_probability(F0, self.channel.segment_transmittance)
        return CsvRow(
            strategy_label=self.label,
            f_final=f_final,
            f_initial=F0,
            p0=p0,
            effective_p=p0,
            rate_hz=rate_parallel_approx(n, p0, self.channel.slot_time_s),
        )


class BoundCurve(CurveBase):
    """One member of the purification timing bounds, one round at the first level."""

    kind: Literal["bound"] = "bound"
    which: Literal["lower", "approx", "upper"]
    gate_quality: GateQuality = GateQuality()

    def rate_row(self, f_final: float) -> CsvRow:
        n = self.channel.nesting_levels()
        s = Strategy(nesting_levels=n, purif_rounds=1, gate_quality=self.gate_quality)
        F0 = invert_fidelity(f_final, s)
        p1 = fidelity_trace(F0, s).purification_probs[0]
        p0 = success_probability(F0, self.channel.segment_transmittance)
        bounds = purification_time_bounds(n, p0, p1, self.channel.slot_time_s)
        seconds = {"lower": bounds.lower_s, "approx": bounds.approx_s, "upper": bounds.upper_s}
        return CsvRow(
            strategy_label=self.label,
            f_final=f_final,
            f_initial=F0,
            p0=p0,
            effective_p=None,
            rate_hz=1.0 / seconds[self.which],
        )


class ParallelRowsCurve(CurveBase):
    """r independent two-segment rows; pairs connect only within a row."""

    kind: Literal["parallel_rows"] = "parallel_rows"
    rows: int = Field(..., ge=1)
    gate_quality: GateQuality = GateQuality()

    def rate_row(self, f_final: float) -> CsvRow:
        F0 = invert_fidelity(f_final, Strategy(nesting_levels=1, gate_quality=self.gate_quality))
        p0 = success_probability(F0, self.channel.segment_transmittance)
        steps = z_parallel_rows(self.rows, 1.0 - p0)
        return CsvRow(
            strategy_label=self.label,
            f_final=f_final,
            f_initial=F0,
            p0=p0,
            effective_p=None,
            rate_hz=1.0 / (self.channel.slot_time_s * steps),
        )


class DirectCurve(CurveBase):
    """Point-to-point transmission over the full channel length."""

    kind: Literal["direct"] = "direct"
    with_one_purification: bool = False
    gate_quality: GateQuality = GateQuality()

    def rate_row(self, f_final: float) -> CsvRow:
        rate = direct_transmission_rate(
            f_final,
            self.channel.total_length_km,
            self.with_one_purification,
            self.channel,
            self.gate_quality,
        )
        return CsvRow(strategy_label=self.label, f_final=f_final, rate_hz=rate)


class RelayCurve(CurveBase):
    kind: Literal["relay"] = "relay"

    def rate_row(self, f_final: float) -> CsvRow:
        n = self.channel.nesting_levels()
        return CsvRow(
            strategy_label=self.label, f_final=f_final, rate_hz=relay_rate(f_final, n, self.channel)
        )


Curve = Annotated[
    Union[ScenarioCurve, ApproxCurve, BoundCurve, ParallelRowsCurve, DirectCurve, RelayCurve],
    Field(discriminator="kind"),
]


class SweepSpec(BaseModel):
    f_final_min: float = Field(..., gt=0.5, lt=1.0)
    f_final_max: float = Field(..., gt=0.5, lt=1.0)
    steps: int = Field(..., ge=2)
    curves: List[Curve] = Field(..., min_length=1)
    figure: Optional[int] = None

    @model_validator(mode="after")
    def _check_range(self) -> "SweepSpec":
        if not self.f_final_min < self.f_final_max:
            raise ValueError("f_final_min must be below f_final_max")
        return self

    @classmethod
    def from_strategies(
        cls,
        strategies: Sequence[Strategy],
        channel: ChannelParams,
        f_final_min: float,
        f_final_max: float,
        steps: int,
    ) -> "SweepSpec":
        curves = [ScenarioCurve(label=s.label, channel=channel, strategy=s) for s in strategies]
        return cls(f_final_min=f_final_min, f_final_max=f_final_max, steps=steps, curves=curves)

    def fidelities(self) -> List[float]:
        return [float(f) for f in np.linspace(self.f_final_min, self.f_final_max, self.steps)]

    def describe(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def find_crossover(a: CurveBase, b: CurveBase, fidelities: Sequence[float]) -> Optional[float]:
    """First fidelity on the grid where the sign of rate_a - rate_b flips."""
    previous: Optional[float] = None
    for f in fidelities:
        ra, rb = a.evaluate(f).rate_hz, b.evaluate(f).rate_hz
        if ra is None or rb is None:
            previous = None
            continue
        diff = ra - rb
        if previous is not None and diff != 0.0 and (diff > 0.0) != (previous > 0.0):
            return f
        if diff != 0.0:
            previous = diff
    return None


def _channel(total_km: float, segment_km: float = 20.0) -> ChannelParams:
    return ChannelParams(total_length_km=total_km, segment_length_km=segment_km)


def _scenario(
    label: str, total_km: float, gate: GateQuality, segment_km: float = 20.0, **strategy: Any
) -> ScenarioCurve:
    ch = _channel(total_km, segment_km)
    s = Strategy(nesting_levels=ch.nesting_levels(), gate_quality=gate, **strategy)
    return ScenarioCurve(label=label, channel=ch, strategy=s)


def figure_preset(figure: int, gate: GateQuality, steps: int = 50) -> SweepSpec:
    """Curves of one rate-vs-fidelity figure."""
    curves: List[CurveBase]
    f_min, f_max = 0.55, 0.99

    if figure == 2:
        ch = _channel(1280)
        curves = [
            _scenario("exact", 1280, gate),
            ApproxCurve(label="approximation", channel=ch, gate_quality=gate),
        ]
    elif figure == 4:
        curves = [
            ParallelRowsCurve(label="parallel-r4", channel=_channel(40), rows=4, gate_quality=gate),
            _scenario("multiplexed-r4", 40, gate, multiplex_rows=4),
        ]
    elif figure == 5:
        ch = _channel(1280)
        curves = [
            BoundCurve(label=f"{which}-bound", channel=ch, which=which, gate_quality=gate)
            for which in ("lower", "approx", "upper")
        ]
    elif figure == 6:
        curves = [
            _scenario(f"L{L}-k{k}", L, gate, purif_rounds=k)
            for L in (320, 640, 1280)
            for k in (1, 2, 3)
        ]
    elif figure == 7:
        curves = []
        for L in (40, 640, 1280):
            curves.append(_scenario(f"L{L}-purification", L, gate, purif_rounds=1))
            curves.append(_scenario(f"L{L}-multiplexed-r2", L, gate, multiplex_rows=2))
        curves += [
            _scenario(f"L1280-multiplexed-r{r}", 1280, gate, multiplex_rows=r) for r in (16, 32)
        ]
    elif figure == 8:
        curves = []
        for L in (80, 160, 320):
            ch = _channel(L)
            curves += [
                DirectCurve(label=f"L{L}-direct", channel=ch),
                DirectCurve(label=f"L{L}-direct-purified", channel=ch, with_one_purification=True),
                RelayCurve(label=f"L{L}-relay", channel=ch),
                _scenario(f"L{L}-repeater-k0", L, gate),
                _scenario(f"L{L}-repeater-k1", L, gate, purif_rounds=1),
            ]
    elif figure == 9:
        curves = [_scenario(f"L{L}-k2", L, gate, purif_rounds=2) for L in (1280, 2560, 5120, 10240)]
    elif figure == 10:
        curves = [
            _scenario(f"loss{loss:g}-k2", 1280, GateQuality.from_gate_loss(loss), purif_rounds=2)
            for loss in (0.0, 1e-5, 1e-4, 1e-3)
        ]
    elif figure == 11:
        curves = [_scenario("purify-first", 1280, gate, purif_rounds=1)]
        curves += [
            _scenario(
                f"purify-last-{mode.value}",
                1280,
                gate,
                purif_rounds=1,
                purif_placement=Placement.LAST_LEVEL,
                end_purify_mode=mode,
            )
            for mode in EndPurifyMode
        ]
    else:
        raise ConfigurationError(f"No preset for figure {figure}; choose one of {sorted(FIGURES)}")

    return SweepSpec(
        f_final_min=f_min, f_final_max=f_max, steps=steps, curves=curves, figure=figure
    )


FIGURES = (2, 4, 5, 6, 7, 8, 9, 10, 11)
