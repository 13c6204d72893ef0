"""Strategy composition: fidelity propagation, inversion and end-to-end rates."""

from enum import Enum
from functools import lru_cache
from typing import Any, List, NamedTuple, Tuple
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import optimize

from repeater.channel import (
    ChannelParams,
    Fidelity,
    base_slot_time,
    success_probability,
    transmittance,
)
from repeater.errors import (
    ConfigurationError,
    ConvergenceError,
    DegenerateGateError,
    DomainExitError,
    UnreachableTargetError,
    validate_count,
    validate_fidelity,
    validate_positive,
    validate_target_fidelity,
)
from repeater.gates import GateQuality, purify_raw, swap_raw
from repeater.waiting import (
    EndPurifyMode,
    SuccessProb,
    effective_p_for_steps,
    effective_p_multi_round,
    effective_p_multiplexed,
    effective_p_purified,
    rate_parallel,
    rate_purified,
    rate_purify_at_end,
    z_multiplexed,
)

logger = logging.getLogger(__name__)

INVERSION_TOLERANCE = 1e-10
GRID_POINTS = 1001


class Placement(str, Enum):
    FIRST_LEVEL = "first_level"
    LAST_LEVEL = "last_level"


class Strategy(BaseModel):
    """Nesting depth, purification rounds and placement, multiplexing width, gate quality."""

    model_config = ConfigDict(frozen=True)

    nesting_levels: int = Field(..., ge=0, description="Swap levels; 2^n segments")
    purif_rounds: int = Field(default=0, ge=0)
    purif_placement: Placement = Placement.FIRST_LEVEL
    multiplex_rows: int = Field(default=1, ge=1, description="1 = parallel scheme")
    gate_quality: GateQuality = Field(default_factory=GateQuality.ideal)
    end_purify_mode: EndPurifyMode = EndPurifyMode.TWO_CHAINS

    @model_validator(mode="after")
    def _check_combination(self) -> "Strategy":
        if self.purif_placement is Placement.LAST_LEVEL:
            if self.purif_rounds != 1:
                raise ValueError("last_level placement takes exactly one purification round")
            if self.nesting_levels < 1:
                raise ValueError("last_level placement needs at least one swap level")
            if self.multiplex_rows != 1:
                raise ValueError("last_level placement is defined for the parallel scheme only")
        if self.multiplex_rows > 1 and self.purif_rounds > 0:
            raise ValueError("multiplexing is only modelled without purification")
        return self

    @property
    def uses_lossy_gates(self) -> bool:
        return not self.gate_quality.is_ideal

    @property
    def label(self) -> str:
        parts = [f"n{self.nesting_levels}", f"k{self.purif_rounds}"]
        if self.purif_rounds:
            parts.append(self.purif_placement.value)
        if self.purif_placement is Placement.LAST_LEVEL:
            parts.append(self.end_purify_mode.value)
        if self.multiplex_rows > 1:
            parts.append(f"r{self.multiplex_rows}")
        parts.append(f"loss{self.gate_quality.gate_loss:g}")
        return "-".join(parts)


class FidelityStep(NamedTuple):
    stage: str
    level: int
    fidelity: float


class FidelityTrace(NamedTuple):
    steps: List[FidelityStep]
    purification_inputs: List[float]
    purification_probs: List[float]
    final: float


class ScenarioResult(BaseModel):
    strategy_label: str
    nesting_levels: int
    initial_fidelity: Fidelity
    final_fidelity: Fidelity
    p0: SuccessProb
    p1_per_round: List[float]
    effective_p: SuccessProb
    rate_hz: float = Field(..., ge=0.0)
    waiting_time_s: float = Field(..., gt=0.0)
    slot_time_s: float
    notes: List[str] = Field(default_factory=list)


def _compose_raw(F0: Any, s: Strategy) -> Any:
    """Composed map on floats or arrays, no domain checks."""
    F = F0
    gq = s.gate_quality
    if s.purif_placement is Placement.FIRST_LEVEL:
        for _ in range(s.purif_rounds):
            F, _success = purify_raw(F, gq)
        for _ in range(s.nesting_levels):
            F = swap_raw(F, gq)
    else:
        for _ in range(s.nesting_levels):
            F = swap_raw(F, gq)
        F, _success = purify_raw(F, gq)
    return F


def fidelity_trace(F0: float, s: Strategy) -> FidelityTrace:
    """Every intermediate fidelity plus the success probability of each purification."""
    validate_fidelity(F0, strict_lower=True)
    gq = s.gate_quality
    F = float(F0)
    steps: List[FidelityStep] = []
    inputs: List[float] = []
    probs: List[float] = []

    def purification(level: int) -> None:
        nonlocal F
        inputs.append(F)
        F, success = purify_raw(F, gq)
        if success <= 0.0:
            raise DegenerateGateError(
                f"Purification success probability {success:.6g} at round {level}"
            )
        probs.append(min(success, 1.0))
        record("purification", level)

    def swap(level: int) -> None:
        nonlocal F
        F = swap_raw(F, gq)
        record("swap", level)

    def record(stage: str, level: int) -> None:
        if F < 0.5:
            raise DomainExitError(F, stage, level)
        steps.append(FidelityStep(stage, level, F))

    if s.purif_placement is Placement.FIRST_LEVEL:
        for k in range(1, s.purif_rounds + 1):
            purification(k)
        for level in range(1, s.nesting_levels + 1):
            swap(level)
    else:
        for level in range(1, s.nesting_levels + 1):
            swap(level)
        purification(1)

    return FidelityTrace(steps, inputs, probs, min(F, 1.0))


def final_fidelity(F0: float, s: Strategy) -> float:
    """End-to-end fidelity for an elementary-pair fidelity F0."""
    return fidelity_trace(F0, s).final


@lru_cache(maxsize=256)
def _grid_profile(s: Strategy) -> Tuple[np.ndarray, np.ndarray, bool]:
    grid = np.linspace(0.5, 1.0, GRID_POINTS)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = _compose_raw(grid, s)
    values = np.where(np.isfinite(values), values, -np.inf)
    # outputs below 0.5 left the domain; only the rest must be monotone
    in_domain = values >= 0.5
    monotone = bool(np.all(np.diff(values[in_domain]) >= 0.0))
    if not monotone:
        peak = int(np.argmax(values))
        logger.warning(
            f"{s.label}: composed map not monotone, peak {values[peak]:.6f} at F0={grid[peak]:.6f}"
        )
    grid.setflags(write=False)
    values.setflags(write=False)
    return grid, values, monotone


def invert_fidelity(F_target: float, s: Strategy) -> float:
    """Elementary-pair fidelity F0 whose composed image is F_target."""
    validate_target_fidelity(F_target)

    if not s.uses_lossy_gates:
        lo, hi = 0.5, 1.0
    else:
        grid, values, monotone = _grid_profile(s)
        peak = float(values.max())
        if peak <= F_target:
            raise UnreachableTargetError(F_target, peak)
        idx = int(np.argmax(values >= F_target))
        if idx == 0:
            return float(grid[0])
        lo, hi = float(grid[idx - 1]), float(grid[idx])
        logger.debug(
            f"{s.label}: bisecting in [{lo:.6f}, {hi:.6f}] (monotone on grid: {monotone})"
        )

    def residual(F0: float) -> float:
        return float(_compose_raw(F0, s)) - F_target

    if residual(hi) == 0.0:
        root = hi
    else:
        root = float(optimize.bisect(residual, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200))

    reached = final_fidelity(root, s)
    if abs(reached - F_target) >= INVERSION_TOLERANCE:
        raise ConvergenceError(
            f"Inversion residual {abs(reached - F_target):.3g} for target {F_target!r} ({s.label})"
        )
    return root


def scenario_rate(F_target: float, s: Strategy, ch: ChannelParams) -> ScenarioResult:
    """Rate of delivering pairs of final fidelity F_target over the channel."""
    n = ch.nesting_levels()
    if n != s.nesting_levels:
        raise ConfigurationError(
            f"Channel spans {n} nesting levels but strategy has {s.nesting_levels}"
        )
    T0 = ch.slot_time_s
    F0 = invert_fidelity(F_target, s)
    trace = fidelity_trace(F0, s)
    p0 = success_probability(F0, ch.segment_transmittance)
    if p0 <= 0.0:
        raise UnreachableTargetError(F_target, trace.final)
    notes: List[str] = []

    if s.purif_placement is Placement.LAST_LEVEL:
        p1 = trace.purification_probs[-1]
        rate = rate_purify_at_end(n, p0, p1, T0, s.end_purify_mode)
        effective = effective_p_for_steps(n, 1.0 / (T0 * rate))
        notes.append(f"purification after the last swap level ({s.end_purify_mode.value})")
    elif s.purif_rounds > 0:
        effective = effective_p_multi_round(p0, trace.purification_probs)
        rate = rate_purified(n, effective, T0)
        if n > 0 or s.purif_rounds > 1:
            notes.append("effective-probability approximation for purification timing")
    elif s.multiplex_rows > 1:
        r = s.multiplex_rows
        q = 1.0 - p0
        if n == 0:
            effective = 1.0 - q**r
            rate = rate_parallel(0, effective, T0)
        elif n == 1:
            effective = effective_p_multiplexed(r, p0)
            rate = 1.0 / (T0 * z_multiplexed(r, q))
        else:
            effective = effective_p_multiplexed(r, p0)
            rate = rate_purified(n, effective, T0)
            notes.append("effective-probability approximation for multiplexing beyond one level")
    else:
        effective = p0
        rate = rate_parallel(n, p0, T0)

    return ScenarioResult(
        strategy_label=s.label,
        nesting_levels=n,
        initial_fidelity=F0,
        final_fidelity=trace.final,
        p0=p0,
        p1_per_round=trace.purification_probs,
        effective_p=effective,
        rate_hz=rate,
        waiting_time_s=1.0 / rate,
        slot_time_s=T0,
        notes=notes,
    )


def direct_transmission_rate(
    F_target: float,
    L: float,
    with_one_purification: bool,
    ch: ChannelParams,
    gate_quality: GateQuality = GateQuality(),
) -> float:
    """Memoryless point-to-point rate over the full distance L (km).

    With purification, two pairs are generated over L and purified once; the
    single-segment generate-and-purify time is applied over the full distance.
    """
    validate_target_fidelity(F_target)
    validate_positive("L", L)
    eta = transmittance(L, ch.attenuation_length_km)
    slot = base_slot_time(L, ch.signal_speed_m_per_s)
    if not with_one_purification:
        return success_probability(F_target, eta) / slot

    s = Strategy(nesting_levels=0, purif_rounds=1, gate_quality=gate_quality)
    F0 = invert_fidelity(F_target, s)
    p1 = fidelity_trace(F0, s).purification_probs[0]
    p0 = success_probability(F0, eta)
    if p0 <= 0.0:
        return 0.0
    return effective_p_purified(p0, p1) / slot


def relay_rate(
    F_target: float,
    n: int,
    ch: ChannelParams,
    gate_quality: GateQuality = GateQuality(),
) -> float:
    """Quantum relay over 2^n segments of ch.segment_length_km: all must succeed in one slot."""
    validate_count("n", n, minimum=1)
    s = Strategy(nesting_levels=n, gate_quality=gate_quality)
    F0 = invert_fidelity(F_target, s)
    p0 = success_probability(F0, ch.segment_transmittance)
    return p0 ** (2**n) / ch.slot_time_s
