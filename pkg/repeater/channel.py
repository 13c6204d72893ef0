"""Lossy-fiber channel model for qubus-based entanglement generation.

Fidelity is the free parameter. The interaction strength (alpha, theta) only enters
through the dephasing exponent alpha^2 (1 - cos theta), which is recovered from a
fidelity with :func:`required_interaction_strength` when needed.
"""

from typing import Annotated
import math
import logging

from pydantic import BaseModel, ConfigDict, Field

from repeater.errors import (
    ConfigurationError,
    validate_fidelity,
    validate_positive,
    validate_transmittance,
)

logger = logging.getLogger(__name__)

DEFAULT_ATTENUATION_KM = 25.5
DEFAULT_SIGNAL_SPEED_M_PER_S = 2e8

Fidelity = Annotated[float, Field(ge=0.5, le=1.0)]


class ChannelParams(BaseModel):
    """Fiber geometry and timing."""

    model_config = ConfigDict(frozen=True)

    total_length_km: float = Field(..., gt=0, description="End-to-end distance L")
    segment_length_km: float = Field(..., gt=0, description="Elementary segment length L0")
    attenuation_length_km: float = Field(default=DEFAULT_ATTENUATION_KM, gt=0)
    signal_speed_m_per_s: float = Field(default=DEFAULT_SIGNAL_SPEED_M_PER_S, gt=0)

    @property
    def segment_transmittance(self) -> float:
        return transmittance(self.segment_length_km, self.attenuation_length_km)

    @property
    def total_transmittance(self) -> float:
        return transmittance(self.total_length_km, self.attenuation_length_km)

    @property
    def slot_time_s(self) -> float:
        return base_slot_time(self.segment_length_km, self.signal_speed_m_per_s)

    @property
    def direct_slot_time_s(self) -> float:
        return base_slot_time(self.total_length_km, self.signal_speed_m_per_s)

    def nesting_levels(self) -> int:
        """Return n such that L = 2^n * L0, or raise ConfigurationError."""
        ratio = self.total_length_km / self.segment_length_km
        if ratio < 1.0 - 1e-9:
            raise ConfigurationError(
                f"Total length {self.total_length_km} km is shorter than "
                f"segment length {self.segment_length_km} km"
            )
        n = max(0, round(math.log2(ratio)))
        expected = self.segment_length_km * 2**n
        if abs(expected - self.total_length_km) > 1e-9 * self.total_length_km:
            raise ConfigurationError(
                f"Total length {self.total_length_km} km is not "
                f"{self.segment_length_km} km times a power of two"
            )
        return n


class GenParams(BaseModel):
    """Qubus interaction parameters: coherent amplitude alpha and interaction angle theta."""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(..., ge=0)
    theta: float = Field(..., gt=0, le=math.pi)

    @property
    def dephasing_exponent(self) -> float:
        return self.alpha**2 * (1.0 - math.cos(self.theta))

    @property
    def phase(self) -> float:
        # Documentation only: the phase cancels from every fidelity and rate.
        return self.alpha**2 * math.sin(self.theta)


def transmittance(segment_length_km: float, attenuation_length_km: float) -> float:
    """Fiber transmittance e^{-L/L_att}."""
    validate_positive("segment_length_km", segment_length_km)
    validate_positive("attenuation_length_km", attenuation_length_km)
    return math.exp(-segment_length_km / attenuation_length_km)


def base_slot_time(segment_length_km: float, signal_speed: float) -> float:
    """Elementary slot time 2*L0/c in seconds, with L0 given in km."""
    validate_positive("segment_length_km", segment_length_km)
    validate_positive("signal_speed", signal_speed)
    return 2.0 * segment_length_km * 1e3 / signal_speed


def fidelity_from_interaction(gen: GenParams, eta: float) -> float:
    """Pair fidelity (1 + e^{-(1-eta) alpha^2 (1-cos theta)}) / 2."""
    validate_transmittance(eta, allow_one=True)
    return 0.5 * (1.0 + math.exp(-(1.0 - eta) * gen.dephasing_exponent))


def fidelity_for_generation(gen: GenParams, ch: ChannelParams) -> float:
    return fidelity_from_interaction(gen, ch.segment_transmittance)


def required_interaction_strength(F: float, eta: float) -> float:
    """Dephasing exponent alpha^2 (1 - cos theta) that produces fidelity F at eta."""
    validate_fidelity(F, strict_lower=True)
    validate_transmittance(eta)
    return -math.log(2.0 * F - 1.0) / (1.0 - eta)


def optimal_failure_probability(F: float, eta: float) -> float:
    """Inconclusive-outcome probability (2F - 1)^{eta/(1-eta)} of the optimal USD receiver."""
    validate_fidelity(F)
    validate_transmittance(eta)
    return (2.0 * F - 1.0) ** (eta / (1.0 - eta))


def success_probability(F: float, eta: float) -> float:
    """Optimal generation success probability 1 - (2F - 1)^{eta/(1-eta)}."""
    validate_fidelity(F)
    validate_transmittance(eta)
    if F == 0.5:
        return 1.0
    # -expm1 keeps relative precision when eta is tiny
    return -math.expm1(eta / (1.0 - eta) * math.log(2.0 * F - 1.0))


def segment_success_probability(F: float, ch: ChannelParams) -> float:
    return success_probability(F, ch.segment_transmittance)
