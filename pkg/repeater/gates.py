"""Purification and swapping maps for rank-2 Bell-diagonal pairs.

The ideal maps are the textbook two-pair purification and deterministic swap. The lossy
variants model a controlled-phase gate whose bus pulse survives with transmittance T; their
closed forms are kept in the printed sech/sinh/tanh-of-log shape so each factor can be
audited term by term.

The ``*_raw`` kernels accept floats or numpy arrays and skip validation. They are shared
by :mod:`repeater.chain` and :mod:`repeater.mcsim`, so scalar and vectorised propagation
agree bit for bit.
"""

from functools import lru_cache
from typing import Any, NamedTuple, Tuple, TypeVar
import cmath
import math
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from repeater.channel import Fidelity
from repeater.errors import (
    DegenerateGateError,
    DomainExitError,
    InvalidParameterError,
    validate_fidelity,
)

logger = logging.getLogger(__name__)

FloatOrArray = TypeVar("FloatOrArray", float, np.ndarray)


class GateQuality(BaseModel):
    """Local controlled-phase gate quality; T = 1 is the ideal gate."""

    model_config = ConfigDict(frozen=True)

    transmittance: float = Field(default=1.0, gt=0.0, le=1.0, description="Bus-pulse transmittance T")

    @classmethod
    def ideal(cls) -> "GateQuality":
        return cls(transmittance=1.0)

    @classmethod
    def from_gate_loss(cls, gate_loss: float) -> "GateQuality":
        """Build from the local loss 1 - T."""
        if not 0.0 <= gate_loss < 1.0:
            raise InvalidParameterError(f"Gate loss must lie in [0, 1), got {gate_loss!r}")
        return cls(transmittance=1.0 - gate_loss)

    @property
    def gate_loss(self) -> float:
        return 1.0 - self.transmittance

    @property
    def is_ideal(self) -> bool:
        return self.transmittance == 1.0


class PurificationOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    output_fidelity: Fidelity
    success_probability: float = Field(..., gt=0.0, le=1.0)


class LossyGateFactors(NamedTuple):
    """T-dependent factors of the lossy-gate expressions."""

    decay: float  # e^{pi (T-1)/sqrt(T)}
    double_decay: float  # e^{-pi (2-2T)/sqrt(T)}
    conjugate_pair: float  # e^{a(2 - i sech)} + e^{a(2 + i sech)}, a = pi (T-1)/(2 sqrt(T))
    purify_sine: float  # sin(pi (3/2 - 2/(T+1)))
    swap_square: float  # e^{2 pi sinh(log T / 2)}
    swap_cross: float  # e^{pi sinh(log T / 2)}
    swap_cosine: float  # cos(pi/2 tanh(log T / 2))


@lru_cache(maxsize=128)
def lossy_gate_factors(transmittance: float) -> LossyGateFactors:
    """Evaluate the T-only factors once per transmittance."""
    T = transmittance
    root_t = math.sqrt(T)
    half_log = math.log(T) / 2.0

    a = math.pi * (T - 1.0) / (2.0 * root_t)
    sech = 1.0 / math.cosh(half_log)
    lower = cmath.exp(a * complex(2.0, -sech))
    upper = cmath.exp(a * complex(2.0, sech))
    if not cmath.isclose(lower, upper.conjugate(), rel_tol=1e-13, abs_tol=1e-300):
        raise DegenerateGateError(f"Exponential pair is not conjugate at T={T!r}")

    return LossyGateFactors(
        decay=math.exp(math.pi * (T - 1.0) / root_t),
        double_decay=math.exp(-math.pi * (2.0 - 2.0 * T) / root_t),
        conjugate_pair=2.0 * lower.real,
        purify_sine=math.sin(math.pi * (1.5 - 2.0 / (T + 1.0))),
        swap_square=math.exp(2.0 * math.pi * math.sinh(half_log)),
        swap_cross=math.exp(math.pi * math.sinh(half_log)),
        swap_cosine=math.cos(math.pi / 2.0 * math.tanh(half_log)),
    )


def lossy_purification_success(F: Any, transmittance: float) -> Any:
    """Lossy-gate purification success probability, unvalidated."""
    f = lossy_gate_factors(transmittance)
    mixed = 2.0 * (F - 1.0) * F + 1.0
    return 0.5 + f.decay * (F - 1.0) * F + f.conjugate_pair * mixed / 4.0


def lossy_purification_output(F: Any, success: Any, transmittance: float) -> Any:
    """Lossy-gate purified fidelity given the success probability, unvalidated."""
    f = lossy_gate_factors(transmittance)
    head = (F + F * f.double_decay) / (4.0 * success)
    tail = 2.0 * F * f.decay * (f.purify_sine * F + F - 1.0) / (4.0 * success)
    return head + tail


def lossy_swap_output(F: Any, transmittance: float) -> Any:
    """Lossy-gate swapped fidelity, unvalidated."""
    f = lossy_gate_factors(transmittance)
    spread = 1.0 - 2.0 * F
    mixed = 2.0 * (F - 1.0) * F + 1.0
    return (
        0.25
        + 0.25 * f.swap_square * (spread * spread)
        + (f.swap_cross / 2.0) * mixed * f.swap_cosine
    )


def purify_raw(F: FloatOrArray, gq: GateQuality) -> Tuple[FloatOrArray, FloatOrArray]:
    """Return (output_fidelity, success_probability), lossy iff T < 1, unvalidated."""
    if gq.is_ideal:
        success = F * F + (1.0 - F) * (1.0 - F)
        return F * F / success, success
    success = lossy_purification_success(F, gq.transmittance)
    return lossy_purification_output(F, success, gq.transmittance), success


def swap_raw(F: FloatOrArray, gq: GateQuality) -> FloatOrArray:
    """Swapped-pair fidelity, lossy iff T < 1, unvalidated."""
    if gq.is_ideal:
        return F * F + (1.0 - F) * (1.0 - F)
    return lossy_swap_output(F, gq.transmittance)


def purify_ideal(F: float) -> PurificationOutcome:
    """Two-pair purification with perfect local gates."""
    validate_fidelity(F)
    output, success = purify_raw(F, GateQuality.ideal())
    return PurificationOutcome(output_fidelity=output, success_probability=success)


def swap_ideal(F: float) -> float:
    """Deterministic entanglement swap of two pairs of fidelity F."""
    validate_fidelity(F)
    return swap_raw(F, GateQuality.ideal())


def purify_imperfect(F: float, gq: GateQuality) -> PurificationOutcome:
    """Two-pair purification with lossy controlled-phase gates.

    Evaluated through the lossy expressions even at T = 1, where they reduce to
    :func:`purify_ideal`.
    """
    validate_fidelity(F)
    success = lossy_purification_success(F, gq.transmittance)
    if success <= 0.0:
        raise DegenerateGateError(
            f"Purification success probability {success:.6g} is not positive "
            f"at F={F!r}, T={gq.transmittance!r}"
        )
    output = lossy_purification_output(F, success, gq.transmittance)
    if output < 0.5:
        raise DomainExitError(output, "purification")
    return PurificationOutcome(
        output_fidelity=min(output, 1.0), success_probability=min(success, 1.0)
    )


def swap_imperfect(F: float, gq: GateQuality) -> float:
    """Entanglement swap with lossy controlled-phase gates; still deterministic."""
    validate_fidelity(F)
    output = lossy_swap_output(F, gq.transmittance)
    if output < 0.5:
        raise DomainExitError(output, "swap")
    return min(output, 1.0)


def purify(F: float, gq: GateQuality) -> PurificationOutcome:
    """Purification map, lossy iff T < 1."""
    return purify_ideal(F) if gq.is_ideal else purify_imperfect(F, gq)


def swap(F: float, gq: GateQuality) -> float:
    return swap_ideal(F) if gq.is_ideal else swap_imperfect(F, gq)
