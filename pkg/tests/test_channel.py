import math

import numpy as np
import pytest
from pydantic import ValidationError

from repeater.channel import (
    ChannelParams,
    GenParams,
    base_slot_time,
    fidelity_from_interaction,
    optimal_failure_probability,
    required_interaction_strength,
    success_probability,
    transmittance,
)
from repeater.errors import ConfigurationError, InvalidParameterError


def test_transmittance_of_twenty_km():
    """20 km of fiber with 25.5 km attenuation length keeps about 45.6% of the signal."""
    assert transmittance(20.0, 25.5) == pytest.approx(math.exp(-20.0 / 25.5), rel=1e-15)
    assert transmittance(20.0, 25.5) == pytest.approx(0.45645, abs=1e-5)


def test_slot_time():
    """A 20 km segment at 2e8 m/s gives a 0.2 ms round trip."""
    assert base_slot_time(20.0, 2e8) == pytest.approx(2e-4)


@pytest.mark.parametrize("total, n", [(20, 0), (40, 1), (320, 4), (1280, 6), (10240, 9)])
def test_nesting_levels(total, n):
    """Total length must be a power-of-two multiple of the segment length."""
    ch = ChannelParams(total_length_km=total, segment_length_km=20)
    assert ch.nesting_levels() == n


@pytest.mark.parametrize("total", [30, 10, 1000])
def test_nesting_levels_rejects_other_lengths(total):
    """Lengths that are not 2^n segments are a configuration error."""
    ch = ChannelParams(total_length_km=total, segment_length_km=20)
    with pytest.raises(ConfigurationError):
        ch.nesting_levels()


def test_channel_params_validation():
    """Negative lengths are refused by the model."""
    with pytest.raises(ValidationError):
        ChannelParams(total_length_km=-1, segment_length_km=20)


def test_interaction_round_trip():
    """The interaction strength recovered from a fidelity reproduces that fidelity."""
    eta = transmittance(20.0, 25.5)
    gen = GenParams(alpha=20.0, theta=0.01)
    F = fidelity_from_interaction(gen, eta)
    assert 0.5 < F < 1.0
    assert required_interaction_strength(F, eta) == pytest.approx(gen.dephasing_exponent, rel=1e-9)


@pytest.mark.parametrize("F", [0.6, 0.8, 0.95])
@pytest.mark.parametrize("eta", [0.1, 0.45645, 0.9])
def test_interaction_and_failure_forms_agree(F, eta):
    """e^{-eta s} with s from the fidelity equals (2F - 1)^{eta/(1-eta)}."""
    s = required_interaction_strength(F, eta)
    assert math.exp(-eta * s) == pytest.approx(optimal_failure_probability(F, eta), rel=1e-12)


@pytest.mark.parametrize("first, second", [(20.0, 20.0), (20.0, 60.0), (5.5, 314.5)])
def test_transmittance_multiplies_over_segments(first, second):
    """Concatenated fibers multiply their transmittances."""
    combined = transmittance(first, 25.5) * transmittance(second, 25.5)
    assert transmittance(first + second, 25.5) == pytest.approx(combined, rel=1e-12)



def test_lossless_channel_gives_unit_fidelity():
    """With eta = 1 there is no dephasing."""
    assert fidelity_from_interaction(GenParams(alpha=5.0, theta=0.3), 1.0) == 1.0


@pytest.mark.parametrize("eta", [1e-6, 0.1, 0.456, 0.9])
def test_success_and_failure_sum_to_one(eta):
    """Success and inconclusive probabilities are complementary."""
    for F in (0.55, 0.8, 0.99):
        total = success_probability(F, eta) + optimal_failure_probability(F, eta)
        assert total == pytest.approx(1.0, abs=1e-14)


def test_success_probability_edges():
    """F = 0.5 always succeeds and F = 1 never does."""
    assert success_probability(0.5, 0.3) == 1.0
    assert success_probability(1.0, 0.3) == 0.0


def test_success_probability_precision_for_tiny_eta():
    """The expm1 form keeps relative precision at long distances."""
    eta = transmittance(320.0, 25.5)
    expected = eta / (1.0 - eta) * -math.log(0.8)
    assert success_probability(0.9, eta) == pytest.approx(expected, rel=1e-5)


@pytest.mark.parametrize("eta", [0.01, 0.3, 0.456, 0.95])
def test_failure_probability_is_monotone_in_fidelity(eta):
    """Asking for a higher fidelity never makes the inconclusive outcome rarer."""
    grid = np.linspace(0.5, 1.0, 501)
    values = np.array([optimal_failure_probability(float(F), eta) for F in grid])
    assert np.all(np.diff(values) >= 0.0)


def test_success_probability_rejects_bad_eta():
    """eta must lie strictly inside (0, 1)."""
    with pytest.raises(InvalidParameterError):
        success_probability(0.9, 1.0)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
