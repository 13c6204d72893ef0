import math

import numpy as np
import pytest

from repeater.errors import DomainExitError, InvalidParameterError
from repeater.gates import (
    GateQuality,
    lossy_gate_factors,
    purify,
    purify_ideal,
    purify_imperfect,
    purify_raw,
    swap,
    swap_ideal,
    swap_imperfect,
    swap_raw,
)

FIDELITY_GRID = np.linspace(0.5, 1.0, 100)


def test_ideal_purification_values():
    """Two F = 0.9 pairs purify to 0.81/0.82 with probability 0.82."""
    outcome = purify_ideal(0.9)
    assert outcome.success_probability == pytest.approx(0.82)
    assert outcome.output_fidelity == pytest.approx(0.81 / 0.82)


def test_ideal_swap_value():
    """Swapping two F = 0.9 pairs gives F^2 + (1-F)^2."""
    assert swap_ideal(0.9) == pytest.approx(0.82)


def test_ideal_maps_fix_endpoints():
    """F = 1 stays pure and F = 0.5 stays maximally mixed."""
    assert purify_ideal(1.0).output_fidelity == 1.0
    assert swap_ideal(1.0) == 1.0
    assert purify_ideal(0.5).output_fidelity == pytest.approx(0.5)
    assert swap_ideal(0.5) == pytest.approx(0.5)


@pytest.mark.parametrize("F", FIDELITY_GRID)
def test_lossy_maps_reduce_to_ideal_at_unit_transmittance(F):
    """At T = 1 the lossy expressions equal the ideal maps."""
    ideal = GateQuality.ideal()
    lossy = purify_imperfect(float(F), ideal)
    exact = purify_ideal(float(F))
    assert lossy.output_fidelity == pytest.approx(exact.output_fidelity, abs=1e-12)
    assert lossy.success_probability == pytest.approx(exact.success_probability, abs=1e-12)
    assert swap_imperfect(float(F), ideal) == pytest.approx(swap_ideal(float(F)), abs=1e-12)


def _max_deviation_from_ideal(gq: GateQuality) -> float:
    ideal = GateQuality.ideal()
    lossy_out, lossy_p = purify_raw(FIDELITY_GRID, gq)
    ideal_out, ideal_p = purify_raw(FIDELITY_GRID, ideal)
    swapped = np.abs(swap_raw(FIDELITY_GRID, gq) - swap_raw(FIDELITY_GRID, ideal))
    purified = max(np.abs(lossy_out - ideal_out).max(), np.abs(lossy_p - ideal_p).max())
    return float(max(purified, swapped.max()))


def test_lossy_maps_approach_ideal_as_loss_vanishes():
    """The gap to the ideal maps shrinks linearly with the gate loss 1 - T."""
    losses = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
    deviations = [_max_deviation_from_ideal(GateQuality.from_gate_loss(loss)) for loss in losses]
    assert all(b < a for a, b in zip(deviations, deviations[1:]))
    for loss, deviation in zip(losses, deviations):
        assert deviation <= 3.0 * loss



def test_factors_at_unit_transmittance():
    """All T-dependent factors take their trivial values at T = 1."""
    factors = lossy_gate_factors(1.0)
    assert factors.decay == 1.0
    assert factors.double_decay == 1.0
    assert factors.conjugate_pair == pytest.approx(2.0)
    assert factors.purify_sine == pytest.approx(1.0)
    assert factors.swap_cosine == 1.0


def test_pinned_lossy_purification():
    """Regression values for F = 0.9 at T = 0.999."""
    outcome = purify_imperfect(0.9, GateQuality(transmittance=0.999))
    assert outcome.output_fidelity == pytest.approx(0.985915046, abs=1e-6)
    assert outcome.success_probability == pytest.approx(0.818995262, abs=1e-6)


def test_pinned_lossy_swap():
    """Regression value for F = 0.95 at T = 0.9999."""
    assert swap_imperfect(0.95, GateQuality(transmittance=0.9999)) == pytest.approx(
        0.9048653117, abs=1e-8
    )


@pytest.mark.parametrize("loss", [1e-5, 1e-4])
def test_lossy_maps_near_unit_fidelity(loss):
    """Perfect input pairs lose about pi * (1 - T) / 2 of fidelity per gate operation."""
    T = 1.0 - loss
    expected = 1.0 - math.pi * loss / 2.0
    out, success = purify_raw(1.0, GateQuality(transmittance=T))
    assert out == pytest.approx(expected, abs=10 * loss**2 + 1e-12)
    assert success == pytest.approx(expected, abs=10 * loss**2 + 1e-12)
    assert swap_raw(1.0, GateQuality(transmittance=T)) == pytest.approx(
        expected, abs=10 * loss**2 + 1e-12
    )


def test_lossy_gates_are_worse_than_ideal():
    """Gate loss never improves a swap."""
    gq = GateQuality.from_gate_loss(1e-3)
    for F in (0.6, 0.8, 0.95, 0.999):
        assert swap(F, gq) < swap_ideal(F)


def test_strong_loss_leaves_domain():
    """A strongly lossy swap drops below 0.5 and is reported, not clamped."""
    with pytest.raises(DomainExitError) as info:
        swap_imperfect(0.6, GateQuality(transmittance=0.5))
    assert info.value.fidelity < 0.5
    assert info.value.stage == "swap"


def test_array_and_scalar_kernels_agree_bitwise():
    """The raw kernels give identical bits for floats and numpy arrays."""
    gq = GateQuality.from_gate_loss(1e-4)
    grid = np.linspace(0.55, 0.999, 17)
    swapped = swap_raw(grid, gq)
    purified, success = purify_raw(grid, gq)
    for i, F in enumerate(grid):
        assert swapped[i] == swap_raw(float(F), gq)
        out, p = purify_raw(float(F), gq)
        assert purified[i] == out
        assert success[i] == p


def test_dispatch_by_gate_quality():
    """purify and swap pick the ideal maps exactly when T = 1."""
    assert purify(0.9, GateQuality()) == purify_ideal(0.9)
    gq = GateQuality.from_gate_loss(1e-5)
    assert purify(0.9, gq) == purify_imperfect(0.9, gq)


def test_gate_loss_round_trip():
    """Gate loss is 1 - T and must lie in [0, 1)."""
    assert GateQuality.from_gate_loss(1e-5).gate_loss == pytest.approx(1e-5)
    assert GateQuality().is_ideal
    with pytest.raises(InvalidParameterError):
        GateQuality.from_gate_loss(1.0)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
