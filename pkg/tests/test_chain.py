import logging

import numpy as np
import pytest
from pydantic import ValidationError

from repeater.chain import (
    Placement,
    Strategy,
    _grid_profile,
    direct_transmission_rate,
    fidelity_trace,
    final_fidelity,
    invert_fidelity,
    relay_rate,
    scenario_rate,
)
from repeater.channel import ChannelParams
from repeater.errors import ConfigurationError, DomainExitError, UnreachableTargetError
from repeater.gates import GateQuality, purify_ideal, swap_ideal
from repeater.waiting import EndPurifyMode, rate_purify_at_end, z_stable

CHANNEL_1280 = ChannelParams(total_length_km=1280, segment_length_km=20)
IDEAL = GateQuality.ideal()


def _strategy(n: int = 6, k: int = 0, loss: float = 0.0, **extra) -> Strategy:
    return Strategy(
        nesting_levels=n, purif_rounds=k, gate_quality=GateQuality.from_gate_loss(loss), **extra
    )


def test_final_fidelity_composes_purification_then_swaps():
    """One purification round then two swap levels, with ideal gates."""
    expected = swap_ideal(swap_ideal(purify_ideal(0.95).output_fidelity))
    assert final_fidelity(0.95, _strategy(n=2, k=1)) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.98904, abs=1e-4)


def test_trace_records_every_stage():
    """The trace lists each purification and swap with its level."""
    trace = fidelity_trace(0.9, _strategy(n=3, k=2))
    assert [(s.stage, s.level) for s in trace.steps] == [
        ("purification", 1),
        ("purification", 2),
        ("swap", 1),
        ("swap", 2),
        ("swap", 3),
    ]
    assert len(trace.purification_probs) == 2
    assert trace.purification_inputs[0] == 0.9
    assert trace.final == trace.steps[-1].fidelity


def test_last_level_placement_purifies_after_swaps():
    """Purify-last swaps first and purifies the end-to-end pair once."""
    s = _strategy(n=2, k=1, purif_placement=Placement.LAST_LEVEL)
    expected = purify_ideal(swap_ideal(swap_ideal(0.95))).output_fidelity
    assert final_fidelity(0.95, s) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
@pytest.mark.parametrize(
    "loss, target",
    [(0.0, 0.6), (0.0, 0.9), (0.0, 0.98), (1e-5, 0.6), (1e-5, 0.98), (1e-4, 0.8), (1e-4, 0.9)],
)
def test_inversion_round_trip(k, loss, target):
    """The recovered elementary fidelity maps back onto the target."""
    s = _strategy(k=k, loss=loss)
    F0 = invert_fidelity(target, s)
    assert 0.5 <= F0 <= 1.0
    assert final_fidelity(F0, s) == pytest.approx(target, abs=1e-10)


def test_composed_map_is_monotone_for_ideal_gates():
    """With ideal gates a higher elementary fidelity never lowers the final one."""
    s = _strategy(k=2)
    values = [final_fidelity(float(F), s) for F in np.linspace(0.51, 1.0, 200)]
    assert all(b >= a for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("k, loss", [(0, 1e-5), (2, 1e-5), (2, 1e-4), (2, 1e-3), (3, 1e-5)])
def test_lossy_map_is_monotone_inside_the_domain(k, loss, caplog):
    """Outputs that dropped below 0.5 do not count as a monotonicity break."""
    _grid_profile.cache_clear()
    with caplog.at_level(logging.WARNING, logger="repeater.chain"):
        _grid, _values, monotone = _grid_profile(_strategy(k=k, loss=loss))
    assert monotone
    assert not caplog.records


def test_gate_loss_caps_achievable_fidelity():
    """At 1 - T = 1e-3 two rounds over 64 segments stay below 0.84."""
    with pytest.raises(UnreachableTargetError) as info:
        invert_fidelity(0.95, _strategy(k=2, loss=1e-3))
    assert info.value.achievable_max < 0.84
    assert info.value.achievable_max > 0.8


def test_headline_rate():
    """1280 km, two rounds at the first level, 1 - T = 1e-5: order 100 pairs/s at F = 0.98."""
    result = scenario_rate(0.98, _strategy(k=2, loss=1e-5), CHANNEL_1280)
    assert 50.0 <= result.rate_hz <= 200.0
    assert result.rate_hz == pytest.approx(77.5257, rel=1e-4)
    assert result.final_fidelity == pytest.approx(0.98, abs=1e-10)
    assert result.waiting_time_s == pytest.approx(1.0 / result.rate_hz)
    assert len(result.p1_per_round) == 2
    assert result.strategy_label == "n6-k2-first_level-loss1e-05"


def test_more_gate_loss_lowers_the_rate():
    """At F = 0.95 the 1e-4 rate is below the 1e-5 rate."""
    slow = scenario_rate(0.95, _strategy(k=2, loss=1e-4), CHANNEL_1280).rate_hz
    fast = scenario_rate(0.95, _strategy(k=2, loss=1e-5), CHANNEL_1280).rate_hz
    assert 0.0 < slow < fast
    assert slow == pytest.approx(85.1915, rel=1e-4)
    assert fast == pytest.approx(92.0118, rel=1e-4)


def test_rate_near_fidelity_ceiling():
    """Just below the 1e-3 ceiling of about 0.8345 the rate falls to a few tens of pairs/s."""
    s = _strategy(k=2, loss=1e-3)
    result = scenario_rate(0.8344, s, CHANNEL_1280)
    assert 3.0 <= result.rate_hz <= 30.0
    assert result.rate_hz == pytest.approx(13.3218, rel=1e-3)


@pytest.mark.parametrize("L, ratio", [(1280, 0.75157), (2560, 0.73044), (5120, 0.61718)])
def test_rate_decreases_slowly_with_distance(L, ratio):
    """Doubling the distance adds one swap level and loses well under a factor of four."""
    def rate(total_km: float) -> float:
        ch = ChannelParams(total_length_km=total_km, segment_length_km=20)
        return scenario_rate(0.98, _strategy(n=ch.nesting_levels(), k=2, loss=1e-5), ch).rate_hz

    near, far = rate(L), rate(2 * L)
    assert 0.3 <= far / near <= 0.95
    assert far / near == pytest.approx(ratio, abs=1e-4)


@pytest.mark.parametrize("mode", list(EndPurifyMode))
@pytest.mark.parametrize("target", [0.6, 0.7, 0.8, 0.9, 0.95])
def test_purify_first_beats_purify_last(mode, target):
    """Purifying elementary pairs is faster than purifying the end-to-end pair."""
    first = scenario_rate(target, _strategy(k=1), CHANNEL_1280).rate_hz
    last_strategy = _strategy(k=1, purif_placement=Placement.LAST_LEVEL, end_purify_mode=mode)
    last = scenario_rate(target, last_strategy, CHANNEL_1280).rate_hz
    assert first >= last


@pytest.mark.parametrize("mode", list(EndPurifyMode))
def test_purify_last_rate_is_end_purification_rate(mode):
    """The last-level scenario rate is the purify-at-end rate, with a matching effective P."""
    s = _strategy(k=1, purif_placement=Placement.LAST_LEVEL, end_purify_mode=mode)
    result = scenario_rate(0.9, s, CHANNEL_1280)
    T0 = CHANNEL_1280.slot_time_s
    expected = rate_purify_at_end(6, result.p0, result.p1_per_round[0], T0, mode)
    assert result.rate_hz == expected
    assert z_stable(64, result.effective_p) == pytest.approx(1.0 / (T0 * expected), rel=1e-9)


def test_three_rounds_overtake_two_at_high_fidelity():
    """Two rounds win at F = 0.9, three rounds at F = 0.995."""
    def rate(k: int, F: float) -> float:
        return scenario_rate(F, _strategy(k=k), CHANNEL_1280).rate_hz

    assert rate(2, 0.9) > rate(3, 0.9)
    assert rate(3, 0.995) > rate(2, 0.995)


@pytest.mark.parametrize("rows, high", [(16, 0.9), (32, 0.99)])
def test_purification_overtakes_multiplexing(rows, high):
    """Multiplexing wins at low fidelity, one purification round at high fidelity."""
    def rates(F: float) -> tuple:
        purified = scenario_rate(F, _strategy(k=1), CHANNEL_1280).rate_hz
        muxed = scenario_rate(F, _strategy(multiplex_rows=rows), CHANNEL_1280).rate_hz
        return purified, muxed

    purified, muxed = rates(0.6)
    assert muxed > purified
    purified, muxed = rates(high)
    assert purified > muxed


def test_single_segment_multiplexing():
    """With one segment r rows succeed with probability 1 - q^r per slot."""
    ch = ChannelParams(total_length_km=20, segment_length_km=20)
    single = scenario_rate(0.9, _strategy(n=0), ch)
    muxed = scenario_rate(0.9, _strategy(n=0, multiplex_rows=4), ch)
    q = 1.0 - single.p0
    assert muxed.effective_p == pytest.approx(1.0 - q**4)
    assert muxed.rate_hz == pytest.approx(muxed.effective_p / ch.slot_time_s)


def test_strategy_rejects_unmodelled_combinations():
    """Purification with multiplexing and multi-round purify-last are refused."""
    with pytest.raises(ValidationError):
        _strategy(k=1, multiplex_rows=2)
    with pytest.raises(ValidationError):
        _strategy(k=2, purif_placement=Placement.LAST_LEVEL)
    with pytest.raises(ValidationError):
        _strategy(n=0, k=1, purif_placement=Placement.LAST_LEVEL)


def test_channel_and_strategy_must_agree():
    """A strategy for 6 levels cannot run over a 4-level channel."""
    ch = ChannelParams(total_length_km=320, segment_length_km=20)
    with pytest.raises(ConfigurationError):
        scenario_rate(0.9, _strategy(n=6), ch)


def test_domain_exit_under_strong_loss():
    """Fidelity propagation under very lossy gates reports the level it left the domain."""
    with pytest.raises(DomainExitError) as info:
        fidelity_trace(0.6, Strategy(nesting_levels=2, gate_quality=GateQuality(transmittance=0.5)))
    assert info.value.stage == "swap"
    assert info.value.level == 1


def test_short_links_direct_relay_and_repeater():
    """At 320 km the repeater beats direct transmission, which beats the relay."""
    ch = ChannelParams(total_length_km=320, segment_length_km=20)
    direct = direct_transmission_rate(0.9, 320, False, ch)
    relay = relay_rate(0.9, 4, ch)
    repeater = scenario_rate(0.9, _strategy(n=4), ch).rate_hz
    assert direct == pytest.approx(2.4e-4, rel=0.05)
    assert relay < direct < 1e-3
    assert repeater > 1.0


def test_repeater_beats_direct_at_80_km():
    """At F = 0.9 over 80 km four segments deliver about 111 pairs/s, direct about 12.6."""
    ch = ChannelParams(total_length_km=80, segment_length_km=20)
    direct = direct_transmission_rate(0.9, 80, False, ch)
    repeater = scenario_rate(0.9, _strategy(n=2), ch).rate_hz
    assert direct == pytest.approx(12.5914485772, rel=1e-9)
    assert repeater == pytest.approx(111.1741910936, rel=1e-9)


def test_pinned_inversion():
    """Ideal gates, 64 segments, two rounds: F = 0.98 needs F0 = 0.88211794..."""
    F0 = invert_fidelity(0.98, _strategy(k=2))
    assert F0 == pytest.approx(0.882117940733, abs=1e-11)


@pytest.mark.parametrize("k, loss", [(0, 0.0), (1, 0.0), (2, 0.0), (2, 1e-5), (2, 1e-4)])
def test_rate_falls_with_target_fidelity(k, loss):
    """Up to two rounds a higher final fidelity never comes at a higher rate."""
    s = _strategy(k=k, loss=loss)
    rates = [scenario_rate(F, s, CHANNEL_1280).rate_hz for F in np.linspace(0.6, 0.95, 15)]
    assert all(b <= a for a, b in zip(rates, rates[1:]))


def test_three_rounds_rise_with_target_fidelity():
    """Three rounds gain more in purification success than they lose in generation."""
    s = _strategy(k=3)
    low = scenario_rate(0.6, s, CHANNEL_1280).rate_hz
    high = scenario_rate(0.95, s, CHANNEL_1280).rate_hz
    assert low == pytest.approx(76.789, rel=1e-4)
    assert high == pytest.approx(84.769, rel=1e-4)


def test_direct_with_purification_is_positive():
    """Generate twice over the full distance and purify once."""
    ch = ChannelParams(total_length_km=80, segment_length_km=20)
    assert direct_transmission_rate(0.95, 80, True, ch) > 0.0


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
