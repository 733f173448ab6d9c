"""Exhaustive small-trace checks of the coordination state machines."""

from mcmsim.protocol import Phase
from safety_harness import enumerate_paths


def test_exhaustive_drop_interleavings_depth_8():
    results = enumerate_paths(fate_depth=8, fate_options=("deliver", "drop"))
    assert len(results) == 4 * 2 ** 8
    # the all-delivered path must succeed in every adversary variant
    successes = [r for r in results if r["success"]]
    assert successes, "no interleaving completed the coordination"
    assert all(r["fins"] <= 1 for r in results)


def test_reordering_interleavings_depth_5():
    results = enumerate_paths(fate_depth=5,
                              fate_options=("deliver", "delay", "drop"))
    assert len(results) == 4 * 3 ** 5
    assert any(r["success"] for r in results)


def test_adversary_is_refused_when_coordination_is_active():
    # With every message delivered, the mid-run competing Advertisement
    # (tick 14: both stations are busy) is answered with Cancel(Refused).
    results = enumerate_paths(fate_depth=0, fate_options=("deliver",),
                              adversary_ticks=(14,))
    assert results[0]["refused_adversary"]
    assert results[0]["success"]


def test_every_path_terminates_idle_or_done():
    results = enumerate_paths(fate_depth=6, fate_options=("deliver", "drop"))
    for r in results:
        assert r["p_final"][1] in (Phase.IDLE, Phase.DONE)
        assert r["r_final"][1] in (Phase.IDLE, Phase.DONE)
