import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floodsim.contact import (
    ContactConfig,
    ContactEvent,
    ContactKind,
    contact_components,
    detect_contacts,
    detect_contacts_naive,
)
from floodsim.core import Position, TorusGrid


def _pairs(events):
    return {(e.agent_a, e.agent_b) for e in events}


class TestRadiusZero:
    def test_edge_swap(self):
        g = TorusGrid(8)
        prev = [Position(2, 2), Position(2, 3)]
        curr = [Position(2, 3), Position(2, 2)]
        events = detect_contacts(prev, curr, ContactConfig(0), g, t=4)
        assert len(events) == 1
        ev = next(iter(events))
        assert ev.kind is ContactKind.EDGE_SWAP
        assert (ev.agent_a, ev.agent_b, ev.time) == (0, 1, 4)

    def test_node_coincidence(self):
        g = TorusGrid(8)
        prev = [Position(2, 2), Position(2, 4)]
        curr = [Position(2, 3), Position(2, 3)]
        events = detect_contacts(prev, curr, ContactConfig(0), g, t=1)
        assert {e.kind for e in events} == {ContactKind.NODE_COINCIDENCE}
        assert _pairs(events) == {(0, 1)}

    def test_same_direction_lockstep_is_no_contact(self):
        g = TorusGrid(8)
        prev = [Position(2, 2), Position(2, 3)]
        curr = [Position(2, 3), Position(2, 4)]
        assert detect_contacts(prev, curr, ContactConfig(0), g) == set()

    def test_initial_placement_uses_identical_prev(self):
        g = TorusGrid(8)
        curr = [Position(1, 1), Position(1, 1), Position(3, 3)]
        events = detect_contacts(curr, curr, ContactConfig(0), g, t=0)
        assert _pairs(events) == {(0, 1)}
        assert {e.kind for e in events} == {ContactKind.NODE_COINCIDENCE}

    def test_three_at_one_node_gives_all_pairs(self):
        g = TorusGrid(8)
        curr = [Position(5, 5)] * 3
        events = detect_contacts(curr, curr, ContactConfig(0), g)
        assert _pairs(events) == {(0, 1), (0, 2), (1, 2)}


class TestRadius:
    def test_threshold_boundary(self):
        g = TorusGrid(16)
        prev = [Position(0, 0), Position(0, 2)]
        assert detect_contacts(prev, prev, ContactConfig(1), g) == set()
        events = detect_contacts(prev, prev, ContactConfig(2), g)
        assert _pairs(events) == {(0, 1)}
        assert {e.kind for e in events} == {ContactKind.RADIUS_PROXIMITY}

    def test_wraparound_proximity(self):
        g = TorusGrid(16)
        pos = [Position(0, 0), Position(15, 15)]
        events = detect_contacts(pos, pos, ContactConfig(2), g)
        assert _pairs(events) == {(0, 1)}


class TestCanonicalOrdering:
    def test_event_requires_ordered_pair(self):
        with pytest.raises(ValueError):
            ContactEvent(0, 3, 3, ContactKind.NODE_COINCIDENCE)
        with pytest.raises(ValueError):
            ContactEvent(0, 5, 2, ContactKind.NODE_COINCIDENCE)


def _random_step(rng, n, m, swap_pairs=2, collide=2):
    """Random single-step configuration with planted swaps and coincidences."""
    g = TorusGrid(n)
    prev = [Position(rng.integers(n), rng.integers(n)) for _ in range(m)]
    deltas = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    curr = [
        g.wrap(p.x + d[0], p.y + d[1])
        for p, d in zip(prev, (deltas[rng.integers(4)] for _ in range(m)))
    ]
    for _ in range(swap_pairs):
        i, j = rng.integers(m), rng.integers(m)
        if i == j:
            continue
        a = Position(rng.integers(n), rng.integers(n))
        b = g.wrap(a.x + 1, a.y)
        prev[i], curr[i] = a, b
        prev[j], curr[j] = b, a
    for _ in range(collide):
        i, j = rng.integers(m), rng.integers(m)
        if i == j:
            continue
        target = Position(rng.integers(n), rng.integers(n))
        curr[i] = curr[j] = target
        prev[i] = g.wrap(target.x - 1, target.y)
        prev[j] = g.wrap(target.x, target.y - 1)
    return g, prev, curr


class TestBucketedEqualsNaive:
    @pytest.mark.parametrize("radius", [0, 1, 2, 5])
    def test_random_steps(self, radius):
        rng = np.random.default_rng(1234 + radius)
        for _ in range(40):
            n = int(rng.integers(5, 14))
            m = int(rng.integers(2, 30))
            g, prev, curr = _random_step(rng, n, m)
            cfg = ContactConfig(radius)
            fast = detect_contacts(prev, curr, cfg, g, t=7)
            slow = detect_contacts_naive(prev, curr, cfg, g, t=7)
            assert fast == slow

    def test_radius_larger_than_grid(self):
        rng = np.random.default_rng(5)
        g, prev, curr = _random_step(rng, 6, 12)
        cfg = ContactConfig(20)
        assert detect_contacts(prev, curr, cfg, g) == detect_contacts_naive(
            prev, curr, cfg, g
        )

    def test_mismatched_agent_sets_rejected(self):
        g = TorusGrid(8)
        with pytest.raises(ValueError):
            detect_contacts([Position(0, 0)], [], ContactConfig(0), g)


class TestRadiusMonotonicity:
    def test_event_pairs_grow_with_radius(self):
        rng = np.random.default_rng(77)
        for _ in range(20):
            g, prev, curr = _random_step(rng, 10, 20)
            pairs0 = _pairs(detect_contacts(prev, curr, ContactConfig(0), g))
            prev_pairs = pairs0
            for r in (1, 2, 3, 6):
                pr = _pairs(detect_contacts(prev, curr, ContactConfig(r), g))
                assert prev_pairs <= pr
                prev_pairs = pr


class TestComponents:
    def test_transitivity(self):
        evs = [
            ContactEvent(0, 0, 1, ContactKind.NODE_COINCIDENCE),
            ContactEvent(0, 1, 2, ContactKind.NODE_COINCIDENCE),
        ]
        comps = contact_components(evs, 4)
        assert [0, 1, 2] in comps and [3] in comps

    def test_no_events_all_singletons(self):
        assert contact_components([], 3) == [[0], [1], [2]]

    def test_two_disjoint_pairs(self):
        evs = [
            ContactEvent(0, 0, 1, ContactKind.EDGE_SWAP),
            ContactEvent(0, 2, 3, ContactKind.EDGE_SWAP),
        ]
        comps = contact_components(evs, 4)
        assert [0, 1] in comps and [2, 3] in comps
