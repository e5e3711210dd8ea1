import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2_contingency, chisquare

from floodsim.core import Position, TorusGrid, torus_distance
from floodsim.mobility import (
    Direction,
    LegOrder,
    LevyParams,
    MobilityPolicy,
    PolicyKind,
    levy_table,
    mrwp_build_move,
    position_at,
    rw_step,
    sample_destination_levy,
    sample_destination_uniform,
    segments_of,
)

from conftest import make_stream


class TestRandomWalkStep:
    def test_support_and_uniformity(self):
        g = TorusGrid(4)
        st_ = make_stream(1)
        counts = Counter(rw_step(Position(0, 0), g, st_) for _ in range(100_000))
        assert set(counts) == {
            Position(1, 0), Position(3, 0), Position(0, 1), Position(0, 3)
        }
        # each frequency within 3 sigma of 1/4
        sigma = math.sqrt(0.25 * 0.75 / 100_000)
        for c in counts.values():
            assert abs(c / 100_000 - 0.25) < 3 * sigma
        p = chisquare(list(counts.values())).pvalue
        assert 0.001 <= p <= 0.999

    def test_wrap_support(self):
        g = TorusGrid(3)
        st_ = make_stream(2)
        seen = {rw_step(Position(2, 2), g, st_) for _ in range(500)}
        assert seen == {
            Position(0, 2), Position(1, 2), Position(2, 0), Position(2, 1)
        }


class TestUniformDestination:
    def test_small_enumeration(self):
        g = TorusGrid(2)
        st_ = make_stream(3)
        counts = Counter(
            sample_destination_uniform(Position(0, 0), g, st_)
            for _ in range(90_000)
        )
        assert set(counts) == {Position(0, 1), Position(1, 0), Position(1, 1)}
        sigma = math.sqrt((1 / 3) * (2 / 3) / 90_000)
        for c in counts.values():
            assert abs(c / 90_000 - 1 / 3) < 3 * sigma

    def test_never_returns_current_node(self):
        g = TorusGrid(5)
        st_ = make_stream(4)
        p = Position(2, 3)
        assert all(
            sample_destination_uniform(p, g, st_) != p for _ in range(5000)
        )

    def test_fixed_node_frequency(self):
        g = TorusGrid(10)
        st_ = make_stream(5)
        p = Position(0, 0)
        target = Position(7, 4)
        n_draws = 1_000_000
        hits = sum(
            sample_destination_uniform(p, g, st_) == target
            for _ in range(n_draws)
        )
        expected = 1 / 99
        sigma = math.sqrt(expected * (1 - expected) / n_draws)
        assert abs(hits / n_draws - expected) < 3 * sigma


class TestLevyDestination:
    def test_small_grid_exact_weights(self):
        # 3x3 torus from any node: 4 nodes at distance 1 and 4 at distance 2,
        # so with alpha=1 the normalizer is 4*1 + 4*0.5 = 6.
        tab = levy_table(3, 1.0)
        assert tab.total_weight == pytest.approx(6.0, abs=0)
        assert list(tab.distances) == [1, 2]
        assert list(tab.counts) == [4, 4]

        g = TorusGrid(3)
        st_ = make_stream(6)
        lp = LevyParams(1.0)
        n_draws = 120_000
        counts = Counter(
            sample_destination_levy(Position(0, 0), lp, g, st_)
            for _ in range(n_draws)
        )
        # each distance-1 node has probability 1/6
        sigma = math.sqrt((1 / 6) * (5 / 6) / n_draws)
        for node in (Position(1, 0), Position(2, 0), Position(0, 1), Position(0, 2)):
            assert abs(counts[node] / n_draws - 1 / 6) < 3 * sigma

    def test_alpha_zero_matches_uniform(self):
        g = TorusGrid(5)
        lp = LevyParams(0.0)
        p = Position(1, 1)
        st_a = make_stream(7)
        st_b = make_stream(8)
        n_draws = 50_000
        flat = lambda q: q.x * 5 + q.y
        a = np.bincount(
            [flat(sample_destination_levy(p, lp, g, st_a)) for _ in range(n_draws)],
            minlength=25,
        )
        b = np.bincount(
            [flat(sample_destination_uniform(p, g, st_b)) for _ in range(n_draws)],
            minlength=25,
        )
        keep = (a + b) > 0
        p_val = chi2_contingency(np.vstack([a[keep], b[keep]])).pvalue
        assert 0.001 <= p_val <= 0.999

    def test_high_alpha_collapses_to_neighbors(self):
        tab = levy_table(20, 10.0)
        p_dist1 = 4.0 / tab.total_weight
        assert p_dist1 >= 0.99
        g = TorusGrid(20)
        st_ = make_stream(9)
        lp = LevyParams(10.0)
        p = Position(3, 3)
        hits = sum(
            torus_distance(sample_destination_levy(p, lp, g, st_), p, g) == 1
            for _ in range(20_000)
        )
        assert hits / 20_000 >= 0.98


class TestMoveConstruction:
    def test_two_leg_path_follows_drawn_order(self):
        g = TorusGrid(10)
        p, dest = Position(0, 0), Position(3, 4)
        expected = {
            LegOrder.HORIZONTAL_FIRST: [
                (1, 0), (2, 0), (3, 0), (3, 1), (3, 2), (3, 3), (3, 4)
            ],
            LegOrder.VERTICAL_FIRST: [
                (0, 1), (0, 2), (0, 3), (0, 4), (1, 4), (2, 4), (3, 4)
            ],
        }
        seen = set()
        for seed in range(40):
            mv = mrwp_build_move(p, dest, 0, g, make_stream(seed))
            seen.add(mv.leg_order)
            path = [tuple(position_at(mv, t, g)) for t in range(1, 8)]
            assert path == expected[mv.leg_order]
            assert mv.duration == 7
        assert seen == {LegOrder.HORIZONTAL_FIRST, LegOrder.VERTICAL_FIRST}

    def test_wrap_single_segment(self):
        g = TorusGrid(10)
        mv = mrwp_build_move(Position(0, 0), Position(8, 0), 5, g, make_stream(1))
        assert mv.duration == 2
        segs = segments_of(mv, g)
        assert len(segs) == 1
        assert segs[0].direction is Direction.MINUS_X
        assert segs[0].length == 2
        assert segs[0].start_time == 5

    def test_leg_order_is_even(self):
        g = TorusGrid(10)
        st_ = make_stream(11)
        n_draws = 100_000
        h = sum(
            mrwp_build_move(Position(0, 0), Position(3, 4), 0, g, st_).leg_order
            is LegOrder.HORIZONTAL_FIRST
            for _ in range(n_draws)
        )
        sigma = math.sqrt(0.25 / n_draws)
        assert abs(h / n_draws - 0.5) < 3 * sigma

    def test_boundaries(self):
        g = TorusGrid(9)
        mv = mrwp_build_move(Position(1, 2), Position(7, 5), 3, g, make_stream(2))
        assert position_at(mv, 3, g) == Position(1, 2)
        assert position_at(mv, mv.end_time, g) == Position(7, 5)
        with pytest.raises(ValueError):
            position_at(mv, 2, g)
        with pytest.raises(ValueError):
            position_at(mv, mv.end_time + 1, g)

    def test_rejects_null_move(self):
        g = TorusGrid(5)
        with pytest.raises(ValueError):
            mrwp_build_move(Position(1, 1), Position(1, 1), 0, g, make_stream(0))

    @given(
        st.integers(min_value=2, max_value=12),
        st.integers(min_value=0, max_value=143),
        st.integers(min_value=0, max_value=143),
        st.integers(min_value=0, max_value=50),
    )
    @settings(max_examples=200)
    def test_move_invariants(self, n, a, b, seed):
        g = TorusGrid(n)
        p = Position(a % n, (a // n) % n)
        q = Position(b % n, (b // n) % n)
        if p == q:
            return
        mv = mrwp_build_move(p, q, 0, g, make_stream(seed))
        assert mv.duration == torus_distance(p, q, g)
        assert mv.duration <= n
        # trajectory is connected: one torus step at a time
        prev = p
        for t in range(1, mv.duration + 1):
            cur = position_at(mv, t, g)
            assert torus_distance(prev, cur, g) == 1
            prev = cur
        segs = segments_of(mv, g)
        assert 1 <= len(segs) <= 2
        assert sum(s.length for s in segs) == mv.duration
        assert all(s.length > 0 for s in segs)

    def test_segment_reconstruction_matches_position_at(self):
        g = TorusGrid(11)
        mv = mrwp_build_move(Position(9, 2), Position(3, 8), 4, g, make_stream(3))
        for seg in segments_of(mv, g):
            dx, dy = seg.direction.step
            for k in range(seg.length + 1):
                t = seg.start_time + k
                expect = g.wrap(seg.start.x + dx * k, seg.start.y + dy * k)
                assert position_at(mv, t, g) == expect

    def test_long_move_probability(self):
        # moves of at least n/4 steps happen with solidly constant probability
        g = TorusGrid(64)
        st_ = make_stream(12)
        p = Position(0, 0)
        n_draws = 100_000
        long = sum(
            torus_distance(
                sample_destination_uniform(p, g, st_), p, g
            ) >= 16
            for _ in range(n_draws)
        )
        assert long / n_draws >= 0.4

    def test_destination_sequence_deterministic(self):
        g = TorusGrid(12)

        def sequence(seed):
            st_ = make_stream(seed, key=(0,))
            pos = Position(0, 0)
            out = []
            for _ in range(30):
                dest = sample_destination_uniform(pos, g, st_)
                mrwp_build_move(pos, dest, 0, g, st_)
                out.append(dest)
                pos = dest
            return out

        assert sequence(77) == sequence(77)
        assert sequence(77) != sequence(78)


class TestPolicyTypes:
    def test_levy_requires_params(self):
        with pytest.raises(ValueError):
            MobilityPolicy(PolicyKind.LEVY_WALK)

    def test_negative_alpha_rejected(self):
        with pytest.raises(ValueError):
            LevyParams(-0.5)
