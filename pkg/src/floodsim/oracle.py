"""Monte-Carlo and exhaustive verifiers for the collocation-probability claims.

These checks exercise the measurable skeleton behind the flood-time bound:

* every waypoint move of one agent strongly overlaps (in time) a move of
  any other agent, found constructively from the move covering its start;
* two trimmed segments with a time overlap of ``ell`` meet with probability
  exactly ell/n^2, 2*ell/n^2 or 1/n^2 depending on their orientation
  (verified by exhaustive enumeration over all torus translations);
* two agents with strongly overlapping moves connect with probability on
  the order of 1/n, inside the explicit [1/(16n), 16/n] band;
* agent positions 2n steps apart are statistically independent;
* flooding takes at least n/4 steps in at least half of all runs.

Segments occupy half-open time windows [start, start + length); collocation
includes half-integer times, where two agents crossing the same edge in
opposite directions meet in its middle. Positions are therefore tracked in
doubled coordinates on a 2n x 2n lattice, where every half-step is integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.stats import chi2_contingency

from . import _backend
from .core import Position, RawStream, TorusGrid, derive_run_seed
from .mobility import (
    Move,
    MobilityPolicy,
    mrwp_build_move,
    position_at,
    sample_destination_uniform,
    segments_of,
)
from .spread import SimConfig, run_realization

__all__ = [
    "SegmentCase",
    "ConnectionEstimate",
    "OverlapReport",
    "IndependenceReport",
    "LowerBoundReport",
    "wilson_interval",
    "pair_connection_band",
    "check_strong_overlap",
    "estimate_segment_connection",
    "estimate_pair_connection",
    "check_independence",
    "check_lower_bound",
]


def wilson_interval(hits: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """95% (by default) Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return 0.0, 1.0
    phat = hits / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2 * trials)) / denom
    half = (
        z
        * math.sqrt(phat * (1 - phat) / trials + z2 / (4 * trials * trials))
        / denom
    )
    return max(0.0, center - half), min(1.0, center + half)


class SegmentCase(Enum):
    PERPENDICULAR = "perpendicular"
    ANTI_PARALLEL = "antiparallel"
    PARALLEL = "parallel"
    STRONG_OVERLAP_PAIR = "pair"


@dataclass(frozen=True)
class ConnectionEstimate:
    case: SegmentCase
    ell: int
    n: int
    trials: int
    hits: int
    estimate: float
    ci_low: float
    ci_high: float
    exact: bool

    def to_dict(self) -> dict:
        return {
            "case": self.case.value,
            "ell": self.ell,
            "n": self.n,
            "trials": self.trials,
            "hits": self.hits,
            "estimate": self.estimate,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "exact": self.exact,
        }


@dataclass(frozen=True)
class OverlapReport:
    n: int
    total_moves_checked: int
    strong_overlap_found: int
    overlap_ge_n_over_8: int
    max_start_gap: int

    @property
    def fraction_ge_n_over_8(self) -> float:
        return self.overlap_ge_n_over_8 / self.total_moves_checked

    @property
    def all_found(self) -> bool:
        return self.strong_overlap_found == self.total_moves_checked

    @property
    def gap_within_n(self) -> bool:
        return self.max_start_gap <= self.n

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "total_moves_checked": self.total_moves_checked,
            "strong_overlap_found": self.strong_overlap_found,
            "overlap_ge_n_over_8": self.overlap_ge_n_over_8,
            "fraction_ge_n_over_8": self.fraction_ge_n_over_8,
            "max_start_gap": self.max_start_gap,
        }


@dataclass(frozen=True)
class IndependenceReport:
    n: int
    gap: int
    trials: int
    p_value: float
    mode: str  # "independence" (gap >= 2n) or "power" (shorter gaps)
    min_expected: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "gap": self.gap,
            "trials": self.trials,
            "p_value": self.p_value,
            "mode": self.mode,
            "min_expected": self.min_expected,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class LowerBoundReport:
    n: int
    m: int
    reps: int
    fraction: float
    threshold: float
    n_censored: int
    passed: bool

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "reps": self.reps,
            "fraction": self.fraction,
            "threshold": self.threshold,
            "n_censored": self.n_censored,
            "passed": self.passed,
        }


# ---------------------------------------------------------------------------
# move-sequence construction
# ---------------------------------------------------------------------------


def _next_move(pos: Position, t: int, g: TorusGrid, st: RawStream) -> Move:
    dest = sample_destination_uniform(pos, g, st)
    return mrwp_build_move(pos, dest, t, g, st)


def _first_move_starting_at(g: TorusGrid, st: RawStream, t_min: int) -> Move:
    """Simulate a fresh waypoint agent; return its first move starting >= t_min."""
    pos = Position(st.bounded(g.n), st.bounded(g.n))
    t = 0
    while True:
        mv = _next_move(pos, t, g, st)
        if t >= t_min:
            return mv
        t = mv.end_time
        pos = mv.destination


def _covering_and_next(g: TorusGrid, st: RawStream, s: int) -> tuple[Move, Move]:
    """A fresh agent's move active at time ``s`` and the one after it."""
    pos = Position(st.bounded(g.n), st.bounded(g.n))
    mv = _next_move(pos, 0, g, st)
    while mv.end_time <= s:
        mv = _next_move(mv.destination, mv.end_time, g, st)
    nxt = _next_move(mv.destination, mv.end_time, g, st)
    return mv, nxt


def _select_strong_overlap(mi: Move, mjm: Move, mjp: Move, g: TorusGrid):
    """Constructive selection of a strongly overlapping move pair.

    ``mjm`` must be the other agent's move active when ``mi`` starts and
    ``mjp`` the move after it. Returns (selected move, covered segments,
    covering move): either a leg of ``mi`` fits inside the selected move's
    interval, or the selected move fits entirely inside ``mi``.
    """
    segs_i = segments_of(mi, g)
    seg1_end = segs_i[0].end_time
    if mjm.end_time >= seg1_end:
        return mjm, [segs_i[0]], mjm
    if mjp.end_time >= mi.end_time:
        return mjp, segs_i[1:], mjp
    return mjp, segments_of(mjp, g), mi


def _containment_holds(covered, covering: Move, mi: Move) -> bool:
    if covering is mi:
        lo, hi = mi.start_time, mi.end_time
    else:
        lo, hi = covering.start_time, covering.end_time
    if not covered:
        # single-leg move: the (empty) second leg sits at mi's end instant
        return lo <= mi.end_time <= hi
    return all(lo <= s.start_time and s.end_time <= hi for s in covered)


def check_strong_overlap(n: int, trials: int, seed: int = 0) -> OverlapReport:
    """Verify the constructive overlap selection on freshly sampled move pairs.

    The selection itself must never fail (a deterministic claim), the paired
    moves must start within n steps of each other, and the covered-interval
    overlap must reach n/8 in a constant fraction of trials.
    """
    if n < 8:
        raise ValueError("n must be >= 8")
    g = TorusGrid(n)
    st = RawStream(np.random.PCG64(np.random.SeedSequence(seed)))
    found = 0
    long_overlap = 0
    max_gap = 0
    for _ in range(trials):
        mi = _first_move_starting_at(g, st, n)
        mjm, mjp = _covering_and_next(g, st, mi.start_time)
        sel, covered, covering = _select_strong_overlap(mi, mjm, mjp, g)
        if _containment_holds(covered, covering, mi):
            found += 1
        max_gap = max(max_gap, abs(mi.start_time - mjm.start_time),
                      abs(mi.start_time - mjp.start_time))
        if covering is mi:
            other_segs = segments_of(mi, g)
        else:
            other_segs = segments_of(covering, g)
        overlap = 0
        for s in covered:
            for o in other_segs:
                lo = max(s.start_time, o.start_time)
                hi = min(s.end_time, o.end_time)
                overlap = max(overlap, hi - lo)
        if 8 * overlap >= n:
            long_overlap += 1
    return OverlapReport(
        n=n,
        total_moves_checked=trials,
        strong_overlap_found=found,
        overlap_ge_n_over_8=long_overlap,
        max_start_gap=max_gap,
    )


# ---------------------------------------------------------------------------
# collocation predicates in doubled coordinates
# ---------------------------------------------------------------------------


def _doubled_state(mv: Move, t: int, n2: int):
    """Doubled position and per-leg doubled budgets of a move at time ``t``."""
    u = 2 * (t - mv.start_time)
    x, y = 2 * mv.origin.x, 2 * mv.origin.y
    legs = []
    for direction, length in mv.legs:
        dx, dy = direction.step
        take = min(u, 2 * length)
        x += dx * take
        y += dy * take
        u -= take
        legs.append([dx, dy, 2 * length - take])
    while len(legs) < 2:
        legs.append([0, 0, 0])
    return x % n2, y % n2, legs


def _moves_collocate(ma: Move, mb: Move, w0: int, w1: int, n: int) -> bool:
    """True iff the agents share a location at some half-step in [w0, w1)."""
    if w1 <= w0:
        return False
    n2 = 2 * n
    xa, ya, la = _doubled_state(ma, w0, n2)
    xb, yb, lb = _doubled_state(mb, w0, n2)
    for _ in range(2 * (w1 - w0)):
        if xa == xb and ya == yb:
            return True
        xa, ya = _advance_half(xa, ya, la, n2)
        xb, yb = _advance_half(xb, yb, lb, n2)
    return False


def _advance_half(x: int, y: int, legs, n2: int) -> tuple[int, int]:
    for leg in legs:
        if leg[2] > 0:
            leg[2] -= 1
            return (x + leg[0]) % n2, (y + leg[1]) % n2
    return x, y


_CASE_DIRECTIONS = {
    SegmentCase.PERPENDICULAR: (0, 1),
    SegmentCase.ANTI_PARALLEL: (-1, 0),
    SegmentCase.PARALLEL: (1, 0),
}


def _segment_pair_collocates(
    n: int, bx: int, by: int, bdir: tuple[int, int], ell: int
) -> bool:
    """First segment: from (0,0) moving +x. Second: from (bx,by) moving bdir.

    Both run over the half-open window [0, ell); meetings at half-integer
    times (edge crossings) count.
    """
    n2 = 2 * n
    xa = ya = 0
    xb, yb = (2 * bx) % n2, (2 * by) % n2
    bdx, bdy = bdir
    for _ in range(2 * ell):
        if xa == xb and ya == yb:
            return True
        xa = (xa + 1) % n2
        xb = (xb + bdx) % n2
        yb = (yb + bdy) % n2
    return False


def estimate_segment_connection(
    case: SegmentCase, ell: int, n: int, trials: int = 0, seed: int = 0
) -> ConnectionEstimate:
    """Meeting probability of two trimmed segments under a random translation.

    One segment stays fixed, the other is placed on one of the n^2 torus
    translations. ``trials == 0`` enumerates all placements exactly;
    otherwise placements are sampled and a binomial CI is attached.
    """
    if case not in _CASE_DIRECTIONS:
        raise ValueError(f"unsupported segment case {case}")
    if not 1 <= ell <= n // 2:
        raise ValueError(f"ell must be in [1, n/2], got {ell}")
    bdir = _CASE_DIRECTIONS[case]
    if trials == 0:
        hits = sum(
            _segment_pair_collocates(n, u, v, bdir, ell)
            for u in range(n)
            for v in range(n)
        )
        total = n * n
        p = hits / total
        return ConnectionEstimate(
            case=case, ell=ell, n=n, trials=total, hits=hits,
            estimate=p, ci_low=p, ci_high=p, exact=True,
        )
    st = RawStream(np.random.PCG64(np.random.SeedSequence(seed)))
    hits = 0
    for _ in range(trials):
        u = st.bounded(n)
        v = st.bounded(n)
        hits += _segment_pair_collocates(n, u, v, bdir, ell)
    lo, hi = wilson_interval(hits, trials)
    return ConnectionEstimate(
        case=case, ell=ell, n=n, trials=trials, hits=hits,
        estimate=hits / trials, ci_low=lo, ci_high=hi, exact=False,
    )


def pair_connection_band(n: int) -> tuple[float, float]:
    """Explicit bounds on the connection probability of strongly
    overlapping moves."""
    return 1.0 / (16.0 * n), 16.0 / n


def _pair_connection_trials_py(n: int, trials: int, bit_generator) -> int:
    """Pure-Python twin of the kernel's paired-move connection trials."""
    g = TorusGrid(n)
    st = RawStream(bit_generator)
    hits = 0
    for _ in range(trials):
        mi = _first_move_starting_at(g, st, n)
        mjm, mjp = _covering_and_next(g, st, mi.start_time)
        sel, _, _ = _select_strong_overlap(mi, mjm, mjp, g)
        w0 = max(mi.start_time, sel.start_time)
        w1 = min(mi.end_time, sel.end_time)
        hits += _moves_collocate(mi, sel, w0, w1, n)
    return hits


def estimate_pair_connection(
    n: int, trials: int, seed: int = 0
) -> ConnectionEstimate:
    """Connection frequency of constructively paired strongly overlapping moves.

    The estimate should land inside ``pair_connection_band(n)`` and decay
    like 1/n across grid sizes.
    """
    if n < 8:
        raise ValueError("n must be >= 8")
    bg = np.random.PCG64(np.random.SeedSequence(seed))
    kern = _backend.kernel()
    if kern is not None:
        hits = kern.pair_connection_trials(n, trials, bg)
    else:
        hits = _pair_connection_trials_py(n, trials, bg)
    lo, hi = wilson_interval(hits, trials)
    return ConnectionEstimate(
        case=SegmentCase.STRONG_OVERLAP_PAIR, ell=0, n=n, trials=trials,
        hits=hits, estimate=hits / trials, ci_low=lo, ci_high=hi, exact=False,
    )


# ---------------------------------------------------------------------------
# independence of positions far apart in time
# ---------------------------------------------------------------------------


def _two_time_positions_py(
    n: int, t1: int, t2: int, trials: int, bit_generator
) -> np.ndarray:
    """Pure-Python twin of the kernel's two-time position sampler."""
    g = TorusGrid(n)
    st = RawStream(bit_generator)
    out = np.empty((trials, 4), dtype=np.int32)
    for k in range(trials):
        pos = Position(st.bounded(n), st.bounded(n))
        t = 0
        move: Move | None = None
        for col, target in ((0, t1), (2, t2)):
            while True:
                if move is None:
                    move = _next_move(pos, t, g, st)
                if move.end_time > target:
                    break
                t = move.end_time
                pos = move.destination
                move = None
            p = position_at(move, target, g)
            out[k, col] = p.x
            out[k, col + 1] = p.y
    return out


def check_independence(
    n: int, gap: int, trials: int, seed: int = 0, cells: int = 4
) -> IndependenceReport:
    """Chi-square independence test on one agent's positions ``gap`` steps apart.

    Positions are sampled after an n^2-step burn-in and coarsened onto a
    ``cells x cells`` partition to keep expected cell counts healthy. With
    gap >= 2n the test must NOT reject (p not extreme); shorter gaps serve
    as a power check where rejection is required.
    """
    if gap < 1:
        raise ValueError("gap must be >= 1")
    ncells = cells * cells
    if trials < 5 * ncells * ncells:
        raise ValueError(
            f"insufficient trials for a {ncells}x{ncells} contingency table: "
            f"need >= {5 * ncells * ncells}, got {trials}"
        )
    burn = n * n
    bg = np.random.PCG64(np.random.SeedSequence(seed))
    kern = _backend.kernel()
    if kern is not None:
        pos = kern.mrwp_two_time_positions(n, burn, burn + gap, trials, bg)
    else:
        pos = _two_time_positions_py(n, burn, burn + gap, trials, bg)
    pos = np.asarray(pos, dtype=np.int64)
    c1 = (pos[:, 0] * cells) // n * cells + (pos[:, 1] * cells) // n
    c2 = (pos[:, 2] * cells) // n * cells + (pos[:, 3] * cells) // n
    table = np.bincount(c1 * ncells + c2, minlength=ncells * ncells)
    table = table.reshape(ncells, ncells)
    res = chi2_contingency(table, correction=False)
    p = float(res.pvalue)
    mode = "independence" if gap >= 2 * n else "power"
    passed = (0.001 <= p <= 0.999) if mode == "independence" else (p < 1e-6)
    return IndependenceReport(
        n=n, gap=gap, trials=trials, p_value=p, mode=mode,
        min_expected=float(res.expected_freq.min()), passed=passed,
    )


# ---------------------------------------------------------------------------
# flood-time lower bound
# ---------------------------------------------------------------------------


def check_lower_bound(
    n: int, m: int, reps: int, seed: int = 0, threshold: float = 0.45
) -> LowerBoundReport:
    """Fraction of runs whose flood time reaches n/4.

    Information travels at most two distance units per step, and the
    farthest initial pair is at distance >= n/2 in at least half of all
    placements, so this fraction must stay around or above one half.
    Censored runs exceeded the horizon and count toward the fraction.
    """
    if m < 2:
        raise ValueError("need at least two agents")
    hits = 0
    censored = 0
    for rep in range(reps):
        cfg = SimConfig(
            n=n, m=m, policy=MobilityPolicy.waypoint(),
            seed=derive_run_seed(seed, 0, rep),
        )
        res = run_realization(cfg)
        if res.censored:
            censored += 1
            hits += 1
        elif 4 * res.flood_time >= n:
            hits += 1
    frac = hits / reps
    return LowerBoundReport(
        n=n, m=m, reps=reps, fraction=frac, threshold=threshold,
        n_censored=censored, passed=frac >= threshold,
    )
