"""Movement policies: random walk, waypoint models, and distance-decay walks.

A waypoint-style trip is a ``Move``: origin, destination, and at most two
axis-aligned legs walked at unit speed along the torus-shortest direction of
each axis. The leg order (horizontal or vertical first) is drawn uniformly
per move, and an exact half-way wrap tie on an axis is broken uniformly at
random when the move is built.

Draw protocol per new move (shared with the compiled kernel, in this order):
destination draw(s), then one bit for leg order if both axes are nonzero,
then one tie bit per tied axis (x first). Random-walk agents draw one
``bounded(4)`` per step instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .core import Position, RawStream, TorusGrid

__all__ = [
    "PolicyKind",
    "MobilityPolicy",
    "LevyParams",
    "LegOrder",
    "Direction",
    "Move",
    "Segment",
    "rw_step",
    "sample_destination_uniform",
    "sample_destination_levy",
    "mrwp_build_move",
    "position_at",
    "segments_of",
    "levy_table",
]


class PolicyKind(Enum):
    RANDOM_WALK = "rw"
    RANDOM_WAYPOINT = "rwp"
    MANHATTAN_WAYPOINT = "mrwp"
    LEVY_WALK = "levy"


@dataclass(frozen=True)
class LevyParams:
    """Distance-decay exponent for waypoint selection.

    P(dest = q) is proportional to d(p, q)^(-alpha) over all q != p, with
    d the torus Manhattan distance. alpha = 0 degenerates to the uniform
    waypoint choice.
    """

    alpha: float

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


@dataclass(frozen=True)
class MobilityPolicy:
    kind: PolicyKind
    levy: LevyParams | None = None

    def __post_init__(self):
        if self.kind is PolicyKind.LEVY_WALK and self.levy is None:
            raise ValueError("LEVY_WALK requires LevyParams")

    @staticmethod
    def random_walk() -> "MobilityPolicy":
        return MobilityPolicy(PolicyKind.RANDOM_WALK)

    @staticmethod
    def waypoint() -> "MobilityPolicy":
        return MobilityPolicy(PolicyKind.MANHATTAN_WAYPOINT)

    @staticmethod
    def levy_walk(alpha: float) -> "MobilityPolicy":
        return MobilityPolicy(PolicyKind.LEVY_WALK, LevyParams(alpha))


class LegOrder(Enum):
    HORIZONTAL_FIRST = 0
    VERTICAL_FIRST = 1


class Direction(Enum):
    PLUS_X = (1, 0)
    MINUS_X = (-1, 0)
    PLUS_Y = (0, 1)
    MINUS_Y = (0, -1)

    @property
    def step(self) -> tuple[int, int]:
        return self.value


# Random-walk neighbor order for the bounded(4) draw.
_RW_DIRECTIONS = (
    Direction.PLUS_X,
    Direction.MINUS_X,
    Direction.PLUS_Y,
    Direction.MINUS_Y,
)


@dataclass(frozen=True)
class Segment:
    """Maximal straight (single-axis) part of a move.

    Occupies the half-open time interval [start_time, start_time + length).
    """

    start: Position
    direction: Direction
    length: int
    start_time: int

    @property
    def end_time(self) -> int:
        return self.start_time + self.length


@dataclass(frozen=True)
class Move:
    """One origin -> destination trip, decomposed into 1 or 2 axis legs."""

    origin: Position
    destination: Position
    leg_order: LegOrder
    start_time: int
    duration: int
    legs: tuple[tuple[Direction, int], ...]

    @property
    def end_time(self) -> int:
        return self.start_time + self.duration


def rw_step(p: Position, g: TorusGrid, rng: RawStream) -> Position:
    """One uniform step to one of the four torus neighbors."""
    dx, dy = _RW_DIRECTIONS[rng.bounded(4)].step
    return g.wrap(p.x + dx, p.y + dy)


def sample_destination_uniform(
    p: Position, g: TorusGrid, rng: RawStream
) -> Position:
    """Uniform over the n^2 - 1 nodes other than ``p``.

    The current node is excluded so every move has a positive duration.
    """
    n = g.n
    idx = rng.bounded(n * n - 1)
    if idx >= p.x * n + p.y:
        idx += 1
    return Position(idx // n, idx % n)


def _signed_axis_leg(raw: int, n: int, rng: RawStream) -> tuple[int, int]:
    """(sign, length) of the shorter wrap direction; draws on exact ties."""
    if raw == 0:
        return 0, 0
    back = n - raw
    if raw == back:
        return (1 if rng.bit() == 0 else -1), raw
    if raw < back:
        return 1, raw
    return -1, back


def mrwp_build_move(
    p: Position, dest: Position, t: int, g: TorusGrid, rng: RawStream
) -> Move:
    """Build the minimum-turn move from ``p`` to ``dest`` starting at ``t``.

    Each axis travels its torus-shortest direction; with both axes nonzero
    the leg order is drawn uniformly. Duration always equals
    ``torus_distance(p, dest, g)``.
    """
    if dest == p:
        raise ValueError("destination must differ from origin")
    n = g.n
    raw_x = (dest.x - p.x) % n
    raw_y = (dest.y - p.y) % n
    two_legs = raw_x != 0 and raw_y != 0
    order = LegOrder.HORIZONTAL_FIRST
    if two_legs:
        order = LegOrder(rng.bit())
    sx, lx = _signed_axis_leg(raw_x, n, rng)
    sy, ly = _signed_axis_leg(raw_y, n, rng)

    x_leg = (Direction.PLUS_X if sx > 0 else Direction.MINUS_X, lx)
    y_leg = (Direction.PLUS_Y if sy > 0 else Direction.MINUS_Y, ly)
    if not two_legs:
        legs = (x_leg,) if lx > 0 else (y_leg,)
    elif order is LegOrder.HORIZONTAL_FIRST:
        legs = (x_leg, y_leg)
    else:
        legs = (y_leg, x_leg)
    return Move(
        origin=p,
        destination=dest,
        leg_order=order,
        start_time=t,
        duration=lx + ly,
        legs=legs,
    )


def position_at(m: Move, t: int, g: TorusGrid) -> Position:
    """Lattice point of the move's trajectory at integer time ``t``."""
    if not m.start_time <= t <= m.end_time:
        raise ValueError(
            f"t={t} outside move interval [{m.start_time}, {m.end_time}]"
        )
    u = t - m.start_time
    x, y = m.origin
    for direction, length in m.legs:
        took = min(u, length)
        dx, dy = direction.step
        x += dx * took
        y += dy * took
        u -= took
    return g.wrap(x, y)


def segments_of(m: Move, g: TorusGrid) -> list[Segment]:
    """The 1 or 2 maximal straight parts of a move, zero-length legs omitted."""
    out = []
    t = m.start_time
    pos = m.origin
    for direction, length in m.legs:
        if length == 0:
            continue
        out.append(Segment(pos, direction, length, t))
        dx, dy = direction.step
        pos = g.wrap(pos.x + dx * length, pos.y + dy * length)
        t += length
    return out


@dataclass(frozen=True)
class LevyTable:
    """Sampling tables for distance-decay destination choice on one grid.

    Nodes at equal distance from the agent are interchangeable, so we
    group the n^2 - 1 candidate displacements by distance class. A draw
    picks a class by its cumulative weight count(d) * d^(-alpha), then a
    uniform member of the class.
    """

    n: int
    alpha: float
    distances: np.ndarray  # (K,) distance value of each class
    counts: np.ndarray  # (K,) nodes in each class
    cum_weights: np.ndarray  # (K,) cumulative class weights
    class_start: np.ndarray  # (K+1,) offsets into the displacement arrays
    off_x: np.ndarray  # (n^2-1,) displacement x per node, grouped by class
    off_y: np.ndarray

    @property
    def total_weight(self) -> float:
        return float(self.cum_weights[-1])


@lru_cache(maxsize=32)
def levy_table(n: int, alpha: float) -> LevyTable:
    """Precompute distance-class tables for grid side ``n`` and exponent ``alpha``."""
    ox, oy = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ox = ox.ravel()
    oy = oy.ravel()
    keep = ~((ox == 0) & (oy == 0))
    ox = ox[keep].astype(np.int32)
    oy = oy[keep].astype(np.int32)
    d = np.minimum(ox, n - ox).astype(np.int64) + np.minimum(oy, n - oy)
    order = np.lexsort((oy, ox, d))
    ox, oy, d = ox[order], oy[order], d[order]

    distances, first = np.unique(d, return_index=True)
    class_start = np.append(first, d.size).astype(np.int64)
    counts = np.diff(class_start)
    weights = counts * np.power(distances.astype(np.float64), -float(alpha))
    return LevyTable(
        n=n,
        alpha=float(alpha),
        distances=distances.astype(np.int64),
        counts=counts.astype(np.int64),
        cum_weights=np.cumsum(weights),
        class_start=class_start,
        off_x=ox,
        off_y=oy,
    )


def sample_destination_levy(
    p: Position, lp: LevyParams, g: TorusGrid, rng: RawStream
) -> Position:
    """Destination with probability proportional to distance^(-alpha).

    Sampling cost is O(#distance classes) after the cached O(n^2) table
    build; the protocol is one ``unit()`` for the class then one
    ``bounded(count)`` for the member.
    """
    table = levy_table(g.n, lp.alpha)
    target = rng.unit() * table.total_weight
    cum = table.cum_weights
    k = 0
    last = len(cum) - 1
    while k < last and target >= cum[k]:
        k += 1
    j = rng.bounded(int(table.counts[k]))
    idx = int(table.class_start[k]) + j
    return g.wrap(p.x + int(table.off_x[idx]), p.y + int(table.off_y[idx]))


def sample_destination(
    p: Position, policy: MobilityPolicy, g: TorusGrid, rng: RawStream
) -> Position:
    """Destination draw for any waypoint-style policy."""
    if policy.kind is PolicyKind.LEVY_WALK:
        return sample_destination_levy(p, policy.levy, g, rng)
    return sample_destination_uniform(p, g, rng)
