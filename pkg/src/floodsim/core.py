"""Torus geometry, positions, and deterministic randomness plumbing.

Everything downstream (mobility, contact detection, dissemination runs)
builds on the two primitives here: integer lattice geometry with wrap-around
on both axes, and per-agent random substreams with an exact draw protocol.

The draw protocol matters because the simulation engine exists twice, once
in pure Python and once as a compiled kernel. Both consume raw 64-bit words
from numpy bit generators through the same three primitives (``raw``,
``bounded``, ``unit``), in the same order, so a fixed seed produces
bit-identical trajectories on either engine.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "TorusGrid",
    "Position",
    "RawStream",
    "torus_distance",
    "axis_displacement",
    "agent_streams",
    "derive_run_seed",
]

# Scale factor mapping the top 53 bits of a draw onto [0, 1).
_INV_2_53 = 1.0 / 9007199254740992.0


class Position(NamedTuple):
    """Lattice node, always reduced modulo the grid side on both axes."""

    x: int
    y: int


@dataclass(frozen=True)
class TorusGrid:
    """Square grid of ``n`` x ``n`` nodes with wrap-around adjacency.

    Every node has exactly four neighbors; there is no boundary.
    """

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"grid side must be >= 2, got {self.n}")

    def wrap(self, x: int, y: int) -> Position:
        return Position(x % self.n, y % self.n)

    def contains(self, p: Position) -> bool:
        return 0 <= p.x < self.n and 0 <= p.y < self.n


def _axis_dist(a: int, b: int, n: int) -> int:
    raw = (b - a) % n
    return raw if raw <= n - raw else n - raw


def torus_distance(p: Position, q: Position, g: TorusGrid) -> int:
    """Manhattan distance with wrap-around on both axes.

    Symmetric, satisfies the triangle inequality, and is zero iff p == q.
    """
    return _axis_dist(p.x, q.x, g.n) + _axis_dist(p.y, q.y, g.n)


def axis_displacement(
    p: Position, q: Position, g: TorusGrid
) -> tuple[int, int, tuple[bool, bool]]:
    """Shortest signed per-axis displacement from ``p`` to ``q``.

    Returns ``(dx, dy, (tie_x, tie_y))`` where ``|dx|`` is the per-axis
    wrap distance and the sign gives the shorter travel direction
    (positive means increasing coordinate). When the two directions are
    equally long (``|raw| == n/2``) the tie flag is set and the sign is
    reported positive; callers that build paths break the tie themselves.
    """
    n = g.n
    out = []
    ties = []
    for a, b in ((p.x, q.x), (p.y, q.y)):
        raw = (b - a) % n
        back = n - raw
        if raw == 0:
            out.append(0)
            ties.append(False)
        elif raw < back:
            out.append(raw)
            ties.append(False)
        elif raw > back:
            out.append(-back)
            ties.append(False)
        else:
            out.append(raw)
            ties.append(True)
    return out[0], out[1], (ties[0], ties[1])


class RawStream:
    """Draw primitives over one numpy bit generator.

    This is the single source of randomness for an agent. The three
    operations below define the exact word-consumption protocol shared
    with the compiled kernel:

    * ``raw()``: one 64-bit word from the generator.
    * ``bounded(k)``: integer in ``[0, k)`` by masked rejection on the low
      bits; ``k <= 1`` returns 0 without consuming a word.
    * ``unit()``: float64 in ``[0, 1)`` from the top 53 bits of one word.
    """

    __slots__ = ("bit_generator", "_raw")

    def __init__(self, bit_generator):
        self.bit_generator = bit_generator
        self._raw = bit_generator.random_raw

    def raw(self) -> int:
        return int(self._raw())

    def bounded(self, k: int) -> int:
        if k <= 1:
            return 0
        mask = (1 << (k - 1).bit_length()) - 1
        while True:
            v = self.raw() & mask
            if v < k:
                return v

    def unit(self) -> float:
        return (self.raw() >> 11) * _INV_2_53

    def bit(self) -> int:
        return self.bounded(2)


def agent_streams(seed: int, m: int) -> list:
    """Independent per-agent bit generators for one realization.

    Agent ``i`` gets ``PCG64(SeedSequence(seed, spawn_key=(i,)))``, so the
    substream depends only on the master seed and the agent id. This is
    what makes results independent of agent iteration order and thread
    scheduling.
    """
    return [
        np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(i,)))
        for i in range(m)
    ]


def derive_run_seed(master_seed: int, point_index: int, rep: int) -> int:
    """Stable 64-bit seed for realization ``rep`` of sweep point ``point_index``.

    Re-running a single realization outside the sweep only needs this seed,
    the rest of the derivation stays inside the realization itself.
    """
    ss = np.random.SeedSequence(master_seed, spawn_key=(point_index, rep))
    return int(ss.generate_state(1, np.uint64)[0])
