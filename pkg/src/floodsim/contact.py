"""Collocation detection between agents at each time step.

Two contact models share one event type:

* radius 0: agents meet when they land on the same node, or when they
  exchange adjacent nodes between consecutive steps (they crossed in the
  middle of the shared edge at half-integer time).
* radius r > 0: agents meet when their torus Manhattan distance is at
  most r at the step boundary.

``detect_contacts`` uses spatial bucketing so the expected cost is
O(M + #pairs); ``detect_contacts_naive`` is the quadratic reference scan
kept for oracle equivalence checks.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .core import Position, TorusGrid, torus_distance

__all__ = [
    "ContactKind",
    "ContactEvent",
    "ContactConfig",
    "detect_contacts",
    "detect_contacts_naive",
    "contact_components",
]


class ContactKind(Enum):
    NODE_COINCIDENCE = "node"
    EDGE_SWAP = "swap"
    RADIUS_PROXIMITY = "radius"


@dataclass(frozen=True, order=True)
class ContactEvent:
    """One meeting between a canonically ordered agent pair (a < b)."""

    time: int
    agent_a: int
    agent_b: int
    kind: ContactKind

    def __post_init__(self):
        if self.agent_a >= self.agent_b:
            raise ValueError("contact pair must satisfy agent_a < agent_b")


@dataclass(frozen=True)
class ContactConfig:
    """Transmission radius in torus Manhattan units; 0 is the collocation model."""

    radius: int = 0

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be >= 0")


def _radius_zero_events(prev, curr, t, g):
    events = set()
    by_node: dict[Position, list[int]] = defaultdict(list)
    for i, pos in enumerate(curr):
        bucket = by_node[pos]
        for j in bucket:
            events.add(ContactEvent(t, j, i, ContactKind.NODE_COINCIDENCE))
        bucket.append(i)

    # Swap detection: b crossed a iff b started where a ended and vice
    # versa, with the two start nodes adjacent (both walked the same edge
    # in opposite directions).
    by_prev: dict[Position, list[int]] = defaultdict(list)
    for i, pos in enumerate(prev):
        by_prev[pos].append(i)
    for i in range(len(curr)):
        for j in by_prev.get(curr[i], ()):
            if j <= i:
                continue
            if prev[i] == curr[j] and torus_distance(prev[i], prev[j], g) == 1:
                events.add(ContactEvent(t, i, j, ContactKind.EDGE_SWAP))
    return events


def _radius_events(curr, radius, t, g):
    n = g.n
    ncell = max(1, n // radius)
    events = set()
    buckets: dict[tuple[int, int], list[int]] = defaultdict(list)
    cells = []
    for i, pos in enumerate(curr):
        cell = (pos.x * ncell // n, pos.y * ncell // n)
        cells.append(cell)
        buckets[cell].append(i)
    for i, pos in enumerate(curr):
        cx, cy = cells[i]
        seen_cells = set()
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                cell = ((cx + dx) % ncell, (cy + dy) % ncell)
                if cell in seen_cells:
                    continue
                seen_cells.add(cell)
                for j in buckets.get(cell, ()):
                    if j >= i:
                        continue
                    if torus_distance(pos, curr[j], g) <= radius:
                        events.add(
                            ContactEvent(t, j, i, ContactKind.RADIUS_PROXIMITY)
                        )
    return events


def detect_contacts(
    prev: Sequence[Position],
    curr: Sequence[Position],
    cfg: ContactConfig,
    g: TorusGrid,
    t: int = 0,
) -> set[ContactEvent]:
    """All contact events at the step ending with positions ``curr``.

    ``prev`` holds the same agents one step earlier (pass ``curr`` itself
    for the initial placement, where no edge can have been crossed yet).
    """
    if len(prev) != len(curr):
        raise ValueError("prev and curr must index the same agent set")
    if cfg.radius == 0:
        return _radius_zero_events(prev, curr, t, g)
    return _radius_events(curr, cfg.radius, t, g)


def detect_contacts_naive(
    prev: Sequence[Position],
    curr: Sequence[Position],
    cfg: ContactConfig,
    g: TorusGrid,
    t: int = 0,
) -> set[ContactEvent]:
    """Quadratic reference scan; must return exactly the bucketed event set."""
    if len(prev) != len(curr):
        raise ValueError("prev and curr must index the same agent set")
    events = set()
    m = len(curr)
    for i in range(m):
        for j in range(i + 1, m):
            if cfg.radius == 0:
                if curr[i] == curr[j]:
                    events.add(
                        ContactEvent(t, i, j, ContactKind.NODE_COINCIDENCE)
                    )
                elif (
                    prev[i] == curr[j]
                    and prev[j] == curr[i]
                    and torus_distance(prev[i], prev[j], g) == 1
                ):
                    events.add(ContactEvent(t, i, j, ContactKind.EDGE_SWAP))
            elif torus_distance(curr[i], curr[j], g) <= cfg.radius:
                events.add(ContactEvent(t, i, j, ContactKind.RADIUS_PROXIMITY))
    return events


def contact_components(
    events: Sequence[ContactEvent] | set[ContactEvent], num_agents: int
) -> list[list[int]]:
    """Partition agents into connected components of the contact graph.

    Agents meeting at the same node at the same instant share transitively
    within the step, so components, not just pairs, define the exchange.
    Uncontacted agents come back as singletons.
    """
    parent = list(range(num_agents))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for ev in events:
        ra, rb = find(ev.agent_a), find(ev.agent_b)
        if ra != rb:
            parent[rb] = ra

    groups: dict[int, list[int]] = defaultdict(list)
    for a in range(num_agents):
        groups[find(a)].append(a)
    return sorted(groups.values())
