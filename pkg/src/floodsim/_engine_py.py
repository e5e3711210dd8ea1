"""Pure-Python realization engine.

This is the fallback backend used when the compiled kernel is unavailable
(and the readable reference it is tested against). Given the same seed the
two engines follow the exact same draw protocol and produce bit-identical
results; see ``core.RawStream`` for the protocol.
"""

from __future__ import annotations

import numpy as np

from .contact import ContactConfig, contact_components, detect_contacts
from .core import Position, RawStream, TorusGrid, agent_streams
from .mobility import (
    LevyParams,
    MobilityPolicy,
    PolicyKind,
    mrwp_build_move,
    rw_step,
    sample_destination,
)

# Backend policy codes, shared with the compiled kernel.
POLICY_RW = 0
POLICY_WAYPOINT = 1
POLICY_LEVY = 2

BACKEND_NAME = "python"


def run_grid_realization(
    n: int,
    m: int,
    policy: int,
    alpha: float,
    radius: int,
    max_steps: int,
    seed: int,
    check_invariants: bool = False,
):
    """Run one seeded dissemination realization on an n x n torus.

    Returns ``(flood_time, broadcast_times, contact_count, steps_run)``
    with -1 standing for "not reached before max_steps" (censored).
    """
    g = TorusGrid(n)
    cfg = ContactConfig(radius)
    streams = [RawStream(bg) for bg in agent_streams(seed, m)]
    if policy == POLICY_LEVY:
        pol = MobilityPolicy(PolicyKind.LEVY_WALK, LevyParams(alpha))
    else:
        pol = MobilityPolicy(PolicyKind.MANHATTAN_WAYPOINT)

    pos = [Position(st.bounded(n), st.bounded(n)) for st in streams]
    # Per-agent move state: list of [dx, dy, remaining] legs, consumed in order.
    legs: list[list[list[int]]] = [[] for _ in range(m)]

    info = [1 << i for i in range(m)]
    knower = [1] * m
    broadcast = [-1] * m
    total_known = m
    target_known = m * m
    if m == 1:
        broadcast[0] = 0
    contact_count = 0

    def share(events, t) -> bool:
        nonlocal total_known, contact_count
        contact_count += len(events)
        if not events:
            return total_known == target_known
        for comp in contact_components(events, m):
            if len(comp) < 2:
                continue
            union = 0
            for a in comp:
                union |= info[a]
            for a in comp:
                gained = union & ~info[a]
                if gained:
                    total_known += gained.bit_count()
                    while gained:
                        b = (gained & -gained).bit_length() - 1
                        knower[b] += 1
                        if knower[b] == m:
                            broadcast[b] = t
                        gained &= gained - 1
                    info[a] = union
            if check_invariants:
                assert all(info[a] == union for a in comp)
        return total_known == target_known

    flood = -1
    steps_run = 0
    flooded = share(detect_contacts(pos, pos, cfg, g, 0), 0)
    if flooded:
        flood = 0
    else:
        for t in range(1, max_steps + 1):
            prev = pos[:]
            for i in range(m):
                if policy == POLICY_RW:
                    pos[i] = rw_step(pos[i], g, streams[i])
                    continue
                lg = legs[i]
                if not lg:
                    dest = sample_destination(pos[i], pol, g, streams[i])
                    move = mrwp_build_move(pos[i], dest, t - 1, g, streams[i])
                    lg = [
                        [d.step[0], d.step[1], length] for d, length in move.legs
                    ]
                    legs[i] = lg
                head = lg[0]
                pos[i] = g.wrap(pos[i].x + head[0], pos[i].y + head[1])
                head[2] -= 1
                if head[2] == 0:
                    lg.pop(0)
            if check_invariants:
                own_ok = all(info[i] >> i & 1 for i in range(m))
                assert own_ok, "agent lost its own bit"
            if share(detect_contacts(prev, pos, cfg, g, t), t):
                flood = t
                steps_run = t
                break
        else:
            steps_run = max_steps

    if flood == 0:
        steps_run = 0
    return flood, np.asarray(broadcast, dtype=np.int64), contact_count, steps_run
