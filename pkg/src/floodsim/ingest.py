"""Real-network pipeline: trip records, road graphs, synthetic trajectories,
and GPS-trace replay with radius-based contact detection.

File formats (CSV headers are mandatory, extra columns are ignored):

* stations: ``id,lat,lon``
* trips:    ``origin_id,dest_id``
* traces:   ``agent_id,timestamp,lat,lon`` (timestamp in seconds)
* road graph (JSON): ``{"nodes": [...], "edges": [...]}`` -- see README

Geographic distances are haversine meters on a sphere of radius 6371 km.
Trace contacts happen only at shared sample timestamps, and replayed flood
times are reported in trace time units (the timestamp at which flooding
completes).
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .core import RawStream, derive_run_seed
from .spread import RunRecord, SweepPoint, SweepResult

__all__ = [
    "IngestError",
    "EARTH_RADIUS_M",
    "haversine_m",
    "RoadGraph",
    "Station",
    "TransitionModel",
    "Trace",
    "load_road_graph",
    "load_stations",
    "load_trips",
    "build_transition_model",
    "dijkstra",
    "synth_trajectory",
    "load_traces",
    "filter_by_contact_degree",
    "flood_over_traces",
    "replay_flood",
]

EARTH_RADIUS_M = 6_371_000.0


class IngestError(ValueError):
    """Unusable input file or data that violates a schema requirement."""


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


# ---------------------------------------------------------------------------
# road graph and stations
# ---------------------------------------------------------------------------


@dataclass
class RoadGraph:
    coords: dict[str, tuple[float, float]]
    adj: dict[str, list[tuple[str, float]]]
    _sp_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def nearest_node(self, lat: float, lon: float) -> str:
        return min(
            self.coords,
            key=lambda u: haversine_m(lat, lon, *self.coords[u]),
        )

    def shortest_paths(self, src: str):
        """Cached single-source Dijkstra: (distances, predecessors)."""
        if src not in self._sp_cache:
            self._sp_cache[src] = dijkstra(self.adj, src)
        return self._sp_cache[src]

    def route(self, src: str, dst: str) -> tuple[list[str], float] | None:
        """Node path and its length, or None when unreachable."""
        dist, prev = self.shortest_paths(src)
        if dst not in dist:
            return None
        path = [dst]
        while path[-1] != src:
            path.append(prev[path[-1]])
        path.reverse()
        return path, dist[dst]


def dijkstra(adj: dict, src: str):
    """Plain binary-heap Dijkstra over a nonnegative-weight adjacency map."""
    dist: dict[str, float] = {src: 0.0}
    prev: dict[str, str] = {}
    done: set[str] = set()
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, w in adj.get(u, ()):
            nd = d + w
            if v not in dist or nd < dist[v]:
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, prev


@dataclass(frozen=True)
class Station:
    id: str
    lat: float
    lon: float
    node: str  # nearest road-graph node


def load_road_graph(path) -> RoadGraph:
    """Road graph from JSON with ``nodes`` (id, lat, lon) and ``edges``
    (u, v, length_m) lists; edges are undirected and must have positive length."""
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as exc:
        raise IngestError(f"cannot read graph file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IngestError(f"graph file {path} is not valid JSON: {exc}") from exc
    coords = {}
    for node in raw.get("nodes", []):
        coords[str(node["id"])] = (float(node["lat"]), float(node["lon"]))
    if not coords:
        raise IngestError(f"graph file {path} has no nodes")
    adj: dict[str, list[tuple[str, float]]] = {u: [] for u in coords}
    for e in raw.get("edges", []):
        u, v = str(e["u"]), str(e["v"])
        w = float(e["length_m"])
        if u not in coords or v not in coords:
            raise IngestError(f"edge ({u}, {v}) references an unknown node")
        if w <= 0:
            raise IngestError(f"edge ({u}, {v}) has non-positive length {w}")
        adj[u].append((v, w))
        adj[v].append((u, w))
    return RoadGraph(coords=coords, adj=adj)


def load_stations(path, graph: RoadGraph) -> list[Station]:
    """Stations from ``id,lat,lon`` CSV, snapped to their nearest graph node.

    All stations must land in one connected component of the graph.
    """
    rows = _read_csv(path, ("id", "lat", "lon"))
    stations = []
    for row in rows:
        lat, lon = float(row["lat"]), float(row["lon"])
        stations.append(
            Station(id=str(row["id"]), lat=lat, lon=lon,
                    node=graph.nearest_node(lat, lon))
        )
    if not stations:
        raise IngestError(f"station file {path} has no rows")
    dist, _ = graph.shortest_paths(stations[0].node)
    unreachable = [s.id for s in stations if s.node not in dist]
    if unreachable:
        raise IngestError(
            "stations not connected through the road graph: "
            + ", ".join(unreachable)
        )
    return stations


def _read_csv(path, required: tuple[str, ...]) -> list[dict]:
    try:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None:
                raise IngestError(f"{path} is empty")
            missing = [c for c in required if c not in reader.fieldnames]
            if missing:
                raise IngestError(
                    f"{path} is missing required columns: {', '.join(missing)}"
                )
            return list(reader)
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# trips and the station-transition model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TripLoadReport:
    n_valid: int
    n_unknown: int
    unknown_ids: tuple[str, ...]


def load_trips(path, station_ids) -> tuple[list[tuple[str, str]], TripLoadReport]:
    """(origin, destination) station pairs from an ``origin_id,dest_id`` CSV.

    Rows naming unknown stations are dropped and summarized in the report;
    a file with no valid rows is an error.
    """
    known = set(station_ids)
    rows = _read_csv(path, ("origin_id", "dest_id"))
    trips = []
    unknown: list[str] = []
    for row in rows:
        o, d = str(row["origin_id"]), str(row["dest_id"])
        bad = [s for s in (o, d) if s not in known]
        if bad:
            unknown.extend(bad)
            continue
        trips.append((o, d))
    if not trips:
        raise IngestError(f"{path} contains no valid trips")
    report = TripLoadReport(
        n_valid=len(trips),
        n_unknown=len(unknown),
        unknown_ids=tuple(sorted(set(unknown))),
    )
    return trips, report


@dataclass(frozen=True)
class TransitionModel:
    """Empirical first-order station chain: start distribution and
    row-stochastic destination matrix."""

    stations: tuple[str, ...]
    initiation: np.ndarray
    transition: np.ndarray
    backfilled: tuple[str, ...]  # stations with no outgoing trips

    def index(self, station_id: str) -> int:
        return self.stations.index(station_id)


def build_transition_model(trips, station_ids) -> TransitionModel:
    """Count-based estimates of start and destination probabilities.

    Stations with no outgoing trips get a uniform row over the other
    stations (and are flagged), which keeps every synthetic trajectory
    extendable forever.
    """
    stations = tuple(station_ids)
    if not trips:
        raise IngestError("no trips to build a transition model from")
    k = len(stations)
    idx = {s: i for i, s in enumerate(stations)}
    starts = np.zeros(k)
    counts = np.zeros((k, k))
    for o, d in trips:
        starts[idx[o]] += 1
        counts[idx[o], idx[d]] += 1

    initiation = starts / starts.sum()
    transition = np.zeros((k, k))
    backfilled = []
    for i in range(k):
        row_sum = counts[i].sum()
        if row_sum > 0:
            transition[i] = counts[i] / row_sum
        else:
            backfilled.append(stations[i])
            if k > 1:
                transition[i] = 1.0 / (k - 1)
                transition[i, i] = 0.0
            else:
                transition[i, i] = 1.0
    return TransitionModel(
        stations=stations,
        initiation=initiation,
        transition=transition,
        backfilled=tuple(backfilled),
    )


# ---------------------------------------------------------------------------
# trajectory synthesis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trace:
    agent_id: str
    times: np.ndarray  # seconds, strictly increasing
    lats: np.ndarray
    lons: np.ndarray

    def __len__(self) -> int:
        return len(self.times)


def _categorical(stream: RawStream, weights: np.ndarray) -> int:
    target = stream.unit() * float(weights.sum())
    acc = 0.0
    for i, w in enumerate(weights):
        acc += float(w)
        if target < acc:
            return i
    return len(weights) - 1


def synth_trajectory(
    stations: list[Station],
    graph: RoadGraph,
    policy: str,
    model: TransitionModel | None,
    speed_mps: float,
    duration_s: float,
    stream: RawStream,
    agent_id: str = "0",
    interval_s: float = 60.0,
    max_retries: int = 20,
) -> Trace:
    """Constant-speed trajectory over road shortest paths between stations.

    ``policy`` is ``"rwp"`` (every station drawn uniformly) or ``"data"``
    (start from the model's initiation vector, walk its transition rows).
    A transition back to the current station is a dwell of one sampling
    interval. Samples are emitted every ``interval_s`` seconds from 0 to
    ``duration_s``.
    """
    if speed_mps <= 0 or duration_s <= 0:
        raise ValueError("speed and duration must be positive")
    if policy not in ("rwp", "data"):
        raise ValueError(f"unknown synthesis policy {policy!r}")
    if policy == "data" and model is None:
        raise ValueError("the data policy requires a transition model")
    k = len(stations)
    if k < 2:
        raise ValueError("need at least two stations")
    by_id = {s.id: s for s in stations}

    def draw_next(cur: Station) -> Station:
        if policy == "data":
            row = model.transition[model.index(cur.id)]
            return by_id[model.stations[_categorical(stream, row)]]
        j = stream.bounded(k - 1)
        cur_pos = stations.index(cur)
        if j >= cur_pos:
            j += 1
        return stations[j]

    if policy == "data":
        cur_station = by_id[model.stations[_categorical(stream, model.initiation)]]
    else:
        cur_station = stations[stream.bounded(k)]

    # piecewise-linear breakpoints (t, lat, lon)
    t = 0.0
    node_lat, node_lon = graph.coords[cur_station.node]
    points = [(t, node_lat, node_lon)]
    while t <= duration_s:
        nxt_station = draw_next(cur_station)

        if nxt_station.id == cur_station.id:
            t += interval_s
            lat, lon = points[-1][1], points[-1][2]
            points.append((t, lat, lon))
            continue

        res = graph.route(cur_station.node, nxt_station.node)
        retries = 0
        while res is None:
            retries += 1
            if retries > max_retries:
                raise IngestError(
                    f"no route from {cur_station.id} toward a destination "
                    f"after {max_retries} attempts"
                )
            nxt_station = draw_next(cur_station)
            if nxt_station.id == cur_station.id:
                continue
            res = graph.route(cur_station.node, nxt_station.node)
        path, _length = res
        for u, v in zip(path, path[1:]):
            step = 0.0
            for vv, w in graph.adj[u]:
                if vv == v:
                    step = w
                    break
            t += step / speed_mps
            lat, lon = graph.coords[v]
            points.append((t, lat, lon))
        cur_station = nxt_station

    times = np.arange(0.0, duration_s + 1e-9, interval_s)
    bt = np.array([p[0] for p in points])
    blat = np.array([p[1] for p in points])
    blon = np.array([p[2] for p in points])
    lats = np.interp(times, bt, blat)
    lons = np.interp(times, bt, blon)
    return Trace(agent_id=str(agent_id), times=times, lats=lats, lons=lons)


# ---------------------------------------------------------------------------
# GPS traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceLoadReport:
    n_traces: int
    n_dropped: int
    dropped_ids: tuple[str, ...]


def load_traces(path) -> tuple[list[Trace], TraceLoadReport]:
    """Time-sorted traces grouped by agent; single-sample agents are dropped.

    Duplicate (agent, timestamp) rows keep the first occurrence.
    """
    rows = _read_csv(path, ("agent_id", "timestamp", "lat", "lon"))
    grouped: dict[str, list[tuple[float, float, float]]] = defaultdict(list)
    for row in rows:
        grouped[str(row["agent_id"])].append(
            (float(row["timestamp"]), float(row["lat"]), float(row["lon"]))
        )
    traces = []
    dropped = []
    for agent in sorted(grouped):
        samples = sorted(grouped[agent], key=lambda s: s[0])
        dedup = [samples[0]] if samples else []
        for s in samples[1:]:
            if s[0] != dedup[-1][0]:
                dedup.append(s)
        if len(dedup) < 2:
            dropped.append(agent)
            continue
        arr = np.array(dedup)
        traces.append(
            Trace(agent_id=agent, times=arr[:, 0], lats=arr[:, 1], lons=arr[:, 2])
        )
    if not traces:
        raise IngestError(f"{path} contains no usable traces")
    report = TraceLoadReport(
        n_traces=len(traces), n_dropped=len(dropped), dropped_ids=tuple(dropped)
    )
    return traces, report


def _pairs_within(points, radius_m: float):
    """Index pairs (i < j) of points (idx, lat, lon) within ``radius_m``.

    Bucketed by a degree grid whose cells are at least one radius wide, so
    only the 3x3 neighborhood needs exact haversine checks.
    """
    if len(points) < 2:
        return []
    min_cos = max(
        0.05, min(math.cos(math.radians(p[1])) for p in points)
    )
    dlat = radius_m / 110_574.0 * 1.01
    dlon = radius_m / (111_320.0 * min_cos) * 1.01
    buckets: dict[tuple[int, int], list] = defaultdict(list)
    for p in points:
        buckets[(int(math.floor(p[1] / dlat)), int(math.floor(p[2] / dlon)))].append(p)
    pairs = []
    for (cx, cy), members in buckets.items():
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                other = buckets.get((cx + dx, cy + dy))
                if other is None:
                    continue
                for a in members:
                    for b in other:
                        if a[0] >= b[0]:
                            continue
                        if haversine_m(a[1], a[2], b[1], b[2]) <= radius_m:
                            pairs.append((a[0], b[0]))
    return sorted(set(pairs))


def _time_index(traces) -> dict[float, list]:
    index: dict[float, list] = defaultdict(list)
    for i, tr in enumerate(traces):
        for t, lat, lon in zip(tr.times, tr.lats, tr.lons):
            index[float(t)].append((i, float(lat), float(lon)))
    return index


def filter_by_contact_degree(traces, radius_m: float, min_distinct: int):
    """Keep agents that meet at least ``min_distinct`` distinct partners.

    A meeting is a shared sample timestamp with haversine distance at most
    ``radius_m``.
    """
    if radius_m <= 0:
        raise ValueError("radius must be positive")
    partners: dict[int, set[int]] = defaultdict(set)
    for _t, pts in sorted(_time_index(traces).items()):
        for i, j in _pairs_within(pts, radius_m):
            partners[i].add(j)
            partners[j].add(i)
    return [tr for i, tr in enumerate(traces) if len(partners[i]) >= min_distinct]


def flood_over_traces(traces, radius_m: float) -> float | None:
    """Flood time of one bit-per-agent dissemination over fixed traces.

    Contacts happen only at shared sample timestamps; exchanges are
    transitive within a timestamp (contact components). Returns the
    timestamp at which every agent knows every bit, or None if the traces
    end first (censored).
    """
    m = len(traces)
    if m == 0:
        raise ValueError("no traces")
    index = _time_index(traces)
    times = sorted(index)
    if m == 1:
        return times[0]
    masks = [1 << i for i in range(m)]
    full = (1 << m) - 1
    n_full = 0
    for t in times:
        pairs = _pairs_within(index[t], radius_m)
        if not pairs:
            continue
        parent = list(range(m))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j in pairs:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[rj] = ri
        comps: dict[int, list[int]] = defaultdict(list)
        for i, j in pairs:
            comps.setdefault(find(i), [])
        for a in range(m):
            r = find(a)
            if r in comps:
                comps[r].append(a)
        for members in comps.values():
            union = 0
            for a in members:
                union |= masks[a]
            for a in members:
                masks[a] = union
        n_full = sum(1 for msk in masks if msk == full)
        if n_full == m:
            return float(t)
    return None


def replay_flood(
    traces, radius_m: float, m_subsample: int, reps: int, seed: int = 0
) -> SweepResult:
    """Flood times of ``reps`` uniform subsamples of ``m_subsample`` traces."""
    if m_subsample > len(traces):
        raise ValueError(
            f"cannot subsample {m_subsample} of {len(traces)} traces"
        )
    if reps < 1:
        raise ValueError("reps must be >= 1")
    runs = []
    for rep in range(reps):
        run_seed = derive_run_seed(seed, 0, rep)
        rng = np.random.default_rng(run_seed)
        chosen = rng.choice(len(traces), size=m_subsample, replace=False)
        ft = flood_over_traces([traces[i] for i in chosen], radius_m)
        runs.append(
            RunRecord(
                param="m", value=m_subsample, rep=rep, seed=run_seed,
                flood_time=ft,
            )
        )
    point = SweepPoint(param="m", value=m_subsample, runs=runs)
    return SweepResult(points=[point], master_seed=seed)
