"""Deforming sensor network: stations, adjacency, drift and edge bookkeeping.

The station set is fixed for a mission; only positions (drifting stations)
and edge `used` flags change.  Snapshots are immutable: drift and consume
return new Network values, so planners always see a consistent world.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace

import numpy as np

from .env import ClusteredMap, VortexField, current_at
from .errors import (AlreadyUsedError, CoastalPlacementError, NoSuchEdgeError,
                     UnreachableGoalError)

# Rejection-resampling budget for one drift event before a station holds still.
_DRIFT_ATTEMPTS = 100


@dataclass(frozen=True)
class Station:
    id: int
    position: tuple[float, float, float]
    kind: str  # 'fixed' or 'drifting'
    value: float = 0.0
    drift_bound: tuple[float, float, float] = (0.0, 0.0, 0.0)
    drift_sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("fixed", "drifting"):
            raise ValueError(f"unknown station kind {self.kind!r}")
        if self.value < 0:
            raise ValueError("station value must be >= 0")


def _pair(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Network:
    """Immutable network snapshot.

    `edges` holds every undirected pair ever defined; `used` the consumed
    subset.  `anchors` keeps the original positions that bound drift.
    """

    stations: dict[int, Station]
    edges: frozenset[tuple[int, int]]
    start_id: int
    goal_id: int
    anchors: dict[int, tuple[float, float, float]]
    used: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        for sid in (self.start_id, self.goal_id):
            if sid not in self.stations:
                raise ValueError(f"station {sid} not defined")
            if self.stations[sid].kind != "fixed":
                raise ValueError("start and goal stations must be fixed")
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self edge on station {i}")
            if i not in self.stations or j not in self.stations:
                raise ValueError(f"edge ({i},{j}) references missing station")

    @property
    def size(self) -> int:
        return len(self.stations)

    def position(self, sid: int) -> np.ndarray:
        return np.asarray(self.stations[sid].position, dtype=float)

    def has_edge(self, i: int, j: int) -> bool:
        return _pair(i, j) in self.edges

    def is_used(self, i: int, j: int) -> bool:
        return _pair(i, j) in self.used

    def available_adjacency(self) -> dict[int, list[int]]:
        """Neighbor lists over unused edges, neighbors sorted by id."""
        adj: dict[int, list[int]] = {sid: [] for sid in self.stations}
        for i, j in self.edges:
            if (i, j) in self.used:
                continue
            adj[i].append(j)
            adj[j].append(i)
        for lst in adj.values():
            lst.sort()
        return adj

    def goal_reachable(self, from_id: int | None = None) -> bool:
        """BFS over unused edges from `from_id` (default: start) to goal."""
        src = self.start_id if from_id is None else from_id
        adj = self.available_adjacency()
        seen = {src}
        frontier = [src]
        while frontier:
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if v not in seen:
                        seen.add(v)
                        nxt.append(v)
            frontier = nxt
        return self.goal_id in seen


def edge_metrics(network: Network, i: int, j: int, speed: float) -> tuple[float, float]:
    """(distance m, traversal time s) for edge (i, j) at the current positions."""
    if not network.has_edge(i, j):
        raise NoSuchEdgeError(f"no edge between stations {i} and {j}")
    if speed <= 0:
        raise ValueError("speed must be > 0")
    d = float(np.linalg.norm(network.position(i) - network.position(j)))
    return d, d / speed


def consume_edge(network: Network, i: int, j: int) -> Network:
    """Mark edge (i, j) used; used edges never appear in later route decoding."""
    p = _pair(i, j)
    if p not in network.edges:
        raise NoSuchEdgeError(f"no edge between stations {i} and {j}")
    if p in network.used:
        raise AlreadyUsedError(f"edge ({i},{j}) already consumed")
    return replace(network, used=network.used | {p})


def shortest_times_to(network: Network, target: int, speed: float,
                      blocked: frozenset[tuple[int, int]] = frozenset()) -> dict[int, float]:
    """Dijkstra over unused edges: minimum traversal time from every station to target."""
    adj = network.available_adjacency()
    dist = {target: 0.0}
    heap = [(0.0, target)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, math.inf):
            continue
        pu = network.position(u)
        for v in adj[u]:
            if _pair(u, v) in blocked:
                continue
            nd = d + float(np.linalg.norm(pu - network.position(v))) / speed
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def shortest_path(network: Network, src: int, dst: int, speed: float,
                  blocked: frozenset[tuple[int, int]] = frozenset()) -> list[int] | None:
    """Minimum-time station sequence src..dst over unused edges, or None."""
    adj = network.available_adjacency()
    dist = {src: 0.0}
    prev: dict[int, int] = {}
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if u == dst:
            break
        if d > dist.get(u, math.inf):
            continue
        pu = network.position(u)
        for v in adj[u]:
            if _pair(u, v) in blocked:
                continue
            nd = d + float(np.linalg.norm(pu - network.position(v))) / speed
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    if dst not in dist:
        return None
    path = [dst]
    while path[-1] != src:
        path.append(prev[path[-1]])
    return path[::-1]


def drift_stations(network: Network, fld: VortexField, cmap: ClusteredMap,
                   rng: np.random.Generator) -> Network:
    """One drift event: every drifting station jitters and rides the current.

    Per-axis jitter ~ N(0, sigma^2) plus the horizontal current vector at the
    station; the combined move is rejection-resampled until the new position
    stays inside the per-axis bound box around the anchor and off the coast.
    After 100 failed attempts the station holds its position.  Fixed stations
    are returned unchanged.  Stations are processed in id order so a single
    rng stream reproduces exactly.
    """
    new_stations = dict(network.stations)
    for sid in sorted(network.stations):
        st = network.stations[sid]
        if st.kind != "drifting":
            continue
        anchor = np.asarray(network.anchors[sid], dtype=float)
        pos = np.asarray(st.position, dtype=float)
        cur = current_at(pos[:2], fld)
        drift = np.array([cur.v_cx, cur.v_cy, 0.0])
        bound = np.asarray(st.drift_bound, dtype=float)
        for _ in range(_DRIFT_ATTEMPTS):
            jitter = rng.normal(0.0, st.drift_sigma, size=3) if st.drift_sigma > 0 else np.zeros(3)
            cand = pos + jitter + drift
            if np.any(np.abs(cand - anchor) > bound):
                continue
            if not (0.0 <= cand[2] <= cmap.grid.depth_extent):
                continue
            if not cmap.is_water(cand[0], cand[1], padded=True):
                continue
            new_stations[sid] = replace(st, position=(float(cand[0]), float(cand[1]), float(cand[2])))
            break
    return replace(network, stations=new_stations)


def _clear_chord(cmap: ClusteredMap, a: np.ndarray, b: np.ndarray) -> bool:
    """True when the horizontal segment a-b stays over water cells."""
    steps = max(2, int(math.ceil(np.hypot(b[0] - a[0], b[1] - a[1]) / cmap.grid.cell_size)))
    fr = np.linspace(0.0, 1.0, steps)
    xs = a[0] + fr * (b[0] - a[0])
    ys = a[1] + fr * (b[1] - a[1])
    cs = cmap.grid.cell_size
    cols = np.clip((xs / cs).astype(np.int64), 0, cmap.grid.width - 1)
    rows = np.clip((ys / cs).astype(np.int64), 0, cmap.grid.height - 1)
    return not np.any(cmap.occupancy[rows, cols] == 1)


def build_network(cmap: ClusteredMap, rng: np.random.Generator, *,
                  station_count: int | None = None,
                  records: list[dict] | None = None,
                  start: int = 1, goal: int | None = None,
                  value_range: tuple[int, int] = (1, 5),
                  drifting_fraction: float = 0.5,
                  drift_bound: tuple[float, float, float] = (300.0, 300.0, 50.0),
                  drift_sigma: float = 40.0,
                  comm_range: float | None = 3500.0,
                  explicit_edges: list[tuple[int, int]] | None = None,
                  line_of_sight: bool = True,
                  depth: float | None = None,
                  max_attempts: int = 20) -> Network:
    """Build a network from explicit records or a random recipe.

    Random stations are uniform over the water volume (resampled off the
    coast); adjacency is either the explicit edge list or the comm-range rule,
    which by default also requires a land-free chord between the stations.
    Raises CoastalPlacementError for explicit coast positions and
    UnreachableGoalError when no placement attempt connects start to goal.
    """
    extent = cmap.grid.extent
    depth = cmap.grid.depth_extent if depth is None else depth

    def sample_water_point() -> tuple[float, float, float]:
        # Padded test keeps generated stations a cell away from the coast, so
        # every path endpoint clears the planners' conservative coast band.
        for _ in range(10_000):
            x = rng.uniform(0.0, extent[0])
            y = rng.uniform(0.0, extent[1])
            if cmap.is_water(x, y, padded=True):
                return x, y, float(rng.uniform(0.0, depth))
        raise CoastalPlacementError("could not sample a water cell; map has no water?")

    last_error: Exception | None = None
    for _ in range(max_attempts):
        stations: dict[int, Station] = {}
        if records is not None:
            for rec in records:
                sid = int(rec["id"])
                if rec.get("position") in (None, "random"):
                    pos = sample_water_point()
                else:
                    pos = tuple(float(c) for c in rec["position"])
                    if not cmap.is_water(pos[0], pos[1]):
                        raise CoastalPlacementError(f"station {sid} at {pos[:2]} is on coast")
                stations[sid] = Station(
                    id=sid, position=pos, kind=rec.get("kind", "fixed"),
                    value=float(rec.get("value", 0)),
                    drift_bound=tuple(rec.get("drift_bound", drift_bound)),
                    drift_sigma=float(rec.get("drift_sigma", drift_sigma)))
            goal_id = goal if goal is not None else max(stations)
        else:
            n = int(station_count)
            goal_id = goal if goal is not None else n
            ids = list(range(1, n + 1))
            n_drift = int(round(drifting_fraction * (n - 2)))
            drifter_ids = set(rng.choice([i for i in ids if i not in (start, goal_id)],
                                         size=n_drift, replace=False).tolist()) if n_drift else set()
            for sid in ids:
                stations[sid] = Station(
                    id=sid, position=sample_water_point(),
                    kind="drifting" if sid in drifter_ids else "fixed",
                    value=float(rng.integers(value_range[0], value_range[1] + 1)),
                    drift_bound=drift_bound, drift_sigma=drift_sigma)

        if explicit_edges is not None:
            edges = frozenset(_pair(int(i), int(j)) for i, j in explicit_edges)
        else:
            edges = set()
            ids = sorted(stations)
            for a in range(len(ids)):
                pa = np.asarray(stations[ids[a]].position)
                for b in range(a + 1, len(ids)):
                    pb = np.asarray(stations[ids[b]].position)
                    d = float(np.linalg.norm(pa - pb))
                    if d <= comm_range and (not line_of_sight or _clear_chord(cmap, pa, pb)):
                        edges.add((ids[a], ids[b]))
            edges = frozenset(edges)

        net = Network(stations=stations, edges=edges, start_id=start, goal_id=goal_id,
                      anchors={sid: st.position for sid, st in stations.items()})
        if net.goal_reachable():
            return net
        last_error = UnreachableGoalError(
            f"goal {goal_id} not reachable from start {start}")
        if records is not None and explicit_edges is not None:
            break  # fully explicit: retrying cannot help
    raise last_error
