"""Route-level planner: random keys over stations, greedy constrained decoding,
and a time-budget/value cost driving the DE search.

A genome is one key in [0, 1] per station.  Decoding walks the network from
the start, always following the unused edge toward the highest-keyed
neighbor, and diverts onto the minimum-time path to the goal as soon as the
running time estimate (plus that shortest remainder) would overrun the
budget.  Decoded walks never repeat an edge and always terminate.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from . import de
from .errors import NoFeasibleRouteError, UndecodableError, UnreachableGoalError
from .network import Network, _pair, shortest_times_to

# Any overtime route must cost more than any on-budget one; the value term is
# bounded by the station count, so a weight of 100 with a constant floor
# dominates networks of up to ~99 stations.
OVERTIME_WEIGHT = 100.0


@dataclass(frozen=True)
class Route:
    """A feasible start-to-goal edge walk with its aggregate metrics."""

    sequence: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    distance: float
    time: float
    total_value: float
    station_total: int  # network size; normalizes the value term of the cost

    @property
    def stations_visited(self) -> int:
        return len(set(self.sequence))


def _dijkstra(adj: dict[int, list[tuple[int, float]]], src: int,
              blocked: set[tuple[int, int]]) -> tuple[dict[int, float], dict[int, int]]:
    """Times and predecessors from src over the weighted adjacency, minus blocked pairs."""
    dist = {src: 0.0}
    prev: dict[int, int] = {}
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, math.inf):
            continue
        for v, t in adj[u]:
            if ((u, v) if u < v else (v, u)) in blocked:
                continue
            nd = d + t
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, prev


def decode_route(keys: np.ndarray, network: Network, start: int, goal: int,
                 time_budget: float, speed: float,
                 visited: frozenset[int] = frozenset()) -> Route:
    """Decode a key vector into a route; raises UndecodableError when cut off.

    The budget check against the remaining shortest path uses a table
    precomputed over the network's unused edges; edges consumed within the
    walk are not re-blocked there (the overtime penalty absorbs the rare
    decode this lets slip past the budget).  `visited` marks stations whose
    value was already collected in earlier legs; they contribute nothing to
    this route's value.
    """
    ids = sorted(network.stations)
    key_of = {sid: float(keys[i]) for i, sid in enumerate(ids)}
    pos = {sid: tuple(network.stations[sid].position) for sid in ids}

    adj: dict[int, list[tuple[int, float]]] = {sid: [] for sid in ids}
    dist_of: dict[tuple[int, int], float] = {}
    for i, j in network.edges:
        if (i, j) in network.used:
            continue
        pi, pj = pos[i], pos[j]
        d = math.sqrt((pi[0] - pj[0]) ** 2 + (pi[1] - pj[1]) ** 2 + (pi[2] - pj[2]) ** 2)
        dist_of[(i, j)] = d
        t = d / speed
        adj[i].append((j, t))
        adj[j].append((i, t))
    for lst in adj.values():
        lst.sort()

    to_goal = _dijkstra(adj, goal, set())[0]

    used: set[tuple[int, int]] = set()
    seq = [start]
    elapsed = 0.0
    distance = 0.0

    while seq[-1] != goal:
        cur = seq[-1]
        moved = False
        nbrs = [m for m, _ in adj[cur] if ((cur, m) if cur < m else (m, cur)) not in used]
        if nbrs:
            # Highest key wins; ties resolve to the lower id.
            m = max(nbrs, key=lambda s: (key_of[s], -s))
            p = (cur, m) if cur < m else (m, cur)
            step_d = dist_of[p]
            if elapsed + step_d / speed + to_goal.get(m, math.inf) <= time_budget:
                used.add(p)
                seq.append(m)
                elapsed += step_d / speed
                distance += step_d
                moved = True
        if not moved:
            # Divert: minimum-time path to the goal over what is left.
            dist, prev = _dijkstra(adj, cur, used)
            if goal not in dist:
                raise UndecodableError(f"goal {goal} unreachable from {cur}")
            tail = [goal]
            while tail[-1] != cur:
                tail.append(prev[tail[-1]])
            for nxt in tail[-2::-1]:
                prev_node = seq[-1]
                p = (prev_node, nxt) if prev_node < nxt else (nxt, prev_node)
                used.add(p)
                d = dist_of[p]
                seq.append(nxt)
                elapsed += d / speed
                distance += d
            break

    value = 0.0
    seen = set(visited) | {start}
    edges = []
    for a, b in zip(seq, seq[1:]):
        edges.append(_pair(a, b))
        if b not in seen:
            value += network.stations[b].value
            seen.add(b)
    return Route(sequence=tuple(seq), edges=tuple(edges), distance=distance,
                 time=distance / speed, total_value=value, station_total=network.size)


def route_cost(route: Route | None, time_budget: float) -> float:
    """Budget-gap plus inverse-value cost; overtime is penalized past feasibility.

    None (undecodable) scores +inf.  The overtime term carries a constant
    floor so that even a marginally overtime route costs more than any
    on-budget route regardless of the value assignment.
    """
    if route is None:
        return math.inf
    gap = abs(route.time - time_budget) / time_budget
    value_term = route.station_total / (route.total_value + 1.0)
    over = max(0.0, (route.time - time_budget) / time_budget)
    penalty = OVERTIME_WEIGHT * (1.0 + over) if over > 0.0 else 0.0
    return gap + value_term + penalty


@dataclass
class GlobalPlan:
    route: Route
    cost: float
    traces: list[list[float]]  # best-cost-per-generation series, one per restart
    genes: np.ndarray


def plan_global(network: Network, start: int, goal: int, time_budget: float, speed: float,
                config: de.DEConfig, restarts: int = 3,
                rng: np.random.Generator | None = None,
                visited: frozenset[int] = frozenset()) -> GlobalPlan:
    """Best route over `restarts` independent DE runs.

    Raises NoFeasibleRouteError when even the minimum-time start-to-goal route
    exceeds the budget.  Decoding is memoized on the ranking of the keys: two
    genomes ordering the stations identically decode to the same route.
    """
    if time_budget <= 0:
        raise ValueError("time_budget must be > 0")
    sp = shortest_times_to(network, goal, speed)
    if start not in sp:
        raise UnreachableGoalError(f"goal {goal} unreachable from station {start}")
    if sp[start] > time_budget:
        raise NoFeasibleRouteError(
            f"minimum route time {sp[start]:.0f}s exceeds budget {time_budget:.0f}s")

    n = network.size
    cache: dict[tuple[int, ...], Route | None] = {}

    def evaluate(mat: np.ndarray) -> tuple[np.ndarray, list]:
        # Stable descending order equals the decode's (key desc, id asc)
        # preference exactly, ties included, so equal orderings share a route.
        orders = np.argsort(-mat, axis=1, kind="stable")
        costs = np.empty(mat.shape[0])
        auxes: list = [None] * mat.shape[0]
        for i in range(mat.shape[0]):
            okey = tuple(orders[i].tolist())
            if okey in cache:
                route = cache[okey]
            else:
                try:
                    route = decode_route(mat[i], network, start, goal, time_budget,
                                         speed, visited)
                except UndecodableError:
                    route = None
                cache[okey] = route
            auxes[i] = route
            costs[i] = route_cost(route, time_budget)
        return costs, auxes

    base_rng = rng if rng is not None else np.random.default_rng(config.seed)
    seeds = base_rng.integers(0, 2**63 - 1, size=restarts)

    best_result: de.DEResult | None = None
    traces: list[list[float]] = []
    for r in range(restarts):
        cfg = de.DEConfig(population_size=config.population_size, generations=config.generations,
                          scale=config.scale, crossover_rate=config.crossover_rate,
                          seed=config.seed, lower=np.zeros(n), upper=np.ones(n))
        result = de.optimize(evaluate, cfg, rng=np.random.default_rng(int(seeds[r])), batch=True)
        traces.append(result.trace)
        if best_result is None or result.best.cost < best_result.best.cost:
            best_result = result

    route = best_result.best.aux
    if route is None:
        raise NoFeasibleRouteError("no decodable route found")
    return GlobalPlan(route=route, cost=best_result.best.cost, traces=traces,
                      genes=best_result.best.genes)
