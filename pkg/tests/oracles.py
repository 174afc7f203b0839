"""Independent reference computations used by several test modules."""

from __future__ import annotations

import math

import numpy as np


def walk_cost(time: float, value: float, n_stations: int, budget: float) -> float:
    """Route cost restated independently: budget gap + inverse value + overtime."""
    gap = abs(time - budget) / budget
    value_term = n_stations / (value + 1.0)
    over = max(0.0, (time - budget) / budget)
    return gap + value_term + (100.0 * (1.0 + over) if over > 0 else 0.0)


def enumerate_edge_walks(network, speed: float):
    """Yield (time, value) of every start-to-goal walk using each edge at most once.

    Nodes may repeat; value counts each station's worth on first visit only,
    never the start's.
    """
    pos = {sid: np.asarray(st.position, dtype=float) for sid, st in network.stations.items()}
    adj: dict[int, list[tuple[int, float]]] = {sid: [] for sid in network.stations}
    for i, j in network.edges:
        if (i, j) in network.used:
            continue
        t = float(np.linalg.norm(pos[i] - pos[j])) / speed
        adj[i].append((j, t))
        adj[j].append((i, t))

    start, goal = network.start_id, network.goal_id
    values = {sid: st.value for sid, st in network.stations.items()}
    used: set[tuple[int, int]] = set()
    out: list[tuple[float, float]] = []

    def rec(cur: int, elapsed: float, visited: frozenset[int], value: float):
        if cur == goal:
            out.append((elapsed, value))
            # walks may continue through the goal and come back later
        for nxt, t in adj[cur]:
            pair = (cur, nxt) if cur < nxt else (nxt, cur)
            if pair in used:
                continue
            used.add(pair)
            gain = values[nxt] if nxt not in visited and nxt != start else 0.0
            rec(nxt, elapsed + t, visited | {nxt}, value + gain)
            used.discard(pair)

    rec(start, 0.0, frozenset([start]), 0.0)
    return out


def best_walk_cost(network, speed: float, budget: float) -> float:
    """Exhaustive optimum of the route cost over all simple edge-walks."""
    walks = enumerate_edge_walks(network, speed)
    n = len(network.stations)
    return min(walk_cost(t, v, n, budget) for t, v in walks)
