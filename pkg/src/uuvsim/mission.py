"""Reactive mission executor.

Runs the plan/execute/replan loop: a global route over the network, a local
path per leg, tick-level traversal with obstacle motion and hazard-triggered
local replans, and station-level global replans whenever a leg overran its
plan, the remaining route broke, or the remaining budget no longer covers it.
All timing is accounted against the battery budget; the mission succeeds when
the goal station is reached with non-negative residual time.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .env import EnvSnapshot, point_in_collision, perturb_field, step_obstacles
from .errors import (NoFeasiblePathError, NoFeasibleRouteError, UndecodableError,
                     UnreachableGoalError)
from .global_planner import GlobalPlan, Route, plan_global
from .local_planner import LocalPath, LocalPlan, plan_local, replan_local
from .network import Network, consume_edge, drift_stations, edge_metrics
from .scenario import (Scenario, build_field, build_map, build_network_from_spec,
                       build_obstacles, de_config_from_spec, spline_from_spec,
                       weights_from_spec)

_MAX_LOCAL_REPLANS_PER_LEG = 20


@dataclass
class VehicleState:
    position: np.ndarray
    yaw: float = 0.0
    pitch: float = 0.0
    yaw_rate: float = 0.0
    speed: float = 0.0
    battery_remaining: float = 0.0


@dataclass
class LegOutcome:
    from_id: int
    to_id: int
    planned: float
    actual: float
    local_replans: int = 0
    collided: bool = False
    max_surge: float = 0.0
    max_sway: float = 0.0
    max_yaw_rate: float = 0.0
    value_gained: float = 0.0
    aborted: bool = False


@dataclass
class MissionReport:
    scenario: str
    seed: int
    success: bool = False
    failure_reason: str = ""
    global_replans: int = 0
    path_time: float = 0.0          # total executed time
    residual_time: float = 0.0
    total_value: float = 0.0
    stations_visited: int = 0
    total_cost: float = 0.0
    wall_clock: float = 0.0         # informational only; never serialized
    legs: list[LegOutcome] = field(default_factory=list)
    ticks: list[tuple] = field(default_factory=list)      # (t, x, y, z, yaw, leg)
    replans: list[tuple] = field(default_factory=list)    # (t, kind, reason)
    path_rows: list[tuple] = field(default_factory=list)  # per-sample rows of executed paths
    de_traces: list[tuple] = field(default_factory=list)  # (label, [best costs])
    executed_sequence: list[int] = field(default_factory=list)


def should_replan_global(leg: LegOutcome, remaining_route: list[int], network: Network,
                         remaining_budget: float, speed: float,
                         slack: float = 0.05) -> tuple[bool, str]:
    """Replan when the leg overran its plan, the route broke, or time ran short.

    The overrun check allows `slack` relative tolerance; the budget check
    recomputes the remaining route time over the drifted snapshot.
    """
    if leg.actual > leg.planned * (1.0 + slack):
        return True, "leg overran plan"
    total = 0.0
    for a, b in zip(remaining_route, remaining_route[1:]):
        if not network.has_edge(a, b) or network.is_used(a, b):
            return True, "route edge missing"
        total += edge_metrics(network, a, b, speed)[1]
    if total > remaining_budget:
        return True, "remaining route exceeds budget"
    return False, ""


def _hazard(position: np.ndarray, path: LocalPath, tau: float, obstacles, env_field,
            sensing_radius: float, margin: float) -> int | None:
    """Id of the first obstacle whose predicted envelope cuts the remaining path."""
    from .env import CONFIDENCE_Z, current_at

    k0 = path.sample_index_at_time(tau)
    rem = path.points[k0:]
    horizons = np.maximum(path.times[k0:] - tau, 0.0)
    for obs in obstacles:
        if obs.kind == "static":
            continue
        dx = obs.position[0] - position[0]
        dy = obs.position[1] - position[1]
        dz = obs.position[2] - position[2]
        if dx * dx + dy * dy + dz * dz > sensing_radius ** 2:
            continue
        env_r = obs.radius + margin
        if obs.kind == "uncertain":
            env_r = max(env_r, obs.base_radius + margin) + CONFIDENCE_Z * obs.radius_sigma
            envelopes = np.full(len(rem), env_r)
        else:
            speed = current_at(obs.position[:2], env_field).magnitude
            envelopes = env_r + CONFIDENCE_Z * obs.motion_sigma * speed * horizons
        d2 = np.sum((rem - np.asarray(obs.position)) ** 2, axis=1)
        if np.any(d2 <= envelopes ** 2):
            return obs.id
    return None


def advance_along_path(path: LocalPath, tau: float, dt: float) -> tuple[float, np.ndarray, int, bool]:
    """One time step along a planned path.

    Returns (new elapsed-on-path time, position, sample index, arrived); the
    final step is truncated so arrival lands exactly on the path's duration.
    """
    step = min(dt, path.duration - tau)
    tau = tau + max(step, 0.0)
    pos = path.position_at_time(tau)
    k = path.sample_index_at_time(tau)
    return tau, pos, k, tau >= path.duration - 1e-9


def tick_leg(state: VehicleState, path: LocalPath, env: EnvSnapshot, tau: float,
             dt: float, rng: np.random.Generator, sensing_radius: float = 500.0,
             margin: float = 20.0) -> tuple[VehicleState, float, tuple, list[str]]:
    """Standalone tick: advance the vehicle, step obstacles, report events.

    Returns (state, new tau, stepped obstacles, events); events may contain
    'arrived', 'hazard_detected' and 'stalled'.  The mission executor runs the
    same primitives with extra bookkeeping.
    """
    tau0 = tau
    tau, pos, k, arrived = advance_along_path(path, tau, dt)
    state = VehicleState(position=pos, yaw=float(path.yaw[k]), pitch=float(path.pitch[k]),
                         yaw_rate=float(path.yaw_rate[k]), speed=state.speed,
                         battery_remaining=state.battery_remaining - (tau - tau0))
    obstacles = tuple(step_obstacles(list(env.obstacles), env.field, dt, rng))
    events = []
    if arrived:
        events.append("arrived")
    if path.stalled:
        events.append("stalled")
    hazard = _hazard(pos, path, tau, obstacles, env.field, sensing_radius, margin)
    if hazard is not None:
        events.append("hazard_detected")
    return state, tau, obstacles, events


class _MissionAbort(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class _Executor:
    """Owns all mutable mission state; one instance per run_mission call."""

    def __init__(self, sc: Scenario, seed: int, network: Network | None = None):
        self.sc = sc
        self.seed = seed
        self.cmap = build_map(sc, seed)
        self.base_field = build_field(sc, seed)
        self.field = self.base_field
        self.network = network if network is not None else build_network_from_spec(sc, self.cmap, seed)
        self.obstacles = build_obstacles(sc, self.cmap, self.network, seed)
        self.weights = weights_from_spec(sc)
        self.spline = spline_from_spec(sc)
        self.rng_ticks = seeding.stream(seed, seeding.MISSION, 0)
        self.rng_drift = seeding.stream(seed, seeding.NETWORK, 1)
        self.rng_perturb = seeding.stream(seed, seeding.ENV, 3)
        self.budget = sc.vehicle.time_budget
        # Route timing is derated below cruise so that the physically slower
        # executed paths (spline curvature, adverse current, constraint
        # detours) do not overrun every leg's nominal estimate.
        self.speed = sc.vehicle.cruise_speed * sc.mission.nominal_speed_factor
        self.elapsed = 0.0
        self.visited: set[int] = set()
        # Edges found locally impassable right now (e.g. a hostile current
        # pocket); blocked only for planning and cleared once the world moves.
        self.blocked: set[tuple[int, int]] = set()
        self.global_plans = 0
        self.local_plans = 0
        self.report = MissionReport(scenario=sc.name, seed=seed)
        self.state = VehicleState(position=self.network.position(self.network.start_id),
                                  speed=self.speed, battery_remaining=self.budget)

    # -- planning ------------------------------------------------------------

    def _plan_route(self, start: int, generations_factor: float = 1.0) -> GlobalPlan:
        cfg = de_config_from_spec(self.sc.de_global)
        cfg.generations = max(1, int(round(cfg.generations * generations_factor)))
        rng = seeding.stream(self.seed, seeding.DE_GLOBAL, self.global_plans)
        self.global_plans += 1
        planning_net = self._planning_network()
        plan = plan_global(planning_net, start, planning_net.goal_id,
                           (self.budget - self.elapsed) * self.sc.mission.budget_margin,
                           self.speed, cfg, restarts=self.sc.de_global.restarts, rng=rng,
                           visited=frozenset(self.visited))
        for i, trace in enumerate(plan.traces):
            self.report.de_traces.append((f"global-{self.global_plans - 1}-r{i}", trace))
        return plan

    def _planning_network(self) -> Network:
        """Network view with transiently impassable edges masked out."""
        if not self.blocked:
            return self.network
        import dataclasses
        return dataclasses.replace(self.network, used=self.network.used | self.blocked)

    def _planning_env(self, horizon: float) -> EnvSnapshot:
        from .env import current_at

        inflated = []
        for obs in self.obstacles:
            mag = current_at(obs.position[:2], self.field).magnitude
            inflated.append(obs.inflated(horizon, mag, margin=self.sc.mission.obstacle_margin))
        return EnvSnapshot(self.cmap, self.field, tuple(inflated))

    def _plan_leg(self, start_pos, target_pos, horizon: float,
                  previous: LocalPath | None = None, elapsed_on_previous: float = 0.0,
                  generations_factor: float = 1.0) -> LocalPlan:
        cfg = de_config_from_spec(self.sc.de_local)
        cfg.generations = max(1, int(round(cfg.generations * generations_factor)))
        rng = seeding.stream(self.seed, seeding.DE_LOCAL, self.local_plans)
        self.local_plans += 1
        env = self._planning_env(horizon)
        if previous is None:
            plan = plan_local(start_pos, target_pos, env, self.weights, self.spline, cfg, rng=rng)
        else:
            plan = replan_local(start_pos, target_pos, env, self.weights, self.spline, cfg,
                                rng=rng, previous=previous, previous_elapsed=elapsed_on_previous)
        self.report.de_traces.append((f"local-{self.local_plans - 1}", plan.trace))
        return plan

    # -- execution -----------------------------------------------------------

    def _tick(self, path: LocalPath, tau: float, leg_index: int) -> tuple[float, bool]:
        """Advance one tick along the path; returns (new tau, arrived)."""
        dt = self.sc.mission.dt
        tau0 = tau
        tau, pos, k, _ = advance_along_path(path, tau, dt)
        self.elapsed += tau - tau0
        self.state.position = pos
        self.state.yaw = float(path.yaw[k])
        self.state.pitch = float(path.pitch[k])
        self.state.yaw_rate = float(path.yaw_rate[k])
        self.state.battery_remaining = self.budget - self.elapsed
        self.report.ticks.append((self.elapsed, float(pos[0]), float(pos[1]), float(pos[2]),
                                  self.state.yaw, leg_index))
        if self.elapsed > self.budget:
            raise _MissionAbort("battery exhausted mid-leg")
        if point_in_collision(pos, self.cmap, self.obstacles):
            raise _MissionAbort("collision during execution")
        self.obstacles = step_obstacles(self.obstacles, self.field, dt, self.rng_ticks)
        return tau, tau >= path.duration - 1e-9

    def _record_path(self, path: LocalPath, leg_index: int):
        for k in range(len(path.points)):
            self.report.path_rows.append(
                (leg_index, k, float(path.points[k, 0]), float(path.points[k, 1]),
                 float(path.points[k, 2]), float(path.yaw[k]), float(path.pitch[k]),
                 float(path.surge[k]), float(path.sway[k]), float(path.yaw_rate[k]),
                 float(path.times[k])))

    def _execute_path(self, plan: LocalPlan, leg_index: int,
                      allow_replans: bool) -> tuple[float, list[LocalPlan]]:
        """Tick a planned path to its end, replanning locally on hazards.

        Returns (time spent, every plan executed on this leg, in order).
        """
        path = plan.path
        self._record_path(path, leg_index)
        plans = [plan]
        tau = 0.0
        spent = 0.0
        while True:
            before = self.elapsed
            tau, arrived = self._tick(path, tau, leg_index)
            spent += self.elapsed - before
            if arrived:
                return spent, plans
            if not allow_replans:
                continue
            hazard = _hazard(self.state.position, path, tau, self.obstacles, self.field,
                             self.sc.mission.sensing_radius, self.sc.mission.obstacle_margin)
            if hazard is None:
                continue
            if len(plans) > _MAX_LOCAL_REPLANS_PER_LEG:
                raise NoFeasiblePathError("local replan limit reached")
            remaining_chord = float(np.linalg.norm(path.end - self.state.position))
            plan = self._plan_leg(self.state.position, path.end,
                                  horizon=remaining_chord / self.speed,
                                  previous=path, elapsed_on_previous=tau,
                                  generations_factor=self.sc.mission.replan_generation_factor)
            path = plan.path
            self._record_path(path, leg_index)
            plans.append(plan)
            tau = 0.0
            self.report.replans.append((self.elapsed, "local", f"hazard obstacle {hazard}"))

    def _leg_bookkeeping(self, outcome: LegOutcome, plans: list[LocalPlan]):
        for plan in plans:
            p = plan.path
            outcome.max_surge = max(outcome.max_surge, float(np.max(p.surge)))
            outcome.max_sway = max(outcome.max_sway, float(np.max(np.abs(p.sway))))
            outcome.max_yaw_rate = max(outcome.max_yaw_rate, float(np.max(np.abs(p.yaw_rate))))

    def _after_leg(self):
        """Drift, perturbation, and scripted edge failures at a station."""
        if self.sc.mission.drift_per_leg:
            self.network = drift_stations(self.network, self.field, self.cmap, self.rng_drift)
        if self.sc.mission.perturb_per_leg:
            # Perturb around the originally sampled field: chaining the
            # multiplicative update compounds into unbounded parameter drift.
            self.field = perturb_field(self.base_field, self.rng_perturb)
        self.blocked.clear()
        for failure in self.sc.mission.edge_failures:
            if int(failure["after_leg"]) == len(self.report.legs):
                i, j = (int(v) for v in failure["edge"])
                if self.network.has_edge(i, j) and not self.network.is_used(i, j):
                    self.network = consume_edge(self.network, i, j)
                    self.report.replans.append((self.elapsed, "event", f"edge ({i},{j}) failed"))

    # -- main loop -----------------------------------------------------------

    def run(self) -> MissionReport:
        sc = self.sc
        report = self.report
        current = self.network.start_id
        report.executed_sequence = [current]
        try:
            plan = self._plan_route(current)
        except (NoFeasibleRouteError, UnreachableGoalError, UndecodableError) as exc:
            report.failure_reason = f"initial plan failed: {exc}"
            return self._finalize(report)
        route = plan.route
        pos_in_route = 0

        try:
            while current != self.network.goal_id:
                target = route.sequence[pos_in_route + 1]
                d_now, t_planned = edge_metrics(self.network, current, target, self.speed)
                try:
                    leg_plan = self._plan_leg(self.network.position(current),
                                              self.network.position(target),
                                              horizon=t_planned)
                except NoFeasiblePathError:
                    # Retry with unexpanded envelopes: a predicted-motion
                    # envelope parked over either endpoint would otherwise
                    # block every candidate.
                    try:
                        leg_plan = self._plan_leg(self.network.position(current),
                                                  self.network.position(target),
                                                  horizon=0.0)
                    except NoFeasiblePathError:
                        route = self._exclude_and_replan(current, target)
                        pos_in_route = 0
                        continue

                leg_index = len(report.legs)
                outcome = LegOutcome(from_id=current, to_id=target, planned=t_planned, actual=0.0)
                try:
                    spent, plans_used = self._execute_path(leg_plan, leg_index,
                                                           allow_replans=True)
                except NoFeasiblePathError:
                    # Trapped mid-leg: retreat to the leg's start station, then
                    # exclude the blocked edge and replan globally.
                    try:
                        spent = self._retreat(current, leg_index)
                    except NoFeasiblePathError:
                        raise _MissionAbort("trapped mid-leg with no retreat path")
                    outcome.to_id = current
                    outcome.actual = spent
                    outcome.aborted = True
                    report.legs.append(outcome)
                    route = self._exclude_and_replan(current, target)
                    pos_in_route = 0
                    continue

                outcome.actual = spent
                outcome.local_replans = len(plans_used) - 1
                self._leg_bookkeeping(outcome, plans_used)
                report.legs.append(outcome)

                if target not in self.visited and target != self.network.start_id:
                    outcome.value_gained = self.network.stations[target].value
                    report.total_value += outcome.value_gained
                    self.visited.add(target)
                self.network = consume_edge(self.network, current, target)
                current = target
                report.executed_sequence.append(current)
                self._after_leg()

                if current == self.network.goal_id:
                    break
                remaining_budget = self.budget - self.elapsed
                if remaining_budget <= 0:
                    raise _MissionAbort("battery exhausted at station")
                remaining_route = list(route.sequence[pos_in_route + 1:])
                flag, reason = should_replan_global(outcome, remaining_route, self.network,
                                                    remaining_budget, self.speed,
                                                    slack=sc.mission.replan_slack)
                if flag:
                    forced = reason != "leg overran plan"
                    if report.global_replans >= sc.mission.max_global_replans:
                        if forced:
                            raise _MissionAbort(f"replan required ({reason}) beyond limit")
                        pos_in_route += 1
                        continue
                    route = self._replan_global(current, reason)
                    pos_in_route = 0
                else:
                    pos_in_route += 1

            report.success = True
        except _MissionAbort as exc:
            report.failure_reason = exc.reason
        except (NoFeasibleRouteError, UnreachableGoalError, UndecodableError) as exc:
            report.failure_reason = str(exc)
        return self._finalize(report)

    def _replan_global(self, current: int, reason: str) -> Route:
        self.report.replans.append((self.elapsed, "global", reason))
        self.report.global_replans += 1
        plan = self._plan_route(current, generations_factor=self.sc.mission.replan_generation_factor)
        return plan.route

    def _exclude_and_replan(self, current: int, target: int) -> Route:
        pair = (current, target) if current < target else (target, current)
        self.blocked.add(pair)
        if self.report.global_replans >= self.sc.mission.max_global_replans:
            raise _MissionAbort("replan required (no feasible local path) beyond limit")
        if not self._planning_network().goal_reachable(current):
            raise _MissionAbort(f"goal cut off from station {current}")
        return self._replan_global(current, "no feasible local path")

    def _retreat(self, station: int, leg_index: int) -> float:
        """Fly back to the leg's start station; no nested hazard replans."""
        start_pos = self.network.position(station)
        chord = float(np.linalg.norm(start_pos - self.state.position))
        if chord < 1e-6:
            return 0.0
        plan = self._plan_leg(self.state.position, start_pos, horizon=chord / self.speed)
        spent, _ = self._execute_path(plan, leg_index, allow_replans=False)
        self.report.replans.append((self.elapsed, "local", "retreat to leg start"))
        return spent

    def _finalize(self, report: MissionReport) -> MissionReport:
        report.path_time = self.elapsed
        report.residual_time = self.budget - self.elapsed
        report.stations_visited = len(set(report.executed_sequence))
        gap = abs(report.path_time - self.budget) / self.budget
        over = max(0.0, (report.path_time - self.budget) / self.budget)
        value_term = self.network.size / (report.total_value + 1.0)
        report.total_cost = gap + value_term + (100.0 * (1.0 + over) if over > 0 else 0.0)
        return report


def run_mission(sc: Scenario, seed: int | None = None,
                network: Network | None = None) -> MissionReport:
    """Execute one mission; always returns a report (success flag inside)."""
    t0 = _time.perf_counter()
    actual_seed = sc.seed if seed is None else seed
    executor = _Executor(sc, actual_seed, network=network)
    report = executor.run()
    report.wall_clock = _time.perf_counter() - t0
    return report
