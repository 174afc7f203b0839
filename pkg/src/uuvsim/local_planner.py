"""Leg-level planner: B-spline paths between two stations evolved by DE.

Geometry is a clamped cubic B-spline pinned to the two endpoints; the DE
genome holds the interior control points.  Kinematics follow the cruise-plus-
current model: the vehicle moves along the local tangent at its cruise speed
and the horizontal current adds vectorially, so favorable flow shortens the
leg and adverse flow stretches or stalls it.  Cost is normalized travel time
plus weighted worst-case violations of the surge/sway/yaw-rate limits and the
collision fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from . import de
from .env import EnvSnapshot, current_grid, points_in_collision
from .errors import NoFeasiblePathError

_EPS_LEN = 1e-12


@dataclass(frozen=True)
class SplineConfig:
    control_count: int = 8    # total control points, endpoints included
    degree: int = 3
    samples: int = 100

    def __post_init__(self):
        if self.control_count < 4:
            raise ValueError("control_count must be >= 4")
        if self.degree < 3:
            raise ValueError("degree must be >= 3")
        if self.samples < 10 * self.control_count:
            raise ValueError("samples must be >= 10 * control_count")

    @property
    def interior(self) -> int:
        return self.control_count - 2

    @property
    def gene_length(self) -> int:
        return 3 * self.interior


@dataclass(frozen=True)
class LocalCostWeights:
    """Penalty weights and kinematic limits for local path scoring."""

    cruise_speed: float = 2.2
    surge_max: float = 2.7                 # m/s, upper bound only
    sway_max: float = 0.5                  # m/s, symmetric
    yaw_rate_max: float = math.radians(17.0)  # rad/s, symmetric
    w_surge: float = 10.0
    w_sway: float = 10.0
    w_yaw: float = 10.0
    w_collision: float = 100.0
    aggregate: str = "max"                 # 'max' or 'sum' over samples

    def __post_init__(self):
        if self.cruise_speed <= 0:
            raise ValueError("cruise_speed must be > 0")
        if min(self.w_surge, self.w_sway, self.w_yaw, self.w_collision) < 0:
            raise ValueError("weights must be >= 0")
        if self.aggregate not in ("max", "sum"):
            raise ValueError("aggregate must be 'max' or 'sum'")


@dataclass
class LocalPath:
    """Sampled path; geometry first, kinematics after path_states()."""

    points: np.ndarray            # (S, 3)
    yaw: np.ndarray               # (S,)
    pitch: np.ndarray             # (S,)
    seg_lengths: np.ndarray       # (S-1,)
    length: float
    degenerate: bool = False
    # filled by path_states:
    surge: np.ndarray | None = None
    sway: np.ndarray | None = None
    v_z: np.ndarray | None = None
    yaw_rate: np.ndarray | None = None
    seg_times: np.ndarray | None = None
    times: np.ndarray | None = None      # (S,) cumulative, times[0] == 0
    duration: float | None = None
    stalled: bool = False
    violation: float | None = None       # colliding sample fraction
    kin_excess: tuple[float, float, float] | None = None  # surge, sway, yaw-rate

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def is_clean(self) -> bool:
        """Constraint-clean: no stall, no collision, no kinematic excess."""
        if self.stalled or self.degenerate:
            return False
        if self.violation is None or self.violation > 0:
            return False
        return self.kin_excess is not None and max(self.kin_excess) == 0.0

    def position_at_time(self, t: float) -> np.ndarray:
        """Linear interpolation along the sampled polyline at elapsed time t."""
        times = self.times
        if t <= 0:
            return self.points[0].copy()
        if t >= times[-1]:
            return self.points[-1].copy()
        k = int(np.searchsorted(times, t, side="right")) - 1
        dt = times[k + 1] - times[k]
        w = 0.0 if dt <= 0 else (t - times[k]) / dt
        return (1 - w) * self.points[k] + w * self.points[k + 1]

    def sample_index_at_time(self, t: float) -> int:
        return min(int(np.searchsorted(self.times, t, side="right")), len(self.times) - 1)


_basis_cache: dict[tuple[int, int, int], np.ndarray] = {}


def basis_matrix(config: SplineConfig) -> np.ndarray:
    """(samples, control_count) clamped B-spline design matrix at uniform params."""
    key = (config.control_count, config.degree, config.samples)
    if key not in _basis_cache:
        n, k = config.control_count, config.degree
        knots = np.concatenate([np.zeros(k), np.linspace(0.0, 1.0, n - k + 1), np.ones(k)])
        t = np.linspace(0.0, 1.0, config.samples)
        _basis_cache[key] = BSpline.design_matrix(t, knots, k).toarray()
    return _basis_cache[key]


def control_points(genes: np.ndarray, endpoint_i, endpoint_j, config: SplineConfig) -> np.ndarray:
    """(control_count, 3) control polygon with pinned endpoints.

    Genes are blocked as (all x, all y, all z) over the interior points.
    """
    m = config.interior
    pts = np.empty((config.control_count, 3))
    pts[0] = np.asarray(endpoint_i, dtype=float)
    pts[-1] = np.asarray(endpoint_j, dtype=float)
    pts[1:-1, 0] = genes[:m]
    pts[1:-1, 1] = genes[m:2 * m]
    pts[1:-1, 2] = genes[2 * m:]
    return pts


def _wrap_angle(a: np.ndarray) -> np.ndarray:
    return np.mod(a + np.pi, 2.0 * np.pi) - np.pi


def _geometry(ctrl: np.ndarray, config: SplineConfig):
    """Shared sampling for a (c, control_count, 3) batch of control polygons.

    Returns pts (c,S,3), diffs (c,S-1,3), lens (c,S-1), yaw_seg, pitch_seg.
    Zero-length segments inherit the heading of the nearest preceding moving
    segment (or the first moving one when leading).
    """
    B = basis_matrix(config)
    pts = np.einsum("sm,cmd->csd", B, ctrl)
    diffs = np.diff(pts, axis=1)
    lens = np.linalg.norm(diffs, axis=2)
    yaw_seg = np.arctan2(diffs[..., 1], diffs[..., 0])
    pitch_seg = np.arctan2(-diffs[..., 2], np.hypot(diffs[..., 0], diffs[..., 1]))
    bad = lens < _EPS_LEN
    if np.any(bad):
        c, nseg = lens.shape
        idx = np.where(~bad, np.arange(nseg)[None, :], -1)
        idx = np.maximum.accumulate(idx, axis=1)
        any_valid = (idx >= 0).any(axis=1)
        first_valid = np.where(any_valid, np.argmax(idx >= 0, axis=1), 0)
        fill = idx[np.arange(c), first_valid]
        fill = np.where(fill >= 0, fill, 0)
        idx = np.where(idx < 0, fill[:, None], idx)
        rows = np.arange(c)[:, None]
        yaw_seg = yaw_seg[rows, idx]
        pitch_seg = pitch_seg[rows, idx]
    return pts, diffs, lens, yaw_seg, pitch_seg


def _kinematics(pts, diffs, lens, yaw_seg, weights: LocalCostWeights, env: EnvSnapshot):
    """Shared ground-frame kinematics for batched geometry.

    Returns surge, sway, tz (c,S-1), seg_times, times (c,S), stalled (c,).
    """
    c, nseg = lens.shape
    safe = np.maximum(lens, _EPS_LEN)
    tx, ty, tz = diffs[..., 0] / safe, diffs[..., 1] / safe, diffs[..., 2] / safe
    cur = current_grid(pts[:, :-1, :2].reshape(-1, 2), env.field).reshape(c, nseg, 2)
    along = tx * cur[..., 0] + ty * cur[..., 1]
    surge = weights.cruise_speed + along
    sway = -np.sin(yaw_seg) * cur[..., 0] + np.cos(yaw_seg) * cur[..., 1]
    moving = lens > _EPS_LEN
    stalled = np.any((surge <= 0.0) & moving, axis=1)
    eff = np.maximum(surge, 0.1 * weights.cruise_speed)
    seg_times = np.where(moving, lens / eff, 0.0)
    times = np.concatenate([np.zeros((c, 1)), np.cumsum(seg_times, axis=1)], axis=1)
    return surge, sway, tz, seg_times, times, stalled


def _pad(seg_values: np.ndarray) -> np.ndarray:
    """Per-sample series from per-segment values (last sample repeats)."""
    return np.concatenate([seg_values, seg_values[-1:]])


def build_path(genes: np.ndarray, endpoint_i, endpoint_j, config: SplineConfig) -> LocalPath:
    """Sample the clamped spline and derive per-sample yaw, pitch and length."""
    p_i = np.asarray(endpoint_i, dtype=float)
    p_j = np.asarray(endpoint_j, dtype=float)
    if np.linalg.norm(p_j - p_i) < _EPS_LEN:
        return LocalPath(points=np.vstack([p_i, p_j]), yaw=np.zeros(2), pitch=np.zeros(2),
                         seg_lengths=np.zeros(1), length=0.0, degenerate=True)
    ctrl = control_points(np.asarray(genes, dtype=float), p_i, p_j, config)
    pts, _, lens, yaw_seg, pitch_seg = _geometry(ctrl[None], config)
    return LocalPath(points=pts[0], yaw=_pad(yaw_seg[0]), pitch=_pad(pitch_seg[0]),
                     seg_lengths=lens[0], length=float(lens[0].sum()))


def path_states(path: LocalPath, weights: LocalCostWeights, env: EnvSnapshot) -> LocalPath:
    """Fill ground-frame kinematics and traversal times under the current field.

    Ground velocity per segment is cruise speed along the tangent plus the
    horizontal current; surge is its tangential component and sway the
    cross-track horizontal current.  A segment whose tangential ground speed
    drops to zero or below marks the whole path stalled (infeasible).
    """
    if path.degenerate:
        path.surge = np.zeros(2)
        path.sway = np.zeros(2)
        path.v_z = np.zeros(2)
        path.yaw_rate = np.zeros(2)
        path.seg_times = np.zeros(1)
        path.times = np.zeros(2)
        path.duration = 0.0
        return path
    pts = path.points[None]
    diffs = np.diff(path.points, axis=0)[None]
    lens = path.seg_lengths[None]
    surge, sway, tz, seg_times, times, stalled = _kinematics(
        pts, diffs, lens, path.yaw[None, :-1], weights, env)
    path.surge = _pad(surge[0])
    path.sway = _pad(sway[0])
    path.v_z = weights.cruise_speed * _pad(tz[0])
    path.yaw_rate = yaw_rates(path.yaw, times[0])
    path.seg_times = seg_times[0]
    path.times = times[0]
    path.duration = float(times[0, -1])
    path.stalled = bool(stalled[0])
    return path


def yaw_rates(yaw: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Central-difference yaw rate over the cumulative sample times."""
    n = len(yaw)
    rates = np.zeros(n)
    if n < 2:
        return rates
    rates[0] = _wrap_angle(yaw[1] - yaw[0]) / max(times[1] - times[0], _EPS_LEN)
    rates[-1] = _wrap_angle(yaw[-1] - yaw[-2]) / max(times[-1] - times[-2], _EPS_LEN)
    if n > 2:
        span = np.maximum(times[2:] - times[:-2], _EPS_LEN)
        rates[1:-1] = _wrap_angle(yaw[2:] - yaw[:-2]) / span
    return rates


def _subdivided(points: np.ndarray, subdivide: int) -> np.ndarray:
    """Insert `subdivide - 1` interpolated points per segment (batch-safe)."""
    if subdivide <= 1:
        return points
    segs = points[..., 1:, :] - points[..., :-1, :]
    chunks = [points]
    for k in range(1, subdivide):
        chunks.append(points[..., :-1, :] + (k / subdivide) * segs)
    return np.concatenate(chunks, axis=-2)


def violation_sum(path: LocalPath, env: EnvSnapshot, subdivide: int = 1,
                  padded: bool = False) -> float:
    """Fraction of checked path points in collision with coast or obstacles.

    With the defaults the check runs on the path samples against the true
    map.  Planners raise `subdivide` until checkpoint spacing is below the
    cell size and set `padded` so the coast test uses the one-cell-dilated
    occupancy; together these guarantee that a path accepted as clean cannot
    touch true coast anywhere between checkpoints.
    """
    if path.degenerate:
        path.violation = 0.0
        return 0.0
    pts = _subdivided(path.points, subdivide)
    hits = points_in_collision(pts, env.map, list(env.obstacles), padded=padded)
    frac = float(np.mean(hits))
    path.violation = frac
    return frac


def _aggregate(excess: np.ndarray, mode: str) -> float:
    return float(np.max(excess)) if mode == "max" else float(np.sum(excess))


def path_cost(path: LocalPath, weights: LocalCostWeights) -> float:
    """Normalized time plus weighted constraint violations; +inf when stalled.

    Time is normalized by the straight-line still-water time, so an
    unobstructed straight leg scores exactly 1.0.
    """
    if path.degenerate:
        path.kin_excess = (0.0, 0.0, 0.0)
        return 0.0
    if path.stalled:
        path.kin_excess = (math.inf, 0.0, 0.0)
        return math.inf
    if path.duration is None:
        raise ValueError("path_states must run before path_cost")
    chord = float(np.linalg.norm(path.end - path.start))
    t_ref = chord / weights.cruise_speed
    surge_ex = _aggregate(np.maximum(0.0, path.surge - weights.surge_max), weights.aggregate)
    sway_ex = _aggregate(np.maximum(0.0, np.abs(path.sway) - weights.sway_max), weights.aggregate)
    yaw_ex = _aggregate(np.maximum(0.0, np.abs(path.yaw_rate) - weights.yaw_rate_max), weights.aggregate)
    path.kin_excess = (surge_ex, sway_ex, yaw_ex)
    violation = path.violation if path.violation is not None else 0.0
    return (path.duration / t_ref + weights.w_surge * surge_ex + weights.w_sway * sway_ex
            + weights.w_yaw * yaw_ex + weights.w_collision * violation)


def corridor_bounds(endpoint_i, endpoint_j, env: EnvSnapshot, config: SplineConfig,
                    inflation: float = 0.25, min_pad: float = 800.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-gene [low, high] box: leg bounding box inflated horizontally, full depth.

    The pad floor keeps short legs wide enough to skirt an island or an
    inflated obstacle sitting on the chord.
    """
    p_i = np.asarray(endpoint_i, dtype=float)
    p_j = np.asarray(endpoint_j, dtype=float)
    leg = float(np.linalg.norm(p_j - p_i))
    pad = max(inflation * max(leg, 1.0), min_pad)
    ext = env.map.grid.extent
    lo_xy = np.maximum(np.minimum(p_i[:2], p_j[:2]) - pad, 0.0)
    hi_xy = np.minimum(np.maximum(p_i[:2], p_j[:2]) + pad, ext)
    lo = np.concatenate([np.full(config.interior, lo_xy[0]),
                         np.full(config.interior, lo_xy[1]),
                         np.zeros(config.interior)])
    hi = np.concatenate([np.full(config.interior, hi_xy[0]),
                         np.full(config.interior, hi_xy[1]),
                         np.full(config.interior, env.map.grid.depth_extent)])
    return lo, hi


def straight_genes(endpoint_i, endpoint_j, config: SplineConfig) -> np.ndarray:
    """Interior control points evenly spaced on the chord (the straight path)."""
    p_i = np.asarray(endpoint_i, dtype=float)
    p_j = np.asarray(endpoint_j, dtype=float)
    fracs = np.linspace(0.0, 1.0, config.control_count)[1:-1]
    interior = p_i[None, :] + fracs[:, None] * (p_j - p_i)[None, :]
    return np.concatenate([interior[:, 0], interior[:, 1], interior[:, 2]])


def _batch_paths(mat: np.ndarray, p_i: np.ndarray, p_j: np.ndarray,
                 config: SplineConfig, weights: LocalCostWeights,
                 env: EnvSnapshot) -> tuple[np.ndarray, list]:
    """Vectorized geometry/kinematics/cost for a (m, genes) candidate matrix.

    Collision checks subdivide every segment below the map cell size and use
    the dilated coast, so an accepted path cannot clip a coast corner between
    checkpoints.
    """
    m = mat.shape[0]
    k = config.interior
    S = config.samples
    ctrl = np.empty((m, config.control_count, 3))
    ctrl[:, 0, :] = p_i
    ctrl[:, -1, :] = p_j
    ctrl[:, 1:-1, 0] = mat[:, :k]
    ctrl[:, 1:-1, 1] = mat[:, k:2 * k]
    ctrl[:, 1:-1, 2] = mat[:, 2 * k:]

    pts, diffs, lens, yaw_seg, pitch_seg = _geometry(ctrl, config)
    surge, sway, tz, seg_times, times, stalled = _kinematics(pts, diffs, lens, yaw_seg,
                                                             weights, env)
    cell = env.map.grid.cell_size
    qs = np.clip(np.ceil(lens.max(axis=1) / cell).astype(int), 1, None)
    violations = np.empty(m)
    for q in np.unique(qs):
        rows = np.flatnonzero(qs == q)
        check_pts = _subdivided(pts[rows], int(q))
        hits = points_in_collision(check_pts.reshape(-1, 3), env.map,
                                   list(env.obstacles), padded=True)
        violations[rows] = hits.reshape(len(rows), -1).mean(axis=1)

    costs = np.empty(m)
    paths: list = [None] * m
    for i in range(m):
        path = LocalPath(points=pts[i], yaw=_pad(yaw_seg[i]), pitch=_pad(pitch_seg[i]),
                         seg_lengths=lens[i], length=float(lens[i].sum()))
        path.surge = _pad(surge[i])
        path.sway = _pad(sway[i])
        path.v_z = weights.cruise_speed * _pad(tz[i])
        path.yaw_rate = yaw_rates(path.yaw, times[i])
        path.seg_times = seg_times[i]
        path.times = times[i]
        path.duration = float(times[i, -1])
        path.stalled = bool(stalled[i])
        path.violation = float(violations[i])
        costs[i] = path_cost(path, weights)
        paths[i] = path
    return costs, paths


@dataclass
class LocalPlan:
    path: LocalPath
    genes: np.ndarray
    cost: float
    trace: list[float]


def plan_local(endpoint_i, endpoint_j, env: EnvSnapshot, weights: LocalCostWeights,
               spline: SplineConfig, config: de.DEConfig,
               rng: np.random.Generator | None = None,
               seed_genes: tuple[np.ndarray, ...] = ()) -> LocalPlan:
    """Evolve a constraint-clean path between two points.

    The straight chord seeds the population alongside any caller-provided
    warm starts.  The accepted path is the cheapest constraint-clean
    candidate evaluated anywhere in the run; if none exists,
    NoFeasiblePathError is raised.
    """
    p_i = np.asarray(endpoint_i, dtype=float)
    p_j = np.asarray(endpoint_j, dtype=float)
    lo, hi = corridor_bounds(p_i, p_j, env, spline)
    cfg = de.DEConfig(population_size=config.population_size, generations=config.generations,
                      scale=config.scale, crossover_rate=config.crossover_rate,
                      seed=config.seed, lower=lo, upper=hi)
    seeds = [straight_genes(p_i, p_j, spline), *seed_genes]

    best_clean: dict = {"cost": math.inf, "path": None, "genes": None}

    def evaluate(mat: np.ndarray) -> tuple[np.ndarray, list]:
        costs, paths = _batch_paths(mat, p_i, p_j, spline, weights, env)
        for i, path in enumerate(paths):
            if costs[i] < best_clean["cost"] and path.is_clean():
                best_clean["cost"] = float(costs[i])
                best_clean["path"] = path
                best_clean["genes"] = mat[i].copy()
        return costs, paths

    result = de.optimize(evaluate, cfg, rng=rng, seed_genes=seeds, batch=True)
    if best_clean["path"] is None:
        raise NoFeasiblePathError(
            f"no constraint-clean path between {p_i[:2]} and {p_j[:2]} "
            f"after {result.evaluations} evaluations")
    return LocalPlan(path=best_clean["path"], genes=best_clean["genes"],
                     cost=best_clean["cost"], trace=result.trace)


def warm_start_genes(previous: LocalPath, from_time: float, spline: SplineConfig) -> np.ndarray:
    """Interior control points resampled from the remainder of an earlier path."""
    times = previous.times
    t_end = float(times[-1])
    span = max(t_end - from_time, _EPS_LEN)
    fracs = np.linspace(0.0, 1.0, spline.control_count)[1:-1]
    interior = np.stack([previous.position_at_time(from_time + f * span) for f in fracs])
    return np.concatenate([interior[:, 0], interior[:, 1], interior[:, 2]])


def replan_local(position, endpoint_j, env: EnvSnapshot, weights: LocalCostWeights,
                 spline: SplineConfig, config: de.DEConfig,
                 rng: np.random.Generator | None = None,
                 previous: LocalPath | None = None,
                 previous_elapsed: float = 0.0) -> LocalPlan:
    """plan_local from the vehicle's current position, warm-started.

    The remainder of the incumbent path (shifted to start at the current
    position) seeds one population member, so an unchanged world replans to
    essentially the same answer.
    """
    seeds: tuple[np.ndarray, ...] = ()
    if previous is not None and not previous.degenerate:
        seeds = (warm_start_genes(previous, previous_elapsed, spline),)
    return plan_local(position, endpoint_j, env, weights, spline, config,
                      rng=rng, seed_genes=seeds)
