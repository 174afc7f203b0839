"""Operating environment: clustered occupancy map, vortex current field, obstacles.

The map is a raster of intensities partitioned by 1-D k-means into water
(feasible) and coast (forbidden) cells.  The current field is a superposition
of Lamb vortices; obstacles are spheres that hold still, wobble in radius, or
drift with the current.  Everything here is a value type: stepping functions
return new snapshots, and every stochastic operation takes an explicit rng.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyRasterError, KTooLargeError

# Radii below this fraction of the vortex radius use the analytic r -> 0 limit.
_CORE_EPS = 1e-9

# Two-sided 98% envelope z-score for obstacle position/radius uncertainty.
CONFIDENCE_Z = 2.05


@dataclass(frozen=True)
class GridMap:
    """Raster occupancy grid; `values` is intensity before clustering, 0/1 after."""

    width: int
    height: int
    cell_size: float
    values: np.ndarray  # shape (height, width); row index is the y axis
    depth_extent: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise EmptyRasterError("grid must have positive width and height")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be > 0")
        if self.values.shape != (self.height, self.width):
            raise ValueError(f"values shape {self.values.shape} != (height, width)")

    @property
    def extent(self) -> tuple[float, float]:
        """(x, y) span in meters."""
        return self.width * self.cell_size, self.height * self.cell_size


@dataclass(frozen=True)
class ClusteredMap:
    """Binary occupancy map (1 = coast/forbidden, 0 = water) plus the k-means fit."""

    grid: GridMap
    centers: np.ndarray  # (k,) intensity centroids
    k: int
    water_label: int  # index into centers
    objective_trace: tuple[float, ...] = ()

    @property
    def occupancy(self) -> np.ndarray:
        return self.grid.values

    @functools.cached_property
    def padded_occupancy(self) -> np.ndarray:
        """Occupancy dilated by one cell; the planners' conservative coast.

        Any point on a true coast cell lies at least one full cell inside the
        dilated region, so checking a path against this mask at sub-cell
        spacing cannot miss a true-coast crossing between checkpoints.
        """
        occ = self.occupancy == 1
        padded = occ.copy()
        padded[1:, :] |= occ[:-1, :]
        padded[:-1, :] |= occ[1:, :]
        padded[:, 1:] |= occ[:, :-1]
        padded[:, :-1] |= occ[:, 1:]
        padded[1:, 1:] |= occ[:-1, :-1]
        padded[1:, :-1] |= occ[:-1, 1:]
        padded[:-1, 1:] |= occ[1:, :-1]
        padded[:-1, :-1] |= occ[1:, 1:]
        return padded.astype(np.int8)

    def cell_of(self, x: float, y: float) -> tuple[int, int] | None:
        """(row, col) of a point, or None when outside the raster."""
        col = int(math.floor(x / self.grid.cell_size))
        row = int(math.floor(y / self.grid.cell_size))
        if 0 <= row < self.grid.height and 0 <= col < self.grid.width:
            return row, col
        return None

    def is_water(self, x: float, y: float, padded: bool = False) -> bool:
        cell = self.cell_of(x, y)
        if cell is None:
            return False
        occ = self.padded_occupancy if padded else self.occupancy
        return occ[cell] == 0


def _initial_centers(values: np.ndarray, k: int) -> np.ndarray:
    """Deterministic init: evenly spaced quantiles of the intensity histogram."""
    qs = (np.arange(k) + 0.5) / k
    centers = np.quantile(values, qs)
    if len(np.unique(centers)) < k:
        # Mass-concentrated data can collapse quantiles; fall back to an even
        # grid over the distinct values (precondition guarantees >= k of them).
        uniq = np.unique(values)
        centers = uniq[np.round(np.linspace(0, len(uniq) - 1, k)).astype(int)]
    return centers.astype(float)


def cluster_map(raster: GridMap, k: int, max_iters: int = 100, water: str = "low") -> ClusteredMap:
    """Partition raster intensities into k clusters and binarize to water/coast.

    Lloyd iterations from a deterministic quantile init; the squared-error
    objective is recorded per iteration and is non-increasing.  The cluster
    whose centroid has the lowest (``water="low"``) or highest intensity
    becomes water (0); all other clusters become coast (1).
    """
    flat = np.asarray(raster.values, dtype=float).ravel()
    if flat.size == 0:
        raise EmptyRasterError("raster has no cells")
    n_distinct = len(np.unique(flat))
    if k < 2:
        raise KTooLargeError(f"k must be >= 2, got {k}")
    if k > n_distinct:
        raise KTooLargeError(f"k={k} exceeds {n_distinct} distinct intensities")
    if water not in ("low", "high"):
        raise ValueError("water must be 'low' or 'high'")

    centers = _initial_centers(flat, k)
    trace: list[float] = []
    labels = np.zeros(flat.size, dtype=np.int64)
    for _ in range(max_iters):
        dist = np.abs(flat[:, None] - centers[None, :])
        new_labels = np.argmin(dist, axis=1)
        trace.append(float(np.sum((flat - centers[new_labels]) ** 2)))
        converged = bool(np.array_equal(new_labels, labels)) and len(trace) > 1
        labels = new_labels
        for i in range(k):
            members = flat[labels == i]
            if members.size:
                centers[i] = members.mean()
        if converged:
            break

    water_label = int(np.argmin(centers) if water == "low" else np.argmax(centers))
    occupancy = np.where(labels.reshape(raster.values.shape) == water_label, 0, 1).astype(np.int8)
    grid = replace(raster, values=occupancy)
    return ClusteredMap(grid=grid, centers=centers, k=k, water_label=water_label,
                        objective_trace=tuple(trace))


def load_raster(path, cell_size: float, depth_extent: float) -> GridMap:
    """Read a headerless whitespace-separated integer grid, one row per line."""
    values = np.loadtxt(path, dtype=float)
    values = np.atleast_2d(values)
    h, w = values.shape
    return GridMap(width=w, height=h, cell_size=cell_size, values=values, depth_extent=depth_extent)


def synthesize_raster(width: int, height: int, cell_size: float, depth_extent: float,
                      rng: np.random.Generator, islands: int = 5,
                      island_radius: tuple[float, float] = (200.0, 600.0),
                      coast_border: int = 0,
                      water_intensity: float = 40.0, land_intensity: float = 220.0,
                      intensity_sigma: float = 12.0) -> GridMap:
    """Generate a coastline-style intensity raster: dark water, bright land.

    Land is `islands` random discs plus an optional solid border of
    `coast_border` cells.  Some land must exist, otherwise 2-means would
    split the water noise instead of separating water from coast.
    """
    if islands <= 0 and coast_border <= 0:
        raise ValueError("synthetic map needs islands or a coast border")
    vals = rng.normal(water_intensity, intensity_sigma, size=(height, width))
    land = np.zeros((height, width), dtype=bool)
    if coast_border > 0:
        land[:coast_border, :] = land[-coast_border:, :] = True
        land[:, :coast_border] = land[:, -coast_border:] = True
    xs = (np.arange(width) + 0.5) * cell_size
    ys = (np.arange(height) + 0.5) * cell_size
    for _ in range(islands):
        cx = rng.uniform(0, width * cell_size)
        cy = rng.uniform(0, height * cell_size)
        r = rng.uniform(*island_radius)
        land |= (xs[None, :] - cx) ** 2 + (ys[:, None] - cy) ** 2 <= r * r
    vals[land] = rng.normal(land_intensity, intensity_sigma, size=int(land.sum()))
    vals = np.clip(np.rint(vals), 0, 255)
    return GridMap(width=width, height=height, cell_size=cell_size, values=vals,
                   depth_extent=depth_extent)


@dataclass(frozen=True)
class VortexParams:
    """One Lamb vortex: center (m), radius scale (m), signed strength (m^2/s)."""

    center: tuple[float, float]
    radius: float
    strength: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("vortex radius must be > 0")
        if not math.isfinite(self.strength):
            raise ValueError("vortex strength must be finite")


@dataclass(frozen=True)
class VortexField:
    """Superposed Lamb vortices over a rectangular extent (2-D, depth-uniform)."""

    vortices: tuple[VortexParams, ...]
    noise_range: tuple[float, float] = (0.1, 0.8)
    grid_extent: tuple[float, float] = (10_000.0, 10_000.0)

    @functools.cached_property
    def _arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self.vortices:
            return np.zeros((0, 2)), np.zeros(0), np.zeros(0)
        centers = np.array([v.center for v in self.vortices], dtype=float)
        radii = np.array([v.radius for v in self.vortices], dtype=float)
        strengths = np.array([v.strength for v in self.vortices], dtype=float)
        return centers, radii, strengths

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(centers (n,2), radii (n,), strengths (n,)) for vectorized sampling."""
        return self._arrays


@dataclass(frozen=True)
class CurrentSample:
    """Horizontal current velocity at one point."""

    v_cx: float
    v_cy: float

    @property
    def magnitude(self) -> float:
        return math.hypot(self.v_cx, self.v_cy)


# Peak tangential speed of a unit-strength, unit-radius Lamb vortex occurs at
# r ~= 1.1209 ell and equals ~0.6382 / (2 pi ell) * strength.
PEAK_SPEED_FACTOR = 0.63817


def current_grid(points: np.ndarray, fld: VortexField) -> np.ndarray:
    """Current velocity (n, 2) at each (n, 2) point; vectorized superposition."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    centers, radii, strengths = fld.arrays()
    out = np.zeros((pts.shape[0], 2))
    if centers.shape[0] == 0:
        return out
    dx = pts[:, 0:1] - centers[None, :, 0]  # (n, v)
    dy = pts[:, 1:2] - centers[None, :, 1]
    r2 = dx * dx + dy * dy
    core = r2 < (_CORE_EPS * radii[None, :]) ** 2
    r2_safe = np.where(core, 1.0, r2)
    coeff = strengths[None, :] / (2.0 * np.pi * r2_safe) * (1.0 - np.exp(-r2_safe / radii[None, :] ** 2))
    coeff = np.where(core, 0.0, coeff)
    out[:, 0] = np.sum(-coeff * dy, axis=1)
    out[:, 1] = np.sum(coeff * dx, axis=1)
    return out


def current_at(point, fld: VortexField) -> CurrentSample:
    """Current at a single (x, y) point; exact zero at a vortex core."""
    v = current_grid(np.asarray(point, dtype=float)[:2][None, :], fld)[0]
    return CurrentSample(float(v[0]), float(v[1]))


def perturb_field(fld: VortexField, rng: np.random.Generator) -> VortexField:
    """Multiplicative Gaussian update of every vortex parameter.

    One noise scale s ~ U(noise_range) is drawn per update event; each
    parameter p becomes p * (1 + s * g) with g ~ N(0, 1).  Radius is clamped
    to stay positive.
    """
    lo, hi = fld.noise_range
    s = float(rng.uniform(lo, hi))
    new = []
    for v in fld.vortices:
        g = rng.standard_normal(4)
        new.append(VortexParams(
            center=(v.center[0] * (1 + s * g[0]), v.center[1] * (1 + s * g[1])),
            radius=max(v.radius * (1 + s * g[2]), 1e-6),
            strength=v.strength * (1 + s * g[3]),
        ))
    return replace(fld, vortices=tuple(new))


def sample_vortex_field(extent: tuple[float, float], rng: np.random.Generator,
                        window: float = 2000.0, count: tuple[int, int] = (2, 5),
                        radius: tuple[float, float] = (100.0, 250.0),
                        peak_speed: tuple[float, float] = (0.05, 0.3),
                        noise_range: tuple[float, float] = (0.1, 0.8)) -> VortexField:
    """Tile the extent with independent square windows of 2..5 random vortices.

    Strength is parameterized by the vortex's peak tangential speed, which is
    the physically meaningful knob: strength = peak * 2 pi ell / 0.6382,
    signed at random for rotation direction.
    """
    vortices = []
    nx = max(1, int(math.ceil(extent[0] / window)))
    ny = max(1, int(math.ceil(extent[1] / window)))
    for ix in range(nx):
        for iy in range(ny):
            n = int(rng.integers(count[0], count[1] + 1))
            for _ in range(n):
                cx = rng.uniform(ix * window, min((ix + 1) * window, extent[0]))
                cy = rng.uniform(iy * window, min((iy + 1) * window, extent[1]))
                ell = rng.uniform(*radius)
                peak = rng.uniform(*peak_speed)
                sign = 1.0 if rng.random() < 0.5 else -1.0
                strength = sign * peak * 2.0 * np.pi * ell / PEAK_SPEED_FACTOR
                vortices.append(VortexParams(center=(cx, cy), radius=ell, strength=strength))
    return VortexField(vortices=tuple(vortices), noise_range=noise_range, grid_extent=extent)


@dataclass(frozen=True)
class Obstacle:
    """Spherical hazard; kind is 'static', 'uncertain' (radius wobbles) or 'mobile'."""

    id: int
    kind: str
    position: tuple[float, float, float]
    radius: float
    radius_sigma: float = 0.0
    motion_sigma: float = 0.0
    base_radius: float | None = None
    envelope_radius: float | None = None

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("obstacle radius must be > 0")
        if self.kind not in ("static", "uncertain", "mobile"):
            raise ValueError(f"unknown obstacle kind {self.kind!r}")
        if self.base_radius is None:
            object.__setattr__(self, "base_radius", self.radius)
        if self.envelope_radius is None:
            object.__setattr__(self, "envelope_radius", self.radius)

    def inflated(self, horizon: float, current_mag: float, margin: float = 0.0) -> "Obstacle":
        """Copy with the 98%-confidence envelope for a prediction horizon (s).

        Position uncertainty of mobile obstacles grows linearly with the
        horizon at rate motion_sigma * |v_c|; uncertain obstacles add their
        radius spread.  Static obstacles keep envelope = radius.
        """
        env_r = self.radius + margin
        if self.kind == "mobile":
            env_r += CONFIDENCE_Z * self.motion_sigma * current_mag * max(horizon, 0.0)
        elif self.kind == "uncertain":
            # Radius resamples around the base value, so predict from it.
            env_r = max(env_r, self.base_radius + margin + CONFIDENCE_Z * self.radius_sigma)
        return replace(self, envelope_radius=env_r)


def step_obstacles(obstacles: list[Obstacle], fld: VortexField, dt: float,
                   rng: np.random.Generator) -> list[Obstacle]:
    """Advance obstacles by one step of duration dt.

    Mobile obstacles drift with the local current plus per-step Gaussian
    jitter of scale motion_sigma * |v_c| on each horizontal axis; uncertain
    obstacles resample their radius around the base value; static obstacles
    are returned untouched.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    out = []
    for obs in obstacles:
        if obs.kind == "static":
            out.append(obs)
        elif obs.kind == "uncertain":
            r = float(rng.normal(obs.base_radius, obs.radius_sigma)) if obs.radius_sigma > 0 else obs.base_radius
            r = max(r, 1e-6)
            out.append(replace(obs, radius=r, envelope_radius=r))
        else:
            cur = current_at(obs.position[:2], fld)
            scale = obs.motion_sigma * cur.magnitude
            jitter = rng.normal(0.0, scale, size=2) if scale > 0 else np.zeros(2)
            pos = (obs.position[0] + cur.v_cx * dt + jitter[0],
                   obs.position[1] + cur.v_cy * dt + jitter[1],
                   obs.position[2])
            out.append(replace(obs, position=pos))
    return out


def points_in_collision(points: np.ndarray, cmap: ClusteredMap,
                        obstacles: list[Obstacle], padded: bool = False) -> np.ndarray:
    """Vectorized collision test for (n, 3) points.

    A point collides when its cell is coast, it lies outside the raster or the
    depth range, or it is inside any obstacle's envelope (closed ball).  With
    ``padded=True`` the coast test uses the one-cell-dilated occupancy.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    cs = cmap.grid.cell_size
    col = np.floor(pts[:, 0] / cs).astype(np.int64)
    row = np.floor(pts[:, 1] / cs).astype(np.int64)
    z = pts[:, 2] if pts.shape[1] > 2 else np.zeros(n)

    out = (col < 0) | (col >= cmap.grid.width) | (row < 0) | (row >= cmap.grid.height)
    out |= (z < 0.0) | (z > cmap.grid.depth_extent)
    inside = ~out
    if np.any(inside):
        occ = cmap.padded_occupancy if padded else cmap.occupancy
        hit = occ[row[inside], col[inside]] == 1
        out[np.flatnonzero(inside)[hit]] = True
    for obs in obstacles:
        d2 = ((pts[:, 0] - obs.position[0]) ** 2 + (pts[:, 1] - obs.position[1]) ** 2
              + (z - obs.position[2]) ** 2)
        out |= d2 <= obs.envelope_radius ** 2
    return out


def point_in_collision(point, cmap: ClusteredMap, obstacles: list[Obstacle]) -> bool:
    """Scalar form of points_in_collision; out-of-bounds is conservatively a hit."""
    p = np.asarray(point, dtype=float)
    if p.size == 2:
        p = np.array([p[0], p[1], 0.0])
    return bool(points_in_collision(p[None, :], cmap, obstacles)[0])


@dataclass(frozen=True)
class EnvSnapshot:
    """Immutable view of the world handed to the planners."""

    map: ClusteredMap
    field: VortexField
    obstacles: tuple[Obstacle, ...] = ()

    def with_obstacles(self, obstacles) -> "EnvSnapshot":
        return replace(self, obstacles=tuple(obstacles))
