import math

import numpy as np
import pytest

from uuvsim.env import (ClusteredMap, GridMap, Obstacle, VortexField, VortexParams,
                        cluster_map, current_at, current_grid, load_raster,
                        perturb_field, point_in_collision, points_in_collision,
                        step_obstacles, synthesize_raster)
from uuvsim.errors import KTooLargeError


def grid_from(values, cell_size=1.0, depth=100.0) -> GridMap:
    arr = np.asarray(values, dtype=float)
    return GridMap(width=arr.shape[1], height=arr.shape[0], cell_size=cell_size,
                   values=arr, depth_extent=depth)


def single_vortex(strength=1.0, radius=1.0, center=(0.0, 0.0)) -> VortexField:
    return VortexField(vortices=(VortexParams(center=center, radius=radius,
                                              strength=strength),))


# --- clustering -------------------------------------------------------------


def test_cluster_two_perfect_groups():
    raster = grid_from([[0, 0, 0], [255, 255, 255]])
    cm = cluster_map(raster, k=2)
    assert sorted(cm.centers) == [0.0, 255.0]
    assert set(np.unique(cm.occupancy)) <= {0, 1}
    # low intensity is water by default
    assert cm.occupancy[0, 0] == 0 and cm.occupancy[1, 0] == 1


def test_cluster_rejects_k_below_two():
    raster = grid_from([[0, 255]])
    with pytest.raises(KTooLargeError):
        cluster_map(raster, k=1)


def test_cluster_rejects_k_beyond_distinct_values():
    raster = grid_from([[0, 0], [255, 255]])
    with pytest.raises(KTooLargeError):
        cluster_map(raster, k=3)


def brute_force_two_means(values: np.ndarray) -> float:
    """Exhaustive threshold sweep: 2-means on scalars reduces to one split.

    SSE per side via sum and sum-of-squares prefix tables over the histogram.
    """
    vals, counts = np.unique(values, return_counts=True)
    n = counts.cumsum()
    s = (vals * counts).cumsum()
    ss = (vals ** 2 * counts).cumsum()
    best = math.inf
    for i in range(len(vals) - 1):
        n1, n2 = n[i], n[-1] - n[i]
        sse = (ss[i] - s[i] ** 2 / n1) + ((ss[-1] - ss[i]) - (s[-1] - s[i]) ** 2 / n2)
        best = min(best, float(sse))
    return best


def test_cluster_matches_threshold_sweep_optimum():
    rng = np.random.default_rng(42)
    raster = synthesize_raster(1000, 1000, 1.0, 100.0, rng, islands=4,
                               island_radius=(50.0, 200.0))
    cm = cluster_map(raster, k=2)
    oracle = brute_force_two_means(raster.values.ravel())
    assert cm.objective_trace[-1] == pytest.approx(oracle, rel=1e-9)


def test_cluster_objective_monotone_and_centers_consistent():
    rng = np.random.default_rng(3)
    raster = grid_from(rng.integers(0, 256, size=(60, 80)))
    cm = cluster_map(raster, k=4)
    trace = np.array(cm.objective_trace)
    assert np.all(np.diff(trace) <= 1e-9)
    # recomputing each centroid from its assigned cells reproduces it
    flat = raster.values.ravel()
    labels = np.argmin(np.abs(flat[:, None] - cm.centers[None, :]), axis=1)
    for i in range(cm.k):
        members = flat[labels == i]
        if members.size:
            assert cm.centers[i] == pytest.approx(members.mean(), abs=1e-9)


def test_padded_occupancy_covers_coast_neighbours():
    raster = grid_from([[0, 0, 0, 0], [0, 255, 0, 0], [0, 0, 0, 0]])
    cm = cluster_map(raster, k=2)
    assert cm.occupancy[1, 1] == 1
    assert cm.padded_occupancy.sum() == 9  # the island plus its 8 neighbours
    assert cm.is_water(1.5, 0.5) and not cm.is_water(1.5, 0.5, padded=True)


# --- current field ----------------------------------------------------------


def test_current_zero_at_core():
    s = current_at((0.0, 0.0), single_vortex())
    assert (s.v_cx, s.v_cy) == (0.0, 0.0)


def test_current_hand_value_east_of_core():
    s = current_at((1.0, 0.0), single_vortex())
    assert s.v_cx == pytest.approx(0.0, abs=1e-15)
    assert s.v_cy == pytest.approx((1 - math.exp(-1)) / (2 * math.pi), rel=1e-12)


def test_current_cancels_between_mirrored_vortices():
    fld = VortexField(vortices=(VortexParams(center=(-1.0, 0.0), radius=1.0, strength=1.0),
                                VortexParams(center=(1.0, 0.0), radius=1.0, strength=1.0)))
    s = current_at((0.0, 0.0), fld)
    assert abs(s.v_cx) < 1e-15 and abs(s.v_cy) < 1e-15


def test_current_rotation_symmetry():
    fld = single_vortex(strength=3.0, radius=2.0)
    rng = np.random.default_rng(1)
    r = 5.0
    mags = []
    for theta in rng.uniform(0, 2 * math.pi, size=32):
        s = current_at((r * math.cos(theta), r * math.sin(theta)), fld)
        mags.append(s.magnitude)
    assert np.ptp(mags) < 1e-12


def test_current_far_field_decay():
    strength, radius = 2.5, 3.0
    r = 20 * radius
    s = current_at((r, 0.0), single_vortex(strength, radius))
    assert s.magnitude == pytest.approx(strength / (2 * math.pi * r), rel=0.01)


def test_current_superposition():
    rng = np.random.default_rng(7)
    vortices = tuple(VortexParams(center=(rng.uniform(-5, 5), rng.uniform(-5, 5)),
                                  radius=rng.uniform(0.5, 2.0),
                                  strength=rng.uniform(-3, 3)) for _ in range(5))
    fld = VortexField(vortices=vortices)
    pts = rng.uniform(-6, 6, size=(50, 2))
    total = current_grid(pts, fld)
    parts = sum(current_grid(pts, VortexField(vortices=(v,))) for v in vortices)
    np.testing.assert_allclose(total, parts, atol=1e-12)


# --- field perturbation -----------------------------------------------------


def test_perturb_zero_noise_is_identity():
    fld = single_vortex(strength=2.0, radius=3.0, center=(4.0, 5.0))
    fld = VortexField(vortices=fld.vortices, noise_range=(0.0, 0.0))
    out = perturb_field(fld, np.random.default_rng(0))
    assert out.vortices == fld.vortices


def test_perturb_deterministic_under_seed():
    fld = single_vortex(strength=1.0, radius=1.0)
    a = perturb_field(fld, np.random.default_rng(11))
    b = perturb_field(fld, np.random.default_rng(11))
    assert a.vortices == b.vortices


def test_perturb_moments_at_fixed_scale():
    fld = VortexField(vortices=(VortexParams(center=(1.0, 1.0), radius=5.0, strength=1.0),),
                      noise_range=(0.3, 0.3))
    rng = np.random.default_rng(123)
    ratios = np.array([perturb_field(fld, rng).vortices[0].radius / 5.0
                       for _ in range(10_000)])
    assert ratios.mean() == pytest.approx(1.0, abs=0.01)
    assert ratios.std() == pytest.approx(0.3, abs=0.01)
    assert np.all(ratios > 0.0)


# --- obstacles --------------------------------------------------------------


def make_obstacle(kind="mobile", position=(0.0, 0.0, 0.0), radius=5.0, **kw) -> Obstacle:
    return Obstacle(id=1, kind=kind, position=position, radius=radius, **kw)


def test_step_without_forcing_is_identity():
    fld = VortexField(vortices=())
    obstacles = [make_obstacle("static"), make_obstacle("mobile", motion_sigma=0.0),
                 make_obstacle("uncertain", radius_sigma=0.0)]
    out = step_obstacles(obstacles, fld, dt=1.0, rng=np.random.default_rng(0))
    for a, b in zip(obstacles, out):
        assert a.position == b.position and a.radius == b.radius


def test_static_obstacle_never_moves():
    fld = single_vortex(strength=50.0, radius=10.0)
    obs = make_obstacle("static", position=(3.0, 0.0, 0.0))
    out = step_obstacles([obs], fld, dt=100.0, rng=np.random.default_rng(0))[0]
    assert out.position == obs.position and out.radius == obs.radius


def test_mobile_obstacle_rides_the_current():
    # A distant strong vortex approximates a uniform stream at the obstacle.
    fld = single_vortex(strength=10_000.0, radius=1.0, center=(0.0, -500.0))
    obs = make_obstacle("mobile", position=(0.0, 0.0, 10.0), motion_sigma=0.0)
    cur = current_at((0.0, 0.0), fld)
    out = step_obstacles([obs], fld, dt=10.0, rng=np.random.default_rng(0))[0]
    assert out.position[0] == pytest.approx(10.0 * cur.v_cx, abs=1e-9)
    assert out.position[1] == pytest.approx(10.0 * cur.v_cy, abs=1e-9)
    assert out.position[2] == 10.0


def test_uncertain_obstacle_resamples_radius_positive():
    obs = make_obstacle("uncertain", radius=5.0, radius_sigma=4.0)
    rng = np.random.default_rng(5)
    radii = [step_obstacles([obs], VortexField(vortices=()), 1.0, rng)[0].radius
             for _ in range(500)]
    assert all(r > 0 for r in radii)
    assert np.std(radii) == pytest.approx(4.0, rel=0.2)


def test_envelope_grows_with_horizon():
    obs = make_obstacle("mobile", motion_sigma=2.0)
    short = obs.inflated(horizon=10.0, current_mag=0.5)
    long = obs.inflated(horizon=100.0, current_mag=0.5)
    assert obs.radius < short.envelope_radius < long.envelope_radius
    assert long.envelope_radius == pytest.approx(obs.radius + 2.05 * 2.0 * 0.5 * 100.0)


# --- collision tests --------------------------------------------------------


def water_map(n=10, cell=1.0, depth=100.0) -> ClusteredMap:
    values = np.zeros((n, n))
    values[0, 0] = 255  # one coast cell so clustering is well posed
    return cluster_map(grid_from(values, cell, depth), k=2)


def test_open_water_clear():
    cmap = water_map()
    assert not point_in_collision((5.0, 5.0, 10.0), cmap, [])


def test_coast_cell_collides():
    cmap = water_map()
    assert point_in_collision((0.5, 0.5, 0.0), cmap, [])


def test_obstacle_center_and_boundary_collide():
    cmap = water_map()
    obs = make_obstacle(position=(5.0, 5.0, 10.0), radius=2.0)
    assert point_in_collision((5.0, 5.0, 10.0), cmap, [obs])
    assert point_in_collision((7.0, 5.0, 10.0), cmap, [obs])  # exactly on the ball
    assert not point_in_collision((7.0 + 1e-9, 5.0, 10.0), cmap, [obs])


def test_out_of_bounds_is_conservatively_hit():
    cmap = water_map()
    assert point_in_collision((-1.0, 5.0, 0.0), cmap, [])
    assert point_in_collision((5.0, 5.0, 1000.0), cmap, [])


def test_collision_monotone_in_envelope():
    cmap = water_map(n=50, cell=1.0)
    rng = np.random.default_rng(9)
    pts = np.column_stack([rng.uniform(2, 48, 200), rng.uniform(2, 48, 200),
                           rng.uniform(0, 90, 200)])
    obs = make_obstacle(position=(25.0, 25.0, 40.0), radius=4.0)
    small = points_in_collision(pts, cmap, [obs])
    grown = points_in_collision(pts, cmap, [obs.inflated(horizon=100.0, current_mag=1.0,
                                                         margin=5.0)])
    assert np.all(grown[small])  # growing an envelope never clears a hit


def test_load_raster_round_trip(tmp_path):
    rows = ["0 0 255 0", "0 255 255 0", "0 0 0 0"]
    path = tmp_path / "coast.grid"
    path.write_text("\n".join(rows) + "\n")
    raster = load_raster(path, cell_size=5.0, depth_extent=50.0)
    assert raster.width == 4 and raster.height == 3
    cm = cluster_map(raster, k=2)
    assert cm.occupancy[0, 2] == 1 and cm.occupancy[2, 0] == 0
