"""Scene stepping, density binning, and region extraction.

Brute-force oracles: a per-particle Python binning loop for the density
grid, and an exhaustive all-rectangles search for the inscribed rectangle.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from sonoswarm import scenes
from sonoswarm.magnetics import (
    FIELD_ROTATING,
    ChainState,
    FieldCommand,
    Synchronous,
    phase_lag,
)
from sonoswarm.snapshots import load_scene, save_scene, scene_from_dict, scene_to_dict
from sonoswarm.swarm import (
    DensityGrid,
    LocomotionParams,
    SwarmScene,
    density_grid,
    locomotion_velocity,
    step,
    swarm_region,
)

UG = 1e9  # kg -> ug


def oracle_density(scene, cell_size):
    """Per-particle Python binning, independent of the vectorised path."""
    nx = math.ceil(scene.tank.width / cell_size - 1e-9)
    ny = math.ceil(scene.tank.height / cell_size - 1e-9)
    mass = np.zeros((ny, nx))
    entries = [
        (float(p[0]), float(p[1]), int(n))
        for p, n in zip(scene.chain_pos, scene.chain_n)
    ] + [(float(p[0]), float(p[1]), 1) for p in scene.free_pos]
    for x, y, n in entries:
        ix = min(int(x / cell_size), nx - 1)
        iy = min(int(y / cell_size), ny - 1)
        mass[iy, ix] += n * scene.spec.mass_per_particle
    return mass * UG / (cell_size * 1e3) ** 2


def oracle_inscribed_rectangle(mask):
    """Exhaustive max-area all-true rectangle search."""
    ny, nx = mask.shape
    best = 0
    for y0 in range(ny):
        for y1 in range(y0 + 1, ny + 1):
            for x0 in range(nx):
                for x1 in range(x0 + 1, nx + 1):
                    if mask[y0:y1, x0:x1].all():
                        best = max(best, (y1 - y0) * (x1 - x0))
    return best


def small_scene(chains, free=None, params=None):
    return SwarmScene(
        chains=chains,
        free_particles=free,
        spec=scenes.default_particle_spec(),
        fluid=scenes.default_fluid(),
        params=params if params is not None else scenes.mobile_params(),
    )


class TestDensityGrid:
    def test_empty_scene_all_zero(self):
        scene = small_scene([])
        grid = density_grid(scene, 0.5e-3)
        assert np.all(grid.values == 0.0)

    def test_single_chain_single_cell(self):
        scene = small_scene([ChainState(n_particles=10, center=(10.25e-3, 5.25e-3))])
        grid = density_grid(scene, 0.5e-3)
        expected = 10 * scene.spec.mass_per_particle * UG / 0.25
        assert grid.values[10, 20] == pytest.approx(expected, rel=1e-12)
        assert np.count_nonzero(grid.values) == 1

    def test_matches_bruteforce_binning(self):
        rng = np.random.default_rng(7)
        chains = [
            ChainState(
                n_particles=int(rng.integers(3, 30)),
                center=(rng.uniform(0, 45e-3), rng.uniform(0, 25e-3)),
            )
            for _ in range(120)
        ]
        free = [(rng.uniform(0, 45e-3), rng.uniform(0, 25e-3)) for _ in range(50)]
        scene = small_scene(chains, free)
        grid = density_grid(scene, 0.5e-3)
        np.testing.assert_allclose(grid.values, oracle_density(scene, 0.5e-3), rtol=1e-12)

    def test_mass_conserving(self):
        scene = scenes.dispersed_disc_scene(seed=1)
        grid = density_grid(scene, 0.5e-3)
        assert grid.total_mass_kg() == pytest.approx(scene.total_mass(), rel=1e-3)

    def test_uniform_spread_has_no_hot_cells(self):
        for seed in range(5):
            scene = scenes.dispersed_disc_scene(seed=seed)
            grid = density_grid(scene, 0.5e-3)
            occupied = grid.values[grid.values > 0]
            assert occupied.max() < 3.0 * occupied.mean()

    def test_oversized_cell_rejected(self):
        scene = small_scene([])
        with pytest.raises(ValueError):
            density_grid(scene, 50e-3)


class TestSwarmRegion:
    def test_all_zero_grid(self):
        grid = DensityGrid(cell_size=0.5e-3, values=np.zeros((10, 10)))
        assert swarm_region(grid, 4.0) is None

    def test_rectangular_block_returned_exactly(self):
        values = np.zeros((12, 16))
        values[3:7, 4:10] = 5.0
        grid = DensityGrid(cell_size=0.5e-3, values=values)
        region = swarm_region(grid, 4.0)
        r = region.rectangle
        s = 0.5e-3
        assert (r.x0, r.y0, r.x1, r.y1) == (4 * s, 3 * s, 10 * s, 7 * s)
        assert region.mean_density == pytest.approx(5.0)

    def test_l_shape_picks_larger_leg(self):
        values = np.zeros((12, 12))
        values[2:10, 2:4] = 5.0  # 8x2 vertical leg
        values[2:4, 2:9] = 5.0  # 2x7 horizontal leg
        grid = DensityGrid(cell_size=0.5e-3, values=values)
        region = swarm_region(grid, 4.0)
        r = region.rectangle
        area_cells = (r.x1 - r.x0) * (r.y1 - r.y0) / 0.5e-3**2
        assert round(area_cells) == oracle_inscribed_rectangle(values >= 4.0)

    @pytest.mark.parametrize("seed", range(8))
    def test_random_masks_match_exhaustive_search(self, seed):
        rng = np.random.default_rng(seed)
        values = (rng.random((9, 11)) > 0.45) * 6.0
        grid = DensityGrid(cell_size=0.5e-3, values=values)
        region = swarm_region(grid, 4.0, min_cells=1)
        mask = values >= 4.0
        from scipy import ndimage

        labels, n = ndimage.label(mask)
        if n == 0:
            assert region is None
            return
        sizes = ndimage.sum_labels(np.ones_like(labels), labels, range(1, n + 1))
        comp = labels == (int(np.argmax(sizes)) + 1)
        r = region.rectangle
        s = 0.5e-3
        x0, y0 = round(r.x0 / s), round(r.y0 / s)
        x1, y1 = round(r.x1 / s), round(r.y1 / s)
        assert comp[y0:y1, x0:x1].all(), "returned rectangle not inside component"
        assert (y1 - y0) * (x1 - x0) == oracle_inscribed_rectangle(comp)

    def test_min_cells_filter(self):
        values = np.zeros((10, 10))
        values[5, 5] = 9.0
        grid = DensityGrid(cell_size=0.5e-3, values=values)
        assert swarm_region(grid, 4.0, min_cells=2) is None
        assert swarm_region(grid, 4.0, min_cells=1) is not None


class TestStep:
    def test_field_off_everything_frozen(self):
        scene = small_scene(
            [
                ChainState(n_particles=10, center=(10e-3, 10e-3)),
                ChainState(n_particles=10, center=(10.1e-3, 10e-3)),
            ],
            free=[(12e-3, 12e-3)],
        )
        before_pos = scene.chain_pos.copy()
        before_phi = scene.chain_phi.copy()
        off = FieldCommand(magnitude_b=0.0)
        for _ in range(200):
            step(scene, off, 1e-3)
        np.testing.assert_array_equal(scene.chain_pos, before_pos)
        np.testing.assert_array_equal(scene.chain_phi, before_phi)
        assert len(scene.chain_n) == 2 and len(scene.free_pos) == 1

    def test_single_chain_tracks_field_with_closed_form_lag(self):
        scene = small_scene([ChainState(n_particles=10, center=(20e-3, 12e-3))])
        field_cmd = scenes.default_field()
        for _ in range(2000):
            step(scene, field_cmd, 1e-3)
        expected = phase_lag(
            ChainState(n_particles=10), scene.spec, scene.fluid, field_cmd
        )
        assert isinstance(expected, Synchronous)
        lag = (field_cmd.angle_at(scene.time) - scene.chain_phi[0]) % (2 * math.pi)
        lag = min(lag, abs(lag - math.pi), abs(lag - 2 * math.pi))
        assert lag == pytest.approx(expected.phase_lag_alpha, abs=1e-6)

    def test_pair_dissolved_to_free_particles(self):
        scene = small_scene([ChainState(n_particles=2, center=(10e-3, 10e-3))])
        assert len(scene.chain_n) == 0
        assert len(scene.free_pos) == 2
        assert scene.total_particles() == 2

    def test_merge_of_touching_aligned_chains(self):
        spec = scenes.default_particle_spec()
        gap = 2 * 10 * spec.radius_a + 0.4e-6  # endpoint gap under the capture radius
        scene = small_scene(
            [
                ChainState(n_particles=10, center=(10e-3, 10e-3), axis_angle_phi=0.0),
                ChainState(
                    n_particles=10, center=(10e-3 + gap, 10e-3), axis_angle_phi=0.05
                ),
            ],
            params=replace(scenes.mobile_params(), transport_interval=0.0),
        )
        step(scene, scenes.default_field(), 1e-3)
        assert len(scene.chain_n) == 1
        assert scene.chain_n[0] == 20
        assert scene.total_particles() == 20
        assert scene.tank.contains(scene.chain_pos).all()

    def test_misaligned_chains_do_not_merge(self):
        spec = scenes.default_particle_spec()
        gap = 2 * 10 * spec.radius_a + 0.4e-6
        scene = small_scene(
            [
                ChainState(n_particles=10, center=(10e-3, 10e-3), axis_angle_phi=0.0),
                ChainState(
                    n_particles=10,
                    center=(10e-3 + gap, 10e-3),
                    axis_angle_phi=math.radians(60.0),
                ),
            ],
            params=replace(
                scenes.mobile_params(),
                attraction_coeff=1e-20,
                split_rate=0.0,
                transport_interval=0.0,
            ),
        )
        # zero-rate field so axis angles stay put during the check
        field_cmd = FieldCommand(
            magnitude_b=8e-3, mode=FIELD_ROTATING, frequency_f=0.0
        )
        step(scene, field_cmd, 1e-3)
        assert len(scene.chain_n) == 2

    def test_split_conserves_particles(self):
        params = replace(
            scenes.mobile_params(),
            split_rate=2000.0,
            region_interval=0.0,
            attraction_coeff=1e-30,
            transport_interval=0.0,
        )
        # two adjacent density cells, each well above the swarm threshold
        chains = [
            ChainState(n_particles=20, center=(cx + dx, 12.25e-3 + dy))
            for cx in (22.25e-3, 22.75e-3)
            for dx in (-1.2e-4, 0.0, 1.2e-4)
            for dy in (-1.2e-4, 0.0, 1.2e-4)
        ]
        scene = small_scene(chains, params=params)
        total = scene.total_particles()
        n_before = len(scene.chain_n)
        for _ in range(50):
            step(scene, scenes.default_field(), 1e-3)
        assert scene.total_particles() == total
        assert len(scene.chain_n) > n_before
        assert int(scene.chain_n.min()) >= 3

    def test_determinism_bit_identical(self):
        field_cmd = scenes.default_field(pitch_gamma=math.radians(3.0))
        runs = []
        for _ in range(2):
            scene = scenes.dispersed_disc_scene(n_chains=60, seed=5)
            for _ in range(3000):
                step(scene, field_cmd, 1e-3)
            runs.append(scene)
        a, b = runs
        np.testing.assert_array_equal(a.chain_pos, b.chain_pos)
        np.testing.assert_array_equal(a.chain_phi, b.chain_phi)
        np.testing.assert_array_equal(a.chain_n, b.chain_n)
        np.testing.assert_array_equal(a.free_pos, b.free_pos)
        assert a.rng.bit_generator.state == b.rng.bit_generator.state

    def test_center_of_mass_pinned_without_pitch(self):
        scene = scenes.dispersed_disc_scene(n_chains=40, seed=2, disc_radius=1.5e-3)
        com0 = scene.center_of_mass()
        field_cmd = scenes.default_field()  # pitch 0
        for _ in range(20000):
            step(scene, field_cmd, 1e-3)
        drift = float(np.linalg.norm(scene.center_of_mass() - com0))
        assert drift < scene.spec.radius_a

    def test_aggregation_raises_density(self):
        scene = scenes.dispersed_disc_scene(seed=4)
        pre = density_grid(scene, 0.5e-3)
        pre_mean = pre.values[pre.values > 0].mean()
        field_cmd = scenes.default_field()
        for _ in range(20000):
            step(scene, field_cmd, 1e-3)
        region = swarm_region(density_grid(scene, 0.5e-3), 4.0)
        assert region is not None
        assert region.mean_density > pre_mean


class TestLocomotion:
    def test_zero_pitch_zero_drift(self):
        params = LocomotionParams.calibrated()
        assert locomotion_velocity(0.0, 6.0, params) == 0.0

    def test_strictly_increasing_in_frequency(self):
        params = LocomotionParams.calibrated()
        speeds = [
            locomotion_velocity(math.radians(4.0), f, params) for f in (4.0, 5.0, 6.0)
        ]
        assert speeds[0] < speeds[1] < speeds[2]

    def test_strictly_increasing_in_pitch(self):
        params = LocomotionParams.calibrated()
        speeds = [
            locomotion_velocity(math.radians(g), 6.0, params) for g in (1, 2, 4, 6)
        ]
        assert all(a < b for a, b in zip(speeds, speeds[1:]))

    def test_calibration_anchor(self):
        params = LocomotionParams.calibrated()
        v = locomotion_velocity(math.radians(6.0), 6.0, params)
        assert v == pytest.approx(75e-6, rel=1e-12)

    def test_negative_pitch_rejected(self):
        with pytest.raises(ValueError):
            locomotion_velocity(-0.1, 6.0, LocomotionParams.calibrated())


class TestSnapshots:
    def test_round_trip_resumes_bit_identical(self, tmp_path):
        field_cmd = scenes.default_field(pitch_gamma=math.radians(2.0))
        scene = scenes.dispersed_disc_scene(n_chains=50, seed=9)
        for _ in range(500):
            step(scene, field_cmd, 1e-3)
        path = tmp_path / "scene.json"
        save_scene(scene, path, field_cmd)
        restored, restored_field = load_scene(path)
        assert restored_field == field_cmd
        for _ in range(500):
            step(scene, field_cmd, 1e-3)
            step(restored, restored_field, 1e-3)
        np.testing.assert_array_equal(scene.chain_pos, restored.chain_pos)
        np.testing.assert_array_equal(scene.chain_phi, restored.chain_phi)
        np.testing.assert_array_equal(scene.chain_n, restored.chain_n)
        np.testing.assert_array_equal(scene.free_pos, restored.free_pos)
        assert scene.rng.bit_generator.state == restored.rng.bit_generator.state

    def test_schema_rejected_on_mismatch(self):
        scene = small_scene([])
        record = scene_to_dict(scene)
        record["schema"] = "something-else"
        with pytest.raises(ValueError):
            scene_from_dict(record)
