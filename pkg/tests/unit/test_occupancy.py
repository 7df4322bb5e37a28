import math

import numpy as np
import pytest

from shelfsearch.exceptions import BeliefError
from shelfsearch.models.scene import GenerationConfig, Scene
from shelfsearch.services.geometry import rectangle
from shelfsearch.services.occupancy import (
    OccupancyGrid,
    OccupancyOracle,
    OccupancyProfile,
    build_placement_grid,
    collapse_profile,
    entropy,
    get_oracle,
    initial_belief,
    occupancy_grid,
    placement_consistent,
    update_belief,
)
from shelfsearch.services.render import PixelMask, render_depth
from shelfsearch.services.scene import generate_scene, target_footprint
from shelfsearch.services.seeding import make_rng


def brute_force_consistent(scene, grid, obs, visible, tolerance):
    """Pixel-by-pixel reference: render the target alone at every placement"""
    target = scene.target
    result = []
    for pose in grid.placements:
        lone = Scene(shelf=scene.shelf, objects=(target.model_copy(update={"pose": pose}),), target_id=target.id)
        depth, masks = render_depth(lone, obs.width_px, obs.height_px)
        mine = masks[target.id].membership
        vis = visible.membership
        ok = not (vis & ~mine).any()
        ok &= bool(np.all(np.abs(obs.data - depth.data)[mine & vis] <= tolerance))
        ok &= bool(np.all((obs.data <= depth.data + tolerance)[mine & ~vis]))
        result.append(ok)
    return np.array(result)


class TestPlacementGrid:
    def test_placements_stay_inside_the_shelf(self, shelf):
        cfg = GenerationConfig()
        grid = build_placement_grid(shelf, target_footprint(cfg))
        assert grid.shape == (14, 16, 8)
        assert 0 < len(grid.placements) <= 14 * 16 * 8
        assert all(0.0 <= p.theta < math.pi for p in grid.placements)

    def test_wall_clearance_filters(self, shelf):
        fp = rectangle(0.12, 0.07)
        loose = build_placement_grid(shelf, fp, 14, 16, 1)
        tight = build_placement_grid(shelf, fp, 14, 16, 1, wall_clearance=0.01)
        assert set(tight.placements) <= set(loose.placements)
        assert len(tight.placements) < len(loose.placements)


class TestOracle:
    def test_true_placement_is_consistent(self):
        for seed in range(6):
            scene = generate_scene(GenerationConfig(seed=seed, n_occluders=4, width_px=128, height_px=128))
            target = scene.target
            oracle = get_oracle(target.footprint, target.height, scene.shelf, width_px=128, height_px=128)
            obs, masks = render_depth(scene, 128, 128)
            result = oracle.evaluate(obs, masks[target.id])
            k = oracle.grid.placements.index(target.pose)
            assert result.consistent[k]
            assert not result.flagged
            assert result.grid.values.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(result.grid.values >= 0.0)

    def test_matches_pixel_brute_force(self):
        for seed in range(3):
            scene = generate_scene(GenerationConfig(seed=seed, n_occluders=3, require_full_occlusion=False,
                                                    width_px=32, height_px=32))
            grid = build_placement_grid(scene.shelf, scene.target.footprint, 6, 6, 4)
            oracle = OccupancyOracle(grid, scene.target.footprint, scene.target.height, 32, 32)
            obs, masks = render_depth(scene, 32, 32)
            visible = masks[scene.target_id]
            expected = brute_force_consistent(scene, grid, obs, visible, oracle.tolerance)
            assert np.array_equal(oracle.consistent_placements(obs, visible), expected)

    def test_single_placement_check(self, single_occluder_scene):
        scene = single_occluder_scene
        obs, masks = render_depth(scene, 60, 25)
        target = scene.target
        assert placement_consistent(target.pose, target, obs, masks[target.id], scene.shelf)
        # In plain view to the left of the occluder it would have been seen
        exposed = target.pose.model_copy(update={"x": 0.1})
        assert not placement_consistent(exposed, target, obs, masks[target.id], scene.shelf)

    def test_unexplained_visible_pixels_flag_the_grid(self, single_occluder_scene):
        scene = single_occluder_scene
        obs, _ = render_depth(scene, 60, 25)
        visible = np.zeros((25, 60), dtype=bool)
        visible[24, 30] = True
        grid = build_placement_grid(scene.shelf, scene.target.footprint, 6, 6, 2)
        result = OccupancyOracle(grid, scene.target.footprint, scene.target.height, 60, 25).evaluate(
            obs, PixelMask(visible))
        assert result.flagged
        assert result.n_consistent == 0
        assert np.all(result.grid.values == 0.0)
        assert occupancy_grid(obs, PixelMask(visible), scene.target, grid).flagged

    def test_shape_mismatch(self, single_occluder_scene):
        scene = single_occluder_scene
        obs, _ = render_depth(scene, 60, 25)
        grid = build_placement_grid(scene.shelf, scene.target.footprint, 4, 4, 1)
        oracle = OccupancyOracle(grid, scene.target.footprint, scene.target.height, 32, 32)
        with pytest.raises(BeliefError):
            oracle.evaluate(obs, PixelMask.empty(60, 25))

    def test_oracle_is_cached(self, single_occluder_scene):
        target = single_occluder_scene.target
        a = get_oracle(target.footprint, target.height, single_occluder_scene.shelf, width_px=64, height_px=64)
        b = get_oracle(target.footprint, target.height, single_occluder_scene.shelf, width_px=64, height_px=64)
        assert a is b


class TestEntropy:
    def test_delta_and_uniform(self):
        delta = np.zeros(256)
        delta[17] = 1.0
        assert entropy(OccupancyProfile(delta)) == 0.0
        assert entropy(OccupancyProfile(np.full(256, 1 / 256))) == pytest.approx(math.log(256))

    def test_bounds_on_random_profiles(self):
        rng = make_rng(5)
        for _ in range(2000):
            p = rng.random(256) * (rng.random(256) < 0.3)
            h = entropy(OccupancyProfile(p))
            assert 0.0 <= h <= math.log(256) + 1e-12

    def test_negative_entries(self):
        with pytest.raises(BeliefError):
            entropy(OccupancyProfile(np.array([0.5, -0.1, 0.6])))

    def test_renormalization_switch(self):
        profile = OccupancyProfile(np.array([0.25, 0.25, 0.0]))
        assert entropy(profile) == pytest.approx(math.log(2))
        assert entropy(profile, normalize=False) == pytest.approx(-0.5 * math.log(0.25))

    def test_empty_profile(self):
        assert entropy(OccupancyProfile(np.zeros(8), flagged=True)) == 0.0


class TestBelief:
    def test_history_minimum_never_increases(self):
        rng = make_rng(2)
        for _ in range(200):
            belief = None
            previous = None
            for _ in range(int(rng.integers(1, 8))):
                values = rng.random((4, 16))
                belief = update_belief(belief, OccupancyGrid(values / values.sum()))
                if previous is not None:
                    assert np.all(belief.history_min <= previous)
                previous = belief.history_min
        assert belief.step_index >= 0

    def test_first_update_copies_the_grid(self):
        values = np.full((2, 3), 1 / 6)
        belief = update_belief(None, OccupancyGrid(values))
        assert np.array_equal(belief.history_min, values)
        assert belief.history_min is not values
        assert initial_belief(OccupancyGrid(values)).step_index == 0

    def test_shape_mismatch(self):
        belief = initial_belief(OccupancyGrid(np.ones((2, 3)) / 6))
        with pytest.raises(BeliefError):
            update_belief(belief, OccupancyGrid(np.ones((3, 2)) / 6))

    def test_collapse_sums_rows(self):
        values = np.array([[0.1, 0.2, 0.0], [0.3, 0.4, 0.0]])
        profile = collapse_profile(initial_belief(OccupancyGrid(values)))
        assert np.allclose(profile.values, [0.4, 0.6, 0.0])
        assert not profile.flagged
        zero = collapse_profile(initial_belief(OccupancyGrid.zeros(3, 2)))
        assert zero.flagged
