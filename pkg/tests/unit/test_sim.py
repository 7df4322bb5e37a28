import json

import numpy as np
import pytest
from PIL import Image

from shelfsearch.exceptions import PushPreconditionError
from shelfsearch.models.geometry import Direction, Point2
from shelfsearch.models.scene import GenerationConfig
from shelfsearch.models.sim import HaltReason, PushAction, PushOutcome, RolloutConfig, TerminationReason
from shelfsearch.services.geometry import box as box_vertices
from shelfsearch.services.geometry import penetration_depth, posed_vertices, translate_x
from shelfsearch.services.policy import make_policy
from shelfsearch.services.render import segment_observation
from shelfsearch.services.scene import generate_scene, validate_scene
from shelfsearch.services.sim import (
    action_key,
    blade_feasible,
    execute_push,
    plan_distance,
    read_rollout_results,
    rollout,
    rollout_log_lines,
    write_rollout_log,
)

T = 0.01


def push(direction, distance, x, z):
    return PushAction(direction=direction, distance=distance, start=Point2(x=x, z=z))


def micro_push(scene, action, thickness, step=1e-4):
    """Reference dynamics: advance in tiny steps, join whatever the moving set penetrates,
    stop before a moving object crosses a wall or a pushed object would enter the target.
    The blade passes the target."""
    width = scene.shelf.width
    sign = action.direction.sign
    posed = {o.id: posed_vertices(o.footprint, o.pose) for o in scene.objects}
    x, z = action.start.x, action.start.z
    blade = box_vertices(x - thickness, x, 0.0, z) if action.direction is Direction.RIGHT \
        else box_vertices(x, x + thickness, 0.0, z)
    joined = {}
    traveled = 0.0
    for _ in range(int(round(action.distance / step))):
        trial_blade = translate_x(blade, sign * step)
        trial = {oid: translate_x(posed[oid], sign * step) for oid in joined}
        if any(v[:, 0].min() < 0.0 or v[:, 0].max() > width for v in trial.values()):
            break
        bodies = [trial_blade, *trial.values()]
        if any(penetration_depth(v, posed[scene.target_id]) > 1e-9 for v in trial.values()):
            break
        hits = [o for o in scene.objects if o.id not in joined and not o.is_target
                and any(penetration_depth(b, posed[o.id]) > 1e-9 for b in bodies)]
        blade = trial_blade
        posed.update(trial)
        traveled += step
        for o in hits:
            joined[o.id] = traveled
    return {oid: traveled - t0 for oid, t0 in joined.items()}, traveled


def face_actions(scene, distance):
    """Pushes with the blade flush against each non-target object's extreme vertex"""
    for obj in scene.objects:
        if obj.is_target:
            continue
        verts = posed_vertices(obj.footprint, obj.pose)
        for direction in (Direction.RIGHT, Direction.LEFT):
            k = verts[:, 0].argmin() if direction is Direction.RIGHT else verts[:, 0].argmax()
            z = min(verts[k, 1] + 0.005, scene.shelf.depth)
            yield push(direction, distance, float(verts[k, 0]), float(z))


@pytest.fixture
def two_boxes(box, scene_of):
    def build(a, b, target=(0.45, 0.52, 0.3, 0.37)):
        return scene_of(box("a", *a), box("b", *b), box("target", *target, height=0.07, is_target=True))
    return build


class TestBladeFeasibility:
    def test_flush_and_within_reach(self, box, scene_of):
        scene = scene_of(box("a", 0.1, 0.2, 0.1, 0.2), box("target", 0.4, 0.47, 0.3, 0.37, is_target=True))
        assert blade_feasible(scene, push(Direction.RIGHT, 0.1, 0.1, 0.15), T)
        assert blade_feasible(scene, push(Direction.RIGHT, 0.1, 0.097, 0.15), T)
        assert blade_feasible(scene, push(Direction.LEFT, 0.1, 0.203, 0.15), T)

    def test_rejections(self, box, scene_of):
        scene = scene_of(box("a", 0.1, 0.2, 0.1, 0.2), box("target", 0.4, 0.47, 0.3, 0.37, is_target=True))
        assert not blade_feasible(scene, push(Direction.RIGHT, 0.1, 0.15, 0.15), T)  # inside a
        assert not blade_feasible(scene, push(Direction.RIGHT, 0.1, 0.05, 0.15), T)  # nothing in reach
        assert not blade_feasible(scene, push(Direction.RIGHT, 0.1, 0.1, 0.5), T)  # beyond the back wall
        assert not blade_feasible(scene, push(Direction.RIGHT, 0.1, 0.4, 0.35), T)  # engages the target

    def test_blade_must_fit_between_wall_and_object(self, box, scene_of):
        scene = scene_of(box("a", 0.005, 0.1, 0.1, 0.2), box("target", 0.4, 0.47, 0.3, 0.37, is_target=True))
        assert not blade_feasible(scene, push(Direction.RIGHT, 0.1, 0.004, 0.15), T)
        assert blade_feasible(scene, push(Direction.RIGHT, 0.1, 0.004, 0.15), 0.004)

    def test_blade_blocked_by_object_in_front(self, box, scene_of):
        scene = scene_of(
            box("a", 0.1, 0.2, 0.2, 0.3),
            box("front", 0.05, 0.12, 0.02, 0.08),
            box("target", 0.4, 0.47, 0.3, 0.37, is_target=True),
        )
        assert not blade_feasible(scene, push(Direction.RIGHT, 0.1, 0.1, 0.25), T)


class TestExecutePush:
    def test_free_push(self, two_boxes):
        scene = two_boxes((0.2, 0.3, 0.1, 0.2), (0.2, 0.3, 0.25, 0.3))
        new_scene, outcome = execute_push(scene, push(Direction.RIGHT, 0.1, 0.2, 0.15), T)
        assert outcome.moved == [("a", pytest.approx(0.1))]
        assert outcome.halted_by is HaltReason.DISTANCE_EXHAUSTED
        assert outcome.realized_distance == pytest.approx(0.1)
        assert new_scene.get("a").pose.x == pytest.approx(0.35)
        assert new_scene.get("b") == scene.get("b")

    def test_wall_stops_the_push(self, two_boxes):
        scene = two_boxes((0.5, 0.58, 0.1, 0.2), (0.1, 0.15, 0.1, 0.2))
        _, outcome = execute_push(scene, push(Direction.RIGHT, 0.1, 0.5, 0.15), T)
        assert outcome.halted_by is HaltReason.WALL
        assert outcome.displacement_of("a") == pytest.approx(0.02)

    def test_chain_push(self, two_boxes):
        scene = two_boxes((0.1, 0.2, 0.1, 0.2), (0.23, 0.3, 0.12, 0.18))
        new_scene, outcome = execute_push(scene, push(Direction.RIGHT, 0.1, 0.1, 0.15), T)
        assert [oid for oid, _ in outcome.moved] == ["a", "b"]
        assert outcome.displacement_of("a") == pytest.approx(0.10)
        assert outcome.displacement_of("b") == pytest.approx(0.07)
        assert validate_scene(new_scene) == []

    def test_left_chain_into_wall(self, two_boxes):
        scene = two_boxes((0.2, 0.3, 0.1, 0.2), (0.05, 0.15, 0.12, 0.18))
        _, outcome = execute_push(scene, push(Direction.LEFT, 0.3, 0.3, 0.15), T)
        assert outcome.halted_by is HaltReason.WALL
        assert outcome.displacement_of("a") == pytest.approx(-0.10)
        assert outcome.displacement_of("b") == pytest.approx(-0.05)

    def test_target_contact_halts(self, box, scene_of):
        scene = scene_of(box("a", 0.1, 0.2, 0.1, 0.2), box("target", 0.25, 0.32, 0.1, 0.17, is_target=True))
        new_scene, outcome = execute_push(scene, push(Direction.RIGHT, 0.1, 0.1, 0.15), T)
        assert outcome.halted_by is HaltReason.TARGET_CONTACT
        assert outcome.realized_distance == pytest.approx(0.05)
        assert new_scene.target == scene.target

    def test_push_through_moves_the_target(self, box, scene_of):
        scene = scene_of(box("a", 0.1, 0.2, 0.1, 0.2), box("target", 0.25, 0.32, 0.1, 0.17, is_target=True))
        _, outcome = execute_push(scene, push(Direction.RIGHT, 0.1, 0.1, 0.15), T, "push_through")
        assert outcome.displacement_of("a") == pytest.approx(0.1)
        assert outcome.displacement_of("target") == pytest.approx(0.05)

    def test_blade_passes_the_target(self, box, scene_of):
        scene = scene_of(box("occ", 0.25, 0.36, 0.20, 0.30),
                         box("target", 0.27, 0.34, 0.31, 0.38, height=0.07, is_target=True))
        # The blade reaches past the occluder's rear face and crosses the target's columns
        new_scene, outcome = execute_push(scene, push(Direction.LEFT, 0.24, 0.363, 0.3125), T)
        assert outcome.moved == [("occ", pytest.approx(-0.24))]
        assert outcome.halted_by is HaltReason.DISTANCE_EXHAUSTED
        assert outcome.realized_distance == pytest.approx(0.24)
        assert new_scene.target == scene.target

    def test_zero_distance(self, two_boxes):
        scene = two_boxes((0.2, 0.3, 0.1, 0.2), (0.2, 0.3, 0.25, 0.3))
        new_scene, outcome = execute_push(scene, push(Direction.RIGHT, 0.0, 0.2, 0.15), T)
        assert outcome.realized_distance == 0.0
        assert new_scene.get("a").pose.x == pytest.approx(scene.get("a").pose.x)

    def test_infeasible_insertion_raises(self, two_boxes):
        scene = two_boxes((0.2, 0.3, 0.1, 0.2), (0.2, 0.3, 0.25, 0.3))
        with pytest.raises(PushPreconditionError):
            execute_push(scene, push(Direction.RIGHT, 0.1, 0.05, 0.15), T)

    def test_matches_micro_step_reference(self):
        checked = 0
        seed = 0
        while checked < 20 and seed < 60:
            scene = generate_scene(GenerationConfig(seed=seed, n_occluders=5, require_full_occlusion=False,
                                                    width_px=64, height_px=64))
            seed += 1
            for action in face_actions(scene, 0.05):
                if not blade_feasible(scene, action, T):
                    continue
                new_scene, outcome = execute_push(scene, action, T)
                expected, traveled = micro_push(scene, action, T)
                assert outcome.realized_distance == pytest.approx(traveled, abs=1e-3)
                assert {oid for oid, _ in outcome.moved} == set(expected)
                for oid, dx in outcome.moved:
                    assert abs(dx) == pytest.approx(expected[oid], abs=1e-3)
                assert not any(v.startswith("objects intersect") for v in validate_scene(new_scene))
                assert new_scene.target == scene.target
                checked += 1
        assert checked >= 20

    @pytest.mark.slow
    def test_micro_step_reference_on_many_scenes(self):
        rng = np.random.default_rng(17)
        checked = 0
        for seed in range(400):
            if checked >= 1000:
                break
            scene = generate_scene(GenerationConfig(seed=seed, n_occluders=int(2 + seed % 7),
                                                    require_full_occlusion=False, width_px=64, height_px=64))
            for action in face_actions(scene, float(rng.uniform(0.0, 0.08))):
                if not blade_feasible(scene, action, T):
                    continue
                new_scene, outcome = execute_push(scene, action, T)
                expected, traveled = micro_push(scene, action, T)
                assert outcome.realized_distance == pytest.approx(traveled, abs=1e-3)
                assert new_scene.target == scene.target
                assert not any(v.startswith("objects intersect") for v in validate_scene(new_scene))
                for oid, dx in outcome.moved:
                    assert np.sign(dx) in (0.0, action.direction.sign)
                    assert abs(dx) <= action.distance + 1e-9
                checked += 1
        assert checked >= 1000


class TestPlanDistance:
    def test_free_columns_minus_one_pixel(self, strip_image):
        obs = strip_image((10, 19, 0.1), (30, 34, 0.05))
        segments = segment_observation(obs)
        assert plan_distance(obs, segments, 0, Direction.RIGHT) == pytest.approx(0.09)
        assert plan_distance(obs, segments, 0, Direction.LEFT) == pytest.approx(0.09)

    def test_surfaces_behind_the_segment_do_not_block(self, strip_image):
        obs = strip_image((10, 19, 0.1), (30, 34, 0.5))
        segments = segment_observation(obs)
        assert plan_distance(obs, segments, 0, Direction.RIGHT) == pytest.approx(0.19)

    def test_blocking_uses_where_the_segment_ends(self, strip_image):
        obs = strip_image((25, 29, 0.21))
        data = obs.data.copy()
        # Slanted face: nearest point 0.1, observed width 0.1, so the object should end near 0.2
        data[:, 10:20] = 0.1 + 0.002 * np.arange(10)
        obs = obs.with_data(data)
        segments = segment_observation(obs)
        assert segments[0].rear_depth == pytest.approx(0.2)
        assert segments[0].far_depth == pytest.approx(0.218)
        assert plan_distance(obs, segments, 0, Direction.RIGHT) == pytest.approx(0.19)

    def test_against_the_wall(self, strip_image):
        obs = strip_image((0, 9, 0.1))
        segments = segment_observation(obs)
        assert plan_distance(obs, segments, 0, Direction.LEFT) == 0.0

    def test_action_key(self):
        assert action_key((3, 7), Direction.LEFT) == ((3, 7), "left")


class TestRollout:
    def test_visible_target_needs_no_pushes(self, box, scene_of, small_rollout_cfg):
        scene = scene_of(box("a", 0.05, 0.1, 0.05, 0.1), box("target", 0.3, 0.37, 0.2, 0.27, height=0.07,
                                                             is_target=True))
        record = rollout(scene, make_policy("dar", small_rollout_cfg), small_rollout_cfg)
        assert record.success
        assert record.steps_taken == 0
        assert record.termination_reason is TerminationReason.REVEALED
        assert len(record.steps) == 1

    @pytest.mark.parametrize("name", ["uniform", "dar", "der1"])
    def test_single_occluder_takes_one_push(self, name, single_occluder_scene, small_rollout_cfg):
        record = rollout(single_occluder_scene, make_policy(name, small_rollout_cfg), small_rollout_cfg)
        assert record.success
        assert record.steps_taken == 1
        outcome = record.steps[0].outcome
        assert outcome.pushed_id == "occluder"
        assert outcome.realized_distance > 0.2
        assert record.final_visible_fraction >= 0.9

    @pytest.mark.parametrize("name", ["uniform", "dar"])
    def test_deep_occluder_is_pushed_clear_of_the_target(self, name, box, scene_of, small_rollout_cfg):
        scene = scene_of(box("occ", 0.25, 0.36, 0.20, 0.30),
                         box("target", 0.27, 0.34, 0.31, 0.38, height=0.07, is_target=True))
        record = rollout(scene, make_policy(name, small_rollout_cfg), small_rollout_cfg)
        assert record.success
        assert record.steps_taken == 1
        outcome = record.steps[0].outcome
        assert outcome.halted_by is HaltReason.DISTANCE_EXHAUSTED
        assert [oid for oid, _ in outcome.moved] == ["occ"]
        assert outcome.realized_distance > 0.2

    def test_stalled_pushes_are_not_retried(self, single_occluder_scene, small_rollout_cfg, monkeypatch):
        def stuck(scene, action, *args):
            outcome = PushOutcome(moved=[("occluder", action.direction.sign * 0.002)], halted_by=HaltReason.WALL,
                                  realized_distance=0.002, pushed_id="occluder")
            return scene, outcome

        monkeypatch.setattr("shelfsearch.services.sim.execute_push", stuck)
        record = rollout(single_occluder_scene, make_policy("dar", small_rollout_cfg), small_rollout_cfg)
        assert record.termination_reason is TerminationReason.NO_FEASIBLE_ACTION
        assert record.steps_taken == 2
        directions = [s.action.direction for s in record.steps if s.action is not None]
        assert sorted(d.value for d in directions) == ["left", "right"]

    def test_wall_to_wall_occluder_has_no_action(self, box, scene_of, small_rollout_cfg):
        scene = scene_of(box("wide", 0.0, 0.6, 0.05, 0.10),
                         box("target", 0.265, 0.335, 0.20, 0.27, height=0.07, is_target=True))
        record = rollout(scene, make_policy("dar", small_rollout_cfg), small_rollout_cfg)
        assert not record.success
        assert record.termination_reason is TerminationReason.NO_FEASIBLE_ACTION
        assert record.steps_taken == 0

    def test_step_budget(self, single_occluder_scene, small_rollout_cfg):
        record = rollout(single_occluder_scene, make_policy("dar", small_rollout_cfg), small_rollout_cfg, max_steps=0)
        assert record.termination_reason is TerminationReason.STEP_BUDGET
        assert not record.success

    def test_entropy_is_recorded_per_step(self, box, scene_of, small_rollout_cfg):
        # Wide enough that some grid placements hide completely behind it
        scene = scene_of(box("occluder", 0.2, 0.4, 0.05, 0.10),
                         box("target", 0.265, 0.335, 0.20, 0.27, height=0.07, is_target=True))
        record = rollout(scene, make_policy("dar", small_rollout_cfg), small_rollout_cfg)
        first = record.steps[0]
        assert first.entropy_before > 0.0
        assert first.entropy_after == record.steps[1].entropy_before
        assert first.n_consistent > 0

    def test_deterministic(self, small_rollout_cfg):
        scene = generate_scene(GenerationConfig(seed=4, n_occluders=4, width_px=128, height_px=128))
        a = rollout(scene, make_policy("dar", small_rollout_cfg), small_rollout_cfg)
        b = rollout(scene, make_policy("dar", small_rollout_cfg), small_rollout_cfg)
        assert rollout_log_lines(a) == rollout_log_lines(b)

    def test_log_lines_and_reading_back(self, single_occluder_scene, small_rollout_cfg, tmp_path):
        record = rollout(single_occluder_scene, make_policy("dar", small_rollout_cfg), small_rollout_cfg)
        lines = rollout_log_lines(record, occluders=1, scene_index=0)
        entries = [json.loads(line) for line in lines]
        assert [e["kind"] for e in entries] == ["step", "step", "result"]
        assert entries[-1]["success"] is True
        assert entries[-1]["occluders"] == 1
        log = tmp_path / "rollouts.jsonl"
        write_rollout_log(log, record, occluders=1, scene_index=0)
        write_rollout_log(log, record, occluders=1, scene_index=1)
        results = read_rollout_results(log)
        assert [r["scene_index"] for r in results] == [0, 1]

    def test_image_dumps(self, single_occluder_scene, tmp_path):
        cfg = RolloutConfig(width_px=128, height_px=128, dump_dir=str(tmp_path / "dump"))
        rollout(single_occluder_scene, make_policy("dar", cfg), cfg)
        depth = tmp_path / "dump" / "step_00_depth.pgm"
        assert depth.read_bytes().startswith(b"P5")
        with Image.open(depth) as image:
            assert image.size == (128, 128)
        with Image.open(tmp_path / "dump" / "step_00_profiles.pgm") as image:
            assert image.size == (128, 128 + 3 * 32)
        assert (tmp_path / "dump" / "step_01_occupancy.pgm").exists()
