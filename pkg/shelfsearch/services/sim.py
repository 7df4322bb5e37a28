"""
First-order shelf dynamics: blade insertion checks, frictionless chained lateral pushes
with wall stops and a stationary target, and the closed-loop search rollout.

Pushes are pure x translations. Contact is resolved event by event with exact sweep
distances: anything a moving body touches joins the moving set, a moving object reaching
a side wall stops the whole push, and a pushed object reaching the target halts it (the
target is never moved under the default contact policy). The blade is a contact body for
every object but the target.
"""
import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from shelfsearch import config
from shelfsearch.exceptions import PushPreconditionError
from shelfsearch.models.geometry import Direction
from shelfsearch.models.scene import Scene
from shelfsearch.models.sim import (
    HaltReason,
    PushAction,
    PushOutcome,
    RolloutConfig,
    RolloutRecord,
    StepRecord,
    TerminationReason,
)
from shelfsearch.services.geometry import box, penetration_depth, posed_vertices, sweep_contact_distance, translate_x
from shelfsearch.services.occupancy import (
    BeliefState,
    OccupancyOracle,
    collapse_profile,
    entropy,
    get_oracle,
    update_belief,
)
from shelfsearch.services.pgm import write_occupancy_pgm, write_pgm, write_profile_overlay_pgm
from shelfsearch.services.render import DepthImage, Segment, fraction_of_target, render_depth, segment_observation
from shelfsearch.services.scene import scene_digest

logger = logging.getLogger(__name__)

CONTACT_TOLERANCE = config.CONTACT_TOLERANCE


def _blade_box(direction: Direction, face_x: float, thickness: float, depth: float) -> np.ndarray:
    # The blade trails its leading face
    if direction is Direction.RIGHT:
        return box(face_x - thickness, face_x, 0.0, depth)
    return box(face_x, face_x + thickness, 0.0, depth)


def _engage(scene: Scene, action: PushAction, blade_thickness: float,
            posed: List[np.ndarray]) -> Optional[Tuple[int, np.ndarray]]:
    """
    Index of the object the blade pushes and the blade footprint snapped flush against it,
    or None when the insertion is not possible.
    """
    shelf = scene.shelf
    x, z = action.start.x, action.start.z
    if not (0.0 <= x <= shelf.width and 0.0 < z <= shelf.depth):
        return None

    blade = _blade_box(action.direction, x, max(blade_thickness, CONTACT_TOLERANCE), z)
    if any(penetration_depth(blade, verts) > CONTACT_TOLERANCE for verts in posed):
        return None

    reach = config.BLADE_ENGAGE_TOLERANCE
    best, best_d = None, math.inf
    for k, verts in enumerate(posed):
        d = sweep_contact_distance(blade, verts, action.direction, reach + 1.0)
        if d <= reach and d < best_d:
            best, best_d = k, d
    if best is None:
        return None

    snapped = translate_x(blade, action.direction.sign * best_d)
    lo, hi = snapped[:, 0].min(), snapped[:, 0].max()
    if lo < -CONTACT_TOLERANCE or hi > shelf.width + CONTACT_TOLERANCE:
        return None
    for k, verts in enumerate(posed):
        if k != best and penetration_depth(snapped, verts) > CONTACT_TOLERANCE:
            return None
    return best, snapped


def blade_feasible(scene: Scene, action: PushAction, blade_thickness: float = config.BLADE_THICKNESS) -> bool:
    """Whether the blade fits flush against a non-target object at the insertion point"""
    posed = [posed_vertices(obj.footprint, obj.pose) for obj in scene.objects]
    engaged = _engage(scene, action, blade_thickness, posed)
    if engaged is None:
        return False
    return not scene.objects[engaged[0]].is_target


def execute_push(
    scene: Scene,
    action: PushAction,
    blade_thickness: float = config.BLADE_THICKNESS,
    target_contact_policy: str = config.TARGET_CONTACT_POLICY,
) -> Tuple[Scene, PushOutcome]:
    """
    Quasi-static frictionless push. Returns the updated scene and, per moved object in
    contact-chain order, its realized displacement.
    """
    posed = [posed_vertices(obj.footprint, obj.pose) for obj in scene.objects]
    engaged = _engage(scene, action, blade_thickness, posed)
    if engaged is None:
        raise PushPreconditionError(
            f"no blade insertion at x={action.start.x:.4f}, z={action.start.z:.4f} pushing {action.direction.value}"
        )
    pushed, blade = engaged
    if scene.objects[pushed].is_target:
        raise PushPreconditionError("the blade would push the target directly")

    shelf = scene.shelf
    sign = action.direction.sign
    remaining = action.distance
    traveled = 0.0
    joined_at: Dict[int, float] = {pushed: 0.0}
    order: List[int] = [pushed]
    halted_by = HaltReason.DISTANCE_EXHAUSTED

    while True:
        moving = [blade] + [posed[k] for k in order]
        if action.direction is Direction.RIGHT:
            d_wall = min(shelf.width - posed[k][:, 0].max() for k in order)
        else:
            d_wall = min(posed[k][:, 0].min() for k in order)
        d_wall = max(d_wall, 0.0)

        d_contact, touching = remaining, []
        for j, verts in enumerate(posed):
            if j in joined_at:
                continue
            # Only pushed objects strike the target; the blade slides past it
            bodies = moving[1:] if scene.objects[j].is_target else moving
            d = min(sweep_contact_distance(body, verts, action.direction, remaining) for body in bodies)
            if d < d_contact - CONTACT_TOLERANCE:
                d_contact, touching = d, [j]
            elif d <= d_contact + CONTACT_TOLERANCE and d < remaining:
                touching.append(j)

        step = min(remaining, d_wall, d_contact)
        if step > 0.0:
            blade = translate_x(blade, sign * step)
            for k in order:
                posed[k] = translate_x(posed[k], sign * step)
            traveled += step
            remaining -= step

        if d_wall <= step:
            halted_by = HaltReason.WALL
            break
        if remaining <= CONTACT_TOLERANCE or not touching:
            halted_by = HaltReason.DISTANCE_EXHAUSTED
            break
        if any(scene.objects[j].is_target for j in touching) and target_contact_policy == "halt":
            halted_by = HaltReason.TARGET_CONTACT
            break
        for j in touching:
            joined_at[j] = traveled
            order.append(j)

    displacements = {scene.objects[k].id: sign * (traveled - joined_at[k]) for k in order}
    moved = [(scene.objects[k].id, displacements[scene.objects[k].id]) for k in order]
    outcome = PushOutcome(
        moved=moved,
        halted_by=halted_by,
        realized_distance=traveled,
        pushed_id=scene.objects[pushed].id,
    )
    logger.debug(
        f"Push {action.direction.value} {action.distance:.4f} m moved {len(order)} object(s) "
        f"{traveled:.4f} m, halted by {halted_by.value}"
    )
    return scene.with_displacements(displacements), outcome


def plan_distance(obs: DepthImage, segments: List[Segment], segment_id: int, direction: Direction) -> float:
    """
    Free lateral distance in front of a segment, read off the observation: columns are
    free until one holds another surface nearer than where the segment is expected to end.
    One pixel is held back for quantization.
    """
    seg = next(s for s in segments if s.id == segment_id)
    other = obs.foreground & ~seg.mask.membership
    nearest = np.where(other, obs.data, np.inf).min(axis=0)
    blocked = nearest < seg.rear_depth

    x_min, x_max = seg.column_span
    if direction is Direction.RIGHT:
        ahead = blocked[x_max + 1:]
    else:
        ahead = blocked[:x_min][::-1]
    hits = np.flatnonzero(ahead)
    free = int(hits[0]) if hits.size else int(ahead.size)
    return max(0.0, (free - 1) * obs.pitch_x)


def action_key(column_span: Tuple[int, int], direction: Direction) -> Tuple:
    """Identity of a push across re-segmentations of the same observation"""
    return tuple(column_span), direction.value


def _dump_step(dump_dir: Path, step: int, obs: DepthImage, oracle_grid, previous, belief: Optional[BeliefState]):
    write_pgm(dump_dir / f"step_{step:02d}_depth.pgm", obs)
    write_occupancy_pgm(dump_dir / f"step_{step:02d}_occupancy.pgm", oracle_grid)
    current = oracle_grid.values.sum(axis=0)
    history = belief.history_min.sum(axis=0) if belief is not None else np.zeros_like(current)
    write_profile_overlay_pgm(dump_dir / f"step_{step:02d}_profiles.pgm", obs, previous, current, history)
    return current


def rollout(scene: Scene, policy, cfg: Optional[RolloutConfig] = None,
            max_steps: Optional[int] = None, reveal_threshold: Optional[float] = None) -> RolloutRecord:
    """
    Closed search loop: render, detect the target, run the oracle, update the belief,
    stop once enough of the target shows, otherwise push what the policy picks.
    """
    cfg = cfg or RolloutConfig()
    updates = {}
    if max_steps is not None:
        updates["max_steps"] = max_steps
    if reveal_threshold is not None:
        updates["reveal_threshold"] = reveal_threshold
    if updates:
        cfg = cfg.model_copy(update=updates)

    target = scene.target
    oracle: OccupancyOracle = get_oracle(
        target.footprint, target.height, scene.shelf, tuple(cfg.placement_grid),
        cfg.full_rotation, cfg.width_px, cfg.height_px,
    )
    dump_dir = Path(cfg.dump_dir) if cfg.dump_dir else None
    if dump_dir is not None:
        dump_dir.mkdir(parents=True, exist_ok=True)

    digest = scene_digest(scene)
    belief: Optional[BeliefState] = None
    steps: List[StepRecord] = []
    stalled: Set[Tuple] = set()
    previous_profile = None
    steps_taken = 0
    fraction = 0.0
    termination = TerminationReason.STEP_BUDGET

    while True:
        obs, masks = render_depth(scene, cfg.width_px, cfg.height_px)
        visible = masks[scene.target_id]
        fraction = fraction_of_target(scene, visible, cfg.width_px, cfg.height_px)
        result = oracle.evaluate(obs, visible)
        if result.flagged:
            logger.warning(f"Scene {digest} step {steps_taken}: no consistent target placement, keeping belief")
        else:
            belief = update_belief(belief, result.grid)
        current_entropy = entropy(collapse_profile(belief), cfg.entropy_normalize) if belief is not None else 0.0
        if steps:
            steps[-1].entropy_after = current_entropy
        if dump_dir is not None:
            previous_profile = _dump_step(dump_dir, steps_taken, obs, result.grid, previous_profile, belief)

        record = StepRecord(
            step=steps_taken,
            observation_digest=obs.digest(),
            entropy_before=current_entropy,
            visible_fraction=fraction,
            n_consistent=result.n_consistent,
        )
        steps.append(record)

        if fraction >= cfg.reveal_threshold:
            termination = TerminationReason.REVEALED
            break
        if steps_taken >= cfg.max_steps:
            termination = TerminationReason.STEP_BUDGET
            break

        segments = segment_observation(obs, cfg.discontinuity_threshold)
        excluded = set(stalled)
        chosen, outcome = None, None
        while True:
            candidate = policy.select(None if result.flagged else belief, obs, segments, visible, oracle, excluded)
            if candidate is None:
                break
            action = candidate.action
            key = action_key(candidate.pushed_segment.column_span, action.direction)
            if not blade_feasible(scene, action, cfg.blade_thickness):
                logger.warning(f"Scene {digest} step {steps_taken}: blade cannot be inserted for {key}, asking again")
                excluded.add(key)
                record.rejected_actions += 1
                continue
            chosen = candidate
            break

        if chosen is None:
            termination = TerminationReason.NO_FEASIBLE_ACTION
            break

        scene, outcome = execute_push(scene, chosen.action, cfg.blade_thickness, cfg.target_contact_policy)
        steps_taken += 1
        record.action = chosen.action
        record.pushed_segment = chosen.pushed_segment.id
        record.outcome = outcome
        # Pushes of a pixel or less are not retried until something moves farther
        if outcome.realized_distance <= obs.pitch_x:
            stalled.add(action_key(chosen.pushed_segment.column_span, chosen.action.direction))
        else:
            stalled.clear()
        logger.debug(
            f"Scene {digest} step {steps_taken}: {policy.name} pushed segment {chosen.pushed_segment.id} "
            f"{chosen.action.direction.value} {outcome.realized_distance:.4f} m"
        )

    record = RolloutRecord(
        policy=policy.name,
        scene_digest=digest,
        success=termination is TerminationReason.REVEALED,
        steps_taken=steps_taken,
        termination_reason=termination,
        final_visible_fraction=fraction,
        steps=steps,
    )
    logger.info(
        f"Rollout {policy.name} on scene {digest}: {termination.value} after {steps_taken} step(s), "
        f"visible fraction {fraction:.3f}"
    )
    return record


def rollout_log_lines(record: RolloutRecord, **context) -> List[str]:
    """Line-delimited log of a rollout: one "step" record per step, then one "result" record"""
    lines = []
    for step in record.steps:
        lines.append(json.dumps({"kind": "step", "policy": record.policy, "scene_digest": record.scene_digest,
                                 **context, **step.model_dump(mode="json")}, sort_keys=True))
    summary = record.model_dump(mode="json", exclude={"steps"})
    lines.append(json.dumps({"kind": "result", **context, **summary}, sort_keys=True))
    return lines


def write_rollout_log(path: Path, record: RolloutRecord, **context) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as f:
        for line in rollout_log_lines(record, **context):
            f.write(line + "\n")


def read_rollout_results(path: Path) -> List[dict]:
    """The "result" records of a rollout log, with any extra context fields kept"""
    results = []
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            entry = json.loads(line)
            if entry.get("kind") == "result":
                results.append(entry)
    return results
