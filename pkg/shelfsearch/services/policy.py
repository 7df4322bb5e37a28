"""
Search policies over lateral pushes.

All policies share one candidate generator: every observed segment (except ones showing
the target) may be pushed left or right by the free distance the observation shows.
Uniform and DAR rank candidates by how much profile mass a push uncovers minus how much
it covers; DER-n predicts the depth image after n pushes, re-runs the occupancy oracle on
each prediction and picks the first push of the sequence with the lowest predicted
belief entropy.
"""
import hashlib
import logging
from dataclasses import dataclass
from typing import AbstractSet, Dict, List, Optional, Tuple

import numpy as np

from shelfsearch import config
from shelfsearch.exceptions import NodeBudgetExceeded
from shelfsearch.models.geometry import Direction, Point2
from shelfsearch.models.policy import PolicyConfig
from shelfsearch.models.sim import PushAction, RolloutConfig
from shelfsearch.services.occupancy import (
    BeliefState,
    OccupancyOracle,
    OccupancyProfile,
    OccupancyResult,
    collapse_profile,
    entropy,
    update_belief,
)
from shelfsearch.services.render import DepthImage, PixelMask, Segment, segment_observation
from shelfsearch.services.sim import action_key, plan_distance

logger = logging.getLogger(__name__)

_DIRECTION_ORDER = {Direction.LEFT: 0, Direction.RIGHT: 1}


@dataclass(frozen=True, eq=False)
class CandidateAction:
    action: PushAction
    pushed_segment: Segment
    newly_revealed_columns: np.ndarray
    newly_covered_columns: np.ndarray

    @property
    def key(self) -> Tuple:
        return action_key(self.pushed_segment.column_span, self.action.direction)


def _order_key(value: float, candidate: CandidateAction) -> Tuple:
    # Rounded so float noise cannot reorder equal scores
    return round(value, 12), candidate.pushed_segment.column_span[0], _DIRECTION_ORDER[candidate.action.direction]


def _shows_target(segment: Segment, visible: PixelMask) -> bool:
    return bool(np.any(segment.mask.membership & visible.membership))


def _column_shift(obs: DepthImage, action: PushAction) -> int:
    return int(action.direction.sign) * int(round(action.distance / obs.pitch_x))


def _blade_span(x: float, direction: Direction, thickness: float) -> Tuple[float, float]:
    return (x - thickness, x) if direction is Direction.RIGHT else (x, x + thickness)


def _nearest_other_surface(obs: DepthImage, segment: Segment, lo: float, hi: float) -> float:
    """Nearest observed depth of anything but the segment in the columns between lo and hi"""
    first = max(int(np.floor(lo / obs.pitch_x)), 0)
    last = min(int(np.floor(hi / obs.pitch_x)), obs.width_px - 1)
    if last < first:
        return np.inf
    other = obs.foreground & ~segment.mask.membership
    return float(np.where(other[:, first:last + 1], obs.data[:, first:last + 1], np.inf).min(initial=np.inf))


def _observed_blade_clear(obs: DepthImage, segment: Segment, direction: Direction,
                          start: Point2, thickness: float) -> bool:
    """Blade footprint at the insertion point stays inside the walls, reaches past the
    segment's edge column and ends in front of every other observed surface"""
    lo, hi = _blade_span(start.x, direction, thickness)
    if lo < 0.0 or hi > obs.width_px * obs.pitch_x:
        return False
    edge = segment.column_span[0] if direction is Direction.RIGHT else segment.column_span[1]
    column = segment.mask.membership[:, edge]
    if start.z <= obs.data[column, edge].min():
        return False
    return start.z < _nearest_other_surface(obs, segment, lo, hi)


def insertion_point(obs: DepthImage, segment: Segment, direction: Direction,
                    blade_thickness: float = config.BLADE_THICKNESS) -> Point2:
    """Blade face half a pixel outside the segment on the side opposite the push, inserted
    as deep as the segment's far-depth estimate or until just short of another surface"""
    x_min, x_max = segment.column_span
    x = (x_min - 0.5) * obs.pitch_x if direction is Direction.RIGHT else (x_max + 1.5) * obs.pitch_x
    lo, hi = _blade_span(x, direction, blade_thickness)
    stop = _nearest_other_surface(obs, segment, lo, hi) - config.BLADE_DEPTH_MARGIN
    return Point2(x=x, z=min(segment.far_depth, obs.back_depth, stop))


def candidate_actions(
    obs: DepthImage,
    segments: List[Segment],
    visible_target: PixelMask,
    blade_thickness: float = config.BLADE_THICKNESS,
    excluded: AbstractSet[Tuple] = frozenset(),
) -> List[CandidateAction]:
    target_columns = visible_target.columns()
    candidates = []
    for seg in segments:
        if _shows_target(seg, visible_target):
            continue
        columns = seg.columns
        for direction in (Direction.LEFT, Direction.RIGHT):
            if action_key(seg.column_span, direction) in excluded:
                continue
            distance = plan_distance(obs, segments, seg.id, direction)
            if distance <= obs.pitch_x:
                continue
            start = insertion_point(obs, seg, direction, blade_thickness)
            if not _observed_blade_clear(obs, seg, direction, start, blade_thickness):
                continue
            action = PushAction(direction=direction, distance=distance, start=start, segment_id=seg.id)
            shifted = np.clip(columns + _column_shift(obs, action), 0, obs.width_px - 1)
            revealed = np.setdiff1d(columns, shifted)
            covered = np.setdiff1d(shifted, columns)
            if target_columns.size and np.intersect1d(covered, target_columns).size:
                continue
            candidates.append(CandidateAction(action, seg, revealed, covered))
    return candidates


def uniform_profile(obs: DepthImage, segments: List[Segment],
                    visible_target: Optional[PixelMask] = None) -> OccupancyProfile:
    """Equal mass on every column behind a (non-target) segment"""
    covered = np.zeros(obs.width_px, dtype=bool)
    for seg in segments:
        if visible_target is not None and _shows_target(seg, visible_target):
            continue
        covered[seg.columns] = True
    if not covered.any():
        return OccupancyProfile(np.zeros(obs.width_px), flagged=True)
    return OccupancyProfile(covered / covered.sum())


def dar_score(candidate: CandidateAction, profile: OccupancyProfile) -> float:
    """Profile mass a push uncovers minus the mass it newly covers"""
    p = profile.values
    return float(p[candidate.newly_revealed_columns].sum() - p[candidate.newly_covered_columns].sum())


def select_action_dar(
    belief: Optional[BeliefState],
    obs: DepthImage,
    segments: List[Segment],
    visible: PixelMask,
    cfg: PolicyConfig,
    excluded: AbstractSet[Tuple] = frozenset(),
) -> Optional[CandidateAction]:
    candidates = candidate_actions(obs, segments, visible, cfg.blade_thickness, excluded)
    if not candidates:
        return None
    profile = collapse_profile(belief) if belief is not None and cfg.kind != "uniform" else None
    if profile is None or profile.flagged:
        profile = uniform_profile(obs, segments, visible)
    return min(candidates, key=lambda c: _order_key(-dar_score(c, profile), c))


def predict_depth_after(obs: DepthImage, segment: Segment, action: PushAction) -> DepthImage:
    """
    Translate the segment's depths by the push, assuming nothing stands behind it: vacated
    pixels show the back wall, landing pixels keep whichever surface is nearer.
    """
    shift = _column_shift(obs, action)
    if shift == 0:
        return obs
    data = obs.data.copy()
    rows, cols = np.nonzero(segment.mask.membership)
    values = obs.data[rows, cols]
    data[rows, cols] = obs.back_depth
    landing = np.clip(cols + shift, 0, obs.width_px - 1)
    np.minimum.at(data, (rows, landing), values)
    return obs.with_data(data)


def _mask_digest(mask: PixelMask) -> str:
    return hashlib.sha256(np.packbits(mask.membership).tobytes()).hexdigest()[:16]


class _LookaheadSearch:
    """Exhaustive push-sequence search for one decision, with oracle results memoized"""

    def __init__(self, oracle: OccupancyOracle, cfg: PolicyConfig):
        self.oracle = oracle
        self.cfg = cfg
        self.memo: Dict[Tuple[str, str], OccupancyResult] = {}
        self.evaluations = 0

    def _evaluate(self, obs: DepthImage, visible: PixelMask) -> OccupancyResult:
        key = (obs.digest(), _mask_digest(visible))
        if key not in self.memo:
            self.evaluations += 1
            if self.evaluations > self.cfg.node_budget:
                raise NodeBudgetExceeded(self.cfg.node_budget)
            self.memo[key] = self.oracle.evaluate(obs, visible)
        return self.memo[key]

    def successor(self, obs: DepthImage, visible: PixelMask,
                  candidate: CandidateAction) -> Tuple[DepthImage, PixelMask]:
        predicted = predict_depth_after(obs, candidate.pushed_segment, candidate.action)
        # Target pixels stay visible only where the prediction left the surface untouched
        return predicted, PixelMask(visible.membership & (predicted.data == obs.data))

    def value(self, obs: DepthImage, visible: PixelMask, belief: Optional[BeliefState], remaining: int) -> float:
        result = self._evaluate(obs, visible)
        if result.flagged:
            # No hidden placement left: the target would be in plain view
            return 0.0
        belief = update_belief(belief, result.grid)
        leaf = entropy(collapse_profile(belief), self.cfg.entropy_normalize)
        if remaining == 0:
            return leaf
        segments = segment_observation(obs, self.cfg.discontinuity_threshold)
        candidates = candidate_actions(obs, segments, visible, self.cfg.blade_thickness)
        if not candidates:
            return leaf
        return min(
            self.value(*self.successor(obs, visible, c), belief, remaining - 1)
            for c in candidates
        )


def select_action_der(
    belief: Optional[BeliefState],
    obs: DepthImage,
    segments: List[Segment],
    visible: PixelMask,
    cfg: PolicyConfig,
    oracle: OccupancyOracle,
    excluded: AbstractSet[Tuple] = frozenset(),
) -> Optional[CandidateAction]:
    """First push of the n-step sequence with the lowest predicted belief entropy"""
    if belief is None:
        return select_action_dar(None, obs, segments, visible, cfg, excluded)
    candidates = candidate_actions(obs, segments, visible, cfg.blade_thickness, excluded)
    if not candidates:
        return None
    search = _LookaheadSearch(oracle, cfg)
    scored = [
        (search.value(*search.successor(obs, visible, c), belief, cfg.lookahead_n - 1), c)
        for c in candidates
    ]
    value, best = min(scored, key=lambda item: _order_key(item[0], item[1]))
    logger.debug(
        f"DER-{cfg.lookahead_n}: {len(candidates)} root candidates, {search.evaluations} oracle evaluations, "
        f"best predicted entropy {value:.4f}"
    )
    return best


class SearchPolicy:
    """Picks the next push from the current belief and observation"""

    def __init__(self, cfg: PolicyConfig):
        self.config = cfg

    @property
    def name(self) -> str:
        return self.config.name

    def select(self, belief: Optional[BeliefState], obs: DepthImage, segments: List[Segment],
               visible: PixelMask, oracle: Optional[OccupancyOracle] = None,
               excluded: AbstractSet[Tuple] = frozenset()) -> Optional[CandidateAction]:
        raise NotImplementedError


class UniformPolicy(SearchPolicy):
    def select(self, belief, obs, segments, visible, oracle=None, excluded=frozenset()):
        return select_action_dar(None, obs, segments, visible, self.config, excluded)


class DARPolicy(SearchPolicy):
    def select(self, belief, obs, segments, visible, oracle=None, excluded=frozenset()):
        return select_action_dar(belief, obs, segments, visible, self.config, excluded)


class DERPolicy(SearchPolicy):
    def select(self, belief, obs, segments, visible, oracle=None, excluded=frozenset()):
        if oracle is None:
            raise ValueError("DER policies need the occupancy oracle to score predicted observations")
        return select_action_der(belief, obs, segments, visible, self.config, oracle, excluded)


_POLICY_CLASSES = {"uniform": UniformPolicy, "dar": DARPolicy, "der": DERPolicy}


def parse_policy_name(name: str) -> Tuple[str, int]:
    if name in ("uniform", "dar"):
        return name, 1
    if name.startswith("der") and name[3:].isdigit() and 1 <= int(name[3:]) <= 3:
        return "der", int(name[3:])
    raise ValueError(f"unknown policy {name!r}; expected one of {', '.join(config.POLICY_NAMES)}")


def make_policy(name: str, rollout_cfg: Optional[RolloutConfig] = None,
                node_budget: int = config.DER_NODE_BUDGET) -> SearchPolicy:
    """Policy by name: "uniform", "dar", "der1", "der2" or "der3"."""
    kind, n = parse_policy_name(name)
    rollout_cfg = rollout_cfg or RolloutConfig()
    cfg = PolicyConfig(
        kind=kind,
        lookahead_n=n,
        blade_thickness=rollout_cfg.blade_thickness,
        discontinuity_threshold=rollout_cfg.discontinuity_threshold,
        entropy_normalize=rollout_cfg.entropy_normalize,
        node_budget=node_budget,
    )
    return _POLICY_CLASSES[kind](cfg)
