"""
Benchmark harness: every policy on the same seeded scenes for each occluder count, with
per-cell success rates and step statistics.
"""
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd
import yaml
from pydantic import ValidationError
from tqdm import tqdm

from shelfsearch import config
from shelfsearch.exceptions import BenchConfigError, SceneGenerationError, ShelfSearchError
from shelfsearch.models.bench import BenchConfig, BenchReport, CellStats, SceneExclusion
from shelfsearch.models.sim import RolloutRecord, TerminationReason
from shelfsearch.services.policy import make_policy
from shelfsearch.services.scene import generate_scene, scene_digest
from shelfsearch.services.seeding import derive_seed
from shelfsearch.services.sim import read_rollout_results, rollout, rollout_log_lines

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "occluders", "policy", "success_rate", "mean_steps", "std_steps",
    "n_scenes", "n_failures_no_action", "n_failures_budget",
]
LOG_NAME = "rollouts.jsonl"
CSV_NAME = "summary.csv"
REPORT_NAME = "report.json"


@dataclass
class SceneTask:
    occluders: int
    scene_index: int
    seeds: List[int] = field(default_factory=list)
    scene_digest: Optional[str] = None
    records: List[RolloutRecord] = field(default_factory=list)
    failure: Optional[str] = None


def load_bench_config(path: Optional[Path] = None, **overrides) -> BenchConfig:
    """BenchConfig from a YAML/JSON file (same field names), then non-None overrides on top"""
    data: Dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise BenchConfigError(f"config file not found: {path}")
        with path.open("r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise BenchConfigError(f"config file {path} must hold a mapping")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return BenchConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(p) for p in first["loc"])
        raise BenchConfigError(f"invalid benchmark config at {location}: {first['msg']}") from e


def scene_seeds(base_seed: int, occluders: int, scene_index: int, attempts: int) -> List[int]:
    """Seed of a scene, then the derived seeds tried if its generation fails"""
    first = derive_seed(base_seed, occluders, scene_index)
    return [first] + [derive_seed(base_seed, occluders, scene_index, a) for a in range(1, attempts)]


def _run_scene(cfg: BenchConfig, occluders: int, scene_index: int) -> SceneTask:
    task = SceneTask(occluders, scene_index)
    rollout_cfg = cfg.rollout_config()
    scene = None
    for seed in scene_seeds(cfg.base_seed, occluders, scene_index, cfg.regeneration_attempts):
        task.seeds.append(seed)
        gen_cfg = cfg.generation.model_copy(update={
            "seed": seed,
            "n_occluders": occluders,
            "blade_thickness": rollout_cfg.blade_thickness,
            "width_px": rollout_cfg.width_px,
            "height_px": rollout_cfg.height_px,
        })
        try:
            scene = generate_scene(gen_cfg, cfg.shelf)
            break
        except SceneGenerationError as e:
            logger.warning(f"Scene {occluders}/{scene_index} seed {seed}: {e}; regenerating")
            task.failure = str(e)
    if scene is None:
        return task

    task.failure = None
    task.scene_digest = scene_digest(scene)
    for name in cfg.policies:
        policy_cfg = rollout_cfg
        if cfg.dump_images:
            dump = Path(cfg.out_dir) / "images" / f"c{occluders}_s{scene_index:04d}_{name}"
            policy_cfg = rollout_cfg.model_copy(update={"dump_dir": str(dump)})
        policy = make_policy(name, policy_cfg, cfg.node_budget)
        try:
            record = rollout(scene, policy, policy_cfg)
        except ShelfSearchError as e:
            logger.error(f"Scene {occluders}/{scene_index} ({task.scene_digest}) {name}: {e}")
            record = RolloutRecord(policy=name, scene_digest=task.scene_digest, success=False, steps_taken=0,
                                   termination_reason=TerminationReason.ERROR, final_visible_fraction=0.0,
                                   metadata={"error": str(e)})
        task.records.append(record)
    return task


def _run_scene_args(args: Tuple[BenchConfig, int, int]) -> SceneTask:
    return _run_scene(*args)


def summarize(records: List[RolloutRecord], occluders: Optional[int] = None, policy: Optional[str] = None,
              max_steps: int = config.MAX_STEPS) -> CellStats:
    """Success rate, and step mean / population std over successful rollouts"""
    if not records:
        raise BenchConfigError("cannot summarize an empty cell")
    steps = np.array([r.steps_taken for r in records], dtype=np.float64)
    success = np.array([r.success for r in records], dtype=bool)
    terminations: Dict[str, int] = {reason.value: 0 for reason in TerminationReason}
    for r in records:
        terminations[r.termination_reason.value] += 1

    mean_steps = std_steps = None
    if success.any():
        mean_steps = float(steps[success].mean())
        std_steps = float(steps[success].std())
    all_steps = np.where(success, steps, float(max_steps))

    return CellStats(
        occluders=occluders,
        policy=policy or records[0].policy,
        n_scenes=len(records),
        n_success=int(success.sum()),
        success_rate=float(success.mean()),
        mean_steps=mean_steps,
        std_steps=std_steps,
        mean_steps_all=float(all_steps.mean()),
        n_failures_no_action=terminations[TerminationReason.NO_FEASIBLE_ACTION.value],
        n_failures_budget=terminations[TerminationReason.STEP_BUDGET.value],
        terminations=terminations,
    )


def _mean_or_none(values: Iterable[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def policy_averages(cells: List[CellStats]) -> List[CellStats]:
    """One row per policy averaging its cells across occluder counts"""
    rows = []
    for name in dict.fromkeys(c.policy for c in cells):
        mine = [c for c in cells if c.policy == name]
        terminations: Dict[str, int] = {}
        for c in mine:
            for reason, n in c.terminations.items():
                terminations[reason] = terminations.get(reason, 0) + n
        rows.append(CellStats(
            occluders=None,
            policy=name,
            n_scenes=sum(c.n_scenes for c in mine),
            n_success=sum(c.n_success for c in mine),
            success_rate=float(np.mean([c.success_rate for c in mine])),
            mean_steps=_mean_or_none(c.mean_steps for c in mine),
            std_steps=_mean_or_none(c.std_steps for c in mine),
            mean_steps_all=_mean_or_none(c.mean_steps_all for c in mine),
            n_failures_no_action=sum(c.n_failures_no_action for c in mine),
            n_failures_budget=sum(c.n_failures_budget for c in mine),
            terminations=terminations,
        ))
    return rows


def aggregate(cfg: BenchConfig, results: List[Tuple[int, int, RolloutRecord]],
              exclusions: List[SceneExclusion]) -> BenchReport:
    """Cell statistics from (occluders, scene index, record) triples, in any order"""
    ordered = sorted(results, key=lambda item: (item[0], item[2].policy, item[1]))
    cells = []
    for occluders in cfg.occluder_counts:
        for name in cfg.policies:
            records = [r for c, _, r in ordered if c == occluders and r.policy == name]
            if records:
                cells.append(summarize(records, occluders, name, cfg.max_steps))
            else:
                logger.warning(f"Cell {occluders} occluders / {name} has no rollouts")

    reference = {
        str(c): {p: list(v) for p, v in row.items() if p in cfg.policies}
        for c, row in config.REFERENCE_TABLE.items() if c in cfg.occluder_counts
    }
    return BenchReport(
        config=cfg,
        config_digest=cfg.digest(),
        cells=cells,
        averages=policy_averages(cells),
        exclusions=sorted(exclusions, key=lambda e: (e.occluders, e.scene_index)),
        reference=reference,
    )


def run_benchmark(cfg: BenchConfig, progress: bool = True) -> BenchReport:
    """
    Run every policy on scenes_per_cell seeded scenes per occluder count, log every rollout
    and write the CSV / JSON reports into cfg.out_dir.
    """
    started = time.perf_counter()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, c, i) for c in cfg.occluder_counts for i in range(cfg.scenes_per_cell)]
    logger.info(
        f"Benchmark {cfg.digest()[:12]}: {len(jobs)} scenes x {len(cfg.policies)} policies on {cfg.workers} worker(s)"
    )

    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            tasks = list(tqdm(pool.map(_run_scene_args, jobs), total=len(jobs), disable=not progress, desc="scenes"))
    else:
        tasks = [_run_scene_args(job) for job in tqdm(jobs, disable=not progress, desc="scenes")]
    tasks.sort(key=lambda t: (t.occluders, t.scene_index))

    exclusions = []
    results = []
    log_path = out_dir / LOG_NAME
    with log_path.open("w", encoding="utf-8") as log:
        for task in tasks:
            if task.scene_digest is None:
                exclusions.append(SceneExclusion(occluders=task.occluders, scene_index=task.scene_index,
                                                 seeds=task.seeds, reason=task.failure or "generation failed"))
                continue
            for record in task.records:
                for line in rollout_log_lines(record, occluders=task.occluders, scene_index=task.scene_index,
                                              seed=task.seeds[-1]):
                    log.write(line + "\n")
                results.append((task.occluders, task.scene_index, record))
    if exclusions:
        logger.warning(f"{len(exclusions)} scene(s) excluded after {cfg.regeneration_attempts} generation attempts")

    report = aggregate(cfg, results, exclusions)
    report.wall_clock_seconds = time.perf_counter() - started
    emit_report(report, out_dir)
    logger.info(f"Benchmark finished in {report.wall_clock_seconds:.1f} s, reports in {out_dir}")
    return report


def report_frame(report: BenchReport) -> pd.DataFrame:
    rows = []
    for cell in list(report.cells) + list(report.averages):
        row = cell.model_dump(include=set(CSV_COLUMNS))
        row["occluders"] = "avg" if cell.occluders is None else str(cell.occluders)
        rows.append(row)
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def report_json(report: BenchReport) -> str:
    # Wall-clock time stays out so identical configs give identical files
    return report.model_dump_json(indent=2, exclude={"wall_clock_seconds"}) + "\n"


def emit_report(report: BenchReport, out_dir: Path, formats: Iterable[str] = ("csv", "json")) -> List[Path]:
    """Write the CSV summary and/or the structured JSON report; returns the written paths"""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for fmt in formats:
            if fmt == "csv":
                path = out_dir / CSV_NAME
                report_frame(report).to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
            elif fmt == "json":
                path = out_dir / REPORT_NAME
                path.write_text(report_json(report), encoding="utf-8")
            else:
                raise BenchConfigError(f"unknown report format {fmt!r}")
            written.append(path)
    except OSError as e:
        logger.error(f"Could not write reports to {out_dir}: {e}")
        raise
    return written


def load_report(path: Path) -> BenchReport:
    return BenchReport.model_validate_json(Path(path).read_text(encoding="utf-8"))


def reaggregate(log_path: Path, cfg: BenchConfig, exclusions: Optional[List[SceneExclusion]] = None) -> BenchReport:
    """Rebuild the report from a rollout log; the statistics match the ones run_benchmark emitted"""
    results = []
    for entry in read_rollout_results(log_path):
        record = RolloutRecord.model_validate(entry)
        results.append((int(entry["occluders"]), int(entry["scene_index"]), record))
    if not results:
        raise BenchConfigError(f"no rollout results in {log_path}")
    return aggregate(cfg, results, exclusions or [])
