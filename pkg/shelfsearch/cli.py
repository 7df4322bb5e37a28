import logging
from pathlib import Path
from typing import List, Optional

import click

from shelfsearch import config
from shelfsearch.exceptions import ShelfSearchError
from shelfsearch.models.scene import GenerationConfig, ShelfSpec
from shelfsearch.models.sim import RolloutConfig
from shelfsearch.services.bench import (
    CSV_NAME,
    LOG_NAME,
    REPORT_NAME,
    emit_report,
    load_bench_config,
    load_report,
    reaggregate,
    report_frame,
    run_benchmark,
    scene_seeds,
)
from shelfsearch.services.policy import make_policy
from shelfsearch.services.scene import generate_scene, load_scene, save_scene
from shelfsearch.services.sim import rollout, write_rollout_log

logger = logging.getLogger(__name__)


def _int_list(ctx, param, value: Optional[str]) -> Optional[List[int]]:
    if value is None:
        return None
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}")


def _str_list(ctx, param, value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    return [v.strip() for v in value.split(",") if v.strip()]


@click.group()
@click.option("--log-level", default=config.LOG_LEVEL, show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
def cli(log_level: str):
    """Shelf mechanical-search simulator and benchmark"""
    logging.basicConfig(level=getattr(logging, log_level.upper()))


@cli.command()
@click.option("--seed", "base_seed", type=int, default=config.BASE_SEED, show_default=True)
@click.option("--occluders", callback=_int_list, default=",".join(map(str, config.OCCLUDER_COUNTS)), show_default=True)
@click.option("--scenes-per-cell", type=int, default=1, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=config.OUTPUT_DIR, show_default=True)
@click.option("--allow-visible-target", is_flag=True, help="Do not require the target to start fully hidden")
def gen(base_seed: int, occluders: List[int], scenes_per_cell: int, out_dir: str, allow_visible_target: bool):
    """Write the benchmark's scenes as JSON documents"""
    scenes_dir = Path(out_dir) / "scenes"
    scenes_dir.mkdir(parents=True, exist_ok=True)
    try:
        for count in occluders:
            for index in range(scenes_per_cell):
                seed = scene_seeds(base_seed, count, index, 1)[0]
                cfg = GenerationConfig(seed=seed, n_occluders=count, require_full_occlusion=not allow_visible_target)
                path = scenes_dir / f"c{count}_s{index:04d}.json"
                path.write_text(save_scene(generate_scene(cfg)), encoding="utf-8")
                click.echo(f"{path} (seed {seed})")
    except ShelfSearchError as e:
        logger.error(f"Scene generation failed: {str(e)}")
        raise click.ClickException(str(e))


@cli.command("rollout")
@click.option("--scene", "scene_path", type=click.Path(exists=True, dir_okay=False), help="Scene document to search")
@click.option("--seed", type=int, default=None, help="Generate the scene from this seed instead")
@click.option("--occluders", type=int, default=4, show_default=True)
@click.option("--policy", "policy_name", type=click.Choice(config.POLICY_NAMES), default="dar", show_default=True)
@click.option("--max-steps", type=int, default=config.MAX_STEPS, show_default=True)
@click.option("--reveal-threshold", type=float, default=config.REVEAL_THRESHOLD, show_default=True)
@click.option("--target-contact", type=click.Choice(["halt", "push_through"]), default=config.TARGET_CONTACT_POLICY,
              show_default=True)
@click.option("--dump-images", type=click.Path(file_okay=False), default=None, help="Directory for per-step PGM dumps")
@click.option("--log", "log_path", type=click.Path(dir_okay=False), default=None, help="Append the step log here")
def rollout_command(scene_path, seed, occluders, policy_name, max_steps, reveal_threshold, target_contact,
                    dump_images, log_path):
    """Run one policy on one scene and print its step log"""
    if (scene_path is None) == (seed is None):
        raise click.UsageError("give exactly one of --scene or --seed")
    try:
        cfg = RolloutConfig(max_steps=max_steps, reveal_threshold=reveal_threshold,
                            target_contact_policy=target_contact, dump_dir=dump_images)
        if scene_path is not None:
            scene = load_scene(Path(scene_path).read_text(encoding="utf-8"))
        else:
            scene = generate_scene(GenerationConfig(seed=seed, n_occluders=occluders), ShelfSpec())
        record = rollout(scene, make_policy(policy_name, cfg), cfg)
    except (ShelfSearchError, ValueError) as e:
        logger.error(f"Rollout failed: {str(e)}")
        raise click.ClickException(str(e))

    for step in record.steps:
        action = "-" if step.action is None else f"{step.action.direction.value} {step.action.distance:.4f} m"
        after = "-" if step.entropy_after is None else f"{step.entropy_after:.4f}"
        click.echo(
            f"step {step.step:2d}  visible {step.visible_fraction:.3f}  entropy {step.entropy_before:.4f} -> {after}"
            f"  push {action}"
        )
    click.echo(f"{record.termination_reason.value}: success={record.success} steps={record.steps_taken}")
    if log_path:
        write_rollout_log(Path(log_path), record)


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="YAML or JSON file with BenchConfig fields")
@click.option("--seed", "base_seed", type=int, default=None)
@click.option("--scenes-per-cell", type=int, default=None)
@click.option("--occluders", "occluder_counts", callback=_int_list, default=None)
@click.option("--policies", callback=_str_list, default=None)
@click.option("--max-steps", type=int, default=None)
@click.option("--reveal-threshold", type=float, default=None)
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
@click.option("--workers", type=int, default=None)
@click.option("--dump-images", is_flag=True, help="Dump per-step PGM images for every rollout")
@click.option("--quiet", is_flag=True, help="Hide the progress bar")
def bench(config_path, quiet, **overrides):
    """Run the full policy x occluder-count grid"""
    overrides["dump_images"] = overrides["dump_images"] or None
    try:
        cfg = load_bench_config(config_path, **overrides)
        report = run_benchmark(cfg, progress=not quiet)
    except (ShelfSearchError, OSError) as e:
        logger.error(f"Benchmark failed: {str(e)}")
        raise click.ClickException(str(e))
    click.echo(report_frame(report).to_string(index=False))


@cli.command()
@click.option("--out-dir", type=click.Path(exists=True, file_okay=False), default=config.OUTPUT_DIR, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Benchmark config, when the run's report.json is missing")
def report(out_dir: str, config_path: Optional[str]):
    """Re-aggregate a benchmark's rollout log into its CSV and JSON reports"""
    out = Path(out_dir)
    try:
        exclusions = []
        if config_path is not None:
            cfg = load_bench_config(config_path)
        elif (out / REPORT_NAME).exists():
            previous = load_report(out / REPORT_NAME)
            cfg, exclusions = previous.config, previous.exclusions
        else:
            raise click.ClickException(f"no {REPORT_NAME} in {out}; pass --config")
        rebuilt = reaggregate(out / LOG_NAME, cfg, exclusions)
        emit_report(rebuilt, out)
    except (ShelfSearchError, OSError) as e:
        logger.error(f"Report failed: {str(e)}")
        raise click.ClickException(str(e))
    click.echo(f"Wrote {out / CSV_NAME}")
    click.echo(report_frame(rebuilt).to_string(index=False))


@cli.command()
@click.option("--host", default=config.API_HOST, show_default=True)
@click.option("--port", type=int, default=config.API_PORT, show_default=True)
def serve(host: str, port: int):
    """Serve the HTTP API"""
    import uvicorn
    uvicorn.run("shelfsearch.main:app", host=host, port=port)


if __name__ == "__main__":
    cli()
