import json
import math
from pathlib import Path

import pytest
import yaml

from shelfsearch.exceptions import BenchConfigError, NodeBudgetExceeded
from shelfsearch.models.bench import BenchConfig
from shelfsearch.models.scene import GenerationConfig
from shelfsearch.models.sim import RolloutConfig, RolloutRecord, TerminationReason
from shelfsearch.services import bench
from shelfsearch.services.bench import (
    CSV_COLUMNS,
    CSV_NAME,
    LOG_NAME,
    REPORT_NAME,
    aggregate,
    emit_report,
    load_bench_config,
    load_report,
    policy_averages,
    reaggregate,
    run_benchmark,
    scene_seeds,
    summarize,
)
from shelfsearch.services.seeding import derive_seed
from shelfsearch.services.sim import read_rollout_results


def record(steps, success=True, reason=None, policy="dar"):
    reason = reason or (TerminationReason.REVEALED if success else TerminationReason.STEP_BUDGET)
    return RolloutRecord(policy=policy, scene_digest="0" * 16, success=success, steps_taken=steps,
                         termination_reason=reason, final_visible_fraction=1.0 if success else 0.0)


@pytest.fixture
def tiny_config(tmp_path):
    def build(**kwargs):
        fields = dict(
            scenes_per_cell=2,
            occluder_counts=[0],
            policies=["uniform", "dar"],
            generation=GenerationConfig(require_full_occlusion=False),
            rollout=RolloutConfig(width_px=64, height_px=64),
            out_dir=str(tmp_path / "run"),
        )
        fields.update(kwargs)
        return BenchConfig(**fields)
    return build


class TestSummarize:
    def test_all_successful(self):
        stats = summarize([record(1), record(2), record(3)], 2, "dar")
        assert stats.success_rate == 1.0
        assert stats.mean_steps == pytest.approx(2.0)
        assert stats.std_steps == pytest.approx(math.sqrt(2 / 3))
        assert stats.mean_steps_all == pytest.approx(2.0)

    def test_failures_count_against_the_rate_only(self):
        records = [record(1), record(2), record(3), record(10, success=False)]
        stats = summarize(records, 4, "dar", max_steps=10)
        assert stats.success_rate == pytest.approx(0.75)
        assert stats.mean_steps == pytest.approx(2.0)
        assert stats.mean_steps_all == pytest.approx(4.0)
        assert stats.n_failures_budget == 1
        assert stats.n_failures_no_action == 0

    def test_no_feasible_action_failures(self):
        records = [record(0, success=False, reason=TerminationReason.NO_FEASIBLE_ACTION)]
        stats = summarize(records, 6, "uniform", max_steps=10)
        assert stats.success_rate == 0.0
        assert stats.mean_steps is None and stats.std_steps is None
        assert stats.mean_steps_all == 10.0
        assert stats.terminations["no_feasible_action"] == 1

    def test_empty_cell(self):
        with pytest.raises(BenchConfigError):
            summarize([])

    def test_policy_average_row(self):
        cells = [summarize([record(1), record(3)], 2, "dar"), summarize([record(2), record(2, success=False)], 4, "dar")]
        (avg,) = policy_averages(cells)
        assert avg.occluders is None
        assert avg.success_rate == pytest.approx(0.75)
        assert avg.mean_steps == pytest.approx(2.0)
        assert avg.n_scenes == 4


class TestConfig:
    def test_yaml_and_overrides(self, tmp_path):
        path = tmp_path / "bench.yaml"
        path.write_text(yaml.safe_dump({"scenes_per_cell": 3, "rollout": {"width_px": 64}}), encoding="utf-8")
        cfg = load_bench_config(path, base_seed=7, policies=None)
        assert cfg.scenes_per_cell == 3
        assert cfg.base_seed == 7
        assert cfg.rollout.width_px == 64
        assert cfg.policies == ["uniform", "dar", "der1", "der2", "der3"]

    def test_errors(self, tmp_path):
        with pytest.raises(BenchConfigError):
            load_bench_config(tmp_path / "missing.yaml")
        with pytest.raises(BenchConfigError, match="policies"):
            load_bench_config(policies=["greedy"])
        with pytest.raises(BenchConfigError):
            load_bench_config(colour="red")
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n", encoding="utf-8")
        with pytest.raises(BenchConfigError):
            load_bench_config(path)

    def test_digest_ignores_output_settings(self):
        a = BenchConfig(out_dir="a", workers=1)
        b = BenchConfig(out_dir="b", workers=4, dump_images=True)
        assert a.digest() == b.digest()
        assert a.digest() != BenchConfig(base_seed=1).digest()

    def test_rollout_config_takes_bench_limits(self):
        cfg = BenchConfig(max_steps=3, reveal_threshold=0.5)
        assert cfg.rollout_config().max_steps == 3
        assert cfg.rollout_config().reveal_threshold == 0.5

    def test_scene_seeds(self):
        seeds = scene_seeds(0, 4, 7, 3)
        assert seeds == [derive_seed(0, 4, 7), derive_seed(0, 4, 7, 1), derive_seed(0, 4, 7, 2)]


class TestRunBenchmark:
    def test_unoccluded_scenes_succeed_immediately(self, tiny_config):
        cfg = tiny_config()
        report = run_benchmark(cfg, progress=False)
        assert [(c.occluders, c.policy) for c in report.cells] == [(0, "uniform"), (0, "dar")]
        for cell in report.cells:
            assert cell.success_rate == 1.0
            assert cell.mean_steps == 0.0
            assert cell.n_scenes == 2

        lines = (Path(cfg.out_dir) / CSV_NAME).read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert lines[1] == "0,uniform,1.000000,0.000000,0.000000,2,0,0"
        assert lines[-1].startswith("avg,dar,")

    def test_reports_are_reproducible(self, tiny_config, tmp_path):
        first = tiny_config(occluder_counts=[2], out_dir=str(tmp_path / "a"))
        second = tiny_config(occluder_counts=[2], out_dir=str(tmp_path / "b"))
        run_benchmark(first, progress=False)
        run_benchmark(second, progress=False)
        for name in (CSV_NAME, LOG_NAME):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        a, b = load_report(tmp_path / "a" / REPORT_NAME), load_report(tmp_path / "b" / REPORT_NAME)
        assert a.config_digest == b.config_digest
        assert a.cells == b.cells and a.averages == b.averages
        report = json.loads((tmp_path / "a" / REPORT_NAME).read_text(encoding="utf-8"))
        assert "wall_clock_seconds" not in report
        assert report["reference"] == {"2": {"uniform": [0.97, 1.34, 0.56], "dar": [0.98, 1.36, 0.77]}}

    def test_reaggregation_matches_the_run(self, tiny_config, tmp_path):
        cfg = tiny_config(occluder_counts=[0, 2])
        run_benchmark(cfg, progress=False)
        run_dir = tmp_path / "run"
        rebuilt = reaggregate(run_dir / LOG_NAME, cfg)
        emit_report(rebuilt, tmp_path / "again")
        assert (tmp_path / "again" / CSV_NAME).read_bytes() == (run_dir / CSV_NAME).read_bytes()
        assert load_report(run_dir / REPORT_NAME).cells == rebuilt.cells

    def test_aggregate_ignores_result_order(self, tiny_config):
        cfg = tiny_config(occluder_counts=[2], policies=["dar"])
        results = [(2, i, record(i % 3 + 1)) for i in range(6)]
        forward = aggregate(cfg, results, [])
        backward = aggregate(cfg, list(reversed(results)), [])
        assert forward.cells == backward.cells

    def test_unknown_report_format(self, tiny_config, tmp_path):
        cfg = tiny_config(occluder_counts=[2], policies=["dar"])
        report = aggregate(cfg, [(2, 0, record(1))], [])
        with pytest.raises(BenchConfigError):
            emit_report(report, tmp_path, formats=("xml",))

    def test_rollout_errors_become_failure_rows(self, tiny_config, monkeypatch):
        real_rollout = bench.rollout

        def over_budget(scene, policy, cfg):
            if policy.name == "dar":
                raise NodeBudgetExceeded(5)
            return real_rollout(scene, policy, cfg)

        monkeypatch.setattr(bench, "rollout", over_budget)
        cfg = tiny_config()
        report = run_benchmark(cfg, progress=False)
        cells = {c.policy: c for c in report.cells}
        assert cells["uniform"].success_rate == 1.0
        assert cells["dar"].success_rate == 0.0
        assert cells["dar"].n_scenes == 2
        assert cells["dar"].terminations["error"] == 2
        errors = [r for r in read_rollout_results(Path(cfg.out_dir) / LOG_NAME) if r["termination_reason"] == "error"]
        assert len(errors) == 2
        assert "node budget of 5" in errors[0]["metadata"]["error"]

    @pytest.mark.slow
    def test_worker_pool_gives_the_same_reports(self, tiny_config, tmp_path):
        serial = tiny_config(occluder_counts=[2, 4], out_dir=str(tmp_path / "serial"))
        pooled = tiny_config(occluder_counts=[2, 4], out_dir=str(tmp_path / "pooled"), workers=2)
        run_benchmark(serial, progress=False)
        run_benchmark(pooled, progress=False)
        for name in (CSV_NAME, LOG_NAME):
            assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "pooled" / name).read_bytes()
        assert load_report(tmp_path / "serial" / REPORT_NAME).cells == load_report(tmp_path / "pooled" / REPORT_NAME).cells
