"""
Integration Tests for the lab runner
Tests dispatch, batch execution, report files and the command-line front end.
"""

import csv
import json

import pytest

from constrank.api.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, main
from constrank.api.runner import LabRunner, two_phase_field, write_batch_csv
from constrank.api.schemas import BatchManifest, Command, FieldSource, RunConfig, RunRecord
from constrank.core.errors import ConfigError
from constrank.fields.grid import GridSpec


def rank_check(name, dim_n, run_id=None):
    return RunConfig(id=run_id, command=Command.RANK_CHECK, operator=name, dim_n=dim_n,
                     grid={"dim_n": dim_n, "points": 16})


@pytest.fixture
def runner():
    """Runner without an output directory"""
    return LabRunner(threads=2)


class TestLabRunner:
    """Test single runs"""

    def test_rank_check_curl(self, runner):
        """rank-check on curl reports constant rank 2"""
        record = runner.run(rank_check("curl", 3))

        assert record.passed
        assert record.error is None
        assert record.body["is_constant_rank"] is True
        assert record.body["rank"] == 2
        assert record.meta.wall_time >= 0

    def test_rank_check_diag_fails(self, runner):
        record = runner.run(rank_check("diag", 2))

        assert not record.passed
        assert record.body["witness"] is not None

    def test_potential_of_curl(self, runner):
        record = runner.run(RunConfig(command=Command.POTENTIAL, operator="curl", dim_n=3))

        assert record.passed
        assert record.body["is_zero"] is False
        assert record.body["potential"]["dim_n"] == 3

    def test_minimize_constant_mean(self, runner):
        """The 𝒜-free minimiser of E with a given mean is that constant"""
        config = RunConfig(command=Command.MINIMIZE, operator="div", grid={"dim_n": 2, "points": 16},
                           params={"mean": [0.5, 0.2]})
        record = runner.run(config)

        assert record.passed
        assert record.body["converged"] is True
        assert record.body["el_residual"] < 1e-8

    def test_poincare_report_is_deterministic(self, runner):
        """Equal (config, seed) give byte-identical report bodies"""
        config = RunConfig(command=Command.VERIFY_POINCARE, operator="grad", grid={"dim_n": 2, "points": 64},
                           params={"theta": 0.5, "q": 1.2}, seed=7)
        first = runner.run(config)
        second = runner.run(config)

        assert first.passed
        assert first.body["name"] == "poincare_modular"
        assert first.body_json() == second.body_json()

    def test_errors_become_failed_records(self, runner):
        """An unknown operator fails the run instead of raising"""
        record = runner.run(rank_check("no-such-operator", 2))

        assert not record.passed
        assert record.error.startswith("ConfigError")
        assert runner.history[-1] is record

    def test_config_hash_ignores_output(self):
        a = rank_check("grad", 2)
        b = a.model_copy(update={"out": "/tmp/elsewhere"})

        assert a.config_hash() == b.config_hash()
        assert a.run_id().startswith("rank-check-")

    def test_record_written_to_out_dir(self, tmp_path):
        runner = LabRunner(threads=1, out_dir=tmp_path)
        record = runner.run(rank_check("grad", 2, run_id="grad-rank"))
        written = RunRecord.model_validate_json((tmp_path / "grad-rank.json").read_text())

        assert written.body == record.body

    def test_excess_scan_writes_csv(self, tmp_path):
        """One (R, excess) row per center and radius"""
        runner = LabRunner(threads=1, out_dir=tmp_path)
        config = RunConfig(id="steps", command=Command.EXCESS_SCAN, operator="grad",
                           grid={"dim_n": 2, "points": 512}, field=FieldSource.TWO_PHASE,
                           params={"R": 0.4, "tau": 0.05, "depth": 1, "centers": [[0.5, 0.5], [0.25, 0.5]]})
        record = runner.run(config)

        with open(tmp_path / "steps_excess.csv") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["center", "R", "excess", "regular"]
        assert len(rows) == 5
        assert len(record.body["reports"]) == 2

    def test_two_phase_field(self):
        grid = GridSpec(2, 16)
        w = two_phase_field(grid, 2, 3.0)

        assert set(w.values[..., 0].ravel()) == {3.0, -3.0}
        assert not w.values[..., 1].any()


class TestBatch:
    """Test manifest execution"""

    @pytest.mark.asyncio
    async def test_sequential_batch(self, runner):
        manifest = BatchManifest(runs=[rank_check(n, 3) for n in ("grad", "div", "curl")])
        summary = await runner.batch(manifest)

        assert summary.total == 3
        assert summary.passed == 3
        assert summary.ok

    @pytest.mark.asyncio
    async def test_parallel_batch_keeps_order(self, runner):
        names = ("grad", "diag", "curl", "sym_grad")
        manifest = BatchManifest(runs=[rank_check(n, 2, run_id=n) for n in names], parallel=True)
        summary = await runner.batch(manifest)

        assert [r.id for r in summary.records] == list(names)
        assert summary.passed == 3
        assert summary.failed == 1
        assert not summary.ok

    @pytest.mark.asyncio
    async def test_empty_after_filter(self, runner):
        manifest = BatchManifest(runs=[rank_check("grad", 2)], commands=[Command.MINIMIZE])
        with pytest.raises(ConfigError):
            await runner.batch(manifest)

    @pytest.mark.asyncio
    async def test_batch_csv(self, tmp_path):
        """Experiment × metric matrix with one row per run"""
        runner = LabRunner(threads=1, out_dir=tmp_path)
        manifest = BatchManifest(runs=[rank_check(n, 3, run_id=n) for n in ("grad", "div", "curl")])
        summary = await runner.batch(manifest)

        with open(tmp_path / "batch_summary.csv") as f:
            rows = list(csv.DictReader(f))
        assert [row["id"] for row in rows] == ["grad", "div", "curl"]
        assert [row["rank"] for row in rows] == ["1", "1", "2"]
        assert write_batch_csv(summary, tmp_path / "again.csv") == 3


class TestCommandLine:
    """Test exit codes and emitted documents"""

    def test_rank_check_passes(self, capsys):
        code = main(["rank-check", "--operator", "curl", "--dim", "3"])
        record = json.loads(capsys.readouterr().out)

        assert code == EXIT_PASS
        assert record["body"]["rank"] == 2
        assert "meta" not in record

    def test_failed_check_exit_code(self, capsys):
        assert main(["rank-check", "--operator", "diag", "--dim", "2"]) == EXIT_FAIL

    def test_missing_operator_is_config_error(self):
        assert main(["rank-check"]) == EXIT_CONFIG

    def test_missing_config_file(self, tmp_path):
        assert main(["rank-check", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG

    def test_invalid_config_value(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"operator": "grad", "grid": {"points": "many"}}))
        assert main(["project", "--config", str(path)]) == EXIT_CONFIG

    def test_yaml_config(self, tmp_path, capsys):
        path = tmp_path / "run.yaml"
        path.write_text("operator: div\ngrid:\n  dim_n: 2\n  points: 16\nseed: 3\n")
        code = main(["project", "--config", str(path)])
        record = json.loads(capsys.readouterr().out)

        assert code == EXIT_PASS
        assert record["body"]["residual_after"] < 1e-10

    def test_batch_manifest(self, tmp_path, capsys):
        path = tmp_path / "manifest.json"
        runs = [{"command": "rank-check", "operator": n, "dim_n": 3} for n in ("grad", "div", "curl")]
        path.write_text(json.dumps(runs))
        code = main(["batch", "--config", str(path), "--parallel"])
        summary = json.loads(capsys.readouterr().out)

        assert code == EXIT_PASS
        assert summary["total"] == 3 and summary["passed"] == 3

    def test_batch_needs_manifest(self):
        assert main(["batch"]) == EXIT_CONFIG

    def test_schema_written(self, tmp_path):
        assert main(["schema", "--out", str(tmp_path)]) == EXIT_PASS
        schema = json.loads((tmp_path / "run_record.schema.json").read_text())

        assert "body" in schema["properties"]
        assert "config_hash" in schema["required"]


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
