import json
import subprocess
import sys

import pytest
from click.testing import CliRunner

from regjudge.cli import cli
from regjudge.corpus import load_corpus
from regjudge.errors import InvalidInput
from regjudge.schemas import validate_payload

from conftest import TUBE_QUERY


@pytest.fixture()
def runner():
    return CliRunner()


def artifact_id_from(stderr: str) -> str:
    for line in stderr.splitlines():
        if line.startswith("artifact "):
            return line.split()[1]
    raise AssertionError(f"no artifact line in stderr: {stderr!r}")


def run_judge(runner, tmp_path, *extra):
    result = runner.invoke(
        cli, ["judge", TUBE_QUERY, "--runs", str(tmp_path / "runs"), *extra],
        catch_exceptions=False)
    assert result.exit_code == 0, result.stderr
    return result


class TestIngest:
    def test_bundled_corpus_accepted(self, runner):
        from conftest import bundled
        result = runner.invoke(cli, ["ingest", bundled("mini_corpus.json")],
                               catch_exceptions=False)
        assert result.exit_code == 0
        assert result.stdout == "accepted 57 record(s), rejected 0\n"

    def test_out_writes_reloadable_corpus(self, runner, tmp_path):
        from conftest import bundled
        out = tmp_path / "normalized.json"
        result = runner.invoke(
            cli, ["ingest", bundled("mini_corpus.json"), "--out", str(out)],
            catch_exceptions=False)
        assert result.exit_code == 0
        reloaded, rejects = load_corpus(str(out))
        assert len(reloaded) == 57
        assert rejects == []

    def test_strict_fails_on_rejects(self, runner, tmp_path):
        path = tmp_path / "mixed.json"
        path.write_text(json.dumps([
            {"id": "YY 1-2020", "region": "CN", "title_en": "Fine",
             "source_text": "fine"},
            {"id": "XX 2-2020", "region": "EU", "title_en": "Bad",
             "source_text": "bad region"},
        ]), encoding="utf-8")
        lenient = runner.invoke(cli, ["ingest", str(path)])
        assert lenient.exit_code == 0
        assert "rejected 1" in lenient.stdout
        assert "invalid region" in lenient.stderr
        strict = runner.invoke(cli, ["ingest", str(path), "--strict"])
        assert strict.exit_code == 1


class TestIndexBuild:
    def test_build_reports_fingerprint(self, runner, tmp_path):
        out = tmp_path / "corpus.idx"
        result = runner.invoke(cli, ["index", "build", "--out", str(out)],
                               catch_exceptions=False)
        assert result.exit_code == 0
        assert out.exists()
        assert "indexed " in result.stdout
        assert "fingerprint=" in result.stdout

    def test_judge_accepts_prebuilt_index(self, runner, tmp_path):
        out = tmp_path / "corpus.idx"
        runner.invoke(cli, ["index", "build", "--out", str(out)],
                      catch_exceptions=False)
        direct = run_judge(runner, tmp_path / "a")
        via_index = run_judge(runner, tmp_path / "b", "--index", str(out))
        assert via_index.stdout == direct.stdout


class TestJudge:
    def test_stdout_is_pure_matrix_json(self, runner, tmp_path):
        result = run_judge(runner, tmp_path)
        matrix = json.loads(result.stdout)
        validate_payload("matrix", matrix)
        assert "artifact " in result.stderr

    def test_stdout_is_byte_identical_across_runs(self, runner, tmp_path):
        # same run_dir: the artifact id covers the config, so only a
        # fully identical invocation may share it
        first = run_judge(runner, tmp_path)
        second = run_judge(runner, tmp_path)
        assert first.stdout == second.stdout
        assert artifact_id_from(first.stderr) == \
            artifact_id_from(second.stderr)

    def test_out_redirects_matrix_to_file(self, runner, tmp_path):
        out = tmp_path / "matrix.json"
        result = run_judge(runner, tmp_path, "--out", str(out))
        assert result.stdout == ""
        validate_payload("matrix", json.loads(out.read_text("utf-8")))

    def test_region_flag_restricts_matrix(self, runner, tmp_path):
        result = run_judge(runner, tmp_path, "--region", "CN")
        matrix = json.loads(result.stdout)
        assert set(matrix["region_summaries"]) == {"CN"}

    def test_malformed_weights_is_usage_error(self, runner, tmp_path):
        result = runner.invoke(
            cli, ["judge", TUBE_QUERY, "--runs", str(tmp_path),
                  "--weights", "0.8"])
        assert result.exit_code == 2
        assert "two comma-separated numbers" in result.stderr

    def test_unknown_embed_spec_raises(self, runner, tmp_path):
        result = runner.invoke(
            cli, ["judge", TUBE_QUERY, "--runs", str(tmp_path),
                  "--embed", "quantum"])
        assert result.exit_code != 0
        assert isinstance(result.exception, InvalidInput)

    def test_config_file_supplies_defaults(self, runner, tmp_path):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"k": 2}), encoding="utf-8")
        result = runner.invoke(
            cli, ["judge", TUBE_QUERY, "--runs", str(tmp_path / "runs"),
                  "--config", str(config), "--region", "CN", "--k", "2"],
            catch_exceptions=False)
        assert result.exit_code == 0
        matrix = json.loads(result.stdout)
        assert set(matrix["region_summaries"]) == {"CN"}


class TestCompare:
    def test_prints_stored_matrix(self, runner, tmp_path):
        judged = run_judge(runner, tmp_path)
        artifact_id = artifact_id_from(judged.stderr)
        result = runner.invoke(
            cli, ["compare", artifact_id, "--runs", str(tmp_path / "runs")],
            catch_exceptions=False)
        assert result.exit_code == 0
        assert result.stdout == judged.stdout

    def test_unknown_artifact_fails(self, runner, tmp_path):
        result = runner.invoke(
            cli, ["compare", "0" * 64, "--runs", str(tmp_path)])
        assert result.exit_code == 1
        assert "Error" in result.stderr


class TestReplay:
    def test_clean_replay_reports_ok(self, runner, tmp_path):
        judged = run_judge(runner, tmp_path)
        artifact_id = artifact_id_from(judged.stderr)
        result = runner.invoke(
            cli, ["replay", artifact_id, "--runs", str(tmp_path / "runs")],
            catch_exceptions=False)
        assert result.exit_code == 0
        assert result.stdout == f"replay ok: {artifact_id}\n"

    def test_tampered_judgment_exits_2_with_diff(self, runner, tmp_path):
        judged = run_judge(runner, tmp_path)
        artifact_id = artifact_id_from(judged.stderr)
        path = tmp_path / "runs" / artifact_id / "artifact.json"
        data = json.loads(path.read_text("utf-8"))
        target = next(j for j in data["judgments"]
                      if j["applicability"] == "Mandatory")
        target["applicability"] = "Recommended"
        path.write_text(json.dumps(data), encoding="utf-8")
        result = runner.invoke(
            cli, ["replay", artifact_id, "--runs", str(tmp_path / "runs")])
        assert result.exit_code == 2
        assert "replay mismatch" in result.stderr
        assert "judgments" in result.stderr
        assert "+" in result.stderr and "-" in result.stderr

    def test_unknown_artifact_fails(self, runner, tmp_path):
        result = runner.invoke(
            cli, ["replay", "0" * 64, "--runs", str(tmp_path)])
        assert result.exit_code == 1


class TestEval:
    def test_single_system_table(self, runner):
        result = runner.invoke(cli, ["eval", "--system", "retrieval"],
                               catch_exceptions=False)
        assert result.exit_code == 0
        lines = result.stdout.splitlines()
        assert lines[0].startswith("| System |")
        assert lines[2].startswith("| retrieval | ")
        assert "Paired t-test" not in result.stdout

    def test_rag_triggers_t_tests(self, runner):
        result = runner.invoke(
            cli, ["eval", "--system", "rag", "--system", "retrieval"],
            catch_exceptions=False)
        assert result.exit_code == 0
        assert "Paired t-test rag vs retrieval: t=" in result.stdout

    def test_json_out_contains_reports_and_tests(self, runner, tmp_path):
        target = tmp_path / "metrics.json"
        result = runner.invoke(
            cli, ["eval", "--system", "rag", "--system", "zeroshot",
                  "--json-out", str(target)],
            catch_exceptions=False)
        assert result.exit_code == 0
        payload = json.loads(target.read_text("utf-8"))
        assert set(payload["reports"]) == {"rag", "zeroshot"}
        assert "rag_vs_zeroshot" in payload["t_tests"]
        for report in payload["reports"].values():
            validate_payload("metrics_report", report)

    def test_out_writes_stdout_copy(self, runner, tmp_path):
        target = tmp_path / "report.md"
        result = runner.invoke(
            cli, ["eval", "--system", "rule", "--out", str(target)],
            catch_exceptions=False)
        assert result.exit_code == 0
        assert target.read_text("utf-8") == result.stdout


class TestModuleEntrypoint:
    def test_judge_via_python_dash_m(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "regjudge.cli", "judge", TUBE_QUERY,
             "--runs", str(tmp_path / "runs")],
            capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0, proc.stderr
        matrix = json.loads(proc.stdout)
        validate_payload("matrix", matrix)
        assert "artifact " in proc.stderr

    def test_domain_error_exits_1_via_main(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "regjudge.cli", "judge", "x",
             "--runs", str(tmp_path), "--embed", "quantum"],
            capture_output=True, text=True, timeout=120)
        assert proc.returncode == 1
        assert "error:" in proc.stderr

    def test_version_flag(self):
        proc = subprocess.run(
            [sys.executable, "-m", "regjudge.cli", "--version"],
            capture_output=True, text=True, timeout=60)
        assert proc.returncode == 0
        assert "version" in proc.stdout
