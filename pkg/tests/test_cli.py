import json
import subprocess
import sys
from pathlib import Path

import pytest

from dynsys import tokens
from dynsys.pipeline import read_shard
from dynsys.sampler import problem_space_size
from dynsys.tokens import VOCAB


def run_cli(*argv, check=False):
    proc = subprocess.run(
        [sys.executable, "-m", "dynsys.cli", *argv],
        capture_output=True,
        text=True,
    )
    if check and proc.returncode != 0:
        raise AssertionError(f"cli failed ({proc.returncode}): {proc.stderr}")
    return proc


@pytest.fixture(scope="module")
def stability_shard(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli-gen")
    tpl = str(d / "st-{shard}.tsv")
    run_cli(
        "gen", "stability", "--count", "30", "--out", tpl,
        "--seed", "3", "--shard-size", "30", "--n-max", "3",
        check=True,
    )
    return Path(tpl.format(shard=0))


class TestGen:
    def test_writes_shards_and_stats(self, stability_shard):
        assert stability_shard.exists()
        stats = stability_shard.parent / "st-stats.json"
        report = json.loads(stats.read_text())
        assert report["records"] == 30
        assert report["config"]["n_max"] == 3  # flag reached the sampler

    def test_config_file_and_flag_override(self, tmp_path):
        conf = tmp_path / "conf"
        conf.write_text("p_int=0.7\nn_max=3\n# comment\n")
        tpl = str(tmp_path / "x-{shard}.tsv")
        run_cli(
            "gen", "stability", "--count", "10", "--out", tpl, "--shard-size",
            "10", "--config", str(conf), "--p-int", "0.2", check=True,
        )
        report = json.loads((tmp_path / "x-stats.json").read_text())
        assert report["config"]["p_int"] == 0.2  # flag wins
        assert report["config"]["n_max"] == 3  # file applies

    def test_variant_flag(self, tmp_path):
        tpl = str(tmp_path / "v-{shard}.tsv")
        run_cli(
            "gen", "stability", "--count", "10", "--out", tpl, "--shard-size",
            "10", "--variant", "degree6", check=True,
        )
        report = json.loads((tmp_path / "v-stats.json").read_text())
        assert report["config"]["n_min"] == 6

    def test_invalid_config_exits_1(self, tmp_path):
        proc = run_cli(
            "gen", "stability", "--count", "10",
            "--out", str(tmp_path / "y-{shard}.tsv"),
            "--p-int", "1.5",
        )
        assert proc.returncode == 1

    def test_bad_flag_exits_1(self):
        assert run_cli("gen", "stability", "--nonsense").returncode == 1


class TestClassify:
    def test_single_system(self):
        proc = run_cli(
            "classify", "stability",
            "--system", "add mul INT- 2 x0 sin x1 | sub cos x0 x1",
            "--point", "0.1", check=True,
        )
        target, diag = proc.stdout.splitlines()
        assert target in ("true", "false")
        info = json.loads(diag)
        assert {"stable", "decay", "eigenvalues"} <= info.keys()

    def test_batch_matches_shard_targets(self, stability_shard):
        proc = run_cli(
            "classify", "stability", "--batch", str(stability_shard),
            check=True,
        )
        want = [" ".join(t) for _, t in read_shard(str(stability_shard))]
        assert proc.stdout.splitlines() == want

    def test_control_task_needs_controls_flag(self):
        proc = run_cli("classify", "ctrl-auto", "--system", "add x0 u0")
        assert proc.returncode == 1

    def test_unlabelable_input_exits_2(self):
        # x0' = x1, x1' = -x0: purely imaginary spectrum -> marginal
        proc = run_cli(
            "classify", "stability", "--system", "x1 | mul INT- 1 x0",
            "--point", "0.0",
        )
        assert proc.returncode == 2


class TestVerifyFeedback:
    def test_shard_passes_at_rate_one(self, tmp_path):
        tpl = str(tmp_path / "fb-{shard}.tsv")
        run_cli(
            "gen", "feedback", "--count", "10", "--out", tpl,
            "--seed", "1", "--shard-size", "10", check=True,
        )
        proc = run_cli("verify-feedback", tpl.format(shard=0), check=True)
        lines = proc.stdout.splitlines()
        assert lines[-1] == "rate 1.000000"
        assert all(line == "true" for line in lines[:-1])

    def test_zero_gain_fails(self, tmp_path):
        # x' = x + u is unstable without feedback, so K = 0 must fail
        inp = " ".join(
            tokens.encode_int(1) + ["add", "x0", "u0", "at"]
            + tokens.encode_float(0.0) + tokens.encode_float(0.0)
        )
        zero = " ".join(tokens.encode_float(0.0))
        pairs = tmp_path / "pairs.tsv"
        pairs.write_text(f"{inp}\t{zero}\n")
        proc = run_cli("verify-feedback", str(pairs), check=True)
        assert proc.stdout.splitlines() == ["false", "rate 0.000000"]

    def test_malformed_line_exits_2(self, tmp_path):
        pairs = tmp_path / "pairs.tsv"
        pairs.write_text("garbage line without tab structure\n")
        proc = run_cli("verify-feedback", str(pairs))
        assert proc.returncode == 2
        assert proc.stdout.startswith("error")


class TestSmallTools:
    def test_space_size_matches_library(self):
        proc = run_cli(
            "space-size", "--ops", "14", "--vars", "6", check=True
        )
        assert proc.stdout.strip() == str(problem_space_size(14, q=6))

    def test_space_size_tiny_golden(self):
        proc = run_cli(
            "space-size", "--ops", "3", "--leaves", "1", "--q1", "1",
            "--q2", "1", check=True,
        )
        assert proc.stdout.strip() == "22"

    def test_vocab_roundtrip(self, tmp_path):
        path = tmp_path / "vocab.txt"
        run_cli("vocab", "--out", str(path), check=True)
        assert path.read_text().splitlines() == list(VOCAB)

    def test_variant_output_is_loadable_config(self, tmp_path):
        proc = run_cli("variant", "int50", check=True)
        conf = tmp_path / "conf"
        conf.write_text(proc.stdout)
        tpl = str(tmp_path / "z-{shard}.tsv")
        run_cli(
            "gen", "stability", "--count", "6", "--out", tpl, "--shard-size",
            "6", "--config", str(conf), "--n-max", "2", check=True,
        )
        report = json.loads((tmp_path / "z-stats.json").read_text())
        assert report["config"]["p_int"] == 0.5

    def test_stats_subcommand(self, stability_shard):
        proc = run_cli("stats", str(stability_shard), check=True)
        report = json.loads(proc.stdout)
        assert report["records"] == 30
        assert report["tasks"] == {"stability": 30}
