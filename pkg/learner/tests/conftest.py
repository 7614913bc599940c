"""Shared fixtures: small generated shard sets and the vocabulary file.

Everything the tests feed the learner comes out of the real generator CLI so
the harness is exercised against genuine wire formats end to end.
"""

from __future__ import annotations

import os
import subprocess
import sys

import pytest

DYNSYS = os.environ.get("DYNSYS_CLI", "dynsys").split()


def run_dynsys(*argv: str) -> str:
    proc = subprocess.run([*DYNSYS, *argv], capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"dynsys {' '.join(argv)} rc={proc.returncode}: {proc.stderr}")
    return proc.stdout


def run_learner(*argv: str):
    return subprocess.run(
        [sys.executable, "-m", "learner.cli", *argv], capture_output=True, text=True
    )


def gen_shard(directory, task: str, count: int, seed: int, *flags: str) -> str:
    template = os.path.join(str(directory), f"{task}-{seed}-{{shard}}.tsv")
    run_dynsys(
        "gen", task,
        "--count", str(count),
        "--out", template,
        "--shard-size", str(count),
        "--seed", str(seed),
        *flags,
    )
    return template.replace("{shard}", "0")


@pytest.fixture(scope="session")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("shards")


@pytest.fixture(scope="session")
def vocab_path(workdir) -> str:
    path = str(workdir / "vocab.txt")
    run_dynsys("vocab", "--out", path)
    return path


@pytest.fixture(scope="session")
def vocab(vocab_path) -> dict[str, int]:
    from learner.data import load_vocab

    return load_vocab(vocab_path)


@pytest.fixture(scope="session")
def stability_shard(workdir) -> str:
    return gen_shard(workdir, "stability", 240, 21, "--balance", "0.5", "--n-max", "3")


@pytest.fixture(scope="session")
def speed_shard(workdir) -> str:
    return gen_shard(workdir, "speed", 120, 23, "--n-max", "3")


@pytest.fixture(scope="session")
def feedback_shard(workdir) -> str:
    return gen_shard(workdir, "feedback", 96, 22)
