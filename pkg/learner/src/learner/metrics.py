"""Evaluation: oracle agreement, the five accuracy metrics, EvalReport.

Ground truth always flows through the generator's CLI: ``classify --batch``
re-labels shards before any evaluation is trusted, and the closed-loop
feedback metric shells out to ``verify-feedback`` instead of re-deriving the
stability check locally.  The command used for both is ``dynsys`` on PATH
unless the DYNSYS_CLI environment variable overrides it.
"""

from __future__ import annotations

import json
import math
import os
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field

import torch

from .data import Dataset, WireError, load_dataset, parse_float_list, round_floats
from .model import Seq2Seq, greedy_decode, load_checkpoint
from .training import _collate, tensorize

METRICS = (
    "exact-class",
    "within-10%",
    "exact-k-digits",
    "feedback-entrywise-10%",
    "feedback-closed-loop",
)


def oracle_command() -> list[str]:
    return os.environ.get("DYNSYS_CLI", "dynsys").split()


class OracleMismatch(RuntimeError):
    """A shard's stored targets disagree with the labeling oracle."""


@dataclass
class EvalReport:
    task: str
    metric: str
    overall: float
    count: int
    per_degree: dict[int, float] = field(default_factory=dict)
    degree_counts: dict[int, int] = field(default_factory=dict)

    def to_json(self) -> str:
        blob = {
            "task": self.task,
            "metric": self.metric,
            "overall": self.overall,
            "count": self.count,
            "per_degree": {str(k): v for k, v in sorted(self.per_degree.items())},
            "degree_counts": {str(k): v for k, v in sorted(self.degree_counts.items())},
        }
        return json.dumps(blob, sort_keys=True)


# ---------------------------------------------------------------------------
# oracle grounding

_AGREEMENT_CACHE: dict[str, float] = {}


def oracle_agreement(shard: str, task: str) -> float:
    """Fraction of shard targets reproduced by ``classify --batch``."""
    key = os.path.abspath(str(shard))
    if key in _AGREEMENT_CACHE:
        return _AGREEMENT_CACHE[key]
    proc = subprocess.run(
        [*oracle_command(), "classify", task, "--batch", str(shard)],
        capture_output=True,
        text=True,
    )
    if proc.returncode not in (0, 2):
        raise RuntimeError(f"classify --batch failed rc={proc.returncode}: {proc.stderr}")
    relabeled = proc.stdout.splitlines()
    with open(shard, encoding="ascii") as fh:
        stored = [line.rstrip("\n").split("\t")[1] for line in fh if line.strip()]
    if len(relabeled) != len(stored):
        raise RuntimeError(
            f"{shard}: {len(stored)} records but {len(relabeled)} relabel lines"
        )
    agree = sum(a == b for a, b in zip(relabeled, stored))
    rate = agree / len(stored) if stored else float("nan")
    _AGREEMENT_CACHE[key] = rate
    return rate


def assert_oracle_grounded(dataset: Dataset) -> None:
    """Refuse to evaluate against shards the oracle does not reproduce."""
    for shard in dataset.shards:
        rate = oracle_agreement(shard, dataset.task)
        if rate != 1.0:
            raise OracleMismatch(f"{shard}: oracle agreement {rate:.6f} != 1.0")


# ---------------------------------------------------------------------------
# the five metrics


def _floats_or_none(tokens: list[str]) -> list[float] | None:
    try:
        return parse_float_list(tokens)
    except WireError:
        return None


def _within(pred: list[str], true: list[str], rel: float) -> bool:
    p = _floats_or_none(pred)
    t = _floats_or_none(true)
    if p is None or t is None or len(p) != len(t):
        return False
    return all(abs(a - b) <= rel * abs(b) for a, b in zip(p, t))


def _rounded_match(pred: list[str], true: list[str], k: int) -> bool:
    try:
        return round_floats(pred, k) == round_floats(true, k)
    except WireError:
        return False


def closed_loop_flags(
    inputs: list[list[str]], predictions: list[list[str]], margin: float | None = None
) -> list[bool]:
    """One flag per (system, predicted gain) pair, via ``verify-feedback``.

    Malformed predictions come back as ``error`` lines and count as failures;
    the subprocess exits 2 in that case, which is expected, not fatal.
    """
    if len(inputs) != len(predictions):
        raise ValueError("inputs and predictions differ in length")
    if not inputs:
        return []
    with tempfile.NamedTemporaryFile(
        "w", suffix=".tsv", delete=False, encoding="ascii"
    ) as fh:
        for src, pred in zip(inputs, predictions):
            fh.write(" ".join(src) + "\t" + " ".join(pred) + "\n")
        path = fh.name
    try:
        cmd = [*oracle_command(), "verify-feedback", path]
        if margin is not None:
            cmd += ["--margin", str(margin)]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        lines = proc.stdout.splitlines()
        if not lines or not lines[-1].startswith("rate "):
            raise RuntimeError(f"verify-feedback output malformed: {proc.stderr}")
        verdicts = lines[:-1]
        if len(verdicts) != len(inputs):
            raise RuntimeError(
                f"verify-feedback returned {len(verdicts)} verdicts for {len(inputs)} pairs"
            )
        return [line == "true" for line in verdicts]
    finally:
        os.unlink(path)


def evaluate_predictions(
    task: str,
    inputs: list[list[str]],
    targets: list[list[str]],
    predictions: list[list[str]],
    degrees: list[int],
    metric: str,
    *,
    sig_digits: int = 3,
) -> EvalReport:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; pick one of {METRICS}")
    if not len(inputs) == len(targets) == len(predictions) == len(degrees):
        raise ValueError("inputs/targets/predictions/degrees length mismatch")
    if metric == "feedback-closed-loop":
        flags = closed_loop_flags(inputs, predictions)
    elif metric == "exact-class":
        flags = [p == t for p, t in zip(predictions, targets)]
    elif metric in ("within-10%", "feedback-entrywise-10%"):
        flags = [_within(p, t, 0.1) for p, t in zip(predictions, targets)]
    else:  # exact-k-digits
        flags = [_rounded_match(p, t, sig_digits) for p, t in zip(predictions, targets)]

    hits: dict[int, int] = {}
    counts: dict[int, int] = {}
    for deg, ok in zip(degrees, flags):
        counts[deg] = counts.get(deg, 0) + 1
        hits[deg] = hits.get(deg, 0) + ok
    total = len(flags)
    return EvalReport(
        task=task,
        metric=metric,
        overall=(sum(flags) / total) if total else float("nan"),
        count=total,
        per_degree={d: hits[d] / counts[d] for d in counts},
        degree_counts=counts,
    )


# ---------------------------------------------------------------------------
# model-in-the-loop evaluation


@torch.no_grad()
def predict(
    model: Seq2Seq, inputs: list[list[str]], batch_size: int | None = None
) -> list[list[str]]:
    """Greedy-decode token predictions for raw input token lists.

    Inputs longer than the model's source cap are truncated so every record
    still gets a prediction (a clipped input usually decodes wrong, which is
    the honest outcome for a sequence the model cannot even see in full).
    """
    id_to_tok = sorted(model.vocab, key=model.vocab.get)
    bs = batch_size or model.cfg.batch_size
    cap = model.cfg.max_src_len
    out: list[list[str]] = []
    model.eval()
    for lo in range(0, len(inputs), bs):
        chunk = [s[:cap] for s in inputs[lo : lo + bs]]
        src = _collate(
            [
                (
                    torch.tensor([model.vocab[t] for t in s], dtype=torch.long),
                    torch.zeros(1, dtype=torch.long),
                )
                for s in chunk
            ],
            model.pad_id,
        )[0]
        for row in greedy_decode(model, src):
            out.append([id_to_tok[i] for i in row])
    return out


def evaluate(
    checkpoint: str | Seq2Seq,
    shards: list[str],
    metric: str,
    *,
    batch_size: int | None = None,
    limit: int | None = None,
    skip_oracle_check: bool = False,
) -> EvalReport:
    """Decode a shard set with a trained model and score one metric.

    Oracle agreement is asserted on every shard first (the whole evaluation
    is meaningless if the stored labels have drifted from the generator).
    """
    model = load_checkpoint(checkpoint) if isinstance(checkpoint, str) else checkpoint
    dataset = load_dataset(shards)
    if not skip_oracle_check:
        assert_oracle_grounded(dataset)
    pairs = list(dataset.pairs)
    degrees = list(dataset.degrees)
    if limit is not None:
        pairs = pairs[:limit]
        degrees = degrees[:limit]
    inputs = [src for src, _ in pairs]
    targets = [tgt for _, tgt in pairs]
    preds = predict(model, inputs, batch_size)
    sig = model.cfg.sig_digits or 3
    return evaluate_predictions(
        dataset.task, inputs, targets, preds, degrees, metric, sig_digits=sig
    )
