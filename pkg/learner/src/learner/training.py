"""Training loop: Adam on next-token cross-entropy, greedy-decode eval hooks.

Emits a checkpoint plus a learning-curve CSV (examples seen, mean loss,
optional eval accuracy per logged step).  A non-finite loss aborts the run
with :class:`TrainingDiverged` rather than silently training on garbage.
``stop_at_accuracy`` ends the run early at the first eval point (steps where
both ``log_every`` and ``eval_every`` divide the step count) that reaches the
requested exact-match accuracy.
"""

from __future__ import annotations

import csv
import math
import os
import random
from dataclasses import dataclass, field

import torch
from torch import nn

from .data import round_floats
from .model import ModelConfig, Seq2Seq, greedy_decode, save_checkpoint

Pair = tuple[list[str], list[str]]


class TrainingDiverged(RuntimeError):
    """The loss went NaN/inf mid-run."""


@dataclass
class TrainResult:
    model: Seq2Seq
    epoch_losses: list[float]
    batch_losses: list[float]
    steps: int
    examples_seen: int
    dropped_long: int
    checkpoint: str | None = None
    curve_path: str | None = None
    curve_rows: list[tuple[int, float, float | None]] = field(default_factory=list)


def tensorize(
    pairs: list[Pair] | tuple[Pair, ...], vocab: dict[str, int], cfg: ModelConfig
) -> tuple[list[tuple[torch.Tensor, torch.Tensor]], int]:
    """Token lists -> (src ids, `<s>`...`</s>` target ids); drops over-length rows.

    When the config asks for sig-digit rounding, the float groups inside every
    target are re-quantized here, so the model trains against the rounded
    sequence (class-style targets have no float groups and pass through).
    """
    bos, eos = vocab["<s>"], vocab["</s>"]
    items = []
    dropped = 0
    for src, tgt in pairs:
        if cfg.sig_digits is not None:
            tgt = round_floats(tgt, cfg.sig_digits)
        if len(src) > cfg.max_src_len or len(tgt) + 2 > cfg.max_tgt_len + 1:
            dropped += 1
            continue
        s = torch.tensor([vocab[t] for t in src], dtype=torch.long)
        t = torch.tensor([bos, *(vocab[t] for t in tgt), eos], dtype=torch.long)
        items.append((s, t))
    return items, dropped


def _collate(
    batch: list[tuple[torch.Tensor, torch.Tensor]], pad_id: int
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    srcs, tgts = zip(*batch)
    src = nn.utils.rnn.pad_sequence(srcs, batch_first=True, padding_value=pad_id)
    tgt = nn.utils.rnn.pad_sequence(tgts, batch_first=True, padding_value=pad_id)
    return src, tgt[:, :-1], tgt[:, 1:]


@torch.no_grad()
def exact_match(model: Seq2Seq, items: list[tuple[torch.Tensor, torch.Tensor]], batch_size: int = 64) -> float:
    """Fraction of items whose greedy decode reproduces the target exactly."""
    if not items:
        return float("nan")
    hits = 0
    pad = model.pad_id
    for lo in range(0, len(items), batch_size):
        chunk = items[lo : lo + batch_size]
        src, _, _ = _collate(chunk, pad)
        decoded = greedy_decode(model, src)
        for row, (_, tgt) in zip(decoded, chunk):
            want = tgt[1:-1].tolist()  # strip <s> ... </s>
            hits += row == want
    return hits / len(items)


def train(
    cfg: ModelConfig,
    pairs: list[Pair] | tuple[Pair, ...],
    vocab: dict[str, int],
    out_dir: str | None = None,
    *,
    seed: int = 0,
    epochs: int = 1,
    max_steps: int | None = None,
    eval_pairs: list[Pair] | None = None,
    eval_every: int | None = None,
    stop_at_accuracy: float | None = None,
    log_every: int = 50,
    grad_clip: float = 1.0,
    quiet: bool = True,
) -> TrainResult:
    cfg.validate()
    torch.manual_seed(seed)
    rng = random.Random(seed)
    model = Seq2Seq(cfg, vocab)
    items, dropped = tensorize(pairs, vocab, cfg)
    if not items:
        raise ValueError("no training examples fit the length caps")
    eval_items = None
    if eval_pairs is not None:
        eval_items, _ = tensorize(eval_pairs, vocab, cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    ce = nn.CrossEntropyLoss(ignore_index=model.pad_id)

    batch_losses: list[float] = []
    epoch_losses: list[float] = []
    curve_rows: list[tuple[int, float, float | None]] = []
    step = 0
    seen = 0
    window: list[float] = []
    stop = False
    for _epoch in range(epochs):
        order = list(range(len(items)))
        rng.shuffle(order)
        epoch_sum, epoch_n = 0.0, 0
        model.train()
        for lo in range(0, len(order), cfg.batch_size):
            batch = [items[i] for i in order[lo : lo + cfg.batch_size]]
            src, tgt_in, tgt_out = _collate(batch, model.pad_id)
            logits = model(src, tgt_in)
            loss = ce(logits.reshape(-1, logits.shape[-1]), tgt_out.reshape(-1))
            val = loss.detach().item()
            if not math.isfinite(val):
                last = batch_losses[-1] if batch_losses else None
                raise TrainingDiverged(
                    f"non-finite loss {val!r} at step {step} "
                    f"({seen} examples seen; last finite loss {last})"
                )
            opt.zero_grad(set_to_none=True)
            loss.backward()
            if grad_clip:
                nn.utils.clip_grad_norm_(model.parameters(), grad_clip)
            opt.step()

            step += 1
            seen += len(batch)
            batch_losses.append(val)
            window.append(val)
            epoch_sum += val * len(batch)
            epoch_n += len(batch)
            if step % log_every == 0:
                acc = None
                if eval_items is not None and eval_every and step % eval_every == 0:
                    acc = exact_match(model, eval_items, cfg.batch_size)
                    model.train()
                curve_rows.append((seen, sum(window) / len(window), acc))
                if not quiet:
                    extra = "" if acc is None else f"  acc={acc:.4f}"
                    print(f"step {step}  examples {seen}  loss {curve_rows[-1][1]:.4f}{extra}")
                window = []
                if acc is not None and stop_at_accuracy is not None and acc >= stop_at_accuracy:
                    stop = True
                    break
            if max_steps is not None and step >= max_steps:
                stop = True
                break
        if epoch_n:
            epoch_losses.append(epoch_sum / epoch_n)
        if stop:
            break

    result = TrainResult(
        model=model,
        epoch_losses=epoch_losses,
        batch_losses=batch_losses,
        steps=step,
        examples_seen=seen,
        dropped_long=dropped,
        curve_rows=curve_rows,
    )
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        result.checkpoint = os.path.join(out_dir, "model.pt")
        save_checkpoint(model, result.checkpoint)
        result.curve_path = os.path.join(out_dir, "curve.csv")
        with open(result.curve_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["examples", "loss", "accuracy"])
            for ex, ls, acc in curve_rows:
                writer.writerow([ex, f"{ls:.6f}", "" if acc is None else f"{acc:.6f}"])
    return result
