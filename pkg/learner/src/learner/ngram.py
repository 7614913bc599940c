"""Hashed n-gram bag-of-features baseline.

A linear classifier (log-loss SGD) over hashed token n-grams, n <= 5, trained
with ``partial_fit`` so million-record shard sets stream through in chunks.
The full target string is the class label, which makes ``exact-class`` the
one metric it can play; its job is to set the floor a sequence model has to
beat.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from sklearn.linear_model import SGDClassifier

from .data import load_vocab, read_meta, read_pairs, shard_task
from .metrics import EvalReport, evaluate_predictions, oracle_agreement, OracleMismatch

_P = np.uint64(1_000_003)
# per-order salts, premixed in python ints so numpy never sees scalar overflow
_SALTS = tuple(
    np.uint64((0x9E3779B97F4A7C15 * n) & 0xFFFFFFFFFFFFFFFF) for n in range(16)
)


def featurize(
    rows: list[list[str]], vocab: dict[str, int], *, max_n: int = 5, dim: int = 1 << 18
) -> sparse.csr_matrix:
    """Counts of hashed 1..max_n-grams, one row per token list."""
    lens = np.fromiter((len(r) for r in rows), dtype=np.int64, count=len(rows))
    flat = np.empty(int(lens.sum()), dtype=np.uint64)
    pos = 0
    for r in rows:
        for tok in r:
            flat[pos] = vocab[tok]
            pos += 1
    rec = np.repeat(np.arange(len(rows), dtype=np.int64), lens)
    row_parts: list[np.ndarray] = []
    col_parts: list[np.ndarray] = []
    total = flat.size
    for n in range(1, max_n + 1):
        m = total - n + 1
        if m <= 0:
            break
        # rolling polynomial hash; uint64 wraparound is the hash mixing
        h = flat[:m].copy()
        for j in range(1, n):
            h = h * _P + flat[j : j + m]
        h ^= _SALTS[n]  # keep n-gram orders in distinct bucket families
        keep = rec[:m] == rec[n - 1 :]  # windows must not straddle records
        row_parts.append(rec[:m][keep])
        col_parts.append((h % np.uint64(dim))[keep].astype(np.int64))
    if not row_parts:
        return sparse.csr_matrix((len(rows), dim), dtype=np.float32)
    r = np.concatenate(row_parts)
    c = np.concatenate(col_parts)
    x = sparse.coo_matrix(
        (np.ones(r.size, dtype=np.float32), (r, c)), shape=(len(rows), dim)
    )
    return x.tocsr()


@dataclass
class NGramModel:
    clf: SGDClassifier
    classes: list[str]
    vocab: dict[str, int]
    max_n: int
    dim: int

    def predict(self, rows: list[list[str]]) -> list[list[str]]:
        if len(self.classes) == 1:
            return [self.classes[0].split(" ")] * len(rows)
        x = featurize(rows, self.vocab, max_n=self.max_n, dim=self.dim)
        return [label.split(" ") for label in self.clf.predict(x)]


def fit_pairs(
    pairs: list[tuple[list[str], list[str]]],
    vocab: dict[str, int],
    *,
    max_n: int = 5,
    dim: int = 1 << 18,
    passes: int = 2,
    alpha: float = 1e-6,
    seed: int = 0,
    chunk: int = 10_000,
) -> NGramModel:
    labels = [" ".join(t) for _, t in pairs]
    classes = sorted(set(labels))
    clf = SGDClassifier(loss="log_loss", alpha=alpha, random_state=seed)
    model = NGramModel(clf, classes, vocab, max_n, dim)
    if len(classes) == 1:
        return model  # degenerate shard: always predict the one class
    arr = np.asarray(classes)
    first = True
    for _ in range(passes):
        for lo in range(0, len(pairs), chunk):
            rows = [src for src, _ in pairs[lo : lo + chunk]]
            x = featurize(rows, vocab, max_n=max_n, dim=dim)
            y = np.asarray(labels[lo : lo + chunk])
            clf.partial_fit(x, y, classes=arr if first else None)
            first = False
    return model


def ngram_baseline(
    train_shards: list[str],
    test_shards: list[str],
    vocab_path: str,
    *,
    max_n: int = 5,
    dim: int = 1 << 18,
    passes: int = 2,
    alpha: float = 1e-6,
    seed: int = 0,
    chunk: int = 10_000,
    skip_oracle_check: bool = False,
) -> EvalReport:
    """Stream-train on shard files, score exact-class on the test shards."""
    vocab = load_vocab(vocab_path)
    task = shard_task(train_shards[0])
    if not skip_oracle_check:
        for shard in [*train_shards, *test_shards]:
            rate = oracle_agreement(shard, task)
            if rate != 1.0:
                raise OracleMismatch(f"{shard}: oracle agreement {rate:.6f} != 1.0")

    # pass 0: the class inventory (targets only, memory-light)
    classes_set: set[str] = set()
    for shard in train_shards:
        with open(shard, encoding="ascii") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line:
                    classes_set.add(line.split("\t")[1])
    classes = sorted(classes_set)
    clf = SGDClassifier(loss="log_loss", alpha=alpha, random_state=seed)
    model = NGramModel(clf, classes, vocab, max_n, dim)

    if len(classes) > 1:
        arr = np.asarray(classes)
        first = True
        for _ in range(passes):
            for shard in train_shards:
                pairs = read_pairs(shard)
                labels = [" ".join(t) for _, t in pairs]
                for lo in range(0, len(pairs), chunk):
                    rows = [src for src, _ in pairs[lo : lo + chunk]]
                    x = featurize(rows, vocab, max_n=max_n, dim=dim)
                    y = np.asarray(labels[lo : lo + chunk])
                    clf.partial_fit(x, y, classes=arr if first else None)
                    first = False

    inputs: list[list[str]] = []
    targets: list[list[str]] = []
    preds: list[list[str]] = []
    degrees: list[int] = []
    for shard in test_shards:
        pairs = read_pairs(shard)
        degrees.extend(int(m["n"]) for m in read_meta(shard))
        for lo in range(0, len(pairs), chunk):
            part = pairs[lo : lo + chunk]
            inputs.extend(src for src, _ in part)
            targets.extend(tgt for _, tgt in part)
            preds.extend(model.predict([src for src, _ in part]))
    return evaluate_predictions(task, inputs, targets, preds, degrees, "exact-class")
