"""Readers for the generator's wire formats.

The learner talks to the dataset generator exclusively through files and
subprocesses: TSV shards of space-separated tokens (input TAB target), one
``.meta.jsonl`` sidecar per shard, and a flat vocabulary file (one token per
line, line number = id).  Nothing here imports generator code.

Float groups on the wire are scientific notation::

    FLOAT+ 3 DOT 1 4 E INT- 1        # 0.314

with the mantissa in [1, 10), trailing zeros trimmed, DOT omitted for a
single-digit mantissa, and a signed decimal exponent.  ``round_floats``
re-quantizes every such group to k significant digits so that model output
and reference target can be compared at matched precision.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

PAD = "<pad>"
BOS = "<s>"
EOS = "</s>"

_DIGITS = frozenset("0123456789")


class WireError(ValueError):
    """A token sequence violates the wire grammar."""


def load_vocab(path: str | os.PathLike[str]) -> dict[str, int]:
    with open(path, encoding="ascii") as fh:
        tokens = [line.rstrip("\n") for line in fh]
    while tokens and tokens[-1] == "":
        tokens.pop()
    ids = {tok: i for i, tok in enumerate(tokens)}
    if len(ids) != len(tokens):
        raise WireError("duplicate token in vocabulary file")
    for special in (PAD, BOS, EOS):
        if special not in ids:
            raise WireError(f"vocabulary file lacks {special!r}")
    return ids


def meta_path(shard: str | os.PathLike[str]) -> str:
    base = str(shard)
    if base.endswith(".tsv"):
        base = base[: -len(".tsv")]
    return base + ".meta.jsonl"


def read_pairs(shard: str | os.PathLike[str]) -> list[tuple[list[str], list[str]]]:
    """(input tokens, target tokens) per record, in shard order."""
    pairs = []
    with open(shard, encoding="ascii") as fh:
        for lineno, line in enumerate(fh):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                src, tgt = line.split("\t")
            except ValueError:
                raise WireError(f"{shard}:{lineno + 1}: expected exactly one tab") from None
            pairs.append((src.split(" "), tgt.split(" ")))
    return pairs


def read_meta(shard: str | os.PathLike[str]) -> list[dict]:
    with open(meta_path(shard), encoding="ascii") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def read_degrees(shard: str | os.PathLike[str]) -> list[int]:
    """State dimension per record, from the sidecar."""
    return [int(m["n"]) for m in read_meta(shard)]


def shard_task(shard: str | os.PathLike[str]) -> str:
    meta = read_meta(shard)
    tasks = {m["task"] for m in meta}
    if len(tasks) != 1:
        raise WireError(f"{shard}: mixed tasks {sorted(tasks)}")
    return tasks.pop()


# ---------------------------------------------------------------------------
# float groups


def parse_int(tokens: list[str], i: int) -> tuple[int, int]:
    if i >= len(tokens) or tokens[i] not in ("INT+", "INT-"):
        raise WireError(f"expected integer sign at {i}")
    neg = tokens[i] == "INT-"
    i += 1
    start = i
    while i < len(tokens) and tokens[i] in _DIGITS:
        i += 1
    if i == start:
        raise WireError(f"expected digits at {start}")
    val = int("".join(tokens[start:i]))
    return (-val if neg else val), i


def parse_float(tokens: list[str], i: int) -> tuple[float, int]:
    if i >= len(tokens) or tokens[i] not in ("FLOAT+", "FLOAT-"):
        raise WireError(f"expected float sign at {i}")
    neg = tokens[i] == "FLOAT-"
    i += 1
    if i >= len(tokens) or tokens[i] not in _DIGITS:
        raise WireError(f"expected mantissa digit at {i}")
    lead = tokens[i]
    i += 1
    frac = ""
    if i < len(tokens) and tokens[i] == "DOT":
        i += 1
        start = i
        while i < len(tokens) and tokens[i] in _DIGITS:
            i += 1
        if i == start:
            raise WireError(f"expected digits after DOT at {start}")
        frac = "".join(tokens[start:i])
    if i >= len(tokens) or tokens[i] != "E":
        raise WireError(f"expected E at {i}")
    exponent, i = parse_int(tokens, i + 1)
    v = float(f"{lead}.{frac or '0'}e{exponent}")
    return (-v if neg else v), i


def parse_float_list(tokens: list[str]) -> list[float]:
    """Parse a target that is nothing but float groups (e.g. a gain matrix)."""
    out = []
    i = 0
    while i < len(tokens):
        v, i = parse_float(tokens, i)
        out.append(v)
    return out


def format_float(v: float, sig_digits: int = 4) -> list[str]:
    """Emit one float group at ``sig_digits`` precision (wire-canonical)."""
    v = float(v)
    if math.isnan(v) or math.isinf(v):
        raise WireError(f"cannot encode {v!r}")
    if v == 0:
        return ["FLOAT+", "0", "E", "INT+", "0"]
    sign = "FLOAT+" if v > 0 else "FLOAT-"
    mant, _, exp = f"{abs(v):.{sig_digits - 1}e}".partition("e")
    digits = mant.replace(".", "").rstrip("0") or "0"
    exponent = int(exp)
    out = [sign, digits[0]]
    if len(digits) > 1:
        out.append("DOT")
        out.extend(digits[1:])
    out.append("E")
    out.append("INT+" if exponent >= 0 else "INT-")
    out.extend(str(abs(exponent)))
    return out


def round_floats(tokens: list[str], sig_digits: int) -> list[str]:
    """Re-quantize every float group in ``tokens`` to ``sig_digits`` digits.

    Non-float tokens pass through untouched, so the function works on any
    target layout that embeds float groups.  Raises WireError if a float
    group is malformed.
    """
    out: list[str] = []
    i = 0
    while i < len(tokens):
        if tokens[i] in ("FLOAT+", "FLOAT-"):
            v, i = parse_float(tokens, i)
            out.extend(format_float(v, sig_digits))
        else:
            out.append(tokens[i])
            i += 1
    return out


# ---------------------------------------------------------------------------
# shard bundles


@dataclass(frozen=True)
class Dataset:
    """A list of shards presented as one sequence of records."""

    shards: tuple[str, ...]
    pairs: tuple[tuple[list[str], list[str]], ...]
    degrees: tuple[int, ...]
    task: str

    def __len__(self) -> int:
        return len(self.pairs)


def load_dataset(shards: list[str] | tuple[str, ...]) -> Dataset:
    if not shards:
        raise WireError("no shards given")
    pairs: list[tuple[list[str], list[str]]] = []
    degrees: list[int] = []
    tasks = set()
    for shard in shards:
        ps = read_pairs(shard)
        ms = read_meta(shard)
        if len(ps) != len(ms):
            raise WireError(f"{shard}: {len(ps)} records but {len(ms)} meta rows")
        pairs.extend(ps)
        degrees.extend(int(m["n"]) for m in ms)
        tasks.update(m["task"] for m in ms)
    if len(tasks) != 1:
        raise WireError(f"mixed tasks {sorted(tasks)}")
    return Dataset(tuple(str(s) for s in shards), tuple(pairs), tuple(degrees), tasks.pop())
