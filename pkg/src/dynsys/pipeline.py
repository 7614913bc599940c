"""Sampling -> oracle labeling -> token encoding -> sharded TSV files.

A generation job walks: draw a system (or PDE instance), shift it onto its
equilibrium, serialize to input tokens, decode those tokens back, and label
the *decoded* object with the oracle.  Targets therefore describe exactly
what is on the wire — rounding during encoding can never detach a label
from its record, and the per-shard re-derivation audit is consistent by
construction.

Shards are independent: each derives its own seed from (job seed, index),
owns its RNG, applies per-shard class/dimension quotas, deduplicates on a
64-bit input hash, and sorts records by (hash, input) before writing — so
the bytes do not depend on the worker count and regeneration is exact.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import random
import re
from collections import Counter
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from multiprocessing import get_context

import numpy as np

from . import control, pde, stability, tokens
from .errors import (
    REASON_TAXONOMY_VERSION,
    DegenerateSystem,
    DynSysError,
    GenerationError,
    MalformedSequence,
    TargetUnreachable,
    UncontrollableSystem,
    UnknownVariant,
    UnverifiableGain,
)
from .expr import BINARY_OPS, UNARY_OPS, Expr, free_vars
from .sampler import DistributionConfig, System, make_equilibrium, sample_system

TASKS = ("stability", "speed", "ctrl-auto", "ctrl-nonauto", "feedback", "pde")
SYSTEM_TASKS = ("stability", "speed", "ctrl-auto", "ctrl-nonauto", "feedback")
BALANCED_TASKS = ("stability", "ctrl-auto", "ctrl-nonauto")

# A class whose acceptance rate stays below MIN_CLASS_RATE across a window
# of this many labeling attempts is declared unreachable.
UNREACHABLE_WINDOW = 10**6
MIN_CLASS_RATE = 1e-4

AUDIT_STRIDE = 100  # re-derive every 100th record (1% per shard)


def task_config(task: str) -> DistributionConfig:
    """Per-task sampling morphology (dimension ranges, operator counts)."""
    if task in ("stability", "speed"):
        return DistributionConfig(n_min=2, n_max=6, ops_lo="0,3", ops_hi="2,2")
    if task in ("ctrl-auto", "feedback"):
        return DistributionConfig(
            n_min=3, n_max=6, q_min=1, q_max=3,
            ops_lo="1,0", ops_hi="2,2", x_eq_choices="0.5,0.9",
        )
    if task == "ctrl-nonauto":
        return DistributionConfig(
            n_min=2, n_max=3, q_min=1, q_max=1, include_time=True,
            ops_lo="1,0", ops_hi="2,2", x_eq_choices="0.5,0.9",
        )
    if task == "pde":
        return DistributionConfig(n_min=2, n_max=6)
    raise ValueError(f"unknown task {task!r}")


_VARIANTS = {
    "no-trig": {"unary_weights": "exp:1,log:1,sqrt:1"},
    "no-log-exp": {
        "unary_weights": "sqrt:1,sin:1,cos:1,tan:1,asin:1,acos:1,atan:1"
    },
    "sqrt-only": {"unary_weights": "sqrt:1"},
    "skewed-ops": {
        "unary_weights": "exp:1,log:1,sqrt:8,sin:1,cos:1,tan:1,asin:1,acos:1,atan:1"
    },
    "int10": {"p_int": 0.10},
    "int50": {"p_int": 0.50},
    "int70": {"p_int": 0.70},
    "len-n3-3n3": {"ops_lo": "1,3", "ops_hi": "3,3"},
    "len-2n3-4n3": {"ops_lo": "2,3", "ops_hi": "4,3"},
    "degree6": {"n_min": 6, "n_max": 6},
}


def variant_config(
    name: str, base: DistributionConfig | None = None
) -> DistributionConfig:
    """Distribution-shift override applied to ``base`` (stability default)."""
    if name not in _VARIANTS:
        raise UnknownVariant(f"unknown variant {name!r}")
    cfg = dataclasses.replace(
        base if base is not None else task_config("stability"), **_VARIANTS[name]
    )
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# record encoding / decoding


def encode_system_input(system: System, task: str) -> list[str]:
    """`[INT p]  eq | eq | ...  at  FLOAT x_e  [FLOAT u_e]` (scalar point)."""
    if len(set(system.x_eq)) > 1 or len(set(system.u_eq)) > 1:
        raise ValueError("wire format carries a single scalar per point")
    out: list[str] = []
    if task in ("ctrl-auto", "ctrl-nonauto", "feedback"):
        out += tokens.encode_int(system.n_controls)
    for i, eq in enumerate(system.equations):
        if i:
            out.append("|")
        out += tokens.to_prefix(eq)
    out.append("at")
    out += tokens.encode_float(system.x_eq[0])
    if system.n_controls:
        out += tokens.encode_float(system.u_eq[0])
    return out


def decode_system_input(seq: list[str], task: str) -> System:
    if task not in SYSTEM_TASKS:
        raise ValueError(f"not a system task: {task!r}")
    i = 0
    p = 0
    if task in ("ctrl-auto", "ctrl-nonauto", "feedback"):
        p, i = tokens.decode_int(seq, i)
        if not 0 < p <= tokens.MAX_CONTROL_VARS:
            raise MalformedSequence(f"bad control count {p}", 0)
    eqs: list[Expr] = []
    while True:
        e, i = tokens.parse_prefix_partial(seq, i)
        eqs.append(e)
        if i >= len(seq):
            raise MalformedSequence("missing equilibrium marker", i)
        if seq[i] == "at":
            i += 1
            break
        if seq[i] != "|":
            raise MalformedSequence(f"expected '|' or 'at', got {seq[i]!r}", i)
        i += 1
    x_e, i = tokens.decode_float(seq, i)
    u_e = 0.5
    if p:
        u_e, i = tokens.decode_float(seq, i)
    if i != len(seq):
        raise MalformedSequence("trailing tokens after input", i)
    n = len(eqs)
    allowed = {f"x{k}" for k in range(n)} | {f"u{j}" for j in range(p)}
    if task == "ctrl-nonauto":
        allowed.add("t")
    seen: set[str] = set()
    for e in eqs:
        seen |= free_vars(e)
    if not seen <= allowed:
        raise MalformedSequence(f"variables {sorted(seen - allowed)} out of range", 0)
    return System(
        equations=tuple(eqs),
        n_states=n,
        n_controls=p,
        has_time="t" in seen,
        x_eq=(x_e,) * n,
        u_eq=(u_e,) * p,
    )


_FACTOR_MARK = {pde.Gaussian: "gauss", pde.Sinc: "sinc", pde.DiracScaled: "dirac"}


def encode_pde_input(op: pde.DiffOperator, u0: pde.InitialCondition) -> list[str]:
    """Monomials `coeff INT(order)*n` joined by `|`, then `init` factors, `mod`s."""
    out: list[str] = []
    for j, (alpha, coeff) in enumerate(op.terms):
        if j:
            out.append("|")
        if coeff == int(coeff):
            out += tokens.encode_int(int(coeff))
        else:
            out += tokens.encode_float(coeff)
        for o in alpha:
            out += tokens.encode_int(o)
    out.append("init")
    for f in u0.factors:
        if isinstance(f, pde.One):
            out.append("one")
        else:
            out.append(_FACTOR_MARK[type(f)])
            out += tokens.encode_float(f.a)
    for axis, b in u0.modulations:
        out.append("mod")
        out += tokens.encode_int(axis)
        out += tokens.encode_float(b)
    return out


def _decode_coeff(seq: list[str], i: int) -> tuple[float, int]:
    if seq[i].startswith("INT"):
        v, i = tokens.decode_int(seq, i)
        return float(v), i
    return tokens.decode_float(seq, i)


def decode_pde_input(
    seq: list[str],
) -> tuple[pde.DiffOperator, pde.InitialCondition]:
    monomials: list[tuple[float, list[int]]] = []
    i = 0
    while True:
        coeff, i = _decode_coeff(seq, i)
        orders: list[int] = []
        while i < len(seq) and seq[i].startswith("INT"):
            o, i = tokens.decode_int(seq, i)
            if o < 0:
                raise MalformedSequence(f"negative derivative order {o}", i)
            orders.append(o)
        monomials.append((coeff, orders))
        if i >= len(seq):
            raise MalformedSequence("missing 'init' marker", i)
        if seq[i] == "init":
            i += 1
            break
        if seq[i] != "|":
            raise MalformedSequence(f"expected '|' or 'init', got {seq[i]!r}", i)
        i += 1
    n = len(monomials[0][1])
    if n == 0 or any(len(o) != n for _, o in monomials):
        raise MalformedSequence("inconsistent monomial arity", 0)
    factors: list[pde.Factor] = []
    kinds = {"gauss": pde.Gaussian, "sinc": pde.Sinc, "dirac": pde.DiracScaled}
    while i < len(seq) and seq[i] != "mod":
        mark = seq[i]
        i += 1
        if mark == "one":
            factors.append(pde.One())
        elif mark in kinds:
            a, i = tokens.decode_float(seq, i)
            factors.append(kinds[mark](a))
        else:
            raise MalformedSequence(f"unknown factor mark {mark!r}", i - 1)
    if len(factors) != n:
        raise MalformedSequence(
            f"{len(factors)} factors for {n} axes", i
        )
    mods: list[tuple[int, float]] = []
    while i < len(seq):
        if seq[i] != "mod":
            raise MalformedSequence(f"expected 'mod', got {seq[i]!r}", i)
        axis, i = tokens.decode_int(seq, i + 1)
        b, i = tokens.decode_float(seq, i)
        if not 0 <= axis < n:
            raise MalformedSequence(f"modulation axis {axis} out of range", i)
        mods.append((axis, b))
    op = pde.DiffOperator(
        n_axes=n, terms=tuple((tuple(o), c) for c, o in monomials)
    )
    return op, pde.InitialCondition(factors=tuple(factors), modulations=tuple(mods))


def encode_support(support: pde.SupportSet) -> list[str]:
    out: list[str] = []
    for ax in support.axes:
        if isinstance(ax, pde.FullLine):
            out.append("fullline")
        elif isinstance(ax, pde.Point):
            out.append("point")
            out += tokens.encode_float(ax.c)
        else:
            out.append("interval")
            out += tokens.encode_float(ax.lo)
            out += tokens.encode_float(ax.hi)
    return out


def decode_support(seq: list[str], i: int) -> tuple[pde.SupportSet, int]:
    axes: list[pde.AxisSupport] = []
    while i < len(seq):
        mark = seq[i]
        i += 1
        if mark == "fullline":
            axes.append(pde.FULL_LINE)
        elif mark == "point":
            c, i = tokens.decode_float(seq, i)
            axes.append(pde.Point(c))
        elif mark == "interval":
            lo, i = tokens.decode_float(seq, i)
            hi, i = tokens.decode_float(seq, i)
            axes.append(pde.Interval(lo, hi))
        else:
            raise MalformedSequence(f"unknown support mark {mark!r}", i - 1)
    return pde.SupportSet(axes=tuple(axes)), i


def _bool_token(b: bool) -> str:
    return "true" if b else "false"


def _decode_bool(seq: list[str], i: int) -> tuple[bool, int]:
    if i >= len(seq) or seq[i] not in ("true", "false"):
        raise MalformedSequence("expected boolean token", i)
    return seq[i] == "true", i + 1


def encode_target(task: str, verdict) -> list[str]:
    if task == "stability":
        return [_bool_token(verdict.stable)]
    if task == "speed":
        return tokens.encode_float(verdict.decay)
    if task in ("ctrl-auto", "ctrl-nonauto"):
        return tokens.encode_int(verdict.uncontrollable_dim)
    if task == "feedback":
        out: list[str] = []
        for row in verdict:  # K, row-major
            for v in row:
                out += tokens.encode_float(float(v))
        return out
    if task == "pde":
        out = [_bool_token(verdict.exists), _bool_token(verdict.vanishes)]
        return out + encode_support(verdict.support)
    raise ValueError(f"unknown task {task!r}")


def decode_target(task: str, seq: list[str]):
    """Inverse of encode_target, as plain Python values.

    stability -> bool; speed -> float; ctrl-* -> int; feedback -> flat
    list of floats (caller reshapes with p, n); pde -> (exists, vanishes,
    SupportSet).
    """
    if task == "stability":
        b, i = _decode_bool(seq, 0)
        if i != len(seq):
            raise MalformedSequence("trailing tokens after target", i)
        return b
    if task == "speed":
        v, i = tokens.decode_float(seq, 0)
        if i != len(seq):
            raise MalformedSequence("trailing tokens after target", i)
        return v
    if task in ("ctrl-auto", "ctrl-nonauto"):
        v, i = tokens.decode_int(seq, 0)
        if i != len(seq):
            raise MalformedSequence("trailing tokens after target", i)
        return v
    if task == "feedback":
        vals: list[float] = []
        i = 0
        while i < len(seq):
            v, i = tokens.decode_float(seq, i)
            vals.append(v)
        return vals
    if task == "pde":
        exists, i = _decode_bool(seq, 0)
        vanishes, i = _decode_bool(seq, i)
        support, i = decode_support(seq, i)
        return exists, vanishes, support
    raise ValueError(f"unknown task {task!r}")


# ---------------------------------------------------------------------------
# labeling (the single label path: decode first, then run the oracle)


def label_with_verdict(task: str, seq: list[str], cfg: DistributionConfig):
    """(target tokens, oracle verdict) for an input token sequence.

    Everything the oracle sees is re-parsed from ``seq``; oracle rejections
    (marginal, singular, ...) propagate as DynSysError for the caller to
    tally.
    """
    if task == "pde":
        op, u0 = decode_pde_input(seq)
        verdict = pde.classify_pde(op, u0)
        return encode_target(task, verdict), verdict
    system = decode_system_input(seq, task)
    if task in ("stability", "speed"):
        verdict = stability.classify_stability(system)
        return encode_target(task, verdict), verdict
    if task == "ctrl-auto":
        verdict = control.controllability(control.linearize(system))
        return encode_target(task, verdict), verdict
    if task == "ctrl-nonauto":
        verdict = control.nonauto_controllability(system, t_eval=cfg.t_eval)
        return encode_target(task, verdict), verdict
    # feedback: gain for the linearized pair over the configured horizon
    lin = control.linearize(system)
    K = control.feedback_matrix(lin, T=cfg.horizon)
    return encode_target(task, K.tolist()), K


def label_input(task: str, seq: list[str], cfg: DistributionConfig) -> list[str]:
    return label_with_verdict(task, seq, cfg)[0]


# ---------------------------------------------------------------------------
# job definition and shard construction


@dataclass(frozen=True)
class GenJob:
    """One dataset build: task, sampling config, size, balance, layout."""

    task: str
    config: DistributionConfig
    count: int
    out_template: str  # must contain "{shard}" and end in ".tsv"
    balance: float | None = None
    shard_size: int = 10000
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.count <= 0:
            raise ValueError("count must be positive")
        if self.shard_size <= 0 or self.workers < 1:
            raise ValueError("shard_size and workers must be positive")
        if self.balance is not None:
            if self.task not in BALANCED_TASKS:
                raise ValueError(f"task {self.task!r} has no class to balance")
            if not 0.0 < self.balance < 1.0:
                raise ValueError("balance must lie strictly inside (0, 1)")
        if "{shard" not in self.out_template:
            raise ValueError("out_template needs a {shard} placeholder")
        if not self.out_template.endswith(".tsv"):
            raise ValueError("out_template must end in .tsv")
        self.config.validate()

    def n_shards(self) -> int:
        return -(-self.count // self.shard_size)

    def shard_path(self, index: int) -> str:
        return self.out_template.format(shard=index)

    def meta_path(self, index: int) -> str:
        return self.shard_path(index)[: -len(".tsv")] + ".meta.jsonl"

    def stats_path(self) -> str:
        stem = re.sub(r"\{shard[^}]*\}", "stats", self.out_template)
        return stem[: -len(".tsv")] + ".json"


def shard_seed(seed: int, index: int) -> int:
    h = hashlib.blake2b(f"{seed}:{index}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "big")


def record_hash(input_tokens: list[str]) -> int:
    h = hashlib.blake2b(" ".join(input_tokens).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "big")


def _positive_class(task: str, target_value) -> bool:
    """The class the balance fraction refers to."""
    if task == "stability":
        return bool(target_value)
    return target_value == 0  # ctrl-*: controllable


def _class_name(task: str, target_value) -> str:
    if task == "stability":
        return "stable" if target_value else "unstable"
    if task in ("ctrl-auto", "ctrl-nonauto"):
        return "controllable" if target_value == 0 else "uncontrollable"
    if task == "pde":
        exists, vanishes = target_value
        return f"{int(exists)}{int(vanishes)}"
    return "record"  # speed, feedback: no class structure


def _apportion(total: int, weights: list[float]) -> list[int]:
    """Largest-remainder split of ``total`` by ``weights`` (deterministic)."""
    raw = [total * w for w in weights]
    out = [int(r) for r in raw]
    rem = total - sum(out)
    order = sorted(range(len(raw)), key=lambda i: (out[i] - raw[i], i))
    for i in order[:rem]:
        out[i] += 1
    return out


def _draw_candidate(task: str, rng: random.Random, cfg: DistributionConfig, n: int):
    """One sampling attempt at dimension ``n``.

    Returns (input tokens, target tokens, meta dict); raises DynSysError on
    any rejection.  The target always comes from the decoded input.
    """
    if task == "pde":
        op = pde.sample_operator(rng, n)
        u0 = pde.sample_initial_condition(rng, n)
        seq = encode_pde_input(op, u0)
        verdict = pde.classify_pde(*decode_pde_input(seq))
        meta = {"n": n, "p": 0, "label": _class_name(task, (verdict.exists, verdict.vanishes))}
        return seq, encode_target(task, verdict), meta

    cfg_n = dataclasses.replace(cfg, n_min=n, n_max=n)
    system = sample_system(rng, cfg_n)
    system = make_equilibrium(system, allow_complex_shift=False, t_eval=cfg.t_eval)
    seq = encode_system_input(system, task)
    decoded = decode_system_input(seq, task)
    meta = {"n": n, "p": decoded.n_controls}

    if task in ("stability", "speed"):
        verdict = stability.classify_stability(decoded)
        meta["label"] = _class_name("stability", verdict.stable) if task == "stability" else "record"
        return seq, encode_target(task, verdict), meta
    if task == "ctrl-nonauto":
        verdict = control.nonauto_controllability(decoded, t_eval=cfg.t_eval)
        meta["label"] = _class_name(task, verdict.uncontrollable_dim)
        return seq, encode_target(task, verdict), meta

    lin = control.linearize(decoded)
    if control.degenerate_pair(lin):
        raise DegenerateSystem("zero row or zero input column in the linearized pair")
    if task == "ctrl-auto":
        verdict = control.controllability(lin)
        meta["label"] = _class_name(task, verdict.uncontrollable_dim)
        return seq, encode_target(task, verdict), meta
    # feedback: controllable systems only
    if not control.controllability(lin).controllable:
        raise UncontrollableSystem("feedback records require a controllable pair")
    K = control.feedback_matrix(lin, T=cfg.horizon)
    target = encode_target(task, K.tolist())
    # the record promises its own target passes the closed-loop check, and
    # the target only carries 4 significant digits
    K_wire = np.asarray(decode_target(task, target)).reshape(lin.p, lin.n)
    if not control.verify_feedback(lin.A, lin.B, K_wire):
        raise UnverifiableGain("gain margin thinner than target precision")
    meta["label"] = "record"
    return seq, target, meta


_POSITIVE_LABELS = frozenset(("stable", "controllable"))


@dataclass
class _ShardResult:
    index: int
    records: int
    rejections: dict
    class_counts: dict
    hashes: list[int]
    audited: int


def _build_shard(job: GenJob, index: int, size: int) -> _ShardResult:
    rng = random.Random(shard_seed(job.seed, index))
    cfg = job.config
    ns = list(range(cfg.n_min, cfg.n_max + 1))
    balanced = job.balance is not None
    cells = [(n, c) for n in ns for c in ((True, False) if balanced else (None,))]
    weights = [
        (1.0 / len(ns)) * (1.0 if c is None else (job.balance if c else 1.0 - job.balance))
        for n, c in cells
    ]
    quota = dict(zip(cells, _apportion(size, weights)))

    rejections: Counter[str] = Counter()
    class_counts: Counter[str] = Counter()
    seen: set[int] = set()
    rows: list[tuple[int, str, str, dict]] = []
    attempts = 0
    window_hits: Counter[str] = Counter()

    def slot_open(slot: str) -> bool:
        if not balanced:
            return True
        want = slot == "positive"
        return any(c == want and quota[(n, c)] > 0 for n, c in cells)

    def check_window() -> None:
        nonlocal attempts
        if attempts < UNREACHABLE_WINDOW:
            return
        floor = UNREACHABLE_WINDOW * MIN_CLASS_RATE
        slots = (
            {"positive", "negative"} if balanced else {"record"}
        )
        for slot in slots:
            if slot_open(slot) and window_hits[slot] < floor:
                raise TargetUnreachable(
                    f"{job.task} class {slot!r}: {window_hits[slot]} hits in "
                    f"{UNREACHABLE_WINDOW} attempts (need {floor:g})"
                )
        attempts = 0
        window_hits.clear()

    while len(rows) < size:
        open_ns = sorted({n for n, c in cells if quota[(n, c)] > 0})
        n = open_ns[rng.randrange(len(open_ns))]
        attempts += 1
        try:
            seq, target, meta = _draw_candidate(job.task, rng, cfg, n)
        except DynSysError as err:
            if err.reason is None:  # decode of our own tokens failed: a bug
                raise GenerationError(f"unclassified rejection: {err}") from err
            rejections[err.reason] += 1
            check_window()
            continue
        label = meta["label"]
        if balanced:
            positive = label in _POSITIVE_LABELS
            window_hits["positive" if positive else "negative"] += 1
            cell = (n, positive)
        else:
            window_hits["record"] += 1
            cell = (n, None)
        if quota[cell] <= 0:
            rejections["surplus-class"] += 1
            check_window()
            continue
        h = record_hash(seq)
        if h in seen:
            rejections["duplicate"] += 1
            check_window()
            continue
        seen.add(h)
        quota[cell] -= 1
        class_counts[label] += 1
        rows.append((h, " ".join(seq), " ".join(target), meta))
        check_window()

    rows.sort(key=lambda r: (r[0], r[1]))
    audited = _audit_rows(job.task, cfg, rows)
    _write_shard(job, index, rows)
    return _ShardResult(
        index=index,
        records=len(rows),
        rejections=dict(rejections),
        class_counts=dict(class_counts),
        hashes=[r[0] for r in rows],
        audited=audited,
    )


def _audit_rows(task: str, cfg: DistributionConfig, rows, stride: int = AUDIT_STRIDE) -> int:
    """Re-derive every ``stride``-th target from its written input tokens."""
    audited = 0
    for idx in range(0, len(rows), stride):
        _, input_str, target_str, _ = rows[idx]
        try:
            again = " ".join(label_input(task, input_str.split(), cfg))
        except DynSysError as err:
            raise GenerationError(
                f"record {idx} failed to relabel: {err}"
            ) from err
        if again != target_str:
            raise GenerationError(
                f"record {idx} target drifted on re-derivation:"
                f" {target_str!r} -> {again!r}"
            )
        audited += 1
    return audited


def _write_shard(job: GenJob, index: int, rows) -> None:
    path = job.shard_path(index)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for h, input_str, target_str, _ in rows:
            fh.write(f"{input_str}\t{target_str}\n")
    with open(job.meta_path(index), "w", encoding="ascii", newline="\n") as fh:
        for h, _, _, meta in rows:
            entry = {
                "task": job.task,
                "n": meta["n"],
                "p": meta["p"],
                "label": meta["label"],
                "hash": f"{h:016x}",
            }
            fh.write(json.dumps(entry, sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def _build_shard_star(args: tuple) -> _ShardResult:
    return _build_shard(*args)


def generate(job: GenJob) -> dict:
    """Run the job; write shards, meta sidecars, and a stats JSON.

    Returns the stats dict.  Byte-identical for identical jobs regardless
    of worker count.
    """
    job.validate()
    n_shards = job.n_shards()
    sizes = [job.shard_size] * (n_shards - 1)
    sizes.append(job.count - job.shard_size * (n_shards - 1))
    args = [(job, i, sizes[i]) for i in range(n_shards)]
    if job.workers > 1 and n_shards > 1:
        with get_context("fork").Pool(min(job.workers, n_shards)) as pool:
            results = pool.map(_build_shard_star, args)
    else:
        results = [_build_shard_star(a) for a in args]

    rejections: Counter[str] = Counter()
    class_counts: Counter[str] = Counter()
    seen: set[int] = set()
    cross_dups = 0
    audited = 0
    for r in results:
        rejections.update(r.rejections)
        class_counts.update(r.class_counts)
        audited += r.audited
        for h in r.hashes:
            if h in seen:
                cross_dups += 1
            else:
                seen.add(h)

    report = {
        "task": job.task,
        "count": job.count,
        "seed": job.seed,
        "balance": job.balance,
        "shard_size": job.shard_size,
        "config": dataclasses.asdict(job.config),
        "records": sum(r.records for r in results),
        "class_counts": dict(sorted(class_counts.items())),
        "rejections": dict(sorted(rejections.items())),
        "duplicates_across_shards": cross_dups,
        "taxonomy_version": REASON_TAXONOMY_VERSION,
        "audited": audited,
        "shards": [
            {"path": job.shard_path(r.index), "records": r.records}
            for r in sorted(results, key=lambda r: r.index)
        ],
    }
    stats_path = job.stats_path()
    os.makedirs(os.path.dirname(stats_path) or ".", exist_ok=True)
    with open(stats_path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


# ---------------------------------------------------------------------------
# standalone stream ops and shard statistics


def dedup_filter(
    records: Iterable[tuple[list[str], list[str]]],
    tally: Counter | None = None,
) -> Iterator[tuple[list[str], list[str]]]:
    """Drop records whose input hash was already seen in this stream."""
    seen: set[int] = set()
    for rec in records:
        h = record_hash(rec[0])
        if h in seen:
            if tally is not None:
                tally["duplicate"] += 1
            continue
        seen.add(h)
        yield rec


def read_shard(path: str) -> Iterator[tuple[list[str], list[str]]]:
    with open(path, encoding="ascii") as fh:
        for line_no, line in enumerate(fh):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise MalformedSequence(f"{path}: bad record line", line_no)
            yield parts[0].split(), parts[1].split()


def stats(shard_paths: list[str], gen_stats: str | None = None) -> dict:
    """Aggregate report over shard files: balance, lengths, operator use."""
    op_names = set(BINARY_OPS) | set(UNARY_OPS)
    records = 0
    input_hist: Counter[int] = Counter()
    target_hist: Counter[int] = Counter()
    op_freq: Counter[str] = Counter()
    class_counts: Counter[str] = Counter()
    tasks: Counter[str] = Counter()
    for path in shard_paths:
        meta_path = path[: -len(".tsv")] + ".meta.jsonl" if path.endswith(".tsv") else None
        if meta_path and os.path.exists(meta_path):
            with open(meta_path, encoding="ascii") as fh:
                for line in fh:
                    entry = json.loads(line)
                    class_counts[entry["label"]] += 1
                    tasks[entry["task"]] += 1
        for inp, tgt in read_shard(path):
            records += 1
            input_hist[len(inp)] += 1
            target_hist[len(tgt)] += 1
            op_freq.update(t for t in inp if t in op_names)
    report = {
        "records": records,
        "tasks": dict(sorted(tasks.items())),
        "class_counts": dict(sorted(class_counts.items())),
        "class_balance": {
            k: v / records for k, v in sorted(class_counts.items())
        }
        if records
        else {},
        "input_length_hist": {str(k): input_hist[k] for k in sorted(input_hist)},
        "target_length_hist": {str(k): target_hist[k] for k in sorted(target_hist)},
        "operator_freq": dict(sorted(op_freq.items())),
    }
    if gen_stats:
        with open(gen_stats, encoding="ascii") as fh:
            report["rejections"] = json.load(fh).get("rejections", {})
    return report

