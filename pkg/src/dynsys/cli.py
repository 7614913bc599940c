"""Command-line interface: dataset generation, labeling, verification.

Exit codes: 0 ok, 1 invalid configuration or usage, 2 runtime failure
(generation aborted, unlabelable input, malformed file).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys

import numpy as np

from . import control, pipeline, tokens
from .errors import DynSysError
from .sampler import DistributionConfig, problem_space_size


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; here 2 means runtime failure
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


_TYPE_PARSERS = {"int": int, "float": float, "str": str, "bool": _parse_bool}
_FIELD_TYPES = {
    f.name: _TYPE_PARSERS[f.type] for f in dataclasses.fields(DistributionConfig)
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    for f in dataclasses.fields(DistributionConfig):
        if f.name == "seed":  # the job-level --seed governs generation
            continue
        p.add_argument(
            f"--{f.name.replace('_', '-')}",
            dest=f"cfg_{f.name}",
            type=_FIELD_TYPES[f.name],
            default=None,
            help=argparse.SUPPRESS,
        )


def read_config_file(path: str) -> dict:
    """Flat key=value lines; '#' comments; values typed per config field."""
    out = {}
    with open(path, encoding="ascii") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep or key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{line_no}: bad config line {raw!r}")
            out[key] = _FIELD_TYPES[key](value.strip())
    return out


def _build_config(args) -> DistributionConfig:
    cfg = pipeline.task_config(args.task)
    if getattr(args, "variant", None):
        cfg = pipeline.variant_config(args.variant, base=cfg)
    overrides = {}
    if getattr(args, "config", None):
        overrides.update(read_config_file(args.config))
    for name in _FIELD_TYPES:
        flag = getattr(args, f"cfg_{name}", None)
        if flag is not None:
            overrides[name] = flag  # CLI flag wins over file
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    cfg.validate()
    return cfg


def config_lines(cfg: DistributionConfig) -> list[str]:
    return [
        f"{f.name}={getattr(cfg, f.name)}"
        for f in dataclasses.fields(DistributionConfig)
    ]


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen(args) -> int:
    cfg = _build_config(args)
    job = pipeline.GenJob(
        task=args.task,
        config=cfg,
        count=args.count,
        out_template=args.out,
        balance=args.balance,
        shard_size=args.shard_size,
        seed=args.seed,
        workers=args.workers,
    )
    job.validate()
    report = pipeline.generate(job)
    print(json.dumps({
        "records": report["records"],
        "shards": len(report["shards"]),
        "stats": job.stats_path(),
    }))
    return 0


def _cmd_variant(args) -> int:
    base = pipeline.task_config(args.task)
    cfg = pipeline.variant_config(args.name, base=base)
    for line in config_lines(cfg):
        print(line)
    return 0


def _cmd_stats(args) -> int:
    report = pipeline.stats(args.shards, gen_stats=args.gen_stats)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _diagnostics(task: str, verdict) -> dict:
    if task in ("stability", "speed"):
        return {
            "stable": verdict.stable,
            "decay": verdict.decay,
            "eigenvalues": [[z.real, z.imag] for z in verdict.eigenvalues],
        }
    if task in ("ctrl-auto", "ctrl-nonauto"):
        return {
            "controllable": verdict.controllable,
            "uncontrollable_dim": verdict.uncontrollable_dim,
        }
    if task == "feedback":
        return {"K": np.asarray(verdict).tolist()}
    return {
        "exists": verdict.exists,
        "vanishes": verdict.vanishes,
        "min_real": None if math.isinf(verdict.min_real) else verdict.min_real,
        "unbounded": verdict.min_real == -math.inf,
    }


def _cmd_classify(args) -> int:
    cfg = _build_config(args)
    if (args.system is None) == (args.batch is None):
        print("classify: give exactly one of --system / --batch", file=sys.stderr)
        return 1
    if args.system is not None:
        seq = args.system.split()
        if args.task in ("ctrl-auto", "ctrl-nonauto", "feedback"):
            if args.controls is None:
                print("classify: control tasks need --controls", file=sys.stderr)
                return 1
            seq = tokens.encode_int(args.controls) + seq
        if args.task != "pde":
            seq += ["at"] + tokens.encode_float(args.point)
            if args.controls:
                seq += tokens.encode_float(args.control_point)
        try:
            target, verdict = pipeline.label_with_verdict(args.task, seq, cfg)
        except DynSysError as err:
            print(f"error {err.reason or 'malformed'}: {err}", file=sys.stderr)
            return 2
        print(" ".join(target))
        print(json.dumps(_diagnostics(args.task, verdict), sort_keys=True))
        return 0
    failures = 0
    with open(args.batch, encoding="ascii") as fh:
        for raw in fh:
            seq = raw.split("\t", 1)[0].split()
            if not seq:
                continue
            try:
                print(" ".join(pipeline.label_input(args.task, seq, cfg)))
            except DynSysError as err:
                failures += 1
                print(f"error {err.reason or 'malformed'}")
    return 2 if failures else 0


def _cmd_verify_feedback(args) -> int:
    passes = total = 0
    failures = 0
    with open(args.pairs, encoding="ascii") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            total += 1
            try:
                left, _, right = line.partition("\t")
                system = pipeline.decode_system_input(left.split(), "feedback")
                flat = pipeline.decode_target("feedback", right.split())
                p, n = system.n_controls, system.n_states
                if len(flat) != p * n:
                    raise DynSysError(f"K needs {p * n} entries, got {len(flat)}")
                K = np.asarray(flat, dtype=float).reshape(p, n)
                lin = control.linearize(system)
                ok = control.verify_feedback(lin.A, lin.B, K, margin=args.margin)
            except DynSysError as err:
                failures += 1
                print(f"error {err.reason or 'malformed'}")
                continue
            passes += ok
            print("true" if ok else "false")
    print(f"rate {passes / total:.6f}" if total else "rate 0.000000")
    return 2 if failures else 0


def _cmd_space_size(args) -> int:
    value = problem_space_size(
        args.ops, q=args.vars, L=args.leaves, q1=args.q1, q2=args.q2
    )
    print(value)
    return 0


def _cmd_vocab(args) -> int:
    tokens.write_vocab(args.out)
    print(args.out)
    return 0


def main(argv: list[str] | None = None) -> int:
    top = _Parser(prog="dynsys", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[], help="generate labeled shards")
    p.add_argument("task", choices=pipeline.TASKS)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True, help="path template with {shard}, .tsv")
    p.add_argument("--balance", type=float, default=None)
    p.add_argument("--shard-size", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--config", help="key=value file; flags override")
    p.add_argument("--variant", help="distribution-shift preset name")
    _add_config_flags(p)
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("variant", help="print a shift preset as key=value lines")
    p.add_argument("name")
    p.add_argument("--task", choices=pipeline.TASKS, default="stability")
    p.set_defaults(fn=_cmd_variant)

    p = sub.add_parser("stats", help="aggregate report over shard files")
    p.add_argument("shards", nargs="+")
    p.add_argument("--gen-stats", help="stats JSON from gen, for rejection tallies")
    p.set_defaults(fn=_cmd_stats)

    p = sub.add_parser("classify", help="label one input or a batch file")
    p.add_argument("task", choices=pipeline.TASKS)
    p.add_argument("--system", help="equation tokens (without the point)")
    p.add_argument("--point", type=float, default=0.01, help="equilibrium value")
    p.add_argument("--controls", type=int, default=None)
    p.add_argument("--control-point", type=float, default=0.5)
    p.add_argument("--batch", help="file of full input token lines (TSV ok)")
    p.add_argument("--config")
    p.add_argument("--variant")
    _add_config_flags(p)
    p.set_defaults(fn=_cmd_classify)

    p = sub.add_parser("verify-feedback", help="check K tokens against systems")
    p.add_argument("pairs", help="TSV: input tokens <TAB> K tokens")
    p.add_argument("--margin", type=float, default=control.CLOSED_LOOP_MARGIN)
    p.set_defaults(fn=_cmd_verify_feedback)

    p = sub.add_parser("space-size", help="exact expression-space cardinality")
    p.add_argument("--ops", type=int, required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--vars", type=int)
    group.add_argument("--leaves", type=int)
    p.add_argument("--q1", type=int, default=9)
    p.add_argument("--q2", type=int, default=4)
    p.set_defaults(fn=_cmd_space_size)

    p = sub.add_parser("vocab", help="write the token vocabulary file")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_vocab)

    args = top.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, DynSysError) as err:
        # config/validation problems -> 1; runtime generation failures -> 2
        from .errors import GenerationError, TargetUnreachable

        if isinstance(err, (TargetUnreachable, GenerationError)):
            print(f"generation failed: {err}", file=sys.stderr)
            return 2
        print(f"invalid configuration: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
