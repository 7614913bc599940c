"""Token vocabulary, number codecs, and prefix (de)serialization.

Wire format summary:

* integers: sign marker then decimal digits, one token each
  (``142`` -> ``INT+ 1 4 2``)
* floats: scientific notation with the mantissa in [1, 10) rounded to at most
  ``sig_digits`` significant digits (round-half-to-even), trailing zeros
  trimmed, ``DOT`` omitted for single-digit mantissas, and a single-digit
  decimal exponent (``0.314`` -> ``FLOAT+ 3 DOT 1 4 E INT- 1``)
* complex values: ``CPLX`` followed by the real then imaginary float
* expressions: prefix (Polish) order, operators before operands

The vocabulary is flat text, one token per line, line number = token id.
"""

from __future__ import annotations

import math

from .errors import FloatRange, MalformedSequence, NonFinite
from .expr import (
    BINARY_OPS,
    UNARY_OPS,
    BinaryOp,
    ConstLeaf,
    Expr,
    IntLeaf,
    UnaryOp,
    VarLeaf,
)

VOCAB_VERSION = 1

MAX_STATE_VARS = 9
MAX_CONTROL_VARS = 3

SPECIALS = ("<pad>", "<s>", "</s>")
STATE_VARS = tuple(f"x{i}" for i in range(MAX_STATE_VARS))
CONTROL_VARS = tuple(f"u{i}" for i in range(MAX_CONTROL_VARS))
TIME_VAR = "t"
DIGITS = tuple("0123456789")
NUMBER_MARKS = ("INT+", "INT-", "FLOAT+", "FLOAT-", "DOT", "E", "CPLX")
STRUCTURE = ("|", "at", "true", "false")
PDE_MARKS = ("gauss", "sinc", "dirac", "one", "mod", "init", "fullline", "point", "interval")

VOCAB: tuple[str, ...] = (
    SPECIALS
    + BINARY_OPS
    + UNARY_OPS
    + STATE_VARS
    + CONTROL_VARS
    + (TIME_VAR,)
    + DIGITS
    + NUMBER_MARKS
    + STRUCTURE
    + PDE_MARKS
)
TOKEN_TO_ID = {tok: i for i, tok in enumerate(VOCAB)}
assert len(TOKEN_TO_ID) == len(VOCAB), "duplicate token in vocabulary"

_VAR_NAMES = frozenset(STATE_VARS) | frozenset(CONTROL_VARS) | {TIME_VAR}
_DIGITS = frozenset(DIGITS)


def write_vocab(path: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for tok in VOCAB:
            fh.write(tok + "\n")


def encode_int(n: int) -> list[str]:
    sign = "INT+" if n >= 0 else "INT-"
    return [sign, *str(abs(n))]


def decode_int(tokens: list[str], i: int) -> tuple[int, int]:
    """Parse an integer starting at ``i``; returns (value, next index)."""
    if i >= len(tokens) or tokens[i] not in ("INT+", "INT-"):
        raise MalformedSequence("expected integer sign marker", i)
    neg = tokens[i] == "INT-"
    i += 1
    start = i
    while i < len(tokens) and tokens[i] in _DIGITS:
        i += 1
    if i == start:
        raise MalformedSequence("expected digits after integer sign", start)
    val = int("".join(tokens[start:i]))
    return (-val if neg else val), i


def encode_float(v: float, sig_digits: int = 4) -> list[str]:
    """Scientific-notation tokens for ``v`` at ``sig_digits`` precision.

    Raises NonFinite on NaN/inf and FloatRange when the decimal exponent of
    the rounded value falls outside [-9, 9].
    """
    if not (2 <= sig_digits <= 4):
        raise ValueError("sig_digits must be 2, 3 or 4")
    v = float(v)
    if math.isnan(v) or math.isinf(v):
        raise NonFinite(f"cannot encode {v!r}")
    if v == 0:
        return ["FLOAT+", "0", "E", "INT+", "0"]
    sign = "FLOAT+" if v > 0 else "FLOAT-"
    # Python's formatting rounds half-to-even on the decimal representation
    # and handles the 9.99... -> 10.0 mantissa carry for us.
    mant, _, exp = f"{abs(v):.{sig_digits - 1}e}".partition("e")
    digits = mant.replace(".", "").rstrip("0") or "0"
    exponent = int(exp)
    if abs(exponent) > 9:
        raise FloatRange(f"exponent {exponent} outside [-9, 9]")
    out = [sign, digits[0]]
    if len(digits) > 1:
        out.append("DOT")
        out.extend(digits[1:])
    out.append("E")
    out.extend(encode_int(exponent))
    return out


def decode_float(tokens: list[str], i: int) -> tuple[float, int]:
    if i >= len(tokens) or tokens[i] not in ("FLOAT+", "FLOAT-"):
        raise MalformedSequence("expected float sign marker", i)
    neg = tokens[i] == "FLOAT-"
    i += 1
    if i >= len(tokens) or tokens[i] not in _DIGITS:
        raise MalformedSequence("expected leading mantissa digit", i)
    lead = tokens[i]
    i += 1
    frac = ""
    if i < len(tokens) and tokens[i] == "DOT":
        i += 1
        start = i
        while i < len(tokens) and tokens[i] in _DIGITS:
            i += 1
        if i == start:
            raise MalformedSequence("expected digits after DOT", start)
        frac = "".join(tokens[start:i])
    if i >= len(tokens) or tokens[i] != "E":
        raise MalformedSequence("expected exponent marker E", i)
    exponent, i = decode_int(tokens, i + 1)
    text = f"{lead}.{frac or '0'}e{exponent}"
    v = float(text)
    return (-v if neg else v), i


def encode_complex(z: complex, sig_digits: int = 4) -> list[str]:
    z = complex(z)
    return ["CPLX", *encode_float(z.real, sig_digits), *encode_float(z.imag, sig_digits)]


def to_prefix(e: Expr, sig_digits: int = 4) -> list[str]:
    """Serialize an expression to prefix tokens.

    ConstLeaf values are rounded to ``sig_digits`` significant digits; all
    other nodes round-trip exactly.
    """
    out: list[str] = []
    _write(e, sig_digits, out)
    return out


def _write(e: Expr, sig: int, out: list[str]) -> None:
    if isinstance(e, IntLeaf):
        out.extend(encode_int(e.value))
    elif isinstance(e, VarLeaf):
        out.append(e.name)
    elif isinstance(e, ConstLeaf):
        z = complex(e.value)
        if z.imag == 0:
            out.extend(encode_float(z.real, sig))
        else:
            out.extend(encode_complex(z, sig))
    elif isinstance(e, UnaryOp):
        out.append(e.op)
        _write(e.child, sig, out)
    elif isinstance(e, BinaryOp):
        out.append(e.op)
        _write(e.left, sig, out)
        _write(e.right, sig, out)
    else:
        raise TypeError(f"not an expression node: {e!r}")


def parse_prefix(tokens: list[str]) -> Expr:
    """Parse a full prefix token sequence into an expression.

    Raises MalformedSequence (with the offending index) on unknown tokens,
    truncation, or trailing garbage.
    """
    e, i = parse_prefix_partial(tokens, 0)
    if i != len(tokens):
        raise MalformedSequence("trailing tokens after expression", i)
    return e


def parse_prefix_partial(tokens: list[str], i: int) -> tuple[Expr, int]:
    """Parse one expression starting at ``i``; returns (expr, next index)."""
    if i >= len(tokens):
        raise MalformedSequence("unexpected end of sequence", i)
    tok = tokens[i]
    if tok in BINARY_OPS:
        left, j = parse_prefix_partial(tokens, i + 1)
        right, k = parse_prefix_partial(tokens, j)
        return BinaryOp(tok, left, right), k
    if tok in UNARY_OPS:
        child, j = parse_prefix_partial(tokens, i + 1)
        return UnaryOp(tok, child), j
    if tok in _VAR_NAMES:
        return VarLeaf(tok), i + 1
    if tok in ("INT+", "INT-"):
        val, j = decode_int(tokens, i)
        return IntLeaf(val), j
    if tok in ("FLOAT+", "FLOAT-"):
        v, j = decode_float(tokens, i)
        return ConstLeaf(complex(v)), j
    if tok == "CPLX":
        re, j = decode_float(tokens, i + 1)
        im, k = decode_float(tokens, j)
        return ConstLeaf(complex(re, im)), k
    raise MalformedSequence(f"unexpected token {tok!r}", i)
