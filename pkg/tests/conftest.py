import random

import pytest

from dynsys.expr import (
    BINARY_OPS,
    UNARY_OPS,
    BinaryOp,
    IntLeaf,
    UnaryOp,
    VarLeaf,
)

_LEAF_INTS = [i for i in range(-10, 11) if i != 0]


def make_random_expr(rng: random.Random, n_ops: int, variables=("x0", "x1", "x2")):
    """Quick structural generator for codec/round-trip tests.

    Not the calibrated sampler — any tree shape is fine for serialization
    properties, so this favours simplicity over distributional control.
    """
    if n_ops == 0:
        if rng.random() < 0.4:
            return IntLeaf(rng.choice(_LEAF_INTS))
        return VarLeaf(rng.choice(list(variables)))
    if rng.random() < 0.45:
        return UnaryOp(rng.choice(UNARY_OPS), make_random_expr(rng, n_ops - 1, variables))
    left_ops = rng.randint(0, n_ops - 1)
    return BinaryOp(
        rng.choice(BINARY_OPS),
        make_random_expr(rng, left_ops, variables),
        make_random_expr(rng, n_ops - 1 - left_ops, variables),
    )


def assert_spectra_match(got, want, tol):
    """Multiset equality of eigenvalue collections, greedy nearest matching."""
    pool = list(want)
    for z in got:
        best = min(range(len(pool)), key=lambda i: abs(pool[i] - z))
        assert abs(pool[best] - z) < tol, (z, pool)
        pool.pop(best)
    assert not pool


@pytest.fixture
def expr_factory():
    return make_random_expr
