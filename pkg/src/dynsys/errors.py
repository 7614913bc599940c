"""Exception taxonomy shared across the package.

Errors that carry a ``reason`` attribute correspond to per-sample rejection
counters in the generation pipeline; errors without one are hard failures.
"""

from __future__ import annotations


class DynSysError(Exception):
    """Base class for all package errors."""

    reason: str | None = None


# --- token / codec errors -------------------------------------------------


class MalformedSequence(DynSysError):
    """A token sequence cannot be parsed; ``index`` points at the offender."""

    def __init__(self, message: str, index: int):
        super().__init__(f"{message} at index {index}")
        self.index = index


class NonFinite(DynSysError):
    """Attempt to encode a NaN or infinite value."""

    reason = "non-finite"


class FloatRange(DynSysError):
    """Value's decimal exponent falls outside the single-digit cap."""

    reason = "float-range"


# --- expression evaluation ------------------------------------------------


class EvalSingular(DynSysError):
    """Evaluation hit a singularity (division by ~0, log 0, a pole, a branch point)."""

    reason = "eval-singular"


class EvalOverflow(DynSysError):
    """Some subexpression exceeded magnitude 1e100 during evaluation."""

    reason = "eval-overflow"


# --- counting ---------------------------------------------------------------


class NonIntegerRecurrence(DynSysError):
    """The closed-form recurrence produced a non-integral intermediate value."""


# --- linear algebra ---------------------------------------------------------


class NoConvergence(DynSysError):
    """Eigenvalue iteration failed to converge."""

    reason = "no-convergence"


class Overflow(DynSysError):
    """Matrix exponential argument too large to evaluate reliably."""

    reason = "overflow"


class QuadratureStall(DynSysError):
    """Adaptive quadrature failed to converge within the panel budget."""

    reason = "quadrature-stall"


class GramianSingular(DynSysError):
    """Controllability Gramian is numerically singular (condition > 1e12)."""

    reason = "gramian-singular"


class ComplexJacobian(DynSysError):
    """A matrix required to be real has imaginary parts beyond tolerance."""

    reason = "complex-jacobian"


# --- oracle-level sample policy ---------------------------------------------


class MarginalSample(DynSysError):
    """Classification margin too small to label reliably."""

    reason = "marginal"


class DegenerateSystem(DynSysError):
    """The draw is not a faithful n-state, p-input system.

    Raised when a declared variable appears in no equation, or (autonomous
    control sampling) when the linearized pair has a frozen coordinate or
    an input with no authority.
    """

    reason = "degenerate"


class UncontrollableSystem(DynSysError):
    """A task that needs a controllable pair drew an uncontrollable one."""

    reason = "uncontrollable"


class UnverifiableGain(DynSysError):
    """A synthesized gain stops stabilizing once rounded to wire precision.

    Emitted feedback targets carry 4 significant digits; a gain whose
    closed-loop margin is thinner than that rounding error would make the
    record's own target fail the closed-loop check, so the draw is rejected.
    """

    reason = "unverifiable-gain"


class DetectorDisagreement(DynSysError):
    """Symbolic and numeric unboundedness detectors disagree."""

    reason = "detector-disagreement"


# --- pipeline ----------------------------------------------------------------


class TargetUnreachable(DynSysError):
    """A requested label class accepts below the minimum viable rate."""


class UnknownVariant(DynSysError):
    """Unrecognized distribution-variant name."""


class GenerationError(DynSysError):
    """Internal pipeline invariant violated (e.g. re-derivation audit mismatch)."""


# Canonical rejection-reason names, as written to stats files.  Bump the
# version when a name is added, removed, or renamed.
REASON_TAXONOMY_VERSION = 1
REJECTION_REASONS = (
    "eval-singular",
    "eval-overflow",
    "complex-jacobian",
    "marginal",
    "degenerate",
    "no-convergence",
    "overflow",
    "quadrature-stall",
    "gramian-singular",
    "detector-disagreement",
    "float-range",
    "non-finite",
    "uncontrollable",
    "unverifiable-gain",
    "duplicate",
    "surplus-class",
)
