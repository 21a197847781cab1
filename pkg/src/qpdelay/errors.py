"""Exception types shared across the package.

Excision triggers form their own branch: they signal that the current
frequency cannot be handled (the linearized operator cannot be certified)
and must be removed from the admissible set, as opposed to programming or
configuration errors.
"""


class QPDelayError(Exception):
    """Base class for all package errors."""


class ConfigError(QPDelayError):
    """Invalid or infeasible configuration."""


# -- model -------------------------------------------------------------

class EigenvalueRealPart(QPDelayError):
    """Some eigenvalue of A has a real part above tolerance."""


class NonSimpleSpectrum(QPDelayError):
    """Two imaginary parts of the spectrum are closer than tolerance."""


class SingularEigenbasis(QPDelayError):
    """Eigenvector matrix is numerically singular."""


class RealityViolation(QPDelayError):
    """Reconstructed solution has imaginary residue above tolerance."""


# -- lattice -----------------------------------------------------------

class DegreeOverflow(QPDelayError):
    """Polynomial convolution support exceeds the configured hard cap."""


class OutOfRange(QPDelayError):
    """Lattice indices outside the assembled truncation range."""


# -- inversion ---------------------------------------------------------

class DimensionMismatch(QPDelayError):
    """Matrix/box dimensions are inconsistent."""


class NotDiagonallyDominant(QPDelayError):
    """Neumann series contraction factor is >= 1/4."""


class NoConvergence(QPDelayError):
    """Iterative scheme stagnated before reaching its tolerance."""


class CoveringGap(QPDelayError):
    """Patch covering misses a ball condition required for pasting."""


class PerturbationTooLarge(QPDelayError):
    """Operator update too large for a Neumann refresh of the inverse."""


class ExcisionTrigger(QPDelayError):
    """Frequency must be excised; carries a human-readable witness."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness if witness is not None else message


class SchurPivotTiny(ExcisionTrigger):
    """Schur scalar |h| fell below the excision threshold."""


class ClusterTooWide(ExcisionTrigger):
    """Failing centers spread wider than a single singular cluster allows."""


class BoundBlown(ExcisionTrigger):
    """A-posteriori certification of a pasted inverse failed."""


class NormBoundExceeded(ExcisionTrigger):
    """Certified inverse norm exceeds the configured growth function."""


class PolynomialExcision(ExcisionTrigger):
    """A fitted first-order constraint dipped below its threshold."""


class MelnikovViolation(ExcisionTrigger):
    """The nonresonance scan found violations for this frequency."""


# -- excision module ---------------------------------------------------

class FitIllConditioned(QPDelayError):
    """Window degenerate or samples nearly constant; no linear fit."""


class PreconditionViolated(QPDelayError):
    """Caller broke an operation precondition (documented per operation)."""


# -- newton ------------------------------------------------------------

class InversionFailed(QPDelayError):
    """Linearized operator could not be inverted at this stage.

    Wraps the underlying :class:`ExcisionTrigger`.
    """

    def __init__(self, message, trigger=None):
        super().__init__(message)
        self.trigger = trigger


class DivergenceDetected(QPDelayError):
    """Residual grew two stages running."""


# -- verification ------------------------------------------------------

class TooShortHistory(QPDelayError):
    """Not enough residual history to measure a convergence order."""
