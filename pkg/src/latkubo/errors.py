"""Exception types.  Validation errors exit a CLI run with code 2,
numeric-guard refusals with code 3.
"""


class ModelValidationError(ValueError):
    """A model or lattice invariant is violated; reports the offending entry."""


class GuardError(RuntimeError):
    """A size or combinatorial guard refused to run the requested computation."""


class GaplessError(GuardError):
    """Spectral gap below threshold; topology / multiscale operations refuse."""


class FermiLevelOnBandError(GuardError):
    """An eigenvalue sits at the chemical potential; no Fermi projector."""


class DegenerateGroundStateError(GuardError):
    """Zero-temperature response requires a unique gapped ground state."""
