"""Numeric policy: tolerances and size guards shared across the toolkit.

Every tolerance used by an exact-identity check lives here so a run can be
reproduced from the policy block emitted alongside the numbers.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field


@dataclass(frozen=True)
class NumericPolicy:
    # pure-geometry identities (reciprocal basis, torus arithmetic)
    geom_tol: float = 1e-12
    # hermiticity of constructed matrices / many-body operators
    herm_tol: float = 1e-12
    # projector idempotency / commutation with the Bloch Hamiltonian
    projector_tol: float = 1e-10
    # below this spectral gap the model is flagged gapless and topology refuses
    gap_threshold: float = 1e-6
    # an eigenvalue this close to mu means "Fermi level on a band"
    fermi_level_tol: float = 1e-9
    # ground-state degeneracy gap below this aborts the zero-temperature path
    degeneracy_tol: float = 1e-8
    # relative residual for iterative ground states and resolvent solves
    solver_rtol: float = 1e-10
    # matrix elements below this are dropped from sparse operators
    sparse_drop_tol: float = 1e-14
    # half-width (in mass units) of the near-critical exclusion band; None
    # means 0.05 * 3*sqrt(3)*t2 at phase-diagram time
    near_critical_width: float | None = None

    # size guards
    max_modes: int = 24            # L^2 * |colors| for many-body construction
    full_diag_dim: int = 4096      # largest sector diagonalized densely
    ground_dim: int = 2 ** 20      # largest sector for iterative ground states
    gibbs_total_dim: int = 2 ** 16 # largest full Fock space for finite beta
    wick_max_monomials: int = 5    # combinatorial guard for pairing enumeration
    pert_max_L: int = 4            # guards for the first-order kernel
    pert_max_beta: float = 20.0

    def as_dict(self) -> dict:
        return asdict(self)

    def as_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


DEFAULT_POLICY = NumericPolicy()


def get_policy(policy: NumericPolicy | None) -> NumericPolicy:
    return DEFAULT_POLICY if policy is None else policy
