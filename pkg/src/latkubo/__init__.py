"""latkubo: lattice-fermion linear response on finite tori.

Chern numbers and the non-interacting Hall conductivity of gapped Bloch
Hamiltonians; exact-diagonalization Kubo conductivities, Ward identities,
f-sum rule and Wick-rotation checks for interacting models at desk scale;
multiscale propagator infrastructure (frequency shells, Gram factors) and
the first-order perturbative conductivity kernel.
"""

from .errors import (DegenerateGroundStateError, FermiLevelOnBandError,
                     GaplessError, GuardError, ModelValidationError)
from .lattice import (LatticeSpec, MomentumPoint, momentum_grid, momentum_point,
                      reciprocal_basis, torus_difference)
from .model import (BlochData, HoppingModel, SpectralGap, bands, bloch_hamiltonian,
                    energy_scale, fermi_projector, haldane_hubbard, haldane_masses,
                    haldane_model, load_model, model_from_dict, model_to_dict,
                    save_model, spectral_gap)
from .policy import DEFAULT_POLICY, NumericPolicy
from .topology import (ChernResult, chern_number, haldane_phase_diagram,
                       noninteracting_sigma)
from .fock import (FockBasis, ManyBodyOperator, bond_current, build_hamiltonian,
                   diamagnetic_operator, eigensolve, gibbs_expectation,
                   grand_hamiltonian, momentum_current, number_operator,
                   total_current)
from .propagator import (CHI0, CutoffFunction, cutoff_propagator, gram_factors,
                         gram_inner, matsubara_propagator, propagator,
                         single_scale_decomposition)
from .wick import (FreeTheory, bond_current_observable, density_monomial,
                   density_pair_monomial, first_order_kernel,
                   free_momentum_correlator, free_sigma_zero_t,
                   perturbative_sigma_first_order, truncated_wick)
from .response import (CorrelatorResult, EDSession, SigmaResult,
                       matsubara_correlator, max_ward_residual, sigma_imaginary,
                       sigma_real, sum_rule_check, universality_scan,
                       ward_residual, wick_rotation_check)

__version__ = "0.1.0"
