"""Many-body operators on the fermionic Fock space of a finite torus.

Mode order is site-major, color-minor: mode = (n1*L + n2)*n_colors + color.
A creation/annihilation operator at mode m picks up the sign
(-1)^(number of occupied modes of lower index).

Current and diamagnetic operators weight every stencil image bond with its
own infinite-volume displacement (y - x)_stencil + r_s' - r_s.  This is the
derivative family H(A) = sum t e^{i A . displacement} psi+ psi-: the current
is dH/dA_i and the diamagnetic operator -d^2 H/dA_i dA_j, which keeps the
continuity equation and the Ward identities exact on the torus even when
bonds wrap.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import DegenerateGroundStateError, GuardError, ModelValidationError
from .lattice import MomentumPoint
from .model import HoppingModel
from .policy import NumericPolicy, get_policy


class FockBasis:
    """Occupation bitstrings of L^2 * n_colors modes, per particle number."""

    def __init__(self, L: int, n_colors: int):
        self.L = L
        self.n_colors = n_colors
        self.n_modes = L * L * n_colors
        self._states: dict[int, np.ndarray] = {}

    def mode(self, n1: int, n2: int, color: int) -> int:
        return ((n1 % self.L) * self.L + (n2 % self.L)) * self.n_colors + color

    def sector(self, n: int) -> np.ndarray:
        if n not in self._states:
            self._states[n] = _kernels.sector_states(self.n_modes, n)
        return self._states[n]

    def sector_dim(self, n: int) -> int:
        return comb(self.n_modes, n)

    @property
    def sectors(self) -> range:
        return range(self.n_modes + 1)

    def total_dim(self) -> int:
        return 1 << self.n_modes


@dataclass
class ManyBodyOperator:
    """Particle-number conserving operator, one sparse block per sector."""

    basis: FockBasis
    blocks: dict[int, sp.csr_matrix]
    hermitian: bool = False

    def block(self, n: int) -> sp.csr_matrix:
        if n not in self.blocks:
            d = self.basis.sector_dim(n)
            self.blocks[n] = sp.csr_matrix((d, d), dtype=complex)
        return self.blocks[n]

    def __add__(self, other: "ManyBodyOperator") -> "ManyBodyOperator":
        ns = set(self.blocks) | set(other.blocks)
        return ManyBodyOperator(self.basis,
                                {n: (self.block(n) + other.block(n)).tocsr() for n in ns},
                                hermitian=self.hermitian and other.hermitian)

    def __sub__(self, other: "ManyBodyOperator") -> "ManyBodyOperator":
        return self + (other * (-1.0))

    def __mul__(self, c) -> "ManyBodyOperator":
        herm = self.hermitian and complex(c).imag == 0.0
        return ManyBodyOperator(self.basis,
                                {n: (b * c).tocsr() for n, b in self.blocks.items()},
                                hermitian=herm)

    __rmul__ = __mul__

    def matmul(self, other: "ManyBodyOperator") -> "ManyBodyOperator":
        ns = set(self.blocks) & set(other.blocks)
        return ManyBodyOperator(self.basis,
                                {n: (self.block(n) @ other.block(n)).tocsr() for n in ns},
                                hermitian=False)

    def commutator(self, other: "ManyBodyOperator") -> "ManyBodyOperator":
        ns = set(self.blocks) | set(other.blocks)
        out = {}
        for n in ns:
            a, b = self.block(n), other.block(n)
            out[n] = (a @ b - b @ a).tocsr()
        return ManyBodyOperator(self.basis, out, hermitian=False)

    def dagger(self) -> "ManyBodyOperator":
        return ManyBodyOperator(self.basis,
                                {n: b.conj().T.tocsr() for n, b in self.blocks.items()},
                                hermitian=self.hermitian)

    def dense(self, n: int) -> np.ndarray:
        return self.block(n).toarray()

    def hermiticity_defect(self) -> float:
        d = 0.0
        for b in self.blocks.values():
            diff = (b - b.conj().T).tocoo()
            if diff.nnz:
                d = max(d, float(np.abs(diff.data).max()))
        return d


def operator_from_terms(basis: FockBasis, quad, diag_quartic=(), sectors=None,
                        hermitian=False, policy: NumericPolicy | None = None) -> ManyBodyOperator:
    """quad: iterable of (a, b, amp) for amp psi+_a psi-_b; diag_quartic:
    iterable of (a, b, v) for v n_a n_b."""
    pol = get_policy(policy)
    sectors = list(basis.sectors) if sectors is None else list(sectors)
    quad = list(quad)
    diag_quartic = list(diag_quartic)
    a = np.array([t[0] for t in quad], dtype=np.int64)
    b = np.array([t[1] for t in quad], dtype=np.int64)
    amp = np.array([t[2] for t in quad], dtype=np.complex128)
    qa = np.array([t[0] for t in diag_quartic], dtype=np.int64)
    qb = np.array([t[1] for t in diag_quartic], dtype=np.int64)
    qv = np.array([t[2] for t in diag_quartic], dtype=np.float64)
    blocks = {}
    for n in sectors:
        states = basis.sector(n)
        d = len(states)
        mats = []
        if len(a):
            rows, cols, vals = _kernels.quadratic_entries(states, a, b, amp)
            mats.append(sp.coo_matrix((vals, (rows, cols)), shape=(d, d)))
        if len(qa):
            dv = _kernels.quartic_diagonal(states, qa, qb, qv)
            mats.append(sp.dia_matrix((dv.astype(complex)[None, :], [0]), shape=(d, d)))
        m = mats[0] if len(mats) == 1 else (mats[0] + mats[1] if mats else None)
        m = sp.csr_matrix((d, d), dtype=complex) if m is None else sp.csr_matrix(m)
        if m.nnz:
            m.data[np.abs(m.data) < pol.sparse_drop_tol] = 0.0
            m.eliminate_zeros()
        blocks[n] = m
    return ManyBodyOperator(basis, blocks, hermitian=hermitian)


# ---------------------------------------------------------------------------
# term lists (shared by the many-body and single-particle constructions)
# ---------------------------------------------------------------------------

def check_guards(model: HoppingModel, L: int, policy: NumericPolicy | None = None) -> None:
    pol = get_policy(policy)
    nmodes = L * L * model.spec.n_colors
    if L < 2:
        raise GuardError(f"torus side L={L} too small for a many-body build")
    if nmodes > pol.max_modes:
        raise GuardError(f"{nmodes} modes exceed the guard of {pol.max_modes}")
    r = model.stencil_radius()
    if r > 0 and L < 2 * r:
        raise GuardError(f"torus side {L} smaller than twice the stencil radius {r}: "
                         "wrapped bonds would double-count")


def iter_hop_bonds(model: HoppingModel, L: int):
    """Yield (mode_a, mode_b, amplitude, displacement) for every directed
    image bond amp psi+_a psi-_b; y = x - d, displacement = y_s' - x_s."""
    spec = model.spec
    basis = FockBasis(L, spec.n_colors)
    e1, e2 = spec.basis
    for d, s, sps, t in model.hoppings:
        ci, cj = spec.color_index(s), spec.color_index(sps)
        disp = -d[0] * e1 - d[1] * e2 + spec.displacement(sps) - spec.displacement(s)
        for n1 in range(L):
            for n2 in range(L):
                a = basis.mode(n1, n2, ci)
                b = basis.mode(n1 - d[0], n2 - d[1], cj)
                yield a, b, complex(t), disp


def hamiltonian_terms(model: HoppingModel, L: int):
    """(quadratic, quartic) term lists of H = H0 + U V."""
    basis = FockBasis(L, model.spec.n_colors)
    quad = [(a, b, t) for a, b, t, _ in iter_hop_bonds(model, L)]
    for c, w in model.onsite.items():
        ci = model.spec.color_index(c)
        for n1 in range(L):
            for n2 in range(L):
                m = basis.mode(n1, n2, ci)
                quad.append((m, m, complex(w)))
    quartic = []
    for d, s, sps, v in model.interactions:
        ci, cj = model.spec.color_index(s), model.spec.color_index(sps)
        for n1 in range(L):
            for n2 in range(L):
                a = basis.mode(n1, n2, ci)
                b = basis.mode(n1 - d[0], n2 - d[1], cj)
                quartic.append((a, b, model.u * v))
    return quad, quartic


def interaction_pairs(model: HoppingModel, L: int):
    """Quartic pairs (a, b, v) of V alone (unit coupling, U excluded)."""
    basis = FockBasis(L, model.spec.n_colors)
    out = []
    for d, s, sps, v in model.interactions:
        ci, cj = model.spec.color_index(s), model.spec.color_index(sps)
        for n1 in range(L):
            for n2 in range(L):
                a = basis.mode(n1, n2, ci)
                b = basis.mode(n1 - d[0], n2 - d[1], cj)
                out.append((a, b, v))
    return out


def current_terms(model: HoppingModel, L: int, i: int, include_displacement=True):
    quad = []
    for a, b, t, disp in iter_hop_bonds(model, L):
        w = disp[i]
        if not include_displacement:
            spec = model.spec
            ca, cb = spec.colors[a % spec.n_colors], spec.colors[b % spec.n_colors]
            w = disp[i] - (spec.displacement(cb) - spec.displacement(ca))[i]
        if w == 0.0:
            continue
        quad.append((a, b, 1j * w * t))
    return quad


def diamagnetic_terms(model: HoppingModel, L: int, i: int, j: int):
    quad = []
    for a, b, t, disp in iter_hop_bonds(model, L):
        w = disp[i] * disp[j]
        if w == 0.0:
            continue
        quad.append((a, b, w * t))
    return quad


def _eta(theta: float) -> complex:
    """(1 - e^{-i theta}) / (i theta), continued to 1 at theta = 0.

    Evaluated as (2 sin^2(theta/2) + i sin(theta)) / (i theta): no cancellation.
    """
    if theta == 0.0:
        return 1.0 + 0.0j
    num = 2.0 * np.sin(theta / 2.0) ** 2 + 1j * np.sin(theta)
    return num / (1j * theta)


def momentum_current_terms(model: HoppingModel, L: int, alpha, p):
    """Quadratic terms of J-tilde_{alpha, p}; alpha in {0, 1, 2} or a color."""
    spec = model.spec
    basis = FockBasis(L, spec.n_colors)
    pv = p.vec if isinstance(p, MomentumPoint) else np.asarray(p, float)
    quad = []
    if alpha == 0 or alpha in spec.colors:
        colors = spec.colors if alpha == 0 else (alpha,)
        for c in colors:
            ci = spec.color_index(c)
            rc = spec.displacement(c)
            for n1 in range(L):
                for n2 in range(L):
                    xs = spec.site_cartesian(n1, n2) + rc
                    m = basis.mode(n1, n2, ci)
                    quad.append((m, m, np.exp(-1j * float(pv @ xs))))
        return quad
    if alpha not in (1, 2):
        raise ModelValidationError(f"unknown observable label {alpha!r}")
    i = alpha - 1
    for a, b, t, disp in iter_hop_bonds(model, L):
        if np.allclose(disp, 0.0):
            continue  # coincident points: eta = 0
        site_a = a // spec.n_colors
        n1, n2 = divmod(site_a, L)
        ca = a % spec.n_colors
        xs = spec.site_cartesian(n1, n2) + spec.displacement(spec.colors[ca])
        theta = float(pv @ disp)
        # (1/2) e^{-i p.x_s} disp_i eta * J_img with J_img = i[t psi+_a psi-_b
        # - conj(t) psi+_b psi-_a]; the reversed ordering of the same image
        # bond arrives via the Hermitian partner stencil entry.
        pref = 0.5 * np.exp(-1j * float(pv @ xs)) * disp[i] * _eta(theta)
        quad.append((a, b, pref * 1j * t))
        quad.append((b, a, pref * (-1j) * np.conj(t)))
    return quad


def single_particle_matrix(n_modes: int, quad) -> np.ndarray:
    """Dense mode-space matrix M with M[a, b] += amp for amp psi+_a psi-_b."""
    M = np.zeros((n_modes, n_modes), complex)
    for a, b, t in quad:
        M[a, b] += t
    return M


def interaction_matrix(model: HoppingModel, L: int) -> np.ndarray:
    """Mode-space v with V = sum_ab v[a,b] n_a n_b (unit coupling)."""
    n = L * L * model.spec.n_colors
    v = np.zeros((n, n))
    for a, b, vv in interaction_pairs(model, L):
        v[a, b] += vv
    return v


# ---------------------------------------------------------------------------
# many-body operators
# ---------------------------------------------------------------------------

def build_hamiltonian(model: HoppingModel, L: int,
                      policy: NumericPolicy | None = None,
                      sectors=None) -> ManyBodyOperator:
    """H = H0 + U V on the torus: hopping + onsite + density-density."""
    pol = get_policy(policy)
    check_guards(model, L, pol)
    basis = FockBasis(L, model.spec.n_colors)
    quad, quartic = hamiltonian_terms(model, L)
    return operator_from_terms(basis, quad, quartic, sectors=sectors, hermitian=True,
                               policy=pol)


def number_operator(basis: FockBasis) -> ManyBodyOperator:
    quad = [(m, m, 1.0) for m in range(basis.n_modes)]
    return operator_from_terms(basis, quad, hermitian=True)


def grand_hamiltonian(model: HoppingModel, L: int,
                      policy: NumericPolicy | None = None,
                      sectors=None) -> ManyBodyOperator:
    """K = H - mu N."""
    H = build_hamiltonian(model, L, policy, sectors)
    N = number_operator(H.basis)
    return H + (-model.mu) * N


def bond_current(model: HoppingModel, L: int, x: tuple[int, int], y: tuple[int, int],
                 s: str, sps: str, policy: NumericPolicy | None = None) -> ManyBodyOperator:
    """J_xy = i [psi+_x H_L(x-y) psi-_y - psi+_y H_L(y-x) psi-_x]."""
    pol = get_policy(policy)
    check_guards(model, L, pol)
    basis = FockBasis(L, model.spec.n_colors)
    ci, cj = model.spec.color_index(s), model.spec.color_index(sps)
    a = basis.mode(x[0], x[1], ci)
    b = basis.mode(y[0], y[1], cj)
    amp = sum((t for d, ss, ssp, t in model.hoppings
               if ss == s and ssp == sps
               and (x[0] - d[0]) % L == y[0] % L and (x[1] - d[1]) % L == y[1] % L),
              start=0.0 + 0.0j)
    if amp == 0:
        warnings.warn(f"no hopping between {(x, s)} and {(y, sps)}: zero bond current",
                      stacklevel=2)
    quad = [(a, b, 1j * amp), (b, a, -1j * np.conj(amp))]
    return operator_from_terms(basis, quad, hermitian=True, policy=pol)


def total_current(model: HoppingModel, L: int, i: int,
                  include_displacement: bool = True,
                  policy: NumericPolicy | None = None,
                  sectors=None) -> ManyBodyOperator:
    """J_i = i sum over image bonds of displacement_i psi+ H psi-.

    include_displacement=False drops the r_s' - r_s offsets (the J^(2) part).
    """
    pol = get_policy(policy)
    check_guards(model, L, pol)
    basis = FockBasis(L, model.spec.n_colors)
    quad = current_terms(model, L, i, include_displacement)
    return operator_from_terms(basis, quad, sectors=sectors, hermitian=True, policy=pol)


def momentum_current(model: HoppingModel, L: int, alpha, p,
                     policy: NumericPolicy | None = None,
                     sectors=None) -> ManyBodyOperator:
    """J-tilde_{alpha, p}: alpha = 0 (density), 1|2 (current), or a color."""
    pol = get_policy(policy)
    check_guards(model, L, pol)
    basis = FockBasis(L, model.spec.n_colors)
    quad = momentum_current_terms(model, L, alpha, p)
    pv = p.vec if isinstance(p, MomentumPoint) else np.asarray(p, float)
    herm = bool(np.allclose(pv, 0.0))
    return operator_from_terms(basis, quad, sectors=sectors, hermitian=herm, policy=pol)


def diamagnetic_operator(model: HoppingModel, L: int, i: int, j: int,
                         policy: NumericPolicy | None = None,
                         sectors=None) -> ManyBodyOperator:
    """D_ij = [[H, X_i], X_j] in bond form: sum disp_i disp_j psi+ H psi-."""
    pol = get_policy(policy)
    check_guards(model, L, pol)
    basis = FockBasis(L, model.spec.n_colors)
    quad = diamagnetic_terms(model, L, i, j)
    return operator_from_terms(basis, quad, sectors=sectors, hermitian=True, policy=pol)


# ---------------------------------------------------------------------------
# eigensolves and Gibbs expectations
# ---------------------------------------------------------------------------

@dataclass
class EigenBundle:
    sector: int
    energies: np.ndarray
    vectors: np.ndarray          # columns; ground mode keeps one column
    mode: str
    ground_gap: float | None = None


def eigensolve(op: ManyBodyOperator, sector: int, mode: str = "full",
               policy: NumericPolicy | None = None,
               check_degenerate: bool = True) -> EigenBundle:
    pol = get_policy(policy)
    d = op.basis.sector_dim(sector)
    if mode == "full":
        if d > pol.full_diag_dim:
            raise GuardError(f"sector dim {d} exceeds full-diagonalization guard "
                             f"{pol.full_diag_dim}")
        w, v = np.linalg.eigh(op.dense(sector))
        return EigenBundle(sector, w, v, "full",
                           ground_gap=float(w[1] - w[0]) if d > 1 else np.inf)
    if mode != "ground":
        raise ValueError(f"unknown mode {mode!r}")
    if d > pol.ground_dim:
        raise GuardError(f"sector dim {d} exceeds iterative guard {pol.ground_dim}")
    if d <= 64:
        w, v = np.linalg.eigh(op.dense(sector))
        gap = float(w[1] - w[0]) if d > 1 else np.inf
        bundle = EigenBundle(sector, w[:1], v[:, :1], "ground", ground_gap=gap)
    else:
        w, v = spla.eigsh(op.block(sector), k=2, which="SA",
                          tol=pol.solver_rtol * 1e-2, maxiter=50000)
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        bundle = EigenBundle(sector, w[:1], v[:, :1], "ground",
                             ground_gap=float(w[1] - w[0]))
    vec = bundle.vectors[:, 0]
    resid = np.linalg.norm(op.block(sector) @ vec - bundle.energies[0] * vec)
    if resid > 1e-9 * max(1.0, abs(bundle.energies[0])):
        raise GuardError(f"ground-state residual {resid:g} above tolerance")
    if check_degenerate and bundle.ground_gap is not None \
            and bundle.ground_gap < pol.degeneracy_tol:
        raise DegenerateGroundStateError(
            f"ground state degenerate in sector {sector}: gap {bundle.ground_gap:g}")
    return bundle


def full_spectra(K: ManyBodyOperator, policy: NumericPolicy | None = None) -> dict[int, EigenBundle]:
    """Dense eigen-decomposition of every particle-number sector of K."""
    pol = get_policy(policy)
    if K.basis.total_dim() > pol.gibbs_total_dim:
        raise GuardError(f"total Fock dimension {K.basis.total_dim()} exceeds "
                         f"{pol.gibbs_total_dim}")
    return {n: eigensolve(K, n, "full", pol) for n in K.basis.sectors}


def gibbs_weights(spectra: dict[int, EigenBundle], beta: float) -> dict[int, np.ndarray]:
    """Normalized Boltzmann weights per sector for K = H - mu N."""
    e_min = min(b.energies.min() for b in spectra.values())
    zs = {n: np.exp(-beta * (b.energies - e_min)) for n, b in spectra.items()}
    Z = sum(z.sum() for z in zs.values())
    return {n: z / Z for n, z in zs.items()}


def gibbs_expectation(op: ManyBodyOperator, model: HoppingModel, L: int, beta: float,
                      policy: NumericPolicy | None = None,
                      spectra: dict[int, EigenBundle] | None = None) -> complex:
    """Tr(rho O) with rho = e^{-beta(H - mu N)}/Z over all sectors."""
    pol = get_policy(policy)
    if spectra is None:
        spectra = full_spectra(grand_hamiltonian(model, L, pol), pol)
    w = gibbs_weights(spectra, beta)
    acc = 0.0 + 0.0j
    for n, b in spectra.items():
        Ob = np.einsum("im,ij,jm->m", b.vectors.conj(), op.dense(n), b.vectors)
        acc += (w[n] * Ob).sum()
    return complex(acc)
