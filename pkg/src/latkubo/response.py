"""Lehmann-representation evaluation of two-point correlators, both Kubo
conductivities, Ward-identity residuals, the Wick-rotation and sum-rule
checks, and the universality scan.

All frequency-domain correlators are closed-form rational functions of omega
built from exact-diagonalization spectra; real time is never integrated
numerically (a discretized imaginary-time oracle is available behind the
oracle flag for cross-validation).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateGroundStateError, GuardError
from .fock import (FockBasis, ManyBodyOperator, build_hamiltonian,
                   diamagnetic_operator, eigensolve, full_spectra, gibbs_weights,
                   grand_hamiltonian, momentum_current, number_operator,
                   total_current)
from .lattice import MomentumPoint, momentum_point
from .model import HoppingModel
from .policy import NumericPolicy, get_policy


def _phi1(x: np.ndarray) -> np.ndarray:
    """(e^x - 1)/x, stable near 0; used only for x <= 0."""
    x = np.asarray(x, float)
    small = np.abs(x) < 1e-6
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x / 2.0 + x * x / 6.0, np.expm1(safe) / safe)


@dataclass
class CorrelatorResult:
    value: complex
    omega: float
    p: tuple[float, float]
    normalization: str = "per_site_beta"
    provenance: str = "lehmann"


class EDSession:
    """Exact-diagonalization context for one (model, L, beta-or-zero-T).

    beta=None selects the zero-temperature path: unique gapped ground state,
    full ground-sector spectra when small, shifted solves otherwise.
    """

    def __init__(self, model: HoppingModel, L: int, beta: float | None,
                 policy: NumericPolicy | None = None,
                 ground_sector: int | None = None):
        self.model = model
        self.L = L
        self.beta = beta
        self.policy = get_policy(policy)
        self.basis = FockBasis(L, model.spec.n_colors)
        self._ops: dict = {}
        if beta is not None:
            self.K = grand_hamiltonian(model, L, self.policy)
            self.spectra = full_spectra(self.K, self.policy)
            self.weights = gibbs_weights(self.spectra, beta)
            self.mode = "finite_beta"
        else:
            self.mode = "zero_T"
            small = self.basis.total_dim() <= self.policy.gibbs_total_dim
            if small:
                self.K = grand_hamiltonian(model, L, self.policy)
                self.spectra = full_spectra(self.K, self.policy)
                n0, i0 = self._global_ground()
                self.ground_sector = n0
                b = self.spectra[n0]
                self.E0 = float(b.energies[i0])
                self.ground_vec = b.vectors[:, i0]
                self.full_ground = True
            else:
                self.full_ground = False
                self.ground_sector, self.E0, self.ground_vec = \
                    self._iterative_ground(ground_sector)
                self.K = grand_hamiltonian(model, L, self.policy,
                                           sectors=[self.ground_sector])
                self.spectra = None

    # -- ground-state selection ------------------------------------------

    def _global_ground(self):
        pairs = [(float(b.energies.min()), n, int(b.energies.argmin()))
                 for n, b in self.spectra.items()]
        pairs.sort()
        e0, n0, i0 = pairs[0]
        # uniqueness across the whole Fock space
        all_e = np.sort(np.concatenate([b.energies for b in self.spectra.values()]))
        if len(all_e) > 1 and all_e[1] - all_e[0] < self.policy.degeneracy_tol:
            raise DegenerateGroundStateError(
                f"global ground state degenerate: gap {all_e[1] - all_e[0]:g}")
        return n0, i0

    def _iterative_ground(self, hint: int | None):
        pol = self.policy
        if hint is not None:
            candidates = [hint - 1, hint, hint + 1]
        else:
            candidates = list(self.basis.sectors)
        candidates = [n for n in candidates if 0 <= n <= self.basis.n_modes]
        best = None
        bundles = {}
        for n in candidates:
            Kn = grand_hamiltonian(self.model, self.L, pol, sectors=[n])
            b = eigensolve(Kn, n, "ground", pol, check_degenerate=False)
            bundles[n] = b
            e = float(b.energies[0])
            if best is None or e < best[0]:
                best = (e, n)
        e0, n0 = best
        if hint is not None and n0 != hint:
            raise GuardError(f"ground sector hint {hint} wrong: sector {n0} is lower")
        in_gap = bundles[n0].ground_gap if bundles[n0].ground_gap is not None else np.inf
        if in_gap < self.policy.degeneracy_tol:
            raise DegenerateGroundStateError(
                f"ground state degenerate in sector {n0}: gap {in_gap:g}")
        others = [float(b.energies[0]) for n, b in bundles.items() if n != n0]
        if others and min(others) - e0 < self.policy.degeneracy_tol:
            raise DegenerateGroundStateError("ground state degenerate across sectors")
        self._iter_gap = min([in_gap] + [x - e0 for x in others]) if others else in_gap
        return n0, e0, bundles[n0].vectors[:, 0]

    def ground_gap(self) -> float:
        """Gap above the global ground state (over the sectors examined)."""
        if self.mode == "finite_beta" or self.full_ground:
            all_e = np.sort(np.concatenate([b.energies for b in self.spectra.values()]))
            return float(all_e[1] - all_e[0])
        return float(self._iter_gap)

    # -- observables -------------------------------------------------------

    def observable(self, alpha, p) -> ManyBodyOperator:
        pv = p.vec if isinstance(p, MomentumPoint) else np.asarray(p, float)
        key = (alpha, round(pv[0], 12), round(pv[1], 12))
        if key not in self._ops:
            sectors = None if self.mode == "finite_beta" or self.full_ground \
                else [self.ground_sector]
            self._ops[key] = momentum_current(self.model, self.L, alpha, pv,
                                              self.policy, sectors=sectors)
        return self._ops[key]

    def expectation(self, op: ManyBodyOperator) -> complex:
        if self.mode == "finite_beta":
            acc = 0.0 + 0.0j
            for n, b in self.spectra.items():
                Ob = np.einsum("im,ij,jm->m", b.vectors.conj(), op.dense(n), b.vectors)
                acc += (self.weights[n] * Ob).sum()
            return complex(acc)
        v0 = self.ground_vec
        return complex(v0.conj() @ (op.block(self.ground_sector) @ v0))

    def one_point(self, alpha, p=(0.0, 0.0)) -> complex:
        return self.expectation(self.observable(alpha, p)) / self.L ** 2

    # -- two-point correlators ---------------------------------------------

    def correlator(self, a1, a2, omega: float, p=(0.0, 0.0),
                   oracle: bool = False) -> CorrelatorResult:
        """K-hat_{a1 a2}(omega, p): truncated, per-site normalization
        1/(beta L^2) in frequency space."""
        pv = p.vec if isinstance(p, MomentumPoint) else np.asarray(p, float)
        A = self.observable(a1, pv)
        B = self.observable(a2, -pv)
        if oracle:
            val = self._correlator_time_oracle(A, B, omega)
            return CorrelatorResult(val, omega, tuple(pv), provenance="time-integral-oracle")
        if self.mode == "finite_beta":
            val = self._correlator_lehmann_beta(A, B, omega)
        else:
            val = self._correlator_lehmann_zero_t(A, B, omega)
        return CorrelatorResult(val, omega, tuple(pv))

    def _correlator_lehmann_beta(self, A, B, omega: float) -> complex:
        beta = self.beta
        acc = 0.0 + 0.0j
        for n, b in self.spectra.items():
            V = b.vectors
            At = V.conj().T @ A.dense(n) @ V
            Bt = V.conj().T @ B.dense(n) @ V
            K = b.energies
            pw = self.weights[n]
            D = K[:, None] - K[None, :]           # K_m - K_n
            if omega == 0.0:
                T = beta * np.maximum(pw[:, None], pw[None, :]) * _phi1(-beta * np.abs(D))
            else:
                T = (pw[None, :] - pw[:, None]) / (D - 1j * omega)
            acc += (At * Bt.T * T).sum()
        val = acc / self.L ** 2
        if omega == 0.0:
            val -= beta * self.expectation(A) * self.expectation(B) / self.L ** 2
        return complex(val)

    def _ground_elements(self, op: ManyBodyOperator):
        """(op)_{n0} and (op)_{0n} over the ground sector eigenbasis."""
        n0 = self.ground_sector
        b = self.spectra[n0]
        v0 = self.ground_vec
        V = b.vectors
        right = V.conj().T @ (op.dense(n0) @ v0)           # <n|O|0>
        left = (V.conj().T @ (op.dense(n0).conj().T @ v0)).conj()  # <0|O|n>
        return left, right, b.energies - self.E0

    def _correlator_lehmann_zero_t(self, A, B, omega: float) -> complex:
        if not self.full_ground:
            return self._correlator_resolvent(A, B, omega)
        A0n, An0, dA = self._ground_elements(A)
        B0n, Bn0, dB = self._ground_elements(B)
        delta = dA
        keep = delta > 0.5 * self.policy.degeneracy_tol
        val = (A0n[keep] * Bn0[keep] / (delta[keep] + 1j * omega)).sum() \
            + (B0n[keep] * An0[keep] / (delta[keep] - 1j * omega)).sum()
        return complex(val / self.L ** 2)

    def _correlator_resolvent(self, A, B, omega: float) -> complex:
        n0 = self.ground_sector
        v0 = self.ground_vec
        Ksec = self.K.block(n0)
        rhs_B = B.block(n0) @ v0
        rhs_Ad = A.block(n0).conj().T @ v0
        wB = _projected_solve(Ksec, self.E0, v0, rhs_B, 1j * omega,
                              self.policy.solver_rtol)
        x1 = np.vdot(A.block(n0).conj().T @ v0, wB)        # <0|A (K-E0+iw)^-1 Q B|0>
        rhs_A = A.block(n0) @ v0
        wA = _projected_solve(Ksec, self.E0, v0, rhs_A, -1j * omega,
                              self.policy.solver_rtol)
        x2 = np.vdot(B.block(n0).conj().T @ v0, wA)        # <0|B (K-E0-iw)^-1 Q A|0>
        return complex((x1 + x2) / self.L ** 2)

    def _correlator_time_oracle(self, A, B, omega: float, n_grid: int = 4096) -> complex:
        """Trapezoid discretization of int_0^beta ds e^{-i w s} C(s) with the
        connected C(s) evaluated spectrally; cross-validation only.

        C(s) is smooth on the closed interval [0, beta] once the endpoints
        take their one-sided limits C(0+) = <A B> and C(beta-) = <B A>, which
        the spectral formula yields automatically.
        """
        if self.mode != "finite_beta":
            raise GuardError("time-integral oracle requires the finite-beta path")
        beta = self.beta
        s = np.linspace(0.0, beta, n_grid + 1)
        meanA = self.expectation(A)
        meanB = self.expectation(B)
        Cs = np.zeros(n_grid + 1, complex)
        e_min = min(b.energies.min() for b in self.spectra.values())
        logZ = np.log(sum(np.exp(-beta * (b.energies - e_min)).sum()
                          for b in self.spectra.values()))
        for n, b in self.spectra.items():
            V = b.vectors
            At = V.conj().T @ A.dense(n) @ V
            Bt = V.conj().T @ B.dense(n) @ V
            K = b.energies
            for m in range(len(K)):
                # w_mn(s) = exp(-beta(K_m - e_min) + s(K_m - K_n)) / Z
                expo = -beta * (K[m] - e_min) - logZ + np.outer(s, K[m] - K).T
                Cs += (At[m, :, None] * Bt[:, m, None] * np.exp(expo)).sum(axis=0)
        Cs -= meanA * meanB
        wts = np.full(n_grid + 1, beta / n_grid)
        wts[0] = wts[-1] = beta / (2 * n_grid)
        val = (np.exp(-1j * omega * s) * Cs * wts).sum()
        return complex(val / self.L ** 2)

    # -- identities ---------------------------------------------------------

    def schwinger_term(self, alpha2, p) -> complex:
        """S-hat_{alpha2}(p) = <[J0_p, J_alpha2_-p]> / L^2 (n = 2)."""
        pv = p.vec if isinstance(p, MomentumPoint) else np.asarray(p, float)
        J0 = self.observable(0, pv)
        Ja = self.observable(alpha2, -pv)
        comm = J0.commutator(Ja)
        return self.expectation(comm) / self.L ** 2

    def ward_residual(self, p, alpha2, omega: float) -> complex:
        """i w K_{0,a2} + sum_i p_i K_{i,a2} - S-hat_{a2}; exact identity."""
        pv = p.vec if isinstance(p, MomentumPoint) else np.asarray(p, float)
        r = 1j * omega * self.correlator(0, alpha2, omega, pv).value
        for i in (1, 2):
            if pv[i - 1] != 0.0:
                r += pv[i - 1] * self.correlator(i, alpha2, omega, pv).value
        return r - self.schwinger_term(alpha2, pv)

    def diamagnetic_expectation(self, i: int, j: int) -> complex:
        sectors = None if self.mode == "finite_beta" or self.full_ground \
            else [self.ground_sector]
        D = diamagnetic_operator(self.model, self.L, i, j, self.policy, sectors=sectors)
        return self.expectation(D)

    def sum_rule_deviation(self) -> np.ndarray:
        """2x2 matrix K-hat_ij(0,0) + <D_ij>/L^2 (exact transverse identity)."""
        dev = np.zeros((2, 2), complex)
        for i in (1, 2):
            for j in (1, 2):
                k0 = self.correlator(i, j, 0.0).value
                dev[i - 1, j - 1] = k0 + self.diamagnetic_expectation(i - 1, j - 1) / self.L ** 2
        return dev

    def sigma_zero_t(self) -> np.ndarray:
        """Exact w -> 0 derivative of the Matsubara-side Lehmann function."""
        if self.mode != "zero_T":
            raise GuardError("sigma_zero_t requires the zero-temperature session")
        A = self.model.spec.cell_area
        sig = np.zeros((2, 2))
        if self.full_ground:
            J = {i: self.observable(i, (0.0, 0.0)) for i in (1, 2)}
            el = {i: self._ground_elements(J[i]) for i in (1, 2)}
            for i in (1, 2):
                for j in (1, 2):
                    Ai0n, Ain0, delta = el[i]
                    Aj0n, Ajn0, _ = el[j]
                    keep = delta > 0.5 * self.policy.degeneracy_tol
                    s = 1j * ((Ai0n[keep] * Ajn0[keep]
                               - Aj0n[keep] * Ain0[keep]) / delta[keep] ** 2).sum()
                    sig[i - 1, j - 1] = s.real / (A * self.L ** 2)
            return sig
        n0 = self.ground_sector
        v0 = self.ground_vec
        Ksec = self.K.block(n0)
        w = {}
        for i in (1, 2):
            J = self.observable(i, (0.0, 0.0))
            w[i] = _projected_solve(Ksec, self.E0, v0, J.block(n0) @ v0, 0.0,
                                    self.policy.solver_rtol)
        val = -2.0 * np.vdot(w[1], w[2]).imag / (A * self.L ** 2)
        sig[0, 1] = val
        sig[1, 0] = -val
        return sig


def _projected_solve(Ksec: sp.csr_matrix, E0: float, v0: np.ndarray,
                     rhs: np.ndarray, shift: complex, rtol: float,
                     maxiter: int = 200000) -> np.ndarray:
    """Solve (K - E0 + shift) w = Q rhs with w orthogonal to v0.

    Conjugate gradients on the ground-state complement; K - E0 is PSD there
    with a spectral gap, so CG converges for real shift >= 0; for imaginary
    shift the system is normal and CG on the normal equations is avoided by
    using CGS-like iteration via scipy when needed.
    """
    def project(x):
        return x - v0 * np.vdot(v0, x)

    b = project(rhs.astype(complex))
    if shift == 0.0:
        x = np.zeros_like(b)
        r = b.copy()
        p = r.copy()
        rs = np.vdot(r, r)
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return x
        for _ in range(maxiter):
            Ap = project(Ksec @ p - E0 * p)
            alpha = rs / np.vdot(p, Ap)
            x += alpha * p
            r -= alpha * Ap
            rs_new = np.vdot(r, r)
            if np.sqrt(abs(rs_new)) <= rtol * bnorm:
                return project(x)
            p = r + (rs_new / rs) * p
            rs = rs_new
        raise GuardError("projected CG did not converge")
    import scipy.sparse.linalg as spla
    d = Ksec.shape[0]

    def mv(x):
        return project(Ksec @ project(x) - (E0 - shift) * project(x)) + v0 * np.vdot(v0, x)

    op = spla.LinearOperator((d, d), matvec=mv, dtype=complex)
    x, info = spla.gmres(op, b, rtol=rtol, atol=0.0, maxiter=maxiter)
    if info != 0:
        raise GuardError(f"shifted solve failed to converge (info={info})")
    return project(x)


# ---------------------------------------------------------------------------
# functional API
# ---------------------------------------------------------------------------

def matsubara_correlator(a1, a2, model: HoppingModel, L: int, beta: float | None,
                         omega: float, p=(0.0, 0.0), oracle: bool = False,
                         session: EDSession | None = None,
                         policy: NumericPolicy | None = None) -> CorrelatorResult:
    ses = session or EDSession(model, L, beta, policy)
    return ses.correlator(a1, a2, omega, p, oracle=oracle)


def ward_residual(model: HoppingModel, L: int, beta: float, p, alpha2,
                  omega: float, session: EDSession | None = None,
                  policy: NumericPolicy | None = None) -> complex:
    ses = session or EDSession(model, L, beta, policy)
    return ses.ward_residual(p, alpha2, omega)


def max_ward_residual(model: HoppingModel, L: int, beta: float,
                      n_matsubara: int = 5, alphas=None,
                      policy: NumericPolicy | None = None,
                      session: EDSession | None = None) -> float:
    """Max |residual| over all grid momenta, the first n Matsubara
    frequencies and observable labels."""
    ses = session or EDSession(model, L, beta, policy)
    alphas = ([0, 1, 2] + list(model.spec.colors)) if alphas is None else alphas
    worst = 0.0
    omegas = [2 * np.pi * n / beta for n in range(1, n_matsubara + 1)]
    for n1 in range(L):
        for n2 in range(L):
            p = momentum_point(model.spec, n1, n2)
            for alpha2 in alphas:
                for w in omegas:
                    worst = max(worst, abs(ses.ward_residual(p, alpha2, w)))
    return worst


@dataclass
class SigmaResult:
    matrix: np.ndarray
    path: str
    diagnostics: dict = field(default_factory=dict)


def sigma_imaginary(model: HoppingModel, L: int, beta: float | None = None,
                    omega_list=None, session: EDSession | None = None,
                    policy: NumericPolicy | None = None,
                    ground_sector: int | None = None) -> SigmaResult:
    """Matsubara-side conductivity -(1/A)[K(w) - K(0)]/w extrapolated to 0.

    beta=None: zero-temperature path, exact analytic w-derivative.
    """
    pol = get_policy(policy)
    ses = session or EDSession(model, L, beta, pol, ground_sector=ground_sector)
    A = model.spec.cell_area
    if beta is None:
        return SigmaResult(ses.sigma_zero_t(), "zero_T_exact_derivative")
    if omega_list is None:
        omega_list = [2 * np.pi * n / beta for n in (1, 2, 3)]
    if len(omega_list) < 3:
        raise GuardError("need at least 3 Matsubara frequencies for the fit")
    omegas = np.asarray(sorted(omega_list), float)
    sig = np.zeros((2, 2))
    resid = 0.0
    for i in (1, 2):
        for j in (1, 2):
            k0 = ses.correlator(i, j, 0.0).value
            slopes = np.array([(ses.correlator(i, j, w).value - k0) / w
                               for w in omegas])
            if abs(slopes.imag).max() > 1e-8:
                resid = max(resid, abs(slopes.imag).max())
            coeffs = np.polyfit(omegas, slopes.real, 2)
            fit_vals = np.polyval(coeffs, omegas)
            resid = max(resid, float(np.abs(fit_vals - slopes.real).max()))
            sig[i - 1, j - 1] = -coeffs[-1] / A
    diag = {"fit_residual": resid, "omegas": list(map(float, omegas))}
    if resid > 1e-3:
        diag["flag"] = "non-smooth small-omega behavior"
    return SigmaResult(sig, "finite_beta_fit", diag)


def sigma_real(model: HoppingModel, L: int, session: EDSession | None = None,
               policy: NumericPolicy | None = None) -> SigmaResult:
    """Real-time Kubo formula at zero temperature.

    sigma_ij = (1/A) lim_{w->0} (1/w)[ i int_-inf^0 e^{wt} <[J_i(it), J_j]> dt
    - <D_ij> ], with the time integral in closed Lehmann form and the limit
    taken as the exact first derivative at w = 0 (the bracket itself vanishes
    at w = 0 by the sum rule for the transverse components).
    """
    pol = get_policy(policy)
    ses = session or EDSession(model, L, None, pol)
    if not ses.full_ground:
        raise GuardError("sigma_real requires full ground-sector spectra")
    A = model.spec.cell_area
    J = {i: ses.observable(i, (0.0, 0.0)) for i in (1, 2)}
    el = {i: ses._ground_elements(J[i]) for i in (1, 2)}
    sig = np.zeros((2, 2))
    bracket0 = np.zeros((2, 2), complex)
    for i in (1, 2):
        for j in (1, 2):
            Ai0n, Ain0, delta = el[i]
            Aj0n, Ajn0, _ = el[j]
            keep = delta > 0.5 * pol.degeneracy_tol
            a = Ai0n[keep] * Ajn0[keep]
            bcoef = Aj0n[keep] * Ain0[keep]
            d = delta[keep]
            # R(w) = i int_-inf^0 e^{wt} <[J_i(it), J_j]> dt
            #      = i sum_n [ a_n/(w - i d_n) - b_n/(w + i d_n) ]
            R0 = 1j * (a / (-1j * d) - bcoef / (1j * d)).sum() / ses.L ** 2
            dR0 = 1j * (-a / (-1j * d) ** 2 + bcoef / (1j * d) ** 2).sum() / ses.L ** 2
            Dij = ses.diamagnetic_expectation(i - 1, j - 1) / ses.L ** 2
            bracket0[i - 1, j - 1] = R0 - Dij
            sig[i - 1, j - 1] = (dR0 / A).real
    return SigmaResult(sig, "real_time_zero_T",
                       {"bracket_at_zero": bracket0})


def wick_rotation_check(model: HoppingModel, L: int, omega_list,
                        session: EDSession | None = None,
                        policy: NumericPolicy | None = None) -> dict:
    """|K-hat_ij(w, 0) - (-i) int_-inf^0 e^{wt} <[J_i(it), J_j]> dt| per w > 0,
    both sides in closed Lehmann form at zero temperature."""
    pol = get_policy(policy)
    ses = session or EDSession(model, L, None, pol)
    if not ses.full_ground:
        raise GuardError("wick_rotation_check requires full ground-sector spectra")
    J = {i: ses.observable(i, (0.0, 0.0)) for i in (1, 2)}
    el = {i: ses._ground_elements(J[i]) for i in (1, 2)}
    out = {}
    worst = 0.0
    for w in omega_list:
        if w <= 0:
            raise GuardError("wick rotation check needs omega > 0")
        per = {}
        for i in (1, 2):
            for j in (1, 2):
                mats = ses._correlator_lehmann_zero_t(J[i], J[j], w)
                Ai0n, Ain0, delta = el[i]
                Aj0n, Ajn0, _ = el[j]
                keep = delta > 0.5 * pol.degeneracy_tol
                a = Ai0n[keep] * Ajn0[keep]
                bcoef = Aj0n[keep] * Ain0[keep]
                d = delta[keep]
                real_side = -1j * (a / (w - 1j * d) - bcoef / (w + 1j * d)).sum() / ses.L ** 2
                per[(i, j)] = abs(mats - real_side)
                worst = max(worst, per[(i, j)])
        out[float(w)] = per
    return {"max_deviation": worst, "per_omega": out}


def sum_rule_check(model: HoppingModel, L: int, beta: float | None = None,
                   session: EDSession | None = None,
                   policy: NumericPolicy | None = None) -> dict:
    """Deviation matrix K-hat_ij(0, 0) + <D_ij>/L^2.

    The transverse (12, 21) components are an exact finite-size identity;
    the diagonal carries a finite-size Drude anomaly that decays with L and
    is reported, not asserted.
    """
    ses = session or EDSession(model, L, beta, policy)
    dev = ses.sum_rule_deviation()
    return {"deviation": dev,
            "transverse_max": float(max(abs(dev[0, 1]), abs(dev[1, 0]))),
            "diagonal_max": float(max(abs(dev[0, 0]), abs(dev[1, 1])))}


UNIVERSALITY_HEADER = ["U", "L", "mode", "sigma12", "delta_sigma12", "gap", "flags"]


def universality_scan(model_family, U_list, L_list,
                      policy: NumericPolicy | None = None,
                      ground_sector_hint=None) -> list[dict]:
    """Table of sigma-bar_12 versus (U, L) on the zero-temperature path.

    model_family(U, L) -> HoppingModel.  delta_sigma12 column is
    sigma12(U) - sigma12(0) at the same L.
    """
    pol = get_policy(policy)
    rows = []
    for L in L_list:
        base = None
        for U in U_list:
            model = model_family(U, L)
            hint = ground_sector_hint(L) if callable(ground_sector_hint) else ground_sector_hint
            ses = EDSession(model, L, None, pol, ground_sector=hint)
            res = sigma_imaginary(model, L, None, session=ses, policy=pol)
            s12 = float(res.matrix[0, 1])
            gap = ses.ground_gap()
            flags = "" if gap > pol.degeneracy_tol * 10 else "gap-closing"
            if U == 0:
                base = s12
            rows.append({"U": float(U), "L": int(L), "mode": "zero_T",
                         "sigma12": s12,
                         "delta_sigma12": s12 - base if base is not None else None,
                         "gap": gap, "flags": flags})
    return rows


def universality_csv(rows, policy: NumericPolicy | None = None) -> str:
    pol = get_policy(policy)
    buf = io.StringIO()
    buf.write(f"# policy: {pol.as_json()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(UNIVERSALITY_HEADER)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in UNIVERSALITY_HEADER])
    return buf.getvalue()


def universality_json(rows, policy: NumericPolicy | None = None) -> str:
    pol = get_policy(policy)
    return json.dumps({"policy": pol.as_dict(), "rows": rows}, sort_keys=True)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)
