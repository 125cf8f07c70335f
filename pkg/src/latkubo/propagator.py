"""Finite-temperature free propagators, Matsubara transform, single-scale
decomposition and Gram factorization.

Time-domain propagators are evaluated from the closed-form Fermi-factor
expression; the "regularized" objects (single-scale slices, the cutoff
propagator) are truncated Matsubara sums, kept strictly separate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GaplessError, ModelValidationError
from .lattice import kgrid_cartesian
from .model import HoppingModel, bloch_hamiltonian_grid, spectral_gap
from .policy import NumericPolicy, get_policy


# ---------------------------------------------------------------------------
# smooth compactly supported cutoff
# ---------------------------------------------------------------------------

def _smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, float)
    a = np.where(x > 0, np.exp(-1.0 / np.maximum(x, 1e-300)), 0.0)
    b = np.where(1 - x > 0, np.exp(-1.0 / np.maximum(1 - x, 1e-300)), 0.0)
    return np.where(x <= 0, 0.0, np.where(x >= 1, 1.0, a / (a + b)))


class CutoffFunction:
    """Even C-infinity bump: 1 on |t| <= 1, 0 on |t| >= 2, monotone between."""

    def __call__(self, t):
        return 1.0 - _smooth_step(np.abs(np.asarray(t, float)) - 1.0)

    def shell(self, h: int, k0, delta_mu: float):
        """f_h(k0) = chi0(2^-h k0/d) - chi0(2^-h+1 k0/d); f_0 = chi0(k0/d)."""
        k0 = np.asarray(k0, float)
        if h == 0:
            return self(k0 / delta_mu)
        return (self(k0 / (2.0 ** h * delta_mu))
                - self(k0 / (2.0 ** (h - 1) * delta_mu)))


CHI0 = CutoffFunction()


# ---------------------------------------------------------------------------
# exact finite-temperature propagator
# ---------------------------------------------------------------------------

def _eig_grid(model: HoppingModel, L: int):
    kpts = kgrid_cartesian(model.spec, L)
    H = bloch_hamiltonian_grid(model, kpts)
    w, U = np.linalg.eigh(H)
    return kpts, w - model.mu, U


def _time_kernel(xi: np.ndarray, beta: float, t: float, positive: bool) -> np.ndarray:
    """e^{-t xi} [(1-f) on the t>0 branch, -f on the t<=0 branch], overflow-safe."""
    if positive:
        return np.where(xi >= 0,
                        np.exp(-t * np.abs(xi)) / (1.0 + np.exp(-beta * np.abs(xi))),
                        np.exp((beta - t) * xi) / (1.0 + np.exp(-beta * np.abs(xi))))
    return -np.where(xi >= 0,
                     np.exp(-(beta + t) * xi) / (1.0 + np.exp(-beta * np.abs(xi))),
                     np.exp(t * np.abs(xi)) / (1.0 + np.exp(-beta * np.abs(xi))))


def propagator(model: HoppingModel, beta: float, t: float, x: tuple[int, int],
               L: int | None = None, side: str = "-") -> np.ndarray:
    """g^{beta,L}(t, x), an |I| x |I| matrix; t in (-beta, beta).

    t = 0 is the 0- branch (normal ordering) unless side='+' forces 0+.
    """
    if abs(t) >= beta:
        raise ModelValidationError(f"|t| = {abs(t)} must be below beta = {beta}")
    L = model.spec.L if L is None else L
    kpts, xi, U = _eig_grid(model, L)
    xv = model.spec.site_cartesian(x[0], x[1])
    phases = np.exp(-1j * (kpts @ xv))
    positive = t > 0 or (t == 0.0 and side == "+")
    kern = _time_kernel(xi, beta, t, positive)             # (nk, nc)
    mats = np.einsum("kab,kb,kcb->kac", U, kern, U.conj())
    return np.einsum("k,kac->ac", phases, mats) / (L * L)


def propagator_jump(model: HoppingModel, beta: float, x: tuple[int, int],
                    L: int | None = None) -> np.ndarray:
    """g(0+, x) - g(0-, x); equals delta_{x,0} * identity."""
    return (propagator(model, beta, 0.0, x, L, side="+")
            - propagator(model, beta, 0.0, x, L, side="-"))


def matsubara_propagator(model: HoppingModel, k0: float, k) -> np.ndarray:
    """g-hat(k0, k) = (-i k0 + H-hat(k) - mu)^{-1}."""
    H = bloch_hamiltonian_grid(model, np.asarray(k, float)[None, :])[0]
    nc = H.shape[0]
    M = -1j * k0 * np.eye(nc) + H - model.mu * np.eye(nc)
    try:
        return np.linalg.inv(M)
    except np.linalg.LinAlgError as e:
        raise GaplessError(f"singular Matsubara propagator at k0={k0}, k={k}") from e


def matsubara_frequencies(beta: float, kmax: float) -> np.ndarray:
    """Fermionic frequencies (2pi/beta)(Z + 1/2) with |k0| <= kmax."""
    n_max = int(np.floor(kmax * beta / (2 * np.pi) - 0.5))
    n = np.arange(-n_max - 1, n_max + 1)
    k0 = (2 * np.pi / beta) * (n + 0.5)
    return k0[np.abs(k0) <= kmax]


# ---------------------------------------------------------------------------
# single-scale decomposition
# ---------------------------------------------------------------------------

@dataclass
class ScalePropagator:
    """g^(h): frequency-shell slice of the cutoff propagator."""

    h: int
    beta: float
    L: int
    delta_mu: float
    k0: np.ndarray               # frequencies with f_h > 0
    f: np.ndarray                # shell weights f_h(k0)
    ghat: np.ndarray             # (n_k0, nk, nc, nc) Matsubara propagators
    kpts: np.ndarray
    spec: object

    def __call__(self, t: float, x: tuple[int, int]) -> np.ndarray:
        xv = self.spec.site_cartesian(x[0], x[1])
        ph_k = np.exp(-1j * (self.kpts @ xv))
        ph_t = np.exp(-1j * self.k0 * t)
        w = self.f * ph_t
        return np.einsum("w,k,wkab->ab", w, ph_k, self.ghat) / (self.beta * self.L ** 2)


def single_scale_decomposition(model: HoppingModel, beta: float, L: int, M: int,
                               policy: NumericPolicy | None = None) -> list[ScalePropagator]:
    """Scale propagators g^(h), h = 0..M, summing to the cutoff propagator."""
    pol = get_policy(policy)
    if M < 1:
        raise ModelValidationError("M >= 1 required")
    gap = spectral_gap(model, max(24, 4 * L))
    if gap.is_gapless(pol.gap_threshold):
        raise GaplessError(f"gapless model (delta_mu = {gap.value:g}): scales undefined")
    dmu = gap.value
    kpts = kgrid_cartesian(model.spec, L)
    H = bloch_hamiltonian_grid(model, kpts)
    nc = H.shape[-1]
    eye = np.eye(nc)
    out = []
    for h in range(M + 1):
        kmax = 2.0 ** (h + 1) * dmu
        k0 = matsubara_frequencies(beta, kmax)
        f = CHI0.shell(h, k0, dmu)
        keep = f > 0
        k0, f = k0[keep], f[keep]
        ghat = np.linalg.inv(-1j * k0[:, None, None, None] * eye
                             + (H - model.mu * eye)[None, :, :, :])
        out.append(ScalePropagator(h, beta, L, dmu, k0, f, ghat, kpts, model.spec))
    return out


def cutoff_propagator(model: HoppingModel, beta: float, L: int, M: int,
                      t: float, x: tuple[int, int],
                      policy: NumericPolicy | None = None) -> np.ndarray:
    """g-bar^{beta,L,M}(t,x): Matsubara sum cut off by chi0(2^-M k0/delta)."""
    pol = get_policy(policy)
    gap = spectral_gap(model, max(24, 4 * L))
    if gap.is_gapless(pol.gap_threshold):
        raise GaplessError("gapless model")
    dmu = gap.value
    kpts = kgrid_cartesian(model.spec, L)
    H = bloch_hamiltonian_grid(model, kpts)
    nc = H.shape[-1]
    eye = np.eye(nc)
    k0 = matsubara_frequencies(beta, 2.0 ** (M + 1) * dmu)
    w = CHI0(k0 / (2.0 ** M * dmu))
    keep = w > 0
    k0, w = k0[keep], w[keep]
    ghat = np.linalg.inv(-1j * k0[:, None, None, None] * eye
                         + (H - model.mu * eye)[None, :, :, :])
    xv = model.spec.site_cartesian(x[0], x[1])
    ph = np.exp(-1j * (kpts @ xv))
    ph_t = np.exp(-1j * k0 * t)
    return np.einsum("w,k,wkab->ab", w * ph_t, ph, ghat) / (beta * L * L)


# ---------------------------------------------------------------------------
# Gram factorization of g^(h)
# ---------------------------------------------------------------------------

@dataclass
class GramFactors:
    """Vectors A, B indexed by (frequency, k-point, color); their inner
    product <A_{h,x,s1}, B_{h,y,s2}> reproduces g^(h)_{s1 s2}(x - y)."""

    A: np.ndarray
    B: np.ndarray

    @property
    def norm_A_sq(self) -> float:
        return float(np.vdot(self.A, self.A).real)

    @property
    def norm_B_sq(self) -> float:
        return float(np.vdot(self.B, self.B).real)


def gram_factors(model: HoppingModel, beta: float, L: int, h: int,
                 x: tuple[int, int], sigma: str, t: float = 0.0,
                 scales: list[ScalePropagator] | None = None,
                 policy: NumericPolicy | None = None) -> GramFactors:
    """Gram pair for the space-time point (t, x) and color sigma on scale h.

    A[(k0,k),s'] = sqrt(f_h)/sqrt(beta L^2) e^{i(k.x + k0 t)} [ (k0^2 + (H-mu)^2)^-1 ]_{s' s}
    B[(k0,k),s'] = sqrt(f_h)/sqrt(beta L^2) e^{i(k.x + k0 t)} [ i k0 + H - mu ]_{s' s}

    <A_{h,(t,x),s1}, B_{h,(t',y),s2}> = g^(h)_{s1 s2}(t - t', x - y).
    """
    if scales is None:
        scales = single_scale_decomposition(model, beta, L, max(h, 1), policy)
    sc = scales[h]
    si = model.spec.color_index(sigma)
    kpts = sc.kpts
    H = bloch_hamiltonian_grid(model, kpts)
    nc = H.shape[-1]
    eye = np.eye(nc)
    Hm = H - model.mu * eye
    R = np.linalg.inv(sc.k0[:, None, None, None] ** 2 * eye + (Hm @ Hm)[None])
    S = 1j * sc.k0[:, None, None, None] * eye + Hm[None]
    xv = model.spec.site_cartesian(x[0], x[1])
    ph = np.exp(1j * (kpts @ xv))[None, :] * np.exp(1j * sc.k0 * t)[:, None]
    w = np.sqrt(sc.f / (beta * L * L))
    A = (w[:, None] * ph)[:, :, None] * R[:, :, :, si]
    B = (w[:, None] * ph)[:, :, None] * S[:, :, :, si]
    return GramFactors(A.ravel(), B.ravel())


def gram_inner(A: GramFactors, B: GramFactors) -> complex:
    """<A_1, B_2> = sum conj(A_1) B_2 over (frequency, k, color) modes."""
    return complex(np.vdot(A.A, B.B))
