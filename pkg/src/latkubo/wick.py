"""Connected Wick pairings of free-fermion observables and the first-order
current-current kernel.

Two evaluators:
  * truncated_wick: generic pairing enumeration over <= 5 small monomials,
    with the connectivity filter on the monomial graph (interaction edges
    included by grouping a density pair into one monomial).
  * fermion-loop cumulants for quadratic observables (single-loop traces),
    used by the first-order kernel; equivalence with truncated_wick is
    covered by tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .errors import GuardError
from .fock import (current_terms, hamiltonian_terms, interaction_matrix,
                   momentum_current_terms, single_particle_matrix)
from .lattice import torus_difference
from .model import HoppingModel, spectral_gap
from .policy import NumericPolicy, get_policy
from .propagator import propagator


# ---------------------------------------------------------------------------
# generic pairing enumeration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Field:
    dagger: bool
    t: float
    site: tuple[int, int]
    color: str


@dataclass(frozen=True)
class Monomial:
    """Product of fermion fields, kept normal-ordered within equal times."""

    fields: tuple[Field, ...]


def density_monomial(t: float, site: tuple[int, int], color: str) -> Monomial:
    return Monomial((Field(True, t, site, color), Field(False, t, site, color)))


def density_pair_monomial(t: float, site1, color1, site2, color2) -> Monomial:
    """n_{site1} n_{site2} at equal time; one monomial, so the connectivity
    graph carries the interaction edge implicitly."""
    return Monomial((Field(True, t, site1, color1), Field(False, t, site1, color1),
                     Field(True, t, site2, color2), Field(False, t, site2, color2)))


def bond_current_observable(model: HoppingModel, t: float, x, y, s: str, sps: str,
                            L: int) -> list[tuple[complex, Monomial]]:
    """J_xy as a linear combination of quadratic monomials."""
    amp = sum((tt for d, ss, ssp, tt in model.hoppings
               if ss == s and ssp == sps
               and (x[0] - d[0]) % L == y[0] % L and (x[1] - d[1]) % L == y[1] % L),
              start=0.0 + 0.0j)
    fwd = Monomial((Field(True, t, tuple(x), s), Field(False, t, tuple(y), sps)))
    bwd = Monomial((Field(True, t, tuple(y), sps), Field(False, t, tuple(x), s)))
    return [(1j * amp, fwd), (-1j * np.conj(amp), bwd)]


class _UnionFind:
    def __init__(self, n):
        self.p = list(range(n))

    def find(self, i):
        while self.p[i] != i:
            self.p[i] = self.p[self.p[i]]
            i = self.p[i]
        return i

    def union(self, i, j):
        self.p[self.find(i)] = self.find(j)


def _pairings(ann: list[int], cre: list[int]):
    """All bijections annihilator -> creator, recursing on the leftmost
    unpaired annihilation operator."""
    if not ann:
        yield []
        return
    a0 = ann[0]
    for m, c in enumerate(cre):
        rest = cre[:m] + cre[m + 1:]
        for tail in _pairings(ann[1:], rest):
            yield [(a0, c)] + tail


def _pairing_sign(pairs: list[tuple[int, int]]) -> int:
    """Parity of the permutation arranging the operator string into
    (a1, c1, a2, c2, ...) with annihilators in ascending position order."""
    seq = []
    for a, c in sorted(pairs):
        seq.extend((a, c))
    inv = 0
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                inv += 1
    return -1 if inv % 2 else 1


def truncated_wick(observables, model: HoppingModel, beta: float, L: int,
                   policy: NumericPolicy | None = None) -> complex:
    """Truncated (cumulant) free-fermion expectation of the time-ordered
    product of observables.

    Each observable is a Monomial or a list of (coefficient, Monomial);
    connectivity is decided on the graph whose vertices are the monomials.
    """
    pol = get_policy(policy)
    obs = [[(1.0 + 0.0j, o)] if isinstance(o, Monomial) else list(o) for o in observables]
    if len(obs) > pol.wick_max_monomials:
        raise GuardError(f"{len(obs)} monomials exceed the guard of "
                         f"{pol.wick_max_monomials}; split the evaluation")
    gcache: dict = {}

    def gval(fa: Field, fc: Field) -> complex:
        # <T psi-(a) psi+(c)> = g_{color_a, color_c}(t_a - t_c, x_a - x_c)
        key = (round(fa.t - fc.t, 14), (fa.site[0] - fc.site[0]) % L,
               (fa.site[1] - fc.site[1]) % L)
        if key not in gcache:
            gcache[key] = propagator(model, beta, fa.t - fc.t,
                                     (key[1], key[2]), L=L)
        ia = model.spec.color_index(fa.color)
        ic = model.spec.color_index(fc.color)
        return gcache[key][ia, ic]

    total = 0.0 + 0.0j
    idx = [0] * len(obs)
    while True:
        coef = 1.0 + 0.0j
        monos = []
        for m, choice in enumerate(idx):
            c, mono = obs[m][choice]
            coef *= c
            monos.append(mono)
        if coef != 0.0:
            total += coef * _connected_pairing_sum(monos, gval)
        # advance the multi-index
        for m in range(len(idx)):
            idx[m] += 1
            if idx[m] < len(obs[m]):
                break
            idx[m] = 0
        else:
            break
    return total


def _connected_pairing_sum(monos: list[Monomial], gval) -> complex:
    fields = []
    owner = []
    for m, mono in enumerate(monos):
        for f in mono.fields:
            fields.append(f)
            owner.append(m)
    ann = [i for i, f in enumerate(fields) if not f.dagger]
    cre = [i for i, f in enumerate(fields) if f.dagger]
    if len(ann) != len(cre):
        return 0.0
    total = 0.0 + 0.0j
    nm = len(monos)
    for pairing in _pairings(ann, cre):
        uf = _UnionFind(nm)
        for a, c in pairing:
            uf.union(owner[a], owner[c])
        root = uf.find(0)
        if any(uf.find(m) != root for m in range(nm)):
            continue
        val = _pairing_sign(pairing)
        for a, c in pairing:
            val *= gval(fields[a], fields[c])
            if val == 0.0:
                break
        total += val
    return total


# ---------------------------------------------------------------------------
# fermion-loop cumulants of quadratic observables (single-particle matrices)
# ---------------------------------------------------------------------------

class FreeTheory:
    """Mode-space free theory of a model on an L-torus: eigen-data and
    batched propagator matrices."""

    def __init__(self, model: HoppingModel, L: int):
        self.model = model
        self.L = L
        quad, _ = hamiltonian_terms(model, L)
        n = L * L * model.spec.n_colors
        self.n_modes = n
        self.H1 = single_particle_matrix(n, quad)
        w, U = np.linalg.eigh(self.H1)
        self.xi = w - model.mu
        self.U = U

    def fermi(self, beta: float) -> np.ndarray:
        x = np.clip(beta * self.xi, -700, 700)
        return 1.0 / (1.0 + np.exp(x))

    def g_batch(self, beta: float, times: np.ndarray) -> np.ndarray:
        """(nt, n, n) propagators g(t) in mode space; t = 0 is the 0- branch."""
        t = np.asarray(times, float)
        xi = self.xi
        absxi = np.abs(xi)
        denom = 1.0 + np.exp(-beta * absxi)
        pos = t[:, None] > 0
        tp = np.where(pos, t[:, None], 0.0)
        tm = np.where(pos, 0.0, t[:, None])
        kern_pos = np.where(xi >= 0, np.exp(-tp * absxi),
                            np.exp((beta - tp) * xi)) / denom
        kern_neg = -np.where(xi >= 0, np.exp(-(beta + tm) * xi),
                             np.exp(tm * absxi)) / denom
        kern = np.where(pos, kern_pos, kern_neg)
        return np.einsum("am,tm,bm->tab", self.U, kern, self.U.conj())

    def fermi_matrix(self, beta: float) -> np.ndarray:
        return np.einsum("am,m,bm->ab", self.U, self.fermi(beta), self.U.conj())


def loop_cumulant(mats: list[np.ndarray], times: list[float], theory: FreeTheory,
                  beta: float) -> complex:
    """Connected free cumulant of quadratic observables psi+ A_m psi- at the
    given times: minus the sum of single-loop traces over cyclic orders."""
    n = len(mats)
    if n == 1:
        return complex(np.trace(mats[0] @ theory.fermi_matrix(beta)))
    total = 0.0 + 0.0j
    rest = list(range(1, n))
    for perm in permutations(rest):
        order = (0,) + perm
        prod = None
        for m in range(n):
            a, b = order[m], order[(m + 1) % n]
            g = theory.g_batch(beta, np.array([times[a] - times[b]]))[0]
            step = mats[a] @ g
            prod = step if prod is None else prod @ step
        total += np.trace(prod)
    return -total


# ---------------------------------------------------------------------------
# free two-point correlator (momentum-space bubble)
# ---------------------------------------------------------------------------

def _bubble_weight(xi: np.ndarray, beta: float, omega: float) -> np.ndarray:
    """Exact integral int_0^beta e^{-i w s} <T ...>: (f_g - f_a)/(xi_a - xi_g - i w)
    with the smooth beta f(1-f) limit on coincidences at w = 0."""
    f = 1.0 / (1.0 + np.exp(np.clip(beta * xi, -700, 700)))
    d = xi[:, None] - xi[None, :]
    if omega == 0.0:
        small = np.abs(d) < 1e-12
        ratio = np.where(small, beta * (f * (1 - f))[:, None],
                         (f[None, :] - f[:, None]) / np.where(small, 1.0, d))
        return ratio
    return (f[None, :] - f[:, None]) / (d - 1j * omega)


def free_momentum_correlator(model: HoppingModel, L: int, beta: float,
                             alpha1, alpha2, omega: float, p,
                             theory: FreeTheory | None = None) -> complex:
    """K-hat_{a1 a2}(omega, p) at U = 0 from the Wick bubble,
    (1/L^2) sum_{a,g} A_{ag} B_{ga} (f_g - f_a)/(xi_a - xi_g - i omega)."""
    th = FreeTheory(model, L) if theory is None else theory
    pv = np.asarray(p, float) if not hasattr(p, "vec") else p.vec
    A = single_particle_matrix(th.n_modes, momentum_current_terms(model, L, alpha1, pv))
    B = single_particle_matrix(th.n_modes, momentum_current_terms(model, L, alpha2, -pv))
    At = th.U.conj().T @ A @ th.U
    Bt = th.U.conj().T @ B @ th.U
    T = _bubble_weight(th.xi, beta, omega)
    return complex((At * Bt.T * T).sum() / (L * L))


def free_sigma_zero_t(model: HoppingModel, L: int) -> np.ndarray:
    """Zero-temperature sigma-bar at U = 0 on the L-torus (exact derivative of
    the ground-state Lehmann function in the mode basis)."""
    th = FreeTheory(model, L)
    occ = th.xi < 0
    Vt = [th.U.conj().T @ single_particle_matrix(
        th.n_modes, current_terms(model, L, i)) @ th.U for i in range(2)]
    d = th.xi[:, None] - th.xi[None, :]
    cross = occ[:, None] & ~occ[None, :]
    w = np.where(cross, 1.0 / np.where(cross, d, 1.0) ** 2, 0.0)
    A = model.spec.cell_area
    sig = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            # sum over (filled a, empty g): J_i[a,g] J_j[g,a] / (xi_a - xi_g)^2
            s = 1j * ((Vt[i] * Vt[j].T - Vt[j] * Vt[i].T) * w).sum() / (A * L * L)
            sig[i, j] = s.real
    return sig


# ---------------------------------------------------------------------------
# first-order kernel K^(1) and sigma^(1)
# ---------------------------------------------------------------------------

def _panel_edges(beta: float, scale: float, max_panels: int = 10) -> np.ndarray:
    """Graded panel edges on [0, beta], refined toward both endpoints."""
    h = min(scale, beta / 8.0)
    pts = [0.0]
    step = h
    while pts[-1] + step < beta / 2.0 and len(pts) < max_panels:
        pts.append(pts[-1] + step)
        step *= 2.0
    lower = np.array(pts)
    upper = beta - lower[::-1]
    return np.unique(np.concatenate([lower, [beta / 2.0], upper]))


def _triangle_nodes(x0, x1, y0, y1, rule, lower: bool):
    """Duffy-mapped tensor nodes on one triangle of the cell [x0,x1]x[y0,y1];
    lower: s2 <= s1 part (the collapse corner sits on the diagonal)."""
    u, wu = rule
    v, wv = rule
    U, V = np.meshgrid(u, v, indexing="ij")
    WU, WV = np.meshgrid(wu, wv, indexing="ij")
    dx, dy = x1 - x0, y1 - y0
    if lower:
        s1 = x0 + U * dx
        s2 = y0 + (U * V) * dy
        w = WU * WV * U * dx * dy
    else:
        s2 = y0 + V * dy
        s1 = x0 + (U * V) * dx
        w = WU * WV * V * dx * dy
    return s1.ravel(), s2.ravel(), w.ravel()


def _square_nodes(x0, x1, y0, y1, rule):
    u, wu = rule
    s1 = x0 + u * (x1 - x0)
    s2 = y0 + u * (y1 - y0)
    S1, S2 = np.meshgrid(s1, s2, indexing="ij")
    W = np.outer(wu, wu) * (x1 - x0) * (y1 - y0)
    return S1.ravel(), S2.ravel(), W.ravel()


def _quad_nodes(beta: float, scale: float, order: int = 12):
    """Nodes and weights for int_0^beta int_0^beta, panels split along the
    diagonal kink s1 = s2."""
    x, w = np.polynomial.legendre.leggauss(order)
    rule = (0.5 * (x + 1.0), 0.5 * w)
    edges = _panel_edges(beta, scale)
    S1, S2, W = [], [], []
    for a0, a1 in zip(edges[:-1], edges[1:]):
        for b0, b1 in zip(edges[:-1], edges[1:]):
            if a1 <= b0 or b1 <= a0:      # entirely off-diagonal
                s1, s2, ww = _square_nodes(a0, a1, b0, b1, rule)
                S1.append(s1), S2.append(s2), W.append(ww)
            else:                          # diagonal cell: two triangles
                for lower in (True, False):
                    s1, s2, ww = _triangle_nodes(a0, a1, b0, b1, rule, lower)
                    S1.append(s1), S2.append(s2), W.append(ww)
    return np.concatenate(S1), np.concatenate(S2), np.concatenate(W)


def first_order_kernel(model: HoppingModel, beta: float, L: int,
                       omegas, i: int = 0, j: int = 1, order: int = 12,
                       policy: NumericPolicy | None = None) -> np.ndarray:
    """K^{beta,L,(1)}_{ij}(omega, 0) for each omega: the connected-Wick
    three-point kernel with one interaction insertion, time-integrated
    numerically.  Returns an array over omegas.

    The expansion convention is K-hat = sum_k (-U)^k/k! K^(k), so
    K^(1) = -d K-hat / dU at U = 0.
    """
    pol = get_policy(policy)
    if L > pol.pert_max_L:
        raise GuardError(f"L = {L} exceeds perturbative guard {pol.pert_max_L}")
    if beta > pol.pert_max_beta:
        raise GuardError(f"beta = {beta} exceeds perturbative guard {pol.pert_max_beta}")
    th = FreeTheory(model, L)
    gap = spectral_gap(model, max(24, 4 * L))
    scale = 1.0 / max(gap.value, 1e-3)
    P = single_particle_matrix(th.n_modes, current_terms(model, L, i))
    Q = single_particle_matrix(th.n_modes, current_terms(model, L, j))
    vmat = interaction_matrix(model, L)
    F = th.fermi_matrix(beta)
    g0 = -F
    fdiag = np.diagonal(F).real.copy()
    S1, S2, W = _quad_nodes(beta, scale, order)
    omegas = np.asarray(omegas, float)
    out = np.zeros(len(omegas), complex)
    # batch over node blocks to bound memory
    block = 4096
    for lo in range(0, len(S1), block):
        s1 = S1[lo:lo + block]
        s2 = S2[lo:lo + block]
        ww = W[lo:lo + block]
        G1p = th.g_batch(beta, s1)
        G1m = th.g_batch(beta, -s1)
        G2p = th.g_batch(beta, s2)
        G2m = th.g_batch(beta, -s2)
        G12 = th.g_batch(beta, s1 - s2)
        G21 = th.g_batch(beta, s2 - s1)
        X1 = G1m @ P @ G12 @ Q @ G2p
        U1 = G1m @ P @ G1p
        U2 = G2m @ Q @ G2p
        Y1 = G2m @ Q @ G21 @ P @ G1p
        # kappa4 with the two densities of the insertion in the loop
        s_a = np.einsum("ab,nba,ab->n", vmat, X1, g0)
        s_c = np.einsum("ab,nba,nab->n", vmat, U1, U2)
        s_e = np.einsum("ab,nba,ab->n", vmat, Y1, g0)
        piece_a = -2.0 * (s_a + s_c + s_e)
        # kappa2 x kappa2 through the interaction edge
        ui = -np.einsum("naa->na", U1)
        uj = -np.einsum("naa->na", U2)
        piece_b = 2.0 * np.einsum("na,ab,nb->n", ui, vmat, uj)
        # kappa3 x tadpole
        wvec = -(np.einsum("naa->na", X1) + np.einsum("naa->na", Y1))
        piece_c = 2.0 * np.einsum("na,ab,b->n", wvec, vmat, fdiag)
        kern = piece_a + piece_b + piece_c
        phase = np.exp(-1j * np.outer(omegas, s1 - s2))
        out += phase @ (ww * kern)
    return out / (L * L)


def perturbative_sigma_first_order(model: HoppingModel, beta: float, L: int,
                                   omega_list=None, order: int = 12,
                                   policy: NumericPolicy | None = None) -> dict:
    """sigma-bar^(1)_12 estimate from the first-order kernel.

    Fits [K^(1)(w) - K^(1)(0)]/w over the smallest bosonic frequencies by a
    quadratic and returns the w -> 0 intercept with an error bar from the
    spread between the 3- and 4-frequency fits.
    """
    if omega_list is None:
        omega_list = [2 * np.pi * n / beta for n in (1, 2, 3, 4)]
    omegas = np.asarray(omega_list, float)
    vals = first_order_kernel(model, beta, L, np.concatenate([[0.0], omegas]),
                              order=order, policy=policy)
    k0, kw = vals[0], vals[1:]
    # K_12(w, 0) is real for Hermitian currents; imaginary residue is
    # quadrature noise and is reported as a diagnostic
    slopes = ((kw - k0) / omegas).real
    A = model.spec.cell_area
    fit3 = np.polyfit(omegas[:3], slopes[:3], 2)[-1]
    fit_all = np.polyfit(omegas, slopes, 2)[-1] if len(omegas) > 3 else fit3
    est = -(1.0 / A) * fit_all
    err = abs(fit_all - fit3) / A + abs(kw.imag).max() / A
    return {"sigma1_12": float(est), "error": float(err), "kernel0": k0,
            "kernel": dict(zip(map(float, omegas), kw))}
