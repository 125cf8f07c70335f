"""Berry curvature, Chern numbers and the non-interacting conductivity.

The Chern number uses the gauge-invariant plaquette (link-variable) method
over filled-band frames, which returns exact integers at finite grids.  The
conductivity integrates Tr P [d1 P, d2 P] with Richardson-extrapolated
symmetric finite differences of the Fermi projector.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import GaplessError
from .lattice import MomentumPoint, kgrid_cartesian, reciprocal_basis
from .model import (HoppingModel, bloch_hamiltonian_grid, fermi_projector_grid,
                    haldane_hubbard, haldane_masses, haldane_model, spectral_gap)
from .policy import NumericPolicy, get_policy


@dataclass(frozen=True)
class ChernResult:
    chern: int
    curvature_grid: dict          # MomentumPoint -> plaquette curvature sample
    grid_size: int
    gap_at_grid: float
    residue: float                # |raw sum / 2pi - chern|, integrality check


def _filled_frames(model: HoppingModel, kpts: np.ndarray, mu: float,
                   atomic_gauge: bool = False) -> np.ndarray:
    """(nk, nc, nf) eigenvector frames of the filled bands.

    atomic_gauge conjugates H-hat(k) by diag(e^{i k.r_sigma}); the frames are
    then only quasi-periodic over the zone, so callers must evaluate wrapped
    points literally instead of reusing column 0.
    """
    H = bloch_hamiltonian_grid(model, kpts)
    if atomic_gauge:
        r = np.array([model.spec.displacement(c) for c in model.spec.colors])
        ph = np.exp(1j * (kpts @ r.T))                       # (nk, nc)
        H = ph[:, :, None] * H * ph.conj()[:, None, :]
    w, U = np.linalg.eigh(H)
    nf = int((w[0] < mu).sum())
    if not np.all((w < mu).sum(axis=1) == nf):
        raise GaplessError("number of filled bands varies over the grid")
    return U[:, :, :nf]


def chern_number(model: HoppingModel, mu: float | None = None, grid_size: int = 24,
                 policy: NumericPolicy | None = None,
                 atomic_gauge: bool = False) -> ChernResult:
    """Integer Chern number of the filled bands on an N x N plaquette grid."""
    pol = get_policy(policy)
    mu = model.mu if mu is None else mu
    work = model if mu == model.mu else HoppingModel(
        model.spec, model.hoppings, model.interactions, dict(model.onsite), mu, model.u)
    gap = spectral_gap(work, max(grid_size, 24))
    if gap.is_gapless(pol.gap_threshold):
        raise GaplessError(f"gap condition violated: delta_mu = {gap.value:g} "
                           f"at k = {gap.k_min}")
    N = grid_size
    G1, G2 = reciprocal_basis(model.spec)
    if atomic_gauge:
        # literal evaluation of the wrapped row/column (frames quasi-periodic)
        i, j = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="ij")
        kpts = (i.ravel()[:, None] / N) * G1 + (j.ravel()[:, None] / N) * G2
        F = _filled_frames(work, kpts, mu, atomic_gauge=True)
        F = F.reshape(N + 1, N + 1, F.shape[1], F.shape[2])
        F00 = F[:N, :N]
        F10 = F[1:, :N]
        F11 = F[1:, 1:]
        F01 = F[:N, 1:]
    else:
        kpts = kgrid_cartesian(model.spec, N)
        F = _filled_frames(work, kpts, mu)
        F = F.reshape(N, N, F.shape[1], F.shape[2])
        F00 = F
        F10 = np.roll(F, -1, axis=0)
        F01 = np.roll(F, -1, axis=1)
        F11 = np.roll(F10, -1, axis=1)

    def links(A, B):
        return np.linalg.det(np.einsum("ijab,ijac->ijbc", A.conj(), B))

    u1 = links(F00, F10)
    u2 = links(F10, F11)
    u3 = links(F11, F01)
    u4 = links(F01, F00)
    # loop orientation chosen so the total matches i/(2pi) * Int Tr P [d1P, d2P]
    angles = -np.angle(u1 * u2 * u3 * u4)
    total = angles.sum() / (2.0 * np.pi)
    chern = int(np.rint(total))
    residue = abs(total - chern)
    if residue > 1e-8:
        raise GaplessError(f"plaquette sum {total} not an integer (residue {residue:g}); "
                           "grid too coarse for this gap")
    cell = model.spec.cell_area * (N / (2 * np.pi)) ** 2  # plaquette area in k-space
    curv = {}
    for a in range(N):
        for b in range(N):
            k = (a / N) * G1 + (b / N) * G2
            curv[MomentumPoint(a, b, (k[0], k[1]))] = float(angles[a, b] * cell)
    return ChernResult(chern, curv, N, gap.value, residue)


def noninteracting_sigma(model: HoppingModel, mu: float | None = None,
                         grid_size: int = 200,
                         policy: NumericPolicy | None = None) -> np.ndarray:
    """2x2 conductivity matrix i/(2pi)^2 Int dk Tr P [d_i P, d_j P].

    Projector derivatives: symmetric differences with step h = spacing/2,
    Richardson-extrapolated once (fourth order).
    """
    pol = get_policy(policy)
    mu = model.mu if mu is None else mu
    work = model if mu == model.mu else HoppingModel(
        model.spec, model.hoppings, model.interactions, dict(model.onsite), mu, model.u)
    gap = spectral_gap(work, max(grid_size // 4, 24))
    if gap.is_gapless(pol.gap_threshold):
        raise GaplessError(f"gap condition violated: delta_mu = {gap.value:g}")
    N = grid_size
    G1, G2 = reciprocal_basis(model.spec)
    spacing = min(np.linalg.norm(G1), np.linalg.norm(G2)) / N
    h = spacing / 2.0
    kpts = kgrid_cartesian(model.spec, N)

    def dproj(axis: int, step: float) -> np.ndarray:
        e = np.zeros(2)
        e[axis] = step
        return (fermi_projector_grid(work, kpts + e, pol)
                - fermi_projector_grid(work, kpts - e, pol)) / (2.0 * step)

    P = fermi_projector_grid(work, kpts, pol)
    dP = []
    for axis in (0, 1):
        d_h = dproj(axis, h)
        d_h2 = dproj(axis, h / 2.0)
        dP.append((4.0 * d_h2 - d_h) / 3.0)
    sigma = np.zeros((2, 2))
    A = model.spec.cell_area
    for i in range(2):
        for j in range(2):
            comm = dP[i] @ dP[j] - dP[j] @ dP[i]
            val = 1j * np.einsum("kab,kba->", P, comm) / (N * N) / A
            sigma[i, j] = val.real
            if abs(val.imag) > 1e-8:
                raise RuntimeError(f"sigma[{i}{j}] has imaginary part {val.imag:g}")
    return sigma


# ---------------------------------------------------------------------------
# Haldane phase diagram
# ---------------------------------------------------------------------------

PHASE_DIAGRAM_HEADER = ["phi", "W", "m_plus", "m_minus", "chern_analytic",
                        "chern_numeric", "gap", "flag"]


def haldane_phase_diagram(t1: float, t2: float, phi_grid, W_grid,
                          grid_size: int = 24, mu: float = 0.0,
                          delta_crit: float | None = None,
                          policy: NumericPolicy | None = None) -> list[dict]:
    """Rows (phi, W, m_+, m_-, analytic chern, numeric chern, gap, flag).

    Points with min(|m_+|, |m_-|) <= delta_crit are marked near-critical and
    carry no numeric Chern number; they are excluded from agreement checks.
    """
    pol = get_policy(policy)
    if delta_crit is None:
        delta_crit = (pol.near_critical_width if pol.near_critical_width is not None
                      else 0.05 * 3.0 * np.sqrt(3.0) * t2)
    rows = []
    for phi in np.asarray(phi_grid, float):
        for W in np.asarray(W_grid, float):
            mp, mm = haldane_masses(t2, phi, W)
            ana = int(np.rint(0.5 * (np.sign(mm) - np.sign(mp))))
            row = {"phi": float(phi), "W": float(W), "m_plus": mp, "m_minus": mm,
                   "chern_analytic": ana, "chern_numeric": None,
                   "gap": None, "flag": ""}
            if min(abs(mp), abs(mm)) <= delta_crit:
                row["flag"] = "near-critical"
            else:
                mod = haldane_model(t1, t2, phi, W, L=2, mu=mu)
                try:
                    res = chern_number(mod, mu, grid_size, pol)
                    row["chern_numeric"] = res.chern
                    row["gap"] = res.gap_at_grid
                except GaplessError:
                    row["flag"] = "near-critical"
            rows.append(row)
    return rows


def phase_diagram_csv(rows: list[dict], policy: NumericPolicy | None = None) -> str:
    pol = get_policy(policy)
    buf = io.StringIO()
    buf.write(f"# policy: {pol.as_json()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PHASE_DIAGRAM_HEADER)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in PHASE_DIAGRAM_HEADER])
    return buf.getvalue()


def phase_diagram_json(rows: list[dict], policy: NumericPolicy | None = None) -> str:
    pol = get_policy(policy)
    return json.dumps({"policy": pol.as_dict(), "rows": rows}, sort_keys=True)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)
