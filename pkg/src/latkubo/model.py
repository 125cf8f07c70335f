"""Tight-binding + density-density interaction models, Bloch Hamiltonian,
bands, gap and Fermi projector; Haldane-model constructors; JSON ingestion.

Stencils are finite-range and stored per displacement coefficient pair.  A
hopping entry (d, s, s', t) contributes  t * psi+_{x,s} psi-_{x-d,s'}  for
every cell x, i.e. H_{ss'}(d) = t in  H = sum_{x,y} psi+_x H(x-y) psi-_y.
Staggered / on-site potentials live in a separate `onsite` field because
H_{ss}(0) = 0 is enforced for the hopping stencil proper.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import FermiLevelOnBandError, GaplessError, ModelValidationError
from .lattice import LatticeSpec, kgrid_cartesian, reciprocal_basis
from .policy import NumericPolicy, get_policy

Hop = tuple[tuple[int, int], str, str, complex]
Pair = tuple[tuple[int, int], str, str, float]


@dataclass(frozen=True)
class HoppingModel:
    """Hamiltonian data: hopping stencil, interaction stencil, mu, U."""

    spec: LatticeSpec
    hoppings: tuple[Hop, ...]
    interactions: tuple[Pair, ...] = ()
    onsite: dict[str, float] = field(default_factory=dict)
    mu: float = 0.0
    u: float = 0.0

    def __post_init__(self):
        validate_model(self)

    @property
    def n_colors(self) -> int:
        return self.spec.n_colors

    def stencil_radius(self) -> int:
        r = 0
        for d, *_ in list(self.hoppings) + list(self.interactions):
            r = max(r, abs(d[0]), abs(d[1]))
        return r

    def with_u(self, u: float) -> "HoppingModel":
        return HoppingModel(self.spec, self.hoppings, self.interactions,
                            dict(self.onsite), self.mu, u)


def validate_model(model: HoppingModel) -> None:
    """Check Hermiticity, on-site and interaction symmetry; report the first
    violated invariant with the offending entry."""
    seen: dict[tuple, complex] = {}
    for d, s, sp, amp in model.hoppings:
        if s not in model.spec.colors or sp not in model.spec.colors:
            raise ModelValidationError(f"hopping {d, s, sp} uses unknown color")
        if d == (0, 0) and s == sp:
            raise ModelValidationError(
                f"on-site same-color hopping forbidden: {(d, s, sp, amp)}; use the onsite field")
        key = (d, s, sp)
        seen[key] = seen.get(key, 0.0) + complex(amp)
    for (d, s, sp), amp in seen.items():
        partner = ((-d[0], -d[1]), sp, s)
        if partner not in seen or abs(np.conj(seen[partner]) - amp) > 1e-12:
            raise ModelValidationError(
                f"hopping stencil not Hermitian: entry {(d, s, sp)}={amp} lacks "
                f"conjugate partner {partner}")
    vseen: dict[tuple, float] = {}
    for d, s, sp, v in model.interactions:
        if s not in model.spec.colors or sp not in model.spec.colors:
            raise ModelValidationError(f"interaction {d, s, sp} uses unknown color")
        if d == (0, 0) and s == sp:
            raise ModelValidationError(f"v_ss(0) must vanish, got {(d, s, sp, v)}")
        if abs(float(v) - v) > 0:
            raise ModelValidationError(f"interaction strength must be real: {(d, s, sp, v)}")
        vseen[(d, s, sp)] = vseen.get((d, s, sp), 0.0) + float(v)
    for (d, s, sp), v in vseen.items():
        partner = ((-d[0], -d[1]), sp, s)
        if partner not in vseen or abs(vseen[partner] - v) > 1e-12:
            raise ModelValidationError(
                f"interaction not symmetric: entry {(d, s, sp)}={v} lacks partner {partner}")
    for c, w in model.onsite.items():
        if c not in model.spec.colors:
            raise ModelValidationError(f"onsite potential for unknown color {c!r}")
        if abs(complex(w).imag) > 0:
            raise ModelValidationError(f"onsite potential must be real, got {c}={w}")


# ---------------------------------------------------------------------------
# Bloch Hamiltonian and spectra
# ---------------------------------------------------------------------------

def _stencil_arrays(model: HoppingModel):
    """(d_cart[nt,2], si[nt], sj[nt], amp[nt]) plus onsite diagonal."""
    spec = model.spec
    e1, e2 = spec.basis
    nt = len(model.hoppings)
    dc = np.zeros((nt, 2))
    si = np.zeros(nt, dtype=int)
    sj = np.zeros(nt, dtype=int)
    amp = np.zeros(nt, dtype=complex)
    for m, (d, s, sp, t) in enumerate(model.hoppings):
        dc[m] = d[0] * e1 + d[1] * e2
        si[m] = spec.color_index(s)
        sj[m] = spec.color_index(sp)
        amp[m] = t
    diag = np.array([model.onsite.get(c, 0.0) for c in spec.colors], float)
    return dc, si, sj, amp, diag


def bloch_hamiltonian(model: HoppingModel, k, policy: NumericPolicy | None = None) -> np.ndarray:
    """H-hat(k) = sum_x e^{i k.x} H(x), Hermitian |I| x |I| matrix."""
    return bloch_hamiltonian_grid(model, np.asarray(k, float)[None, :], policy)[0]


def bloch_hamiltonian_grid(model: HoppingModel, kpts: np.ndarray,
                           policy: NumericPolicy | None = None) -> np.ndarray:
    """Vectorized Bloch Hamiltonians, shape (nk, nc, nc)."""
    pol = get_policy(policy)
    nc = model.n_colors
    kpts = np.asarray(kpts, float)
    dc, si, sj, amp, diag = _stencil_arrays(model)
    out = np.zeros((len(kpts), nc, nc), complex)
    if len(amp):
        phases = np.exp(1j * (kpts @ dc.T)) * amp          # (nk, nt)
        np.add.at(out, (slice(None), si, sj), phases)
    out[:, np.arange(nc), np.arange(nc)] += diag
    herm = np.abs(out - out.conj().transpose(0, 2, 1)).max() if len(kpts) else 0.0
    if herm > pol.herm_tol:
        raise ModelValidationError(f"Bloch Hamiltonian not Hermitian (residual {herm:g})")
    return out


def bands(model: HoppingModel, k) -> np.ndarray:
    """Eigenvalues of H-hat(k), ascending."""
    return np.linalg.eigvalsh(bloch_hamiltonian(model, k))


def bands_grid(model: HoppingModel, kpts: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh(bloch_hamiltonian_grid(model, kpts))


@dataclass(frozen=True)
class BlochData:
    """Per-k Hamiltonian, bands and Fermi projector."""

    k: tuple[float, float]
    matrix: np.ndarray
    bands: np.ndarray
    projector: np.ndarray


@dataclass(frozen=True)
class SpectralGap:
    """Minimal distance of mu to the Bloch spectrum over a k-grid."""

    value: float
    k_min: tuple[float, float]
    grid_size: int

    def __float__(self) -> float:
        return float(self.value)

    def is_gapless(self, threshold: float) -> bool:
        return self.value < threshold


def spectral_gap(model: HoppingModel, grid_size: int = 32,
                 policy: NumericPolicy | None = None) -> SpectralGap:
    """min over the grid of dist(mu, spec(H-hat(k))), with the minimizing k."""
    if grid_size < 8:
        raise ModelValidationError("spectral_gap needs grid_size >= 8")
    kpts = kgrid_cartesian(model.spec, grid_size)
    eps = bands_grid(model, kpts)
    dist = np.abs(eps - model.mu).min(axis=1)
    i = int(dist.argmin())
    return SpectralGap(float(dist[i]), (kpts[i, 0], kpts[i, 1]), grid_size)


def fermi_projector(model: HoppingModel, k, policy: NumericPolicy | None = None) -> np.ndarray:
    """Projector onto bands strictly below mu; errors if mu sits on a band."""
    pol = get_policy(policy)
    H = bloch_hamiltonian(model, k)
    w, U = np.linalg.eigh(H)
    if np.abs(w - model.mu).min() < pol.fermi_level_tol:
        raise FermiLevelOnBandError(
            f"Fermi level on a band at k={tuple(np.asarray(k))}: min dist "
            f"{np.abs(w - model.mu).min():g}")
    V = U[:, w < model.mu]
    return V @ V.conj().T


def fermi_projector_grid(model: HoppingModel, kpts: np.ndarray,
                         policy: NumericPolicy | None = None) -> np.ndarray:
    """Batched Fermi projectors, shape (nk, nc, nc)."""
    pol = get_policy(policy)
    w, U = np.linalg.eigh(bloch_hamiltonian_grid(model, kpts))
    if np.abs(w - model.mu).min() < pol.fermi_level_tol:
        raise FermiLevelOnBandError("Fermi level on a band inside the grid")
    filled = (w < model.mu)[:, None, :]
    Uf = np.where(filled, U, 0.0)
    return Uf @ Uf.conj().transpose(0, 2, 1)


def energy_scale(model: HoppingModel, grid_size: int = 32) -> float:
    """max over the grid of the operator norm of H-hat(k)."""
    eps = bands_grid(model, kgrid_cartesian(model.spec, grid_size))
    return float(np.abs(eps).max()) if eps.size else 0.0


# ---------------------------------------------------------------------------
# Haldane model
# ---------------------------------------------------------------------------

def haldane_lattice(L: int) -> LatticeSpec:
    s3 = np.sqrt(3.0)
    return LatticeSpec(
        ell1=(1.5, -s3 / 2), ell2=(1.5, s3 / 2), L=L,
        colors=("A", "B"),
        displacements={"A": (0.0, 0.0), "B": (1.0, 0.0)},
    )


def haldane_model(t1: float, t2: float, phi: float, W: float, L: int = 2,
                  mu: float = 0.0) -> HoppingModel:
    """Honeycomb model: NN t1 hops A<->B, NNN t2 e^{+-i phi} along the
    gamma vectors, staggered +-W on-site."""
    if t1 <= 0:
        raise ModelValidationError(f"t1 must be positive, got {t1}")
    if t2 < 0:
        raise ModelValidationError(f"t2 must be nonnegative, got {t2}")
    if t2 > 0 and t2 / t1 >= 1.0 / 3.0:
        warnings.warn(f"t2/t1 = {t2 / t1:.3f} >= 1/3: bands may overlap", stacklevel=2)
    hops: list[Hop] = []
    # NN: -t1 psi+_{x,A} psi-_{y,B} for y in {x, x-l1, x-l2} -> d in {(0,0),(1,0),(0,1)}
    for d in [(0, 0), (1, 0), (0, 1)]:
        hops.append((d, "A", "B", -t1))
        hops.append(((-d[0], -d[1]), "B", "A", -t1))
    # NNN: -t2 e^{i a phi} psi+_{x,A} psi-_{x + a g_j, A}  -> d = -a*g_j
    gammas = [(1, -1), (0, 1), (-1, 0)]   # g1 = l1 - l2, g2 = l2, g3 = -l1
    for g in gammas:
        for a in (1, -1):
            d = (-a * g[0], -a * g[1])
            hops.append((d, "A", "A", -t2 * np.exp(1j * a * phi)))
            hops.append((d, "B", "B", -t2 * np.exp(-1j * a * phi)))
    return HoppingModel(
        spec=haldane_lattice(L), hoppings=tuple(hops),
        onsite={"A": +W, "B": -W}, mu=mu, u=0.0,
    )


def haldane_hubbard(t1: float, t2: float, phi: float, W: float, L: int = 2,
                    mu: float = 0.0, U: float = 0.0) -> HoppingModel:
    """Haldane model plus nearest-neighbor density-density coupling U*v,
    v = 1 on every A-B bond."""
    base = haldane_model(t1, t2, phi, W, L, mu)
    inter: list[Pair] = []
    for d in [(0, 0), (1, 0), (0, 1)]:
        inter.append((d, "A", "B", 1.0))
        inter.append(((-d[0], -d[1]), "B", "A", 1.0))
    return HoppingModel(base.spec, base.hoppings, tuple(inter), dict(base.onsite), mu, U)


def haldane_masses(t2: float, phi: float, W: float) -> tuple[float, float]:
    """m_omega = W + omega * 3 sqrt(3) t2 sin(phi) at the two Fermi points."""
    m = 3.0 * np.sqrt(3.0) * t2 * np.sin(phi)
    return W + m, W - m


# ---------------------------------------------------------------------------
# JSON model files
# ---------------------------------------------------------------------------

def model_from_dict(doc: dict, strict: bool = False) -> HoppingModel:
    """Build and validate a model from the JSON document schema.

    Hermitian partners of hoppings (and symmetric partners of interactions)
    may be omitted and are auto-completed unless strict=True.
    """
    try:
        basis = doc["basis"]
        L = int(doc["L"])
        colors = tuple(doc["colors"])
        disp = {c: tuple(map(float, v)) for c, v in doc["displacements"].items()}
    except KeyError as e:
        raise ModelValidationError(f"model document missing field {e}") from e
    spec = LatticeSpec(tuple(map(float, basis[0])), tuple(map(float, basis[1])),
                       L, colors, disp)
    hops: dict[tuple, complex] = {}
    for h in doc.get("hoppings", []):
        key = ((int(h["d"][0]), int(h["d"][1])), str(h["from"]), str(h["to"]))
        hops[key] = hops.get(key, 0.0) + complex(float(h.get("re", 0.0)), float(h.get("im", 0.0)))
    if not strict:
        for (d, s, sp), t in list(hops.items()):
            pk = ((-d[0], -d[1]), sp, s)
            if pk not in hops:
                hops[pk] = np.conj(t)
    inters: dict[tuple, float] = {}
    for h in doc.get("interactions", []):
        key = ((int(h["d"][0]), int(h["d"][1])), str(h["from"]), str(h["to"]))
        inters[key] = inters.get(key, 0.0) + float(h["v"])
    if not strict:
        for (d, s, sp), v in list(inters.items()):
            pk = ((-d[0], -d[1]), sp, s)
            if pk not in inters:
                inters[pk] = v
    onsite = {str(c): float(w) for c, w in doc.get("onsite", {}).items()}
    return HoppingModel(
        spec=spec,
        hoppings=tuple((d, s, sp, t) for (d, s, sp), t in sorted(hops.items(), key=str)),
        interactions=tuple((d, s, sp, v) for (d, s, sp), v in sorted(inters.items(), key=str)),
        onsite=onsite,
        mu=float(doc.get("mu", 0.0)),
        u=float(doc.get("U", 0.0)),
    )


def load_model(path, strict: bool = False) -> HoppingModel:
    with open(path, "r", encoding="utf-8") as f:
        return model_from_dict(json.load(f), strict=strict)


def model_to_dict(model: HoppingModel) -> dict:
    spec = model.spec
    e1, e2 = spec.basis
    return {
        "basis": [[e1[0], e1[1]], [e2[0], e2[1]]],
        "L": spec.L,
        "colors": list(spec.colors),
        "displacements": {c: list(spec.displacement(c)) for c in spec.colors},
        "onsite": dict(model.onsite),
        "mu": model.mu,
        "U": model.u,
        "hoppings": [
            {"d": [d[0], d[1]], "from": s, "to": sp,
             "re": complex(t).real, "im": complex(t).imag}
            for d, s, sp, t in model.hoppings
        ],
        "interactions": [
            {"d": [d[0], d[1]], "from": s, "to": sp, "v": v}
            for d, s, sp, v in model.interactions
        ],
    }


def save_model(model: HoppingModel, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(model), f, indent=1, sort_keys=True)
