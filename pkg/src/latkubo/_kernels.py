"""Hot kernels for the bitstring Fock space.

Each kernel has a numba @njit implementation and a pure-numpy fallback.
Dispatch is decided at import time: numba is used when importable unless the
environment variable LATKUBO_DISABLE_NUMBA is set to a nonzero value.  Both
implementations are importable directly (bench/bench_kernels.py times them
against each other).
"""

from __future__ import annotations

import os

import numpy as np

_env = os.environ.get("LATKUBO_DISABLE_NUMBA", "")
_want_numba = _env not in ("1", "true", "yes")

try:
    if not _want_numba:
        raise ImportError("numba disabled by LATKUBO_DISABLE_NUMBA")
    from numba import njit
    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        def deco(f):
            return f
        return deco


# ---------------------------------------------------------------------------
# sector basis states
# ---------------------------------------------------------------------------

def sector_states_numpy(n_modes: int, n_particles: int) -> np.ndarray:
    """All n_modes-bit integers with popcount n_particles, ascending."""
    if n_particles < 0 or n_particles > n_modes:
        return np.zeros(0, dtype=np.int64)
    if n_particles == 0:
        return np.zeros(1, dtype=np.int64)
    states = np.arange(1 << n_modes, dtype=np.int64)
    pops = np.bitwise_count(states)
    return states[pops == n_particles]


@njit(cache=True)
def _sector_states_nb(n_modes, n_particles):  # pragma: no cover - jitted
    total = 1
    for i in range(n_particles):
        total = total * (n_modes - i) // (i + 1)
    out = np.empty(total, dtype=np.int64)
    if n_particles == 0:
        out[0] = 0
        return out
    # Gosper's hack: iterate states of fixed popcount in increasing order
    v = np.int64((1 << n_particles) - 1)
    limit = np.int64(1) << n_modes
    idx = 0
    while v < limit:
        out[idx] = v
        idx += 1
        t = v | (v - 1)
        v = (t + 1) | (((~t & -(~t)) - 1) >> (_trailing_zeros(v) + 1))
    return out


@njit(cache=True)
def _trailing_zeros(x):  # pragma: no cover - jitted
    n = 0
    while x & 1 == 0:
        x >>= 1
        n += 1
    return n


def sector_states_numba(n_modes: int, n_particles: int) -> np.ndarray:
    if n_particles < 0 or n_particles > n_modes:
        return np.zeros(0, dtype=np.int64)
    return _sector_states_nb(n_modes, n_particles)


# ---------------------------------------------------------------------------
# quadratic operator entries: sum_m amp[m] psi+_{a[m]} psi-_{b[m]}
# ---------------------------------------------------------------------------

def quadratic_entries_numpy(states: np.ndarray, a: np.ndarray, b: np.ndarray,
                            amp: np.ndarray):
    """COO triplets (rows, cols, vals) of the quadratic form on one sector.

    Fermion sign convention: psi+/psi- acting at mode m pick up
    (-1)^(number of occupied modes below m).
    """
    rows_l, cols_l, vals_l = [], [], []
    cols0 = np.arange(len(states), dtype=np.int64)
    for m in range(len(a)):
        am, bm = int(a[m]), int(b[m])
        has_b = (states >> bm) & 1 == 1
        if am == bm:
            sel = cols0[has_b]
            rows_l.append(sel)
            cols_l.append(sel)
            vals_l.append(np.full(len(sel), amp[m], dtype=np.complex128))
            continue
        free_a = (states >> am) & 1 == 0
        sel = cols0[has_b & free_a]
        if len(sel) == 0:
            continue
        s0 = states[sel]
        mask_b = (np.int64(1) << bm) - 1
        sign_b = 1 - 2 * (np.bitwise_count(s0 & mask_b) & 1)
        s1 = s0 ^ (np.int64(1) << bm)
        mask_a = (np.int64(1) << am) - 1
        sign_a = 1 - 2 * (np.bitwise_count(s1 & mask_a) & 1)
        s2 = s1 | (np.int64(1) << am)
        rows = np.searchsorted(states, s2)
        rows_l.append(rows.astype(np.int64))
        cols_l.append(sel)
        vals_l.append(amp[m] * (sign_a * sign_b).astype(np.complex128))
    if not rows_l:
        z = np.zeros(0, dtype=np.int64)
        return z, z, np.zeros(0, dtype=np.complex128)
    return (np.concatenate(rows_l), np.concatenate(cols_l), np.concatenate(vals_l))


@njit(cache=True)
def _quadratic_entries_nb(states, a, b, amp):  # pragma: no cover - jitted
    ns = len(states)
    nt = len(a)
    cap = ns * nt
    rows = np.empty(cap, dtype=np.int64)
    cols = np.empty(cap, dtype=np.int64)
    vals = np.empty(cap, dtype=np.complex128)
    n = 0
    for m in range(nt):
        am = a[m]
        bm = b[m]
        tm = amp[m]
        for c in range(ns):
            s = states[c]
            if (s >> bm) & 1 == 0:
                continue
            if am == bm:
                rows[n] = c
                cols[n] = c
                vals[n] = tm
                n += 1
                continue
            if (s >> am) & 1 == 1:
                continue
            sgn = 1
            s1 = s & ((np.int64(1) << bm) - 1)
            cnt = 0
            while s1:
                s1 &= s1 - 1
                cnt += 1
            if cnt & 1:
                sgn = -sgn
            s2 = s ^ (np.int64(1) << bm)
            s3 = s2 & ((np.int64(1) << am) - 1)
            cnt = 0
            while s3:
                s3 &= s3 - 1
                cnt += 1
            if cnt & 1:
                sgn = -sgn
            new = s2 | (np.int64(1) << am)
            lo, hi = 0, ns - 1
            while lo < hi:
                mid = (lo + hi) // 2
                if states[mid] < new:
                    lo = mid + 1
                else:
                    hi = mid
            rows[n] = lo
            cols[n] = c
            vals[n] = sgn * tm
            n += 1
    return rows[:n], cols[:n], vals[:n]


def quadratic_entries_numba(states, a, b, amp):
    return _quadratic_entries_nb(states, np.asarray(a, np.int64),
                                 np.asarray(b, np.int64),
                                 np.asarray(amp, np.complex128))


# ---------------------------------------------------------------------------
# diagonal density-density values: sum_m v[m] n_{a[m]} n_{b[m]}
# ---------------------------------------------------------------------------

def quartic_diagonal_numpy(states: np.ndarray, a: np.ndarray, b: np.ndarray,
                           v: np.ndarray) -> np.ndarray:
    occ_a = (states[:, None] >> a[None, :]) & 1
    occ_b = (states[:, None] >> b[None, :]) & 1
    return (occ_a * occ_b) @ v


@njit(cache=True)
def _quartic_diagonal_nb(states, a, b, v):  # pragma: no cover - jitted
    ns = len(states)
    out = np.zeros(ns, dtype=np.float64)
    for c in range(ns):
        s = states[c]
        acc = 0.0
        for m in range(len(a)):
            if (s >> a[m]) & 1 == 1 and (s >> b[m]) & 1 == 1:
                acc += v[m]
        out[c] = acc
    return out


def quartic_diagonal_numba(states, a, b, v):
    return _quartic_diagonal_nb(states, np.asarray(a, np.int64),
                                np.asarray(b, np.int64), np.asarray(v, np.float64))


if HAS_NUMBA:
    sector_states = sector_states_numba
    quadratic_entries = quadratic_entries_numba
    quartic_diagonal = quartic_diagonal_numba
else:
    sector_states = sector_states_numpy
    quadratic_entries = quadratic_entries_numpy
    quartic_diagonal = quartic_diagonal_numpy
