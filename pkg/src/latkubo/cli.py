"""Command-line surface.

Deterministic outputs (fixed iteration orders, no time-seeded randomness);
exit 0 on success, 2 on validation errors, 3 on numeric-guard refusals.
Partial output files are removed on failure.  CSV uses '.' decimals and 17
significant digits; every numeric table embeds the numeric-policy block.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from .errors import GuardError, ModelValidationError
from .model import (HoppingModel, bands_grid, haldane_hubbard, haldane_model,
                    load_model, spectral_gap)
from .lattice import kgrid_cartesian
from .policy import DEFAULT_POLICY
from .response import (EDSession, max_ward_residual, sigma_imaginary, sigma_real,
                       sum_rule_check, universality_csv, universality_json,
                       universality_scan, wick_rotation_check)
from .topology import (chern_number, haldane_phase_diagram, noninteracting_sigma,
                       phase_diagram_csv, phase_diagram_json)
from .wick import perturbative_sigma_first_order


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_atomic(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".latkubo-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args, text: str) -> None:
    if getattr(args, "out", None):
        _write_atomic(args.out, text)
    else:
        sys.stdout.write(text)


def _get_model(args) -> HoppingModel:
    if getattr(args, "model", None):
        m = load_model(args.model, strict=getattr(args, "strict", False))
    else:
        raise ModelValidationError("a --model file is required")
    if getattr(args, "U", None) is not None:
        m = m.with_u(args.U)
    if getattr(args, "mu", None) is not None:
        m = HoppingModel(m.spec, m.hoppings, m.interactions, dict(m.onsite),
                         args.mu, m.u)
    return m


def _policy_line() -> str:
    return f"# policy: {DEFAULT_POLICY.as_json()}\n"


def cmd_bands(args) -> None:
    model = _get_model(args)
    kpts = kgrid_cartesian(model.spec, args.grid)
    eps = bands_grid(model, kpts)
    lines = [_policy_line(), "kx,ky," + ",".join(f"band{i}" for i in range(eps.shape[1])) + "\n"]
    for k, e in zip(kpts, eps):
        lines.append(",".join(_fmt(v) for v in (*k, *e)) + "\n")
    _emit(args, "".join(lines))


def cmd_gap(args) -> None:
    model = _get_model(args)
    g = spectral_gap(model, args.grid)
    _emit(args, _policy_line() + f"delta_mu = {_fmt(g.value)} at k = "
          f"({_fmt(g.k_min[0])}, {_fmt(g.k_min[1])})\n")


def cmd_chern(args) -> None:
    model = _get_model(args)
    res = chern_number(model, grid_size=args.grid)
    _emit(args, _policy_line() + f"chern = {res.chern}\n")


def cmd_phase_diagram(args) -> None:
    phis = np.linspace(args.phi_min, args.phi_max, args.phi_steps)
    ws = np.linspace(args.w_min, args.w_max, args.w_steps)
    rows = haldane_phase_diagram(args.t1, args.t2, phis, ws, grid_size=args.grid)
    text = phase_diagram_json(rows) if args.format == "json" else phase_diagram_csv(rows)
    _emit(args, text)


def cmd_free_sigma(args) -> None:
    model = _get_model(args)
    sig = noninteracting_sigma(model, grid_size=args.grid)
    out = {"policy": DEFAULT_POLICY.as_dict(),
           "sigma": [[sig[0, 0], sig[0, 1]], [sig[1, 0], sig[1, 1]]]}
    _emit(args, json.dumps(out, sort_keys=True) + "\n")


def cmd_ed_sigma(args) -> None:
    model = _get_model(args)
    beta = None if args.zero_t else args.beta
    res = sigma_imaginary(model, args.L, beta)
    out = {"policy": DEFAULT_POLICY.as_dict(), "path": res.path,
           "sigma": res.matrix.tolist(), "diagnostics":
           {k: v for k, v in res.diagnostics.items() if not isinstance(v, np.ndarray)}}
    if args.zero_t and args.real_time:
        out["sigma_real_time"] = sigma_real(model, args.L).matrix.tolist()
    _emit(args, json.dumps(out, sort_keys=True) + "\n")


def cmd_ward_check(args) -> None:
    model = _get_model(args)
    worst = max_ward_residual(model, args.L, args.beta, n_matsubara=args.omegas)
    _emit(args, _policy_line() + f"max ward residual = {_fmt(worst)}\n")


def cmd_wick_rotation(args) -> None:
    model = _get_model(args)
    omegas = [float(w) for w in args.omega_list.split(",")]
    res = wick_rotation_check(model, args.L, omegas)
    _emit(args, _policy_line() + f"max deviation = {_fmt(res['max_deviation'])}\n")


def cmd_sum_rule(args) -> None:
    model = _get_model(args)
    beta = None if args.zero_t else args.beta
    res = sum_rule_check(model, args.L, beta)
    dev = res["deviation"]
    lines = [_policy_line()]
    lines.append(f"transverse max |K(0,0) + <D>/L^2| = {_fmt(res['transverse_max'])}\n")
    lines.append(f"diagonal   max |K(0,0) + <D>/L^2| = {_fmt(res['diagonal_max'])}\n")
    for i in range(2):
        for j in range(2):
            lines.append(f"deviation[{i + 1}{j + 1}] = {_fmt(abs(dev[i, j]))}\n")
    _emit(args, "".join(lines))


def cmd_universality(args) -> None:
    t1, t2, phi, W, mu = args.t1, args.t2, args.phi, args.W, args.mu
    U_list = [float(u) for u in args.U_list.split(",")]
    L_list = [int(x) for x in args.L_list.split(",")]

    def family(U, L):
        return haldane_hubbard(t1, t2, phi, W, L=L, mu=mu, U=U)

    def hint(L):
        return L * L  # half filling of the two-band model

    rows = universality_scan(family, U_list, L_list, ground_sector_hint=hint)
    text = universality_json(rows) if args.format == "json" else universality_csv(rows)
    _emit(args, text)


def cmd_sigma1(args) -> None:
    model = _get_model(args)
    res = perturbative_sigma_first_order(model, args.beta, args.L, order=args.order)
    out = {"policy": DEFAULT_POLICY.as_dict(),
           "sigma1_12": res["sigma1_12"], "error": res["error"]}
    _emit(args, json.dumps(out, sort_keys=True) + "\n")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="latkubo",
                                 description="lattice-fermion linear response toolkit")
    ap.add_argument("--threads", type=int, default=0,
                    help="BLAS/numba threads (0 = library default)")
    ap.add_argument("--seed", type=int, default=None,
                    help="reserved; no stochastic algorithms present")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_model(p):
        p.add_argument("--model", required=True, help="model JSON file")
        p.add_argument("--strict", action="store_true",
                       help="disable Hermitian auto-completion of the model file")
        p.add_argument("--U", type=float, default=None, help="override coupling U")
        p.add_argument("--mu", type=float, default=None, help="override mu")
        p.add_argument("--out", default=None, help="output file (default stdout)")

    p = sub.add_parser("bands", help="band energies over the Brillouin-zone grid")
    add_model(p)
    p.add_argument("--grid", type=int, default=24)
    p.set_defaults(func=cmd_bands)

    p = sub.add_parser("gap", help="spectral gap at the chemical potential")
    add_model(p)
    p.add_argument("--grid", type=int, default=32)
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("chern", help="Chern number of the filled bands")
    add_model(p)
    p.add_argument("--grid", type=int, default=24)
    p.set_defaults(func=cmd_chern)

    p = sub.add_parser("phase-diagram", help="Haldane phase diagram table")
    p.add_argument("--t1", type=float, default=1.0)
    p.add_argument("--t2", type=float, default=0.1)
    p.add_argument("--phi-steps", type=int, default=41)
    p.add_argument("--w-steps", type=int, default=41)
    p.add_argument("--phi-min", type=float, default=-np.pi)
    p.add_argument("--phi-max", type=float, default=np.pi)
    p.add_argument("--w-min", type=float, default=-0.8)
    p.add_argument("--w-max", type=float, default=0.8)
    p.add_argument("--grid", type=int, default=24)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_phase_diagram)

    p = sub.add_parser("free-sigma", help="non-interacting conductivity matrix")
    add_model(p)
    p.add_argument("--grid", type=int, default=200)
    p.set_defaults(func=cmd_free_sigma)

    p = sub.add_parser("ed-sigma", help="exact-diagonalization conductivity")
    add_model(p)
    p.add_argument("--L", type=int, default=2)
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--zero-t", action="store_true")
    p.add_argument("--real-time", action="store_true",
                   help="also evaluate the real-time Kubo formula (zero-T)")
    p.set_defaults(func=cmd_ed_sigma)

    p = sub.add_parser("ward-check", help="max Ward-identity residual")
    add_model(p)
    p.add_argument("--L", type=int, default=2)
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--omegas", type=int, default=5,
                   help="number of Matsubara frequencies")
    p.set_defaults(func=cmd_ward_check)

    p = sub.add_parser("wick-rotation", help="Matsubara vs real-time deviation")
    add_model(p)
    p.add_argument("--L", type=int, default=2)
    p.add_argument("--omega-list", default="0.1,0.5,1.0")
    p.set_defaults(func=cmd_wick_rotation)

    p = sub.add_parser("sum-rule", help="f-sum rule deviation")
    add_model(p)
    p.add_argument("--L", type=int, default=2)
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--zero-t", action="store_true")
    p.set_defaults(func=cmd_sum_rule)

    p = sub.add_parser("universality", help="sigma12 vs (U, L) scan")
    p.add_argument("--t1", type=float, default=1.0)
    p.add_argument("--t2", type=float, default=0.1)
    p.add_argument("--phi", type=float, default=np.pi / 2)
    p.add_argument("--W", type=float, default=0.0)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--U-list", default="0,0.1")
    p.add_argument("--L-list", default="2")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_universality)

    p = sub.add_parser("sigma1", help="first-order perturbative sigma12")
    add_model(p)
    p.add_argument("--L", type=int, default=2)
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--order", type=int, default=12, help="Gauss-Legendre order")
    p.set_defaults(func=cmd_sigma1)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    if args.threads:
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
        os.environ.setdefault("OPENBLAS_NUM_THREADS", str(args.threads))
        try:
            import numba
            numba.set_num_threads(args.threads)
        except (ImportError, ValueError):
            pass
    try:
        args.func(args)
    except (ModelValidationError, ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except GuardError as e:
        print(f"refused: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
