"""Command-line front end: potential, analyze, synth, verify, sweep.

Exit codes: 0 success, 1 certification failure, 2 invalid input, 3 numerical failure.
All outputs are deterministic: fixed orders, no timestamps, sorted JSON keys.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import closing, flow, loopnum, potentials, surfaces
from .matcore import ConvergenceError, eig

EXIT_OK, EXIT_CERT, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class InputError(ValueError):
    pass


@dataclass
class RunConfig:
    spec: str | None
    tol: float
    lambda_angle: float
    out: Path
    lambda_samples: int
    strip: str

    def __post_init__(self):
        if not self.tol > 0:
            raise InputError("--tol must be positive")
        if not 0.0 <= self.lambda_angle < 2 * math.pi:
            raise InputError("--lambda-angle must lie in [0, 2pi)")
        if self.lambda_samples < 2:
            raise InputError("--lambda-samples must be >= 2")

    @property
    def lam0(self) -> complex:
        if self.lambda_angle == 0.0:
            return 1.0 + 0j
        return complex(math.cos(self.lambda_angle), math.sin(self.lambda_angle))


# ---------------------------------------------------------------------------
# output helpers

def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [_clean(float(x.real)), _clean(float(x.imag))]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n")


def _pairs(a: str, name: str, count: int | None = 2) -> list[float]:
    try:
        vals = [float(t) for t in a.split(",")]
    except ValueError:
        raise InputError(f"{name}: expected comma-separated numbers, got {a!r}") from None
    if count is not None and len(vals) != count:
        raise InputError(f"{name}: expected {count} values, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise InputError(f"{name}: values must be finite")
    return vals


def _grid(a: str, name: str) -> np.ndarray:
    lo, hi, num = _pairs(a, name, 3)
    if num != int(num) or num < 2:
        raise InputError(f"{name}: number of points must be an integer >= 2")
    if not hi > lo:
        raise InputError(f"{name}: need start < stop")
    return np.linspace(lo, hi, int(num))


def _load(cfg: RunConfig) -> potentials.DelaunayPotential:
    if cfg.spec is None:
        raise InputError("a potential spec file is required")
    return potentials.load_potential(cfg.spec)


def _row_line(name: str, value: float, thr: float, ok: bool) -> str:
    return f"{name:<36s} {value:12.3e}  < {thr:8.1e}  {'ok' if ok else 'FAIL'}"


# ---------------------------------------------------------------------------
# commands

def cmd_potential(cfg: RunConfig, args) -> int:
    pot = _load(cfg)
    checks = potentials.check_potential(pot, nsamples=cfg.lambda_samples)
    ok = checks["window_ok"] and all(checks[k] <= cfg.tol for k in ("reality", "parity", "so_form"))
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "potential.json").write_text(potentials.dumps(pot) + "\n")
    report = {"sha256": potentials.content_hash(pot), "n": pot.n, "dim": pot.dim,
              "provenance": pot.provenance, "checks": checks, "tol": cfg.tol, "valid": ok}
    write_json(cfg.out / "potential_report.json", report)
    print(f"potential {report['sha256'][:16]}  n={pot.n}  dim={pot.dim}  "
          f"reality={checks['reality']:.2e} parity={checks['parity']:.2e} so={checks['so_form']:.2e}  "
          f"{'valid' if ok else 'INVALID'}")
    return EXIT_OK if ok else EXIT_CERT


def cmd_analyze(cfg: RunConfig, args) -> int:
    pot = _load(cfg)
    closing_rep = closing.minimal_real_period(pot, tol=max(cfg.tol, 1e-8))
    verdict = closing.moebius_check(pot, nsamples=max(cfg.lambda_samples // 2, 2))
    types = closing.minimality_obstruction(pot, lam0=1j)
    spec_l0 = eig(pot.at(cfg.lam0))
    report = {"sha256": potentials.content_hash(pot), "provenance": pot.provenance,
              "lambda_angle": cfg.lambda_angle, "spectrum_at_lambda0": spec_l0.as_pairs(),
              "closing": closing_rep.to_json(), "moebius": verdict.to_json(),
              "eigentypes_at_i": {"kinds": types.kinds, "n_real": types.n_real, "n_imag": types.n_imag,
                                  "spectrum": types.spectrum.as_pairs()},
              "minimality_obstruction": types.minimality_obstruction}
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_json(cfg.out / "analyze.json", report)
    mp = closing_rep.minimal_period
    print(f"minimal period: {'none' if mp is None else f'{mp:.12g}'} ({closing_rep.reason or 'certified'})")
    print(f"moebius: {'pass' if verdict.passed else 'fail'}  W0 = {[int(x) for x in np.diag(verdict.W0)]}  "
          f"half-monodromy {verdict.half_monodromy_residual:.2e}")
    print(f"minimality obstruction at lambda = i: {types.minimality_obstruction}")
    return EXIT_OK


def _strip(cfg: RunConfig, pot, blowup: float = 1e8) -> tuple[float, float, dict]:
    if cfg.strip == "auto":
        est = flow.strip_estimate(pot)
        return est.lo, est.hi, est.to_json()
    lo, hi = _pairs(cfg.strip, "--strip")
    if not lo < 0 < hi:
        raise InputError("--strip must satisfy lo < 0 < hi")
    return lo, hi, {"v_lo": lo, "v_hi": hi, "source": "user"}


def cmd_synth(cfg: RunConfig, args) -> int:
    pot = _load(cfg)
    if args.nu < 2 or args.nv < 2:
        raise InputError("grid sizes must be >= 2")
    u0, u1 = _pairs(args.urange, "--urange")
    v0, v1 = _pairs(args.vrange, "--vrange")
    if not (u1 > u0 and v1 > v0):
        raise InputError("ranges need start < stop")
    if not args.max_dv > 0:
        raise InputError("--max-dv must be positive")
    lo, hi, strip_info = _strip(cfg, pot)
    if v0 < lo or v1 > hi:
        raise flow.StripError(f"requested v-range [{v0}, {v1}] exceeds the strip [{lo}, {hi}]")
    u = np.linspace(u0, u1, args.nu)
    v = np.linspace(v0, v1, args.nv)
    mesh, traj, frame = surfaces.synthesize(pot, cfg.lam0, u, v, tol=min(cfg.tol, 1e-11),
                                            max_dv=args.max_dv, strip=(lo, hi))
    diag = surfaces.diagnostics(mesh)
    glide = None
    try:
        glide = surfaces.symmetry_check(mesh, "glide")
    except ValueError:
        pass
    # run last so the stored sym_residual column is the TE residual
    te = surfaces.symmetry_check(mesh, "te", t=float(u[1] - u[0]), D=pot.at(cfg.lam0))
    pf = flow.verify_plus_factor(pot, [v0, v1], K=cfg.lambda_samples)
    cfg.out.mkdir(parents=True, exist_ok=True)
    dropped = surfaces.mesh_to_obj(mesh, cfg.out / "mesh.obj")
    surfaces.mesh_to_csv(mesh, cfg.out / "mesh.csv")
    summary = {"sha256": potentials.content_hash(pot), "provenance": pot.provenance,
               "lambda_angle": cfg.lambda_angle, "grid": [args.nu, args.nv],
               "urange": [u0, u1], "vrange": [v0, v1], "strip": strip_info,
               "diagnostics": diag.to_json(), "te_residual": te, "glide_residual": glide,
               "closure_u": float(np.abs(mesh.y[-1] - mesh.y[0]).max()),
               "closure_v": float(np.abs(mesh.y[:, -1] - mesh.y[:, 0]).max()),
               "frame_form_residual": frame.max_form_residual,
               "plus_factor_negative_modes": pf.max,
               "envelope_min_overlap": mesh.meta["envelope_min_overlap"],
               "branch_monodromy": mesh.meta["branch_monodromy"],
               "pole_dropped_vertices": dropped}
    write_json(cfg.out / "synth.json", summary)
    from . import plotting
    plotting.plot_mesh(mesh, cfg.out / "mesh.png")
    plotting.plot_residuals(mesh, cfg.out / "residuals.png")
    print(f"mesh {args.nu}x{args.nv}: |y|-1 {diag.max_norm_dev:.2e}, conformality {diag.max_conf:.2e}, "
          f"min |y_u| {diag.min_speed:.3g}, TE {te:.2e}, closure u {summary['closure_u']:.2e} "
          f"v {summary['closure_v']:.2e}")
    return EXIT_OK


def _verify_lawson(cfg, args) -> tuple[list, dict]:
    m, l = args.m, args.l
    if m < 1 or l < 1:
        raise InputError("--m and --l must be positive integers")
    cmp_ = surfaces.lawson_compare(m, l, nu_pts=args.nu, nv_pts=args.nv, synth=not args.no_synth)
    ex = cmp_.extras
    rows = [("omega(0) - ln m", abs(ex["omega0"] - math.log(m)), 1e-6),
            ("s(0) - (m^2-l^2)/2", abs(ex["s0"] - (m * m - l * l) / 2), 1e-6),
            ("k(0) + i l/2", abs(ex["k0"] + 0.5j * l), 1e-6),
            ("k_zbar(0)", abs(ex["kzbar0"]), 1e-6),
            ("Delaunay matrix entrywise", cmp_.potential_residual, 1e-6)]
    if not args.no_synth:
        rows.append(("synthesized vs aligned Lawson", cmp_.max_deviation, 1e-4))
    return rows, cmp_.to_json()


def _verify_ejiri(cfg, args) -> tuple[list, dict]:
    rep = surfaces.ejiri_oracle()
    A, B, D = potentials.ejiri_data()
    lams = loopnum.circle_points(32)
    comm = float(np.abs(np.array([A(x) @ B(x) - B(x) @ A(x) for x in lams])).max())
    nr = rep["nonreal"]
    rows = [("[A, B] over 32 lambda samples", comm, 1e-12),
            ("joint spectrum vs printed torus", rep["joint_spectrum_mismatch"], 1e-10),
            ("exp(2 pi A(1)) - I", rep["u_period_residual"], 1e-8),
            ("chi reality", nr["reality"], 1e-8),
            ("chi(1) - I", nr["closure"], 1e-8),
            ("chi b+ - exp(2 sqrt3 pi i D)", nr["factorization"], 1e-8),
            ("printed torus s - 1/6", abs(complex(*rep["printed_s"]) - 1 / 6), 1e-6),
            ("printed torus |k|^2 - 1/8", abs(rep["printed_k2"] - 1 / 8), 1e-6),
            ("synthesized closure in u", rep["synth_closure_u"], 1e-6),
            ("synthesized closure in v", rep["synth_closure_v"], 1e-6)]
    rep["commutator_32"] = comm
    return rows, rep


def cmd_verify(cfg: RunConfig, args) -> int:
    rows, rep = (_verify_lawson if args.target == "lawson" else _verify_ejiri)(cfg, args)
    table = []
    ok_all = True
    explicit_tol = getattr(args, "tol", None)
    for name, val, thr in rows:
        if explicit_tol is not None:
            thr = min(thr, explicit_tol)
        ok = bool(val < thr)
        ok_all &= ok
        print(_row_line(name, val, thr, ok))
        table.append({"check": name, "value": val, "threshold": thr, "ok": ok})
    if args.target == "ejiri":
        print("note: s3 display discrepancy: " + rep["note"])
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_json(cfg.out / f"verify_{args.target}.json", {"table": table, "details": rep, "passed": ok_all})
    print("PASS" if ok_all else "FAIL")
    return EXIT_OK if ok_all else EXIT_CERT


def _sorted_spectrum(M) -> np.ndarray:
    vals = eig(M).values
    vals = np.where(np.abs(vals.real) < 1e-12, 1j * vals.imag, vals)
    vals = np.where(np.abs(vals.imag) < 1e-12, vals.real + 0j, vals)
    return vals[np.lexsort((vals.real, vals.imag))]


def cmd_sweep(cfg: RunConfig, args) -> int:
    cfg.out.mkdir(parents=True, exist_ok=True)
    rows = []
    xs, specs, marks = [], [], None
    if args.kind in ("theta", "c"):
        if args.kind == "theta":
            grid = _grid(args.grid or "0,3.141592653589793,33", "--grid")
            pts = [(args.c, t) for t in grid]
        else:
            grid = _grid(args.grid or "-1,1,41", "--grid")
            pts = [(c, args.theta) for c in grid]
            if abs(math.sin(args.theta)) == 1.0:
                marks = [c for c in grid if any(abs(c - (m * m - l * l) / (m * m + l * l)) < 1e-12
                                                for m in range(1, 9) for l in range(1, 9))]
        header = ["c", "theta"] + [f"eig{k}_{p}" for k in range(5) for p in ("re", "im")] + \
            ["closed_form_error", "minimal_period"]
        for c, t in pts:
            pot = potentials.s3_family(float(c), float(t))
            vals = _sorted_spectrum(pot.at(1.0))
            cf = closing.s3_spectrum_closed_form(float(c), float(t))
            err = float(np.max(np.abs(np.sort_complex(vals) - np.sort_complex(cf)))) \
                if vals.size == cf.size else float("nan")
            per = closing.minimal_real_period(pot, pmax=args.pmax).minimal_period
            rows.append([c, t] + [x for v in vals for x in (v.real, v.imag)] + [err, per])
            xs.append(t if args.kind == "theta" else c)
            specs.append(vals)
    elif args.kind == "moebius":
        bstars = _pairs(args.beta_star, "--beta-star", None)
        header = ["m", "l", "beta_star", "passed", "half_monodromy_residual",
                  "w0_conjugation_residual", "eigenvalue_condition_ok"]
        for m in range(1, args.mmax + 1):
            for l in range(1, args.lmax + 1):
                if math.gcd(m, l) != 1:
                    continue
                for b in bstars:
                    v = closing.moebius_check(potentials.moebius_family(m, l, b))
                    rows.append([m, l, b, int(v.passed), v.half_monodromy_residual,
                                 v.w0_conjugation_residual, int(v.eigenvalue_condition_ok)])
    elif args.kind == "lambda":
        pot = _load(cfg)
        grid = _grid(args.grid or f"0,{2 * math.pi!r},{cfg.lambda_samples + 1}", "--grid")
        header = ["lambda_angle"] + [f"eig{k}_{p}" for k in range(pot.dim) for p in ("re", "im")]
        for a in grid:
            vals = _sorted_spectrum(pot.at(complex(math.cos(a), math.sin(a))))
            rows.append([a] + [x for v in vals for x in (v.real, v.imag)])
            xs.append(a)
            specs.append(vals)
    else:
        raise InputError(f"unknown sweep kind {args.kind!r}")

    def fmt(x):
        if x is None:
            return ""
        if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
            return str(int(x))
        x = float(x)
        return "nan" if math.isnan(x) else repr(x)

    with open(cfg.out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])
    if specs and len({len(s) for s in specs}) == 1:
        from . import plotting
        plotting.plot_sweep(xs, np.array(specs), cfg.out / "sweep.png",
                            xlabel={"theta": "theta", "c": "c", "lambda": "lambda angle"}[args.kind], mark=marks)
    print(f"sweep {args.kind}: {len(rows)} rows -> {cfg.out / 'sweep.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--tol", type=float, default=argparse.SUPPRESS, help="tolerance (default 1e-10)")
    common.add_argument("--lambda-angle", type=float, default=argparse.SUPPRESS,
                        help="spectral parameter as an angle in [0, 2pi) (default 0)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default ./out)")
    common.add_argument("--lambda-samples", type=int, default=argparse.SUPPRESS,
                        help="unit-circle samples for loop checks (default 64)")
    common.add_argument("--strip", default=argparse.SUPPRESS, help="auto or lo,hi (default auto)")

    p = argparse.ArgumentParser(prog="tewillmore", parents=[common], allow_abbrev=False,
                                description="Translationally equivariant Willmore surfaces from Delaunay potentials.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("potential", parents=[common], allow_abbrev=False, help="build, validate and serialise a potential")
    sp.add_argument("spec")

    sp = sub.add_parser("analyze", parents=[common], allow_abbrev=False, help="closing periods and Moebius certification")
    sp.add_argument("spec")

    sp = sub.add_parser("synth", parents=[common], allow_abbrev=False, help="synthesize a surface mesh")
    sp.add_argument("spec")
    sp.add_argument("--nu", type=int, default=64)
    sp.add_argument("--nv", type=int, default=17)
    sp.add_argument("--urange", default=f"{-math.pi!r},{math.pi!r}")
    sp.add_argument("--vrange", default=f"{-math.pi!r},{math.pi!r}")
    sp.add_argument("--max-dv", type=float, default=0.002, help="largest v-step of the tracked flow")

    sp = sub.add_parser("verify", parents=[common], allow_abbrev=False, help="oracle chains for the Lawson and Ejiri examples")
    sp.add_argument("target", choices=["lawson", "ejiri"])
    sp.add_argument("--m", type=int, default=2)
    sp.add_argument("--l", type=int, default=1)
    sp.add_argument("--nu", type=int, default=128)
    sp.add_argument("--nv", type=int, default=33)
    sp.add_argument("--no-synth", action="store_true", help="skip the synthesized-surface comparison")

    sp = sub.add_parser("sweep", parents=[common], allow_abbrev=False, help="eigenvalue / period / Moebius tables")
    sp.add_argument("kind", choices=["theta", "c", "moebius", "lambda"])
    sp.add_argument("spec", nargs="?", help="potential spec (lambda sweep only)")
    sp.add_argument("--grid", help="start,stop,num")
    sp.add_argument("--c", type=float, default=0.0)
    sp.add_argument("--theta", type=float, default=math.pi / 2)
    sp.add_argument("--mmax", type=int, default=8)
    sp.add_argument("--lmax", type=int, default=8)
    sp.add_argument("--beta-star", default="0,0.5,1")
    sp.add_argument("--pmax", type=float, default=100.0)
    return p


COMMANDS = {"potential": cmd_potential, "analyze": cmd_analyze, "synth": cmd_synth,
            "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig(spec=getattr(args, "spec", None), tol=getattr(args, "tol", 1e-10),
                        lambda_angle=getattr(args, "lambda_angle", 0.0), out=Path(getattr(args, "out", "out")),
                        lambda_samples=getattr(args, "lambda_samples", 64), strip=getattr(args, "strip", "auto"))
        return COMMANDS[args.command](cfg, args)
    except (InputError, potentials.PotentialSpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (flow.StripError, surfaces.EnvelopeError, ConvergenceError, OverflowError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
