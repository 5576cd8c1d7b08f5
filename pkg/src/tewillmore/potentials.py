"""Delaunay potentials of translationally equivariant Willmore surfaces.

D(lambda) = lambda^{-1} D_{-1} + D_0 + lambda D_1 is assembled from the
invariants (s, k_j, beta_j, b_jl) at the base point.  The 4x4 block of D_0 is
built from the frame entries

    s1 = (1 - s - 2k^2)/(2 sqrt2),   s2 = -i(1 + s - 2k^2)/(2 sqrt2),
    s3 = (1 + s + 2k^2)/(2 sqrt2),   s4 = -i(1 - s + 2k^2)/(2 sqrt2),

with k^2 = sum |k_j|^2, and the off-diagonal blocks of D_{-1} from B1 with
rows (sqrt2 beta, -sqrt2 beta, -k, -ik) and B2 = -B1^T diag(-1,1,1,1).
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import loopnum
from .loopnum import BlockStructure, LaurentMatrix, conj_star, evaluate

SQRT2 = math.sqrt(2.0)
I13 = np.diag([-1.0, 1.0, 1.0, 1.0])


class PotentialSpecError(ValueError):
    """Invalid potential specification; `path` names the offending field."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


@dataclass(frozen=True, eq=False)
class WillmoreInvariants:
    n: int
    s: complex
    kappa: np.ndarray
    beta: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise PotentialSpecError("n", f"codimension must be >= 1, got {self.n}")
        kappa = np.atleast_1d(np.asarray(self.kappa, dtype=complex))
        beta = np.atleast_1d(np.asarray(self.beta, dtype=complex))
        b = np.asarray(self.b, dtype=complex)
        if b.size == 1 and n == 1:
            b = b.reshape(1, 1)
        if kappa.shape != (n,):
            raise PotentialSpecError("kappa", f"expected length {n}, got shape {kappa.shape}")
        if beta.shape != (n,):
            raise PotentialSpecError("beta", f"expected length {n}, got shape {beta.shape}")
        if b.shape != (n, n):
            raise PotentialSpecError("b", f"expected {n}x{n}, got shape {b.shape}")
        if np.any(b + b.T != 0):
            raise PotentialSpecError("b", "normal connection must be antisymmetric (b + b^T = 0)")
        for name, arr in (("kappa", kappa), ("beta", beta), ("b", b)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "s", complex(self.s))

    @property
    def k2(self) -> float:
        return float(np.sum(np.abs(self.kappa) ** 2))

    def frame_entries(self) -> tuple[complex, complex, complex, complex]:
        """(s1, s2, s3, s4) of the 4x4 block of alpha'."""
        s, k2 = self.s, self.k2
        r = 2 * SQRT2
        return ((1 - s - 2 * k2) / r, -1j * (1 + s - 2 * k2) / r,
                (1 + s + 2 * k2) / r, -1j * (1 - s + 2 * k2) / r)


@dataclass(frozen=True, eq=False)
class DelaunayPotential:
    bs: BlockStructure
    D: LaurentMatrix
    provenance: dict = field(default_factory=dict)
    invariants: WillmoreInvariants | None = None

    @property
    def n(self) -> int:
        return self.bs.n

    @property
    def dim(self) -> int:
        return self.bs.dim

    def __call__(self, lam) -> np.ndarray:
        return evaluate(self.D, lam)

    def at(self, lam) -> np.ndarray:
        """D(lam); real-typed when lam is on the unit circle."""
        M = evaluate(self.D, lam)
        if np.ndim(lam) == 0 and abs(abs(lam) - 1.0) < 1e-14:
            return M.real.copy()
        return M

    @property
    def Dm1(self) -> np.ndarray:
        return self.D.coeff(-1)

    @property
    def D0(self) -> np.ndarray:
        return self.D.coeff(0)

    @property
    def D1(self) -> np.ndarray:
        return self.D.coeff(1)


# ---------------------------------------------------------------------------
# assembly

def alpha_prime_blocks(inv: WillmoreInvariants) -> tuple[np.ndarray, np.ndarray]:
    """(lambda^{-1} coefficient, lambda^0 coefficient) of alpha'(d/dz) at z = 0."""
    n = inv.n
    N = n + 4
    s1, s2, s3, s4 = inv.frame_entries()
    A1 = np.array([[0, 0, s1, s2],
                   [0, 0, s3, s4],
                   [s1, -s3, 0, 0],
                   [s2, -s4, 0, 0]], dtype=complex)
    A2 = inv.b.T
    B1 = np.vstack([SQRT2 * inv.beta, -SQRT2 * inv.beta, -inv.kappa, -1j * inv.kappa])
    B2 = -B1.T @ I13
    am1 = np.zeros((N, N), dtype=complex)
    am1[:4, 4:] = B1
    am1[4:, :4] = B2
    a0 = np.zeros((N, N), dtype=complex)
    a0[:4, :4] = A1
    a0[4:, 4:] = A2
    return am1, a0


def build_delaunay(inv: WillmoreInvariants, provenance: dict | None = None) -> DelaunayPotential:
    am1, a0 = alpha_prime_blocks(inv)
    D0 = (a0 + a0.conj()).real.astype(complex)
    coeffs = np.stack([am1, D0, am1.conj()])
    D = LaurentMatrix(inv.n + 4, -1, coeffs)
    prov = {"constructor": "general"} if provenance is None else dict(provenance)
    return DelaunayPotential(BlockStructure(inv.n), D, prov, inv)


def s3_family(c: float, theta: float) -> DelaunayPotential:
    inv = WillmoreInvariants(1, 2j * c, [np.exp(1j * theta) / SQRT2], [0.0], np.zeros((1, 1)))
    return build_delaunay(inv, {"constructor": "s3_family", "c": float(c), "theta": float(theta)})


def moebius_invariants(m, l, beta_star) -> WillmoreInvariants:
    return WillmoreInvariants(1, (m * m - l * l) / 2.0, [-0.5j * l], [SQRT2 / 2 * 1j * beta_star],
                              np.zeros((1, 1)))


def moebius_family(m: int, l: int, beta_star: float = 0.0) -> DelaunayPotential:
    return build_delaunay(moebius_invariants(m, l, beta_star),
                          {"constructor": "moebius_s3", "m": int(m), "l": int(l),
                           "beta_star": float(beta_star)})


def s4_moebius(beta10: float = 1.0) -> DelaunayPotential:
    if beta10 < 0:
        raise PotentialSpecError("beta10", f"must be >= 0, got {beta10}")
    if beta10 == 0:
        warnings.warn("s4_moebius with beta10 = 0: the lambda^{-1} block drops to rank 1", stacklevel=2)
    inv = WillmoreInvariants(2, 0.5, [-0.5j, 0.5], [1j * beta10, 0.0], np.zeros((2, 2)))
    return build_delaunay(inv, {"constructor": "s4_moebius", "beta10": float(beta10)})


# Ejiri torus constants
EJIRI_K = (math.sqrt(6) / 12, -1j * math.sqrt(3) / 6, 0.0)
EJIRI_S = 1.0 / 6.0
EJIRI_BETA = (0.0, 0.0, -1j * SQRT2 / 24)
EJIRI_A13 = -1j * math.sqrt(3) / 6
EJIRI_A23 = math.sqrt(6) / 6
EJIRI_OMEGA = 2j * math.sqrt(3) * math.pi


def ejiri_invariants() -> WillmoreInvariants:
    b = np.zeros((3, 3), dtype=complex)
    b[0, 2], b[2, 0] = EJIRI_A13, -EJIRI_A13
    b[1, 2], b[2, 1] = EJIRI_A23, -EJIRI_A23
    return WillmoreInvariants(3, EJIRI_S, EJIRI_K, EJIRI_BETA, b)


def ejiri_alpha_prime() -> LaurentMatrix:
    am1, a0 = alpha_prime_blocks(ejiri_invariants())
    return LaurentMatrix(7, -1, np.stack([am1, a0]))


def ejiri_data() -> tuple[LaurentMatrix, LaurentMatrix, DelaunayPotential]:
    """(A, B, D) with A = alpha' + conj alpha', B = i(alpha' - conj alpha'), D = A."""
    ap = ejiri_alpha_prime()
    apb = conj_star(ap)
    A = loopnum.add(ap, apb)
    B = loopnum.scale(loopnum.add(ap, loopnum.scale(apb, -1.0)), 1j)
    pot = build_delaunay(ejiri_invariants(), {"constructor": "ejiri"})
    return A, B, pot


def zero_potential(n: int = 1) -> DelaunayPotential:
    """Formal zero series (not a Willmore potential); used for degenerate-case checks."""
    N = n + 4
    return DelaunayPotential(BlockStructure(n), LaurentMatrix(N, -1, np.zeros((3, N, N))),
                             {"constructor": "zero", "n": n})


# ---------------------------------------------------------------------------
# checks

def check_potential(pot: DelaunayPotential, nsamples: int = 16) -> dict:
    """Residuals of the reality, twist-parity and so(1, n+3) invariants."""
    D = pot.D
    cs = conj_star(D)
    lo, hi = min(D.dmin, cs.dmin), max(D.dmax, cs.dmax)
    reality = max(float(np.abs(D.coeff(d) - cs.coeff(d)).max()) for d in range(lo, hi + 1))
    parity = loopnum.parity_residual(D, pot.bs)
    J = pot.bs.J
    lams = loopnum.circle_points(nsamples)
    M = evaluate(D, lams)
    so = float(np.abs(np.transpose(M, (0, 2, 1)) @ J + J @ M).max())
    window_ok = D.dmin >= -1 and D.dmax <= 1
    return {"reality": reality, "parity": parity, "so_form": so, "window_ok": bool(window_ok)}


def potential_ok(pot: DelaunayPotential, tol: float = 1e-12) -> bool:
    r = check_potential(pot)
    return r["window_ok"] and r["reality"] <= tol and r["parity"] <= tol and r["so_form"] <= tol


def content_hash(pot: DelaunayPotential) -> str:
    return hashlib.sha256(loopnum.dumps(pot.D).encode()).hexdigest()


def to_json_obj(pot: DelaunayPotential) -> dict:
    obj = loopnum.to_json_obj(pot.D)
    obj["n"] = pot.n
    obj["provenance"] = pot.provenance
    obj["sha256"] = content_hash(pot)
    return obj


# ---------------------------------------------------------------------------
# TOML specs

def _number(val, path) -> float:
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise PotentialSpecError(path, f"expected a number, got {val!r}")
    if not math.isfinite(val):
        raise PotentialSpecError(path, "must be finite")
    return float(val)


def _complex(val, path) -> complex:
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        return complex(_number(val, path))
    if not isinstance(val, (list, tuple)) or len(val) != 2:
        raise PotentialSpecError(path, f"expected [re, im], got {val!r}")
    return complex(_number(val[0], f"{path}[0]"), _number(val[1], f"{path}[1]"))


def _int(val, path, lo=None) -> int:
    if isinstance(val, bool) or not isinstance(val, int):
        raise PotentialSpecError(path, f"expected an integer, got {val!r}")
    if lo is not None and val < lo:
        raise PotentialSpecError(path, f"must be >= {lo}, got {val}")
    return val


def potential_from_spec(spec: dict) -> DelaunayPotential:
    """Build a potential from a parsed spec dict with a [potential] table."""
    if "potential" not in spec or not isinstance(spec["potential"], dict):
        raise PotentialSpecError("potential", "missing [potential] table")
    p = spec["potential"]
    kind = p.get("type")
    pre = "potential"

    def get(key):
        if key not in p:
            raise PotentialSpecError(f"{pre}.{key}", "missing field")
        return p[key]

    if kind == "moebius_s3":
        m = _int(get("m"), f"{pre}.m", 1)
        l = _int(get("l"), f"{pre}.l", 1)
        bs = _number(p.get("beta_star", 0.0), f"{pre}.beta_star")
        return moebius_family(m, l, bs)
    if kind == "s3_family":
        return s3_family(_number(get("c"), f"{pre}.c"), _number(get("theta"), f"{pre}.theta"))
    if kind == "s4_moebius":
        b10 = _number(p.get("beta10", 1.0), f"{pre}.beta10")
        if b10 < 0:
            raise PotentialSpecError(f"{pre}.beta10", "must be >= 0")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return s4_moebius(b10)
    if kind == "ejiri":
        return ejiri_data()[2]
    if kind == "general":
        n = _int(get("n"), f"{pre}.n", 1)
        s = _complex(get("s"), f"{pre}.s")
        kap = get("kappa")
        bet = get("beta")
        if not isinstance(kap, list) or len(kap) != n:
            raise PotentialSpecError(f"{pre}.kappa", f"expected {n} [re, im] pairs")
        if not isinstance(bet, list) or len(bet) != n:
            raise PotentialSpecError(f"{pre}.beta", f"expected {n} [re, im] pairs")
        kappa = [_complex(v, f"{pre}.kappa[{i}]") for i, v in enumerate(kap)]
        beta = [_complex(v, f"{pre}.beta[{i}]") for i, v in enumerate(bet)]
        braw = p.get("b", [[0.0, 0.0]] * (n * n))
        if not isinstance(braw, list) or len(braw) != n * n:
            raise PotentialSpecError(f"{pre}.b", f"expected {n * n} row-major [re, im] pairs")
        b = np.array([_complex(v, f"{pre}.b[{i}]") for i, v in enumerate(braw)]).reshape(n, n)
        bad = np.argwhere(b + b.T != 0)
        if bad.size:
            i, j = bad[0]
            raise PotentialSpecError(f"{pre}.b[{i * n + j}]", f"b + b^T != 0 at ({i},{j}); b must be antisymmetric")
        inv = WillmoreInvariants(n, s, kappa, beta, b)
        return build_delaunay(inv, {"constructor": "general", "n": n})
    raise PotentialSpecError(f"{pre}.type", f"unknown potential type {kind!r}")


def load_potential(path) -> DelaunayPotential:
    import tomli

    path = Path(path)
    try:
        with path.open("rb") as fh:
            spec = tomli.load(fh)
    except OSError as exc:
        raise PotentialSpecError(str(path), f"cannot read: {exc.strerror}") from None
    except tomli.TOMLDecodeError as exc:
        raise PotentialSpecError(str(path), f"malformed TOML: {exc}") from None
    return potential_from_spec(spec)


def dumps(pot: DelaunayPotential) -> str:
    return json.dumps(to_json_obj(pot), sort_keys=True, indent=1)
