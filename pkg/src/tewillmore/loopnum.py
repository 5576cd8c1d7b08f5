"""Matrix-valued finite Laurent series in the loop parameter lambda.

A LaurentMatrix stores dense coefficients over a contiguous degree window
[dmin, dmax].  Values are immutable; every operation returns a new object.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


@dataclass(frozen=True)
class BlockStructure:
    """Block split (4, n) of the ambient so(1, n+3) with form J = diag(-1, 1, ..., 1)."""

    n: int

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError(f"codimension n must be >= 1, got {self.n}")

    @property
    def dim(self) -> int:
        return self.n + 4

    @property
    def split(self) -> tuple[int, int]:
        return (4, self.n)

    @property
    def J(self) -> np.ndarray:
        d = np.ones(self.dim)
        d[0] = -1.0
        return np.diag(d)


@dataclass(frozen=True, eq=False)
class LaurentMatrix:
    """sum_{d=dmin}^{dmax} lambda^d * coeffs[d - dmin]."""

    dim: int
    dmin: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim != 3 or c.shape[1:] != (self.dim, self.dim) or c.shape[0] < 1:
            raise ValueError(f"coefficient array of shape {c.shape} does not match dim {self.dim}")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite Laurent coefficient")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "dmin", int(self.dmin))
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def dmax(self) -> int:
        return self.dmin + self.coeffs.shape[0] - 1

    @property
    def window(self) -> tuple[int, int]:
        return (self.dmin, self.dmax)

    def coeff(self, d: int) -> np.ndarray:
        """Coefficient of lambda^d (zero outside the stored window)."""
        if self.dmin <= d <= self.dmax:
            return self.coeffs[d - self.dmin].copy()
        return np.zeros((self.dim, self.dim), dtype=complex)

    def __call__(self, lam) -> np.ndarray:
        return evaluate(self, lam)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __matmul__(self, other):
        return mul(self, other)

    @classmethod
    def from_dict(cls, coeffs: Mapping[int, np.ndarray], dim: int | None = None) -> "LaurentMatrix":
        if not coeffs:
            if dim is None:
                raise ValueError("empty coefficient map needs an explicit dim")
            return cls.zero(dim)
        degs = sorted(int(d) for d in coeffs)
        mats = {int(d): np.asarray(m, dtype=complex) for d, m in coeffs.items()}
        n = mats[degs[0]].shape[0] if dim is None else dim
        arr = np.zeros((degs[-1] - degs[0] + 1, n, n), dtype=complex)
        for d, m in mats.items():
            if m.shape != (n, n):
                raise ValueError(f"degree {d} coefficient has shape {m.shape}, expected {(n, n)}")
            arr[d - degs[0]] = m
        return cls(n, degs[0], arr)

    @classmethod
    def zero(cls, dim: int) -> "LaurentMatrix":
        return cls(dim, 0, np.zeros((1, dim, dim), dtype=complex))

    @classmethod
    def constant(cls, m) -> "LaurentMatrix":
        m = np.asarray(m, dtype=complex)
        return cls(m.shape[0], 0, m[None])


def _check_dims(a: LaurentMatrix, b: LaurentMatrix):
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def add(a: LaurentMatrix, b: LaurentMatrix) -> LaurentMatrix:
    """Degree-wise sum over the union of both windows."""
    _check_dims(a, b)
    lo, hi = min(a.dmin, b.dmin), max(a.dmax, b.dmax)
    out = np.zeros((hi - lo + 1, a.dim, a.dim), dtype=complex)
    out[a.dmin - lo:a.dmax - lo + 1] += a.coeffs
    out[b.dmin - lo:b.dmax - lo + 1] += b.coeffs
    return LaurentMatrix(a.dim, lo, out)


def scale(a: LaurentMatrix, z: complex) -> LaurentMatrix:
    return LaurentMatrix(a.dim, a.dmin, a.coeffs * z)


def mul(a: LaurentMatrix, b: LaurentMatrix, truncate_to: tuple[int, int] | None = None) -> LaurentMatrix:
    """Cauchy product sum_j a_j b_{d-j}.

    With truncate_to=None the full product window is kept, so the result is
    exact.  A caller-supplied window (lo, hi) drops everything outside it.
    """
    _check_dims(a, b)
    lo, hi = a.dmin + b.dmin, a.dmax + b.dmax
    out = np.zeros((hi - lo + 1, a.dim, a.dim), dtype=complex)
    for i in range(a.coeffs.shape[0]):
        for j in range(b.coeffs.shape[0]):
            out[i + j] += a.coeffs[i] @ b.coeffs[j]
    if truncate_to is None:
        return LaurentMatrix(a.dim, lo, out)
    tlo, thi = int(truncate_to[0]), int(truncate_to[1])
    if tlo > thi:
        raise ValueError(f"empty truncation window {truncate_to}")
    res = np.zeros((thi - tlo + 1, a.dim, a.dim), dtype=complex)
    for d in range(max(lo, tlo), min(hi, thi) + 1):
        res[d - tlo] = out[d - lo]
    return LaurentMatrix(a.dim, tlo, res)


def commutator(a: LaurentMatrix, b: LaurentMatrix) -> LaurentMatrix:
    return add(mul(a, b), scale(mul(b, a), -1.0))


def evaluate(a: LaurentMatrix, lam) -> np.ndarray:
    """Sum of lam^d * a_d.  Accepts a scalar or a 1-d array of lambda values."""
    lam_arr = np.asarray(lam, dtype=complex)
    if np.any(lam_arr == 0):
        raise ValueError("cannot evaluate a Laurent series at lambda = 0")
    degs = np.arange(a.dmin, a.dmax + 1)
    if lam_arr.ndim == 0:
        w = lam_arr ** degs
        return np.tensordot(w, a.coeffs, axes=(0, 0))
    w = lam_arr[:, None] ** degs[None, :]
    return np.einsum("kd,dij->kij", w, a.coeffs)


def conj_star(a: LaurentMatrix) -> LaurentMatrix:
    """a*(lambda) = conj(a(1/conj(lambda))): degree d maps to conj of degree -d."""
    return LaurentMatrix(a.dim, -a.dmax, np.conj(a.coeffs[::-1]))


def max_abs(a: LaurentMatrix) -> float:
    return float(np.max(np.abs(a.coeffs)))


def twist_parity_check(a: LaurentMatrix, bs: BlockStructure, tol: float = 0.0) -> bool:
    """Even degrees block diagonal, odd degrees block off-diagonal (max-norm < tol, or == 0 if tol is 0)."""
    if a.dim != bs.dim:
        raise ValueError(f"series dim {a.dim} does not match block structure dim {bs.dim}")
    return parity_residual(a, bs) <= tol


def parity_residual(a: LaurentMatrix, bs: BlockStructure) -> float:
    worst = 0.0
    for i, d in enumerate(range(a.dmin, a.dmax + 1)):
        c = a.coeffs[i]
        if d % 2 == 0:
            bad = max(np.abs(c[:4, 4:]).max(), np.abs(c[4:, :4]).max())
        else:
            bad = max(np.abs(c[:4, :4]).max(), np.abs(c[4:, 4:]).max())
        worst = max(worst, float(bad))
    return worst


def from_circle_samples(samples: np.ndarray, window: tuple[int, int]) -> LaurentMatrix:
    """Laurent coefficients from values at the K-th roots of unity, kept on `window`.

    samples[j] is the matrix at lambda_j = exp(2 pi i j / K).  Aliasing is the
    caller's responsibility: K must exceed the true degree span.
    """
    samples = np.asarray(samples, dtype=complex)
    K = samples.shape[0]
    lo, hi = window
    if hi - lo + 1 > K:
        raise ValueError(f"window {window} wider than the {K} circle samples")
    modes = np.fft.fft(samples, axis=0) / K
    degs = np.arange(lo, hi + 1)
    return LaurentMatrix(samples.shape[1], lo, modes[degs % K])


def circle_points(K: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(K) / K)


# serialization

def _mat_to_pairs(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _pairs_to_mat(rows, dim: int, where: str) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    if arr.shape != (dim, dim, 2):
        raise ValueError(f"{where}: expected {dim}x{dim} [re, im] pairs, got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def to_json_obj(a: LaurentMatrix) -> dict:
    coeffs = {}
    for i, d in enumerate(range(a.dmin, a.dmax + 1)):
        if np.any(a.coeffs[i] != 0):
            coeffs[str(d)] = _mat_to_pairs(a.coeffs[i])
    return {"dim": a.dim, "coeffs": coeffs}


def from_json_obj(obj: dict) -> LaurentMatrix:
    try:
        dim = int(obj["dim"])
        raw = obj.get("coeffs", {})
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed LaurentMatrix JSON: {exc}") from None
    mats = {int(k): _pairs_to_mat(v, dim, f"coeffs[{k}]") for k, v in raw.items()}
    return LaurentMatrix.from_dict(mats, dim=dim)


def dumps(a: LaurentMatrix) -> str:
    return json.dumps(to_json_obj(a), sort_keys=True, separators=(",", ":"))


def loads(s: str) -> LaurentMatrix:
    return from_json_obj(json.loads(s))
