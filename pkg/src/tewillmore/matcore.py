"""Dense numerics for small matrices: exponential, eigenvalues, Minkowski group test, RK4."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .loopnum import BlockStructure

EPS = np.finfo(float).eps


class ConvergenceError(RuntimeError):
    """Iterative routine did not converge."""

    def __init__(self, msg: str, iterations: int = 0):
        super().__init__(msg)
        self.iterations = iterations


# ---------------------------------------------------------------------------
# matrix exponential: Pade scaling and squaring

_PADE_B = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
         16380.0, 182.0, 1.0),
}
# 1-norm thresholds below which the degree-m approximant has backward error <= unit roundoff
_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1, 7: 9.504178996162932e-1,
          9: 2.097847961257068e0, 13: 5.371920351148152e0}
_MAX_SQUARINGS = 1024


def _pade(A: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    b = _PADE_B[m]
    n = A.shape[0]
    I = np.eye(n, dtype=A.dtype)
    A2 = A @ A
    if m < 13:
        pw = [I, A2]
        for _ in range(2, m // 2 + 1):
            pw.append(pw[-1] @ A2)
        U = sum(b[2 * j + 1] * pw[j] for j in range(m // 2 + 1))
        V = sum(b[2 * j] * pw[j] for j in range(m // 2 + 1))
        return A @ U, V
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I)
    V = A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I
    return U, V


def expm(A, tol: float = 1e-12) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a diagonal Pade core.

    The Pade degree and scaling are chosen so the backward error of the core
    is at unit-roundoff level, which is below any tol >= 1e-16 a caller can ask
    for.  Raises OverflowError if the scaling needed exceeds capacity or the
    result is not finite.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expm needs a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("expm input has non-finite entries")
    real = not np.iscomplexobj(A)
    A = A.astype(float if real else complex)
    n = A.shape[0]
    if n == 0:
        return A.copy()
    nrm = np.abs(A).sum(axis=0).max()
    if nrm == 0:
        return np.eye(n, dtype=A.dtype)
    for m in (3, 5, 7, 9):
        if nrm <= _THETA[m]:
            U, V = _pade(A, m)
            return _solve_pade(U, V)
    s = max(0, int(np.ceil(np.log2(nrm / _THETA[13]))))
    if s > _MAX_SQUARINGS:
        raise OverflowError(f"expm: norm {nrm:.3g} beyond scaling capacity")
    U, V = _pade(A / 2.0 ** s, 13)
    X = _solve_pade(U, V)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(s):
            X = X @ X
    if not np.all(np.isfinite(X)):
        raise OverflowError("expm: result overflowed")
    return X


def _solve_pade(U, V):
    return np.linalg.solve(V - U, V + U)


# ---------------------------------------------------------------------------
# eigenvalues: balancing, Hessenberg reduction, shifted complex QR

@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalue multiset, ordered lexicographically by (real, imag)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).ravel()
        order = np.lexsort((v.imag, v.real))
        v = v[order]
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def __iter__(self):
        return iter(self.values)

    def as_pairs(self) -> list:
        return [[float(z.real), float(z.imag)] for z in self.values]

    def distance(self, other) -> float:
        return match_spectra(self, other)[0]


def match_spectra(a, b) -> tuple[float, list]:
    """Greedy minimal-distance pairing of two multisets; returns (max distance, pairs).

    Pairs are taken in order of increasing distance; ties resolve by sorted position.
    """
    av = a.values if isinstance(a, Spectrum) else Spectrum(np.asarray(a)).values
    bv = b.values if isinstance(b, Spectrum) else Spectrum(np.asarray(b)).values
    if av.size != bv.size:
        raise ValueError(f"multiset sizes differ: {av.size} vs {bv.size}")
    d = np.abs(av[:, None] - bv[None, :])
    flat = np.argsort(d, axis=None, kind="stable")
    used_a = np.zeros(av.size, bool)
    used_b = np.zeros(bv.size, bool)
    pairs = []
    worst = 0.0
    for idx in flat:
        i, j = divmod(int(idx), bv.size)
        if used_a[i] or used_b[j]:
            continue
        used_a[i] = used_b[j] = True
        pairs.append((i, j))
        worst = max(worst, float(d[i, j]))
        if len(pairs) == av.size:
            break
    return worst, pairs


def balance(A: np.ndarray) -> np.ndarray:
    """Diagonal similarity by powers of two equalising row and column norms."""
    A = np.array(A, dtype=complex)
    n = A.shape[0]
    off = ~np.eye(n, dtype=bool)
    converged = False
    sweeps = 0
    while not converged and sweeps < 100:
        converged = True
        sweeps += 1
        for i in range(n):
            c = np.abs(A[:, i][off[:, i]]).sum()
            r = np.abs(A[i, :][off[i, :]]).sum()
            if c == 0 or r == 0:
                continue
            f = 1.0
            s = c + r
            while c < r / 2:
                c *= 2
                r /= 2
                f *= 2
            while c >= r * 2:
                c /= 2
                r *= 2
                f /= 2
            if (c + r) < 0.95 * s:
                converged = False
                A[:, i] *= f
                A[i, :] /= f
    return A


def hessenberg(A: np.ndarray) -> np.ndarray:
    """Unitary reduction to upper Hessenberg form with Householder reflectors."""
    H = np.array(A, dtype=complex)
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k].copy()
        nx = np.linalg.norm(x)
        if nx == 0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x
        v[0] += phase * nx
        v /= np.linalg.norm(v)
        H[k + 1:, :] -= 2.0 * np.outer(v, v.conj() @ H[k + 1:, :])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v.conj())
        H[k + 2:, k] = 0.0
    return H


def _wilkinson(a, b, c, d):
    """Eigenvalue of [[a, b], [c, d]] closest to d."""
    tr = a + d
    det = a * d - b * c
    disc = np.sqrt(tr * tr / 4 - det)
    e1, e2 = tr / 2 + disc, tr / 2 - disc
    return e1 if abs(e1 - d) < abs(e2 - d) else e2


def _hessenberg_qr(H: np.ndarray, max_iter: int) -> np.ndarray:
    n = H.shape[0]
    H = H.copy()
    out = np.zeros(n, dtype=complex)
    scale = max(np.abs(H).max(), np.finfo(float).tiny)
    hi = n - 1
    its = 0
    total = 0
    while hi >= 0:
        if hi == 0:
            out[0] = H[0, 0]
            break
        lo = hi
        while lo > 0:
            s = abs(H[lo - 1, lo - 1]) + abs(H[lo, lo])
            if s == 0:
                s = scale
            if abs(H[lo, lo - 1]) <= EPS * s:
                H[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            out[hi] = H[hi, hi]
            hi -= 1
            its = 0
            continue
        its += 1
        total += 1
        if total > max_iter:
            raise ConvergenceError(f"QR iteration did not converge after {total} iterations", total)
        if its % 10 == 0:
            # exceptional shift to break cycles
            mu = H[hi, hi] + 0.75 * abs(H[hi, hi - 1].real) + 0.75j * abs(H[hi, hi - 1].imag)
        else:
            mu = _wilkinson(H[hi - 1, hi - 1], H[hi - 1, hi], H[hi, hi - 1], H[hi, hi])
        idx = np.arange(lo, hi + 1)
        H[idx, idx] -= mu
        rots = []
        for k in range(lo, hi):
            a, b = H[k, k], H[k + 1, k]
            r = np.hypot(abs(a), abs(b))
            if r == 0:
                c, s = 1.0, 0.0
            else:
                c, s = a / r, b / r
            G = np.array([[np.conj(c), np.conj(s)], [-s, c]])
            H[k:k + 2, k:hi + 1] = G @ H[k:k + 2, k:hi + 1]
            rots.append(G)
        for k, G in zip(range(lo, hi), rots):
            top = min(k + 2, hi)
            H[lo:top + 1, k:k + 2] = H[lo:top + 1, k:k + 2] @ G.conj().T
        H[idx, idx] += mu
    return out


def eig(A, tol: float = 1e-10, max_iter: int | None = None) -> Spectrum:
    """All eigenvalues of a small dense matrix.

    tol is the accuracy contract for well-conditioned eigenvalues; deflation
    always runs to machine precision so the contract is met whenever the
    eigenvalue condition number allows it.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"eig needs a square matrix, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("eig input has non-finite entries")
    n = A.shape[0]
    if n == 0:
        return Spectrum(np.zeros(0))
    if max_iter is None:
        max_iter = 60 * n
    # normalise the scale so subnormal or huge entries do not stall deflation
    scale = float(np.abs(A).max())
    if scale == 0.0:
        return Spectrum(np.zeros(n))
    H = hessenberg(balance(A / scale))
    return Spectrum(_hessenberg_qr(H, max_iter) * scale)


# ---------------------------------------------------------------------------
# group membership in SO+(1, n+3)

@dataclass(frozen=True)
class GroupMembership:
    form_residual: float
    det_residual: float
    orientation_ok: bool
    reality_residual: float
    det: float = 1.0

    def ok(self, tol: float = 1e-8) -> bool:
        return (self.form_residual < tol and self.det_residual < tol
                and self.orientation_ok and self.reality_residual < tol)


def group_check(F, bs: BlockStructure, tol: float = 1e-8) -> GroupMembership:
    F = np.asarray(F)
    if F.shape != (bs.dim, bs.dim):
        raise ValueError(f"matrix shape {F.shape} does not match dim {bs.dim}")
    J = bs.J
    Fr = F.real if np.iscomplexobj(F) else F
    form = float(np.abs(F.T @ J @ F - J).max())
    det = np.linalg.det(F)
    return GroupMembership(
        form_residual=form,
        det_residual=float(abs(det - 1.0)),
        orientation_ok=bool(Fr[0, 0] >= 1.0 - tol),
        reality_residual=float(np.abs(F.imag).max()) if np.iscomplexobj(F) else 0.0,
        det=float(np.real(det)),
    )


# ---------------------------------------------------------------------------
# explicit ODE integration

@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    status: str = "ok"          # ok | blowup | underflow | maxsteps
    message: str = ""
    boundary: tuple | None = None  # (last good t, failing t) on blow-up
    nsteps: int = 0
    nrejected: int = 0
    t_last: float = 0.0
    y_last: np.ndarray | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _rk4_step(rhs, t, y, h):
    k1 = rhs(t, y)
    k2 = rhs(t + h / 2, y + (h / 2) * k1)
    k3 = rhs(t + h / 2, y + (h / 2) * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def ode_integrate(rhs: Callable, y0, t_span: Sequence[float], t_eval=None, h0: float = 1e-2,
                  tol: float = 1e-9, adaptive: bool = True, blowup: float = 1e8,
                  hmin: float = 1e-12, max_steps: int = 1_000_000) -> Trajectory:
    """Classical RK4 from t_span[0] to t_span[1], either direction.

    Adaptive mode estimates the local error by step doubling (one step of h
    against two of h/2, Richardson factor 1/15), measured as max |dy| / (1 + |y|),
    and halves rejected steps.  Fixed mode uses h0 throughout, shortened only to
    land on requested output points.  Stops early on blow-up (max |y| > blowup)
    or step underflow and returns the partial trajectory.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    y = np.array(y0, dtype=complex if np.iscomplexobj(y0) else float)
    direction = 1.0 if t1 >= t0 else -1.0
    if t_eval is None:
        t_eval = np.array([t0, t1])
    t_eval = np.asarray(t_eval, dtype=float)
    if np.any(direction * np.diff(t_eval) < 0):
        raise ValueError("t_eval must be ordered in the integration direction")
    if t_eval.size and (direction * (t_eval[0] - t0) < -1e-15 or direction * (t_eval[-1] - t1) > 1e-15):
        raise ValueError("t_eval outside t_span")
    ts, ys = [], []
    t = t0
    h = abs(h0)
    nsteps = nrej = 0
    k = 0
    while k < t_eval.size and abs(t_eval[k] - t) <= 1e-15 * max(1.0, abs(t)):
        ts.append(t_eval[k])
        ys.append(y.copy())
        k += 1

    def finish(status, msg="", boundary=None):
        return Trajectory(np.array(ts), np.array(ys) if ys else np.zeros((0,) + y.shape, y.dtype),
                          status, msg, boundary, nsteps, nrej, t, y.copy())

    while k < t_eval.size:
        target = t_eval[k]
        remaining = abs(target - t)
        step = min(h, remaining)
        last = step >= remaining * (1 - 1e-12)
        if last:
            step = remaining
        hs = direction * step
        if adaptive:
            y_full = _rk4_step(rhs, t, y, hs)
            y_half = _rk4_step(rhs, t, y, hs / 2)
            y_two = _rk4_step(rhs, t + hs / 2, y_half, hs / 2)
            if not np.all(np.isfinite(y_two)):
                err = np.inf
            else:
                err = float(np.max(np.abs(y_two - y_full) / (1.0 + np.abs(y_two)))) / 15.0
            if err > tol:
                nrej += 1
                h = step / 2
                if h < hmin:
                    if np.max(np.abs(y)) > blowup / 1e2 or not np.isfinite(err):
                        return finish("blowup", "state diverging as the step underflows", (t, t + direction * step))
                    return finish("underflow", f"step size fell below {hmin:g} at t={t:.6g}", (t, t + direction * step))
                continue
            y_new = y_two
            fac = 2.0 if err == 0 else min(2.0, max(0.2, 0.9 * (tol / err) ** 0.2))
            h_next = step * fac
        else:
            y_new = _rk4_step(rhs, t, y, hs)
            h_next = abs(h0)
        nsteps += 1
        if nsteps > max_steps:
            return finish("maxsteps", f"exceeded {max_steps} steps")
        if not np.all(np.isfinite(y_new)) or np.max(np.abs(y_new)) > blowup:
            return finish("blowup", f"state norm exceeded {blowup:g}", (t, t + hs))
        t = target if last else t + hs
        y = y_new
        if adaptive and not last:
            h = h_next
        elif adaptive:
            h = max(h, h_next) if step < h else h_next
        if last:
            ts.append(target)
            ys.append(y.copy())
            k += 1
            while k < t_eval.size and t_eval[k] == target:
                ts.append(target)
                ys.append(y.copy())
                k += 1
    return finish("ok")
