"""Lax reduction of the Iwasawa problem for TE potentials and the extended frames.

Along the v-axis the Maurer-Cartan data P(v, lam) = lam^{-1} P_{-1} + P_0 + lam P_1
obeys, in the gauge alpha'' = lam P_1 + P_0 / 2,

    P_{-1}' = -i [P_{-1}, P_0],   P_0' = -2i [P_{-1}, P_1],   P_1' = -i [P_0, P_1],

with P(0) = D.  The frame factor solves L' = L B with B = i(lam^{-1} P_{-1} - lam P_1),
L(0) = I, and F(u, v, lam) = exp(u D(lam)) L(v, lam).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import loopnum
from .loopnum import evaluate
from .matcore import Trajectory, eig, expm, group_check, match_spectra, ode_integrate
from .potentials import DelaunayPotential


class StripError(RuntimeError):
    """Requested v lies outside the interval where the flow stayed bounded."""


@dataclass(frozen=True)
class LaxState:
    Pm1: np.ndarray
    P0: np.ndarray
    P1: np.ndarray

    def at(self, lam) -> np.ndarray:
        return self.Pm1 / lam + self.P0 + lam * self.P1

    def B(self, lam) -> np.ndarray:
        return 1j * (self.Pm1 / lam - lam * self.P1)


def _comm(a, b):
    return a @ b - b @ a


def lax_rhs(P: LaxState) -> LaxState:
    return LaxState(-1j * _comm(P.Pm1, P.P0), -2j * _comm(P.Pm1, P.P1), -1j * _comm(P.P0, P.P1))


def _joint_rhs(lams: np.ndarray):
    inv = 1.0 / lams

    def rhs(_t, y):
        Pm, P0, P1 = y[0], y[1], y[2]
        out = np.empty_like(y)
        out[0] = -1j * _comm(Pm, P0)
        out[1] = -2j * _comm(Pm, P1)
        out[2] = -1j * _comm(P0, P1)
        if y.shape[0] > 3:
            B = 1j * (inv[:, None, None] * Pm[None] - lams[:, None, None] * P1[None])
            out[3:] = y[3:] @ B
        return out

    return rhs


@dataclass
class LaxTrajectory:
    v: np.ndarray
    P: np.ndarray                   # (m, 3, N, N): P_{-1}, P_0, P_1
    lams: np.ndarray                # lambda values carried along for L
    L: np.ndarray | None            # (m, K, N, N)
    strip: tuple                    # (v_lo, v_hi) actually reached
    status: dict                    # per direction: "ok" or failure kind
    brackets: dict = field(default_factory=dict)
    monitors: dict = field(default_factory=dict)
    tol: float = 1e-11

    def state(self, i: int) -> LaxState:
        return LaxState(self.P[i, 0], self.P[i, 1], self.P[i, 2])

    def index(self, v: float) -> int:
        j = int(np.argmin(np.abs(self.v - v)))
        if abs(self.v[j] - v) > 1e-12 * max(1.0, abs(v)):
            raise KeyError(f"v = {v} not among trajectory samples")
        return j

    def lam_index(self, lam) -> int:
        d = np.abs(self.lams - lam)
        j = int(np.argmin(d)) if d.size else -1
        if j < 0 or d[j] > 1e-14:
            raise KeyError(f"lambda = {lam} not carried by this trajectory")
        return j

    @property
    def ok(self) -> bool:
        return all(s == "ok" for s in self.status.values())

    def A(self, lam) -> np.ndarray:
        """P(v, lam) over all samples, shape (m, N, N)."""
        return self.P[:, 0] / lam + self.P[:, 1] + lam * self.P[:, 2]

    def B(self, lam) -> np.ndarray:
        return 1j * (self.P[:, 0] / lam - lam * self.P[:, 2])


def _integrate_dir(y0, targets, lams, tol, h0, blowup):
    rhs = _joint_rhs(lams)
    t_end = targets[-1]
    return ode_integrate(rhs, y0, (0.0, t_end), t_eval=targets, h0=h0, tol=tol, blowup=blowup)


def integrate_lax(pot: DelaunayPotential, vrange=(-1.0, 1.0), v_eval=None, lams=(), tol: float = 1e-11,
                  h0: float = 1e-2, blowup: float = 1e8, monitor_lams=(1.0, np.exp(0.7j)),
                  monitors: bool = True) -> LaxTrajectory:
    """Integrate P(v) (and L(v, lam) for each lam in `lams`) over vrange, outward from v = 0.

    Both halves share one adaptive step sequence with the frame factors, so the
    frame sees the exact P of the integrator.  On blow-up the trajectory is cut
    at the last bounded sample and the failing bracket is recorded.
    """
    lo, hi = float(vrange[0]), float(vrange[1])
    if not lo <= 0.0 <= hi:
        raise ValueError("vrange must contain 0")
    if v_eval is None:
        v_eval = np.linspace(lo, hi, 41)
    v_eval = np.unique(np.concatenate([np.asarray(v_eval, dtype=float), [0.0]]))
    if v_eval[0] < lo - 1e-12 or v_eval[-1] > hi + 1e-12:
        raise ValueError("v_eval outside vrange")
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    N = pot.dim
    K = lams.size
    y0 = np.zeros((3 + K, N, N), dtype=complex)
    y0[0], y0[1], y0[2] = pot.D.coeff(-1), pot.D.coeff(0), pot.D.coeff(1)
    y0[3:] = np.eye(N)

    pos = v_eval[v_eval >= 0]
    neg = v_eval[v_eval <= 0][::-1]
    status, brackets = {}, {}
    parts = []
    for name, targets in (("neg", neg), ("pos", pos)):
        if targets.size <= 1:
            tr = Trajectory(np.array([0.0]), y0[None].copy())
            status[name] = "ok"
        else:
            tr = _integrate_dir(y0, targets, lams, tol, h0, blowup)
            status[name] = tr.status
            if tr.boundary is not None:
                brackets[name] = tuple(float(x) for x in tr.boundary)
        parts.append(tr)
    tneg, tpos = parts
    v = np.concatenate([tneg.t[::-1][:-1], tpos.t])
    Y = np.concatenate([tneg.y[::-1][:-1], tpos.y])
    traj = LaxTrajectory(v=v, P=Y[:, :3], lams=lams, L=Y[:, 3:] if K else None,
                         strip=(float(v[0]), float(v[-1])), status=status, brackets=brackets, tol=tol)
    if monitors:
        traj.monitors = lax_monitors(pot, traj, monitor_lams)
    return traj


def lax_monitors(pot: DelaunayPotential, traj: LaxTrajectory, monitor_lams=(1.0, np.exp(0.7j))) -> dict:
    """Per-sample drift of isospectrality, P_0 reality, P_1 = conj P_{-1} and twist parity."""
    m = traj.v.size
    iso = np.zeros(m)
    for lam in monitor_lams:
        ref = eig(evaluate(pot.D, lam))
        At = traj.A(lam)
        for i in range(m):
            iso[i] = max(iso[i], match_spectra(eig(At[i]), ref)[0])
    P = traj.P
    reality = np.abs(P[:, 1].imag).max(axis=(1, 2))
    conj = np.abs(P[:, 2] - P[:, 0].conj()).max(axis=(1, 2))
    par = np.maximum(np.abs(P[:, 1, :4, 4:]).max(axis=(1, 2)), np.abs(P[:, 1, 4:, :4]).max(axis=(1, 2)))
    for k in (0, 2):
        par = np.maximum(par, np.abs(P[:, k, :4, :4]).max(axis=(1, 2)))
        par = np.maximum(par, np.abs(P[:, k, 4:, 4:]).max(axis=(1, 2)))
    return {"isospectral": iso, "reality": reality, "conjugacy": conj, "parity": par}


# ---------------------------------------------------------------------------
# frames

@dataclass
class FrameSample:
    lam0: complex
    u: np.ndarray
    v: np.ndarray
    F: np.ndarray                 # (nu, nv, N, N), real
    strip: tuple
    form_residual: np.ndarray     # (nu, nv)
    det_residual: np.ndarray
    orientation_ok: np.ndarray
    reality_residual: float
    quasi_invariance: float
    L: np.ndarray = field(repr=False, default=None)

    @property
    def max_form_residual(self) -> float:
        return float(self.form_residual.max())


def frame_grid(pot: DelaunayPotential, lam0, u, L_v: np.ndarray) -> np.ndarray:
    """F[i, j] = exp(u_i D(lam0)) L(v_j), complex."""
    D = evaluate(pot.D, lam0)
    E = np.array([expm(ui * D) for ui in u])
    return np.einsum("iab,jbc->ijac", E, L_v)


def integrate_frame(pot: DelaunayPotential, lam0, ugrid, vgrid, tol: float = 1e-11,
                    traj: LaxTrajectory | None = None) -> FrameSample:
    lam0 = complex(lam0)
    if abs(abs(lam0) - 1) > 1e-12:
        raise ValueError("lambda must lie on the unit circle")
    u = np.asarray(ugrid, dtype=float)
    v = np.asarray(vgrid, dtype=float)
    if traj is None:
        lo, hi = min(0.0, v.min()), max(0.0, v.max())
        traj = integrate_lax(pot, (lo, hi), v_eval=v, lams=[lam0], tol=tol, monitors=False)
    if v.min() < traj.strip[0] - 1e-12 or v.max() > traj.strip[1] + 1e-12:
        raise StripError(f"v range [{v.min():.4g}, {v.max():.4g}] outside bounded strip "
                         f"[{traj.strip[0]:.4g}, {traj.strip[1]:.4g}]")
    k = traj.lam_index(lam0)
    idx = [traj.index(x) for x in v]
    Lv = traj.L[idx, k]
    Fc = frame_grid(pot, lam0, u, Lv)
    reality = float(np.abs(Fc.imag).max())
    F = Fc.real
    J = pot.bs.J
    form = np.abs(np.einsum("ijba,bc,ijcd->ijad", F, J, F) - J).max(axis=(2, 3))
    det = np.abs(np.linalg.det(F) - 1.0)
    orient = F[..., 0, 0] >= 1.0 - 1e-8
    qi = 0.0
    if u.size > 1:
        du = np.diff(u)
        if np.allclose(du, du[0], rtol=1e-12, atol=1e-14):
            E = expm(du[0] * evaluate(pot.D, lam0)).real
            qi = float(np.abs(F[1:] - np.einsum("ab,ijbc->ijac", E, F[:-1])).max())
    return FrameSample(lam0, u, v, F, traj.strip, form, det, orient, reality, qi, Lv)


# ---------------------------------------------------------------------------
# Iwasawa / positive-factor certificate

@dataclass
class PlusFactorReport:
    v: np.ndarray
    negative_modes: np.ndarray
    K: int

    @property
    def max(self) -> float:
        return float(self.negative_modes.max()) if self.negative_modes.size else 0.0


def negative_mode_magnitude(V: np.ndarray) -> float:
    """Largest strictly negative Fourier mode of samples V[j] at lam_j = exp(2 pi i j / K)."""
    K = V.shape[0]
    modes = np.fft.fft(V, axis=0) / K
    # index K - d carries degree -d; skip d = K/2 which aliases +-K/2
    return float(np.abs(modes[K // 2 + 1:]).max()) if K > 2 else float(np.abs(modes[1:]).max())


def verify_plus_factor(pot: DelaunayPotential, vs, K: int = 64, tol: float = 1e-12,
                       traj: LaxTrajectory | None = None) -> PlusFactorReport:
    """Negative Fourier modes of V(v, lam) = exp(-i v D(lam)) L(v, lam) over K circle samples."""
    vs = np.atleast_1d(np.asarray(vs, dtype=float))
    lams = loopnum.circle_points(K)
    if traj is None or traj.L is None or traj.lams.size != K or np.abs(traj.lams - lams).max() > 1e-14:
        lo, hi = min(0.0, vs.min()), max(0.0, vs.max())
        traj = integrate_lax(pot, (lo, hi), v_eval=vs, lams=lams, tol=tol, monitors=False)
    Dl = evaluate(pot.D, lams)
    out = []
    for v in vs:
        if v < traj.strip[0] - 1e-12 or v > traj.strip[1] + 1e-12:
            raise StripError(f"v = {v} outside bounded strip {traj.strip}")
        Lv = traj.L[traj.index(v)]
        V = np.array([expm(-1j * v * Dl[j]) @ Lv[j] for j in range(K)])
        out.append(negative_mode_magnitude(V))
    return PlusFactorReport(vs, np.array(out), K)


def tampered_plus_factor(pot: DelaunayPotential, v: float, shift: float = 0.1, K: int = 64) -> float:
    """Negative modes of exp(-i v D) exp((i v + shift) D): a deliberately broken factor."""
    lams = loopnum.circle_points(K)
    Dl = evaluate(pot.D, lams)
    V = np.array([expm(-1j * v * Dl[j]) @ expm((1j * v + shift) * Dl[j]) for j in range(K)])
    return negative_mode_magnitude(V)


# ---------------------------------------------------------------------------
# flatness oracle and strip search

def flatness_residual(pot: DelaunayPotential, h: float, vmax: float = 1.0, lam0=1.0,
                      tol: float = 1e-13) -> float:
    """max |(A(v+h) - A(v-h)) / 2h - [A, B]| on a uniform grid of step h in [-vmax, vmax]."""
    n = int(round(vmax / h))
    grid = np.arange(-n, n + 1) * h
    traj = integrate_lax(pot, (grid[0], grid[-1]), v_eval=grid, tol=tol, monitors=False)
    if not traj.ok:
        raise StripError("flow left the bounded strip inside the flatness window")
    A = traj.A(lam0)
    B = traj.B(lam0)
    dA = (A[2:] - A[:-2]) / (2 * h)
    C = A[1:-1] @ B[1:-1] - B[1:-1] @ A[1:-1]
    return float(np.abs(dA - C).max())


@dataclass
class StripEstimate:
    lo: float
    hi: float
    lo_bracket: tuple | None
    hi_bracket: tuple | None
    cap: float

    @property
    def capped(self) -> bool:
        return self.lo_bracket is None and self.hi_bracket is None

    def to_json(self) -> dict:
        br = lambda b: None if b is None else [float(x) for x in b]
        return {"v_lo": float(self.lo), "v_hi": float(self.hi), "lo_bracket": br(self.lo_bracket),
                "hi_bracket": br(self.hi_bracket), "cap": float(self.cap), "coordinate": "v = Im z"}


def _p_only_rhs():
    return _joint_rhs(np.zeros(0, dtype=complex))


def _strip_one_side(y0, sign, cap, tol, blowup, width):
    rhs = _p_only_rhs()
    y = y0.copy()
    t_ok = 0.0
    reach = 1.0
    while True:
        target = sign * min(reach, cap)
        tr = ode_integrate(rhs, y, (t_ok, target), t_eval=[t_ok, target], tol=tol, blowup=blowup)
        if tr.ok:
            y, t_ok = tr.y_last, target
            if abs(target) >= cap:
                return t_ok, None
            reach *= 2
            continue
        # blow-up between the last bounded state and the failing step; bisect
        y, t_ok = tr.y_last, tr.t_last
        t_fail = tr.boundary[1] if tr.boundary else target
        while abs(t_fail - t_ok) > width:
            mid = 0.5 * (t_ok + t_fail)
            tr2 = ode_integrate(rhs, y, (t_ok, mid), t_eval=[t_ok, mid], tol=tol, blowup=blowup)
            if tr2.ok:
                y, t_ok = tr2.y_last, mid
            else:
                y, t_ok = tr2.y_last, tr2.t_last
                t_fail = tr2.boundary[1] if tr2.boundary else mid
        return t_ok, (min(t_ok, t_fail), max(t_ok, t_fail))


def strip_estimate(pot: DelaunayPotential, cap: float = 64.0, tol: float = 1e-9, blowup: float = 1e8,
                   width: float = 1e-3) -> StripEstimate:
    """Doubling search outward from v = 0 until blow-up or |v| = cap, with bisection of any bracket."""
    N = pot.dim
    y0 = np.zeros((3, N, N), dtype=complex)
    y0[0], y0[1], y0[2] = pot.D.coeff(-1), pot.D.coeff(0), pot.D.coeff(1)
    hi, hb = _strip_one_side(y0, 1.0, cap, tol, blowup, width)
    lo, lb = _strip_one_side(y0, -1.0, cap, tol, blowup, width)
    return StripEstimate(lo, hi, lb, hb, cap)


def trajectory_to_csv(traj: LaxTrajectory, path) -> None:
    N = traj.P.shape[-1]
    head = ["v"]
    for name in ("Pm1", "P0", "P1"):
        for i in range(N):
            for j in range(N):
                head += [f"{name}_{i}{j}_re", f"{name}_{i}{j}_im"]
    mon = sorted(traj.monitors)
    head += mon
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head)
        for k, v in enumerate(traj.v):
            row = [repr(float(v))]
            for q in range(3):
                for z in traj.P[k, q].ravel():
                    row += [repr(float(z.real)), repr(float(z.imag))]
            row += [repr(float(traj.monitors[m][k])) for m in mon]
            w.writerow(row)


def uniform_fine_grid(v_nodes, max_step: float = 0.01) -> np.ndarray:
    """Union of v_nodes, 0 and a grid no coarser than max_step spanning them."""
    v_nodes = np.asarray(v_nodes, dtype=float)
    lo, hi = min(0.0, v_nodes.min()), max(0.0, v_nodes.max())
    n = max(2, int(math.ceil((hi - lo) / max_step)) + 1)
    return np.unique(np.concatenate([np.linspace(lo, hi, n), v_nodes, [0.0]]))
