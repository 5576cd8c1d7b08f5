"""Period, monodromy and symmetry certificates for Delaunay potentials."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np

from . import loopnum
from .loopnum import LaurentMatrix, evaluate
from .matcore import Spectrum, eig, expm, match_spectra
from .potentials import DelaunayPotential, EJIRI_OMEGA, ejiri_alpha_prime


def spectrum(pot: DelaunayPotential, lam=1.0, tol: float = 1e-8) -> Spectrum:
    """Eigenvalues of D(lam) for |lam| = 1; checks closure under conjugation and negation."""
    lam = complex(lam)
    if abs(abs(lam) - 1.0) > 1e-12:
        raise ValueError(f"lambda must lie on the unit circle, |lambda| = {abs(lam)}")
    M = evaluate(pot.D, lam)
    if np.abs(M.imag).max() > 1e-12 * max(1.0, np.abs(M).max()):
        raise ValueError("D(lambda) is not real on the unit circle")
    spec = eig(M.real)
    scale = max(1.0, float(np.abs(M).max()))
    # closure checks: use a loose cube-root-aware bound so defective data does not trip them
    slack = max(tol, 1e-5) * scale
    if match_spectra(spec, np.conj(spec.values))[0] > slack:
        raise ArithmeticError("spectrum of a real matrix is not closed under conjugation")
    if match_spectra(spec, -spec.values)[0] > slack:
        raise ArithmeticError("so(1,n+3) spectrum is not symmetric under negation")
    return spec


def s3_spectrum_closed_form(c: float, theta: float) -> np.ndarray:
    """Eigenvalues of s3_family(c, theta) at lambda = 1.

    0 and +-sqrt(-2 +- 2 sqrt(cos^2 t + 2c sin t cos t + c^2)); the sign of the
    mixed term is the one forced by the characteristic polynomial of the matrix.
    """
    r = math.cos(theta) ** 2 + 2 * c * math.sin(theta) * math.cos(theta) + c * c
    root = np.sqrt(complex(r))
    vals = [0j]
    for sg in (1, -1):
        w = np.sqrt(-2 + sg * 2 * root)
        vals += [w, -w]
    return np.array(vals)


# ---------------------------------------------------------------------------
# real periods

@dataclass
class ClosingReport:
    spectrum_at_1: Spectrum
    minimal_period: float | None
    period_residual: float
    degenerate: bool
    reason: str = ""
    candidate: float | None = None

    def to_json(self) -> dict:
        return {"spectrum": self.spectrum_at_1.as_pairs(),
                "minimal_period": self.minimal_period,
                "period_residual": self.period_residual,
                "degenerate": self.degenerate,
                "reason": self.reason}


def _rational_gcd(fracs) -> Fraction:
    den = reduce(lambda a, b: a * b // math.gcd(a, b), (f.denominator for f in fracs), 1)
    nums = [int(f * den) for f in fracs]
    return Fraction(reduce(math.gcd, nums), den)


def minimal_real_period(pot: DelaunayPotential, tol: float = 1e-8, pmax: float = 1000.0,
                        max_den: int = 64) -> ClosingReport:
    """Smallest p > 0 with exp(p D(1)) = I, certified by the exponential itself."""
    M = pot.at(1.0)
    spec = spectrum(pot, 1.0)
    if np.abs(M).max() == 0:
        return ClosingReport(spec, None, 0.0, True, "D(1) = 0: every p is a period")
    scale = max(1.0, float(np.abs(M).max()))
    zero_tol = 1e-4 * scale
    vals = spec.values
    nz = vals[np.abs(vals) > zero_tol]
    if nz.size == 0:
        return ClosingReport(spec, None, math.inf, False, "nilpotent D(1): exp(pD) = I only for p = 0")
    if np.abs(nz.real).max() > max(tol, 1e-9) * scale:
        return ClosingReport(spec, None, math.inf, False, "eigenvalue with nonzero real part")
    freqs = np.abs(nz.imag)
    top = freqs.max()
    fracs = []
    for f in freqs:
        q = Fraction(float(f / top)).limit_denominator(max_den)
        if abs(float(q) - f / top) > 1e-9:
            return ClosingReport(spec, None, math.inf, False, "incommensurable frequencies")
        fracs.append(q)
    g = _rational_gcd(fracs)
    p0 = 2 * math.pi / (top * float(g))
    best = math.inf
    k = 1
    while k * p0 <= pmax * (1 + 1e-12):
        p = k * p0
        res = float(np.abs(expm(p * M) - np.eye(M.shape[0])).max())
        best = min(best, res)
        if res < tol:
            return ClosingReport(spec, p, res, False, "" if k == 1 else f"certified at multiple {k}", p0)
        k += 1
    return ClosingReport(spec, None, best, False,
                         f"candidate {p0:.12g} and its multiples up to {pmax:g} fail the exp certificate", p0)


def period_residual_scan(pot: DelaunayPotential, periods) -> np.ndarray:
    M = pot.at(1.0)
    I = np.eye(M.shape[0])
    return np.array([np.abs(expm(p * M) - I).max() for p in periods])


# ---------------------------------------------------------------------------
# Moebius strips

@dataclass
class MoebiusVerdict:
    algebraic_ok: bool | None
    w0_conjugation_residual: float
    half_monodromy_residual: float
    eigenvalue_condition_ok: bool
    W0: np.ndarray
    lemma: dict = field(default_factory=dict)
    tol: float = 1e-10

    @property
    def passed(self) -> bool:
        alg = True if self.algebraic_ok is None else self.algebraic_ok
        return bool(alg and self.eigenvalue_condition_ok
                    and self.w0_conjugation_residual < self.tol
                    and self.half_monodromy_residual < self.tol)

    def to_json(self) -> dict:
        return {"algebraic_ok": self.algebraic_ok,
                "w0_conjugation_residual": self.w0_conjugation_residual,
                "half_monodromy_residual": self.half_monodromy_residual,
                "eigenvalue_condition_ok": self.eigenvalue_condition_ok,
                "W0": [float(x) for x in np.diag(self.W0)],
                "lemma": self.lemma, "passed": self.passed}


def w0_candidates(n: int) -> list[np.ndarray]:
    """diag(1,1,1,-1, eps) with an odd number of -1 among the n entries of eps."""
    out = []
    for eps in itertools.product((1.0, -1.0), repeat=n):
        if np.prod(eps) < 0:
            out.append(np.diag([1.0, 1.0, 1.0, -1.0, *eps]))
    # patterns listed with leading -1 first, e.g. (-1, 1) before (1, -1)
    out.sort(key=lambda W: tuple(np.diag(W)[4:]))
    return out


def moebius_check(pot: DelaunayPotential, tol: float = 1e-10, nsamples: int = 32) -> MoebiusVerdict:
    lams = loopnum.circle_points(nsamples)
    Dl = evaluate(pot.D, lams)
    Dinv = evaluate(pot.D, 1.0 / lams)
    best = None
    for W in w0_candidates(pot.n):
        r = float(np.abs(W @ Dl @ W - Dinv).max())
        if best is None or r < best[0] - 1e-15:
            best = (r, W)
    conj_res, W0 = best
    M1 = pot.at(1.0)
    half = float(np.abs(expm(np.pi * M1) - W0).max())

    algebraic = None
    lemma = {}
    inv = pot.invariants
    spec = eig(M1)
    mult_ok = match_spectra(np.exp(np.pi * spec.values), np.diag(W0).astype(complex))[0] < 1e-6
    ev_ok = mult_ok
    if inv is not None:
        # conditions on the first normal direction: beta_1, k_1 imaginary, Im s = 0
        algebraic = bool(abs(inv.beta[0].real) <= tol and abs(inv.kappa[0].real) <= tol
                         and abs(inv.s.imag) <= tol)
        if inv.n == 1:
            k1 = inv.kappa[0]
            s1 = inv.s.real
            e1 = np.exp(2 * np.pi * k1)
            e2 = np.exp(np.pi * np.sqrt(complex(-4 * abs(k1) ** 2 - 2 * s1)))
            lemma = {"exp_2pi_k1": [float(e1.real), float(e1.imag)],
                     "exp_pi_root": [float(e2.real), float(e2.imag)]}
            ev_ok = bool(abs(e1 + 1) < 1e-8 and abs(e2 - 1) < 1e-8)
    return MoebiusVerdict(algebraic, conj_res, half, bool(ev_ok), W0, lemma, tol)


@dataclass
class EigenTypes:
    spectrum: Spectrum
    kinds: list
    n_real: int
    n_imag: int

    @property
    def minimality_obstruction(self) -> bool:
        """Two real and two imaginary nonzero eigenvalues."""
        return self.n_real == 2 and self.n_imag == 2


def classify(values, tol: float = 1e-9) -> list:
    kinds = []
    for z in values:
        re, im = abs(z.real) > tol, abs(z.imag) > tol
        kinds.append("zero" if not (re or im) else "real" if not im else "imaginary" if not re else "complex")
    return kinds


def moebius_eigentypes(m: int, l: int, beta1: complex, lam0=1.0, tol: float = 1e-9) -> EigenTypes:
    """Closed-form spectrum of moebius_family at lam0, beta1 = (sqrt2/2) i beta*.

    x = +-(sqrt2/2) sqrt(-(m^2+l^2) +- sqrt(m^4 + l^4 + 32|b|^2 - (lam^2 + lam^-2)(m^2 l^2 + 16|b|^2))).
    """
    lam0 = complex(lam0)
    if abs(abs(lam0) - 1) > 1e-12:
        raise ValueError("lambda must lie on the unit circle")
    b2 = abs(beta1) ** 2
    c2 = (lam0 ** 2 + lam0 ** -2).real
    inner = np.sqrt(complex(m ** 4 + l ** 4 + 32 * b2 - c2 * (m * m * l * l + 16 * b2)))
    vals = [0j]
    for sg in (1, -1):
        w = (math.sqrt(2) / 2) * np.sqrt(-(m * m + l * l) + sg * inner)
        vals += [w, -w]
    spec = Spectrum(np.array(vals))
    kinds = classify(spec.values, tol)
    return EigenTypes(spec, kinds, kinds.count("real"), kinds.count("imaginary"))


def minimality_obstruction(pot: DelaunayPotential, lam0=1j, tol: float = 1e-9) -> EigenTypes:
    spec = spectrum(pot, lam0)
    kinds = classify(spec.values, tol)
    return EigenTypes(spec, kinds, kinds.count("real"), kinds.count("imaginary"))


# ---------------------------------------------------------------------------
# non-real periods

@dataclass
class NonrealReport:
    commutator: float
    reality: float
    closure: float
    factorization: float = 0.0
    condition: float = 1.0
    chi_source: str = "split"

    def passed(self, tol: float = 1e-8) -> bool:
        return (self.commutator < tol and self.reality < tol and self.closure < tol
                and self.factorization < tol)

    def to_json(self) -> dict:
        return {"commutator": self.commutator, "reality": self.reality, "closure": self.closure,
                "factorization": self.factorization, "condition": self.condition,
                "chi_source": self.chi_source}


def nonreal_period_check(pot: DelaunayPotential, omega: complex, b_plus: LaurentMatrix,
                         lams=None, chi=None) -> NonrealReport:
    """Residuals for the second-period splitting exp(omega D) = chi b_plus.

    (i) [D(lam), b_plus(lam)], (ii) max |Im chi(lam)|, (iii) |chi(1) - I| and
    the relative factorisation residual |chi b_plus - exp(omega D)| / |exp(omega D)|.
    Without an explicit `chi` callable, chi = exp(omega D) b_plus^{-1} is formed
    by a linear solve; its accuracy is limited by the reported condition number
    of b_plus, which is large for the Ejiri data (~1e10).
    """
    if b_plus.dmin < 0 and np.any(b_plus.coeffs[:-b_plus.dmin] != 0):
        raise ValueError("b_plus has negative-degree coefficients; it must be a positive loop")
    if lams is None:
        lams = loopnum.circle_points(32)
    lams = np.asarray(lams, dtype=complex)
    N = pot.dim
    comm = reality = fact = 0.0
    cond = 1.0

    def chi_at(lam, E, bp):
        if chi is not None:
            return np.asarray(chi(lam))
        return np.linalg.solve(bp.T, E.T).T

    for lam in list(lams) + [1.0 + 0j]:
        Dm = evaluate(pot.D, lam)
        bp = evaluate(b_plus, lam)
        E = expm(omega * Dm)
        X = chi_at(lam, E, bp)
        comm = max(comm, float(np.abs(Dm @ bp - bp @ Dm).max()))
        reality = max(reality, float(np.abs(X.imag).max()))
        fact = max(fact, float(np.abs(X @ bp - E).max() / np.abs(E).max()))
        cond = max(cond, float(np.linalg.cond(bp)))
        if lam == 1.0:
            closure = float(np.abs(X - np.eye(N)).max())
    return NonrealReport(comm, reality, closure, fact, cond, "given" if chi is not None else "split")


def ejiri_b_plus(K: int = 256, trunc: float = 1e-14) -> LaurentMatrix:
    """b_+(lam) = exp(4 sqrt3 pi i conj(alpha')(lam)) as a positive Laurent series.

    conj(alpha') has degrees 0 and 1 and its exponential is entire in lam, so
    the Taylor coefficients are recovered by FFT from K circle samples and the
    tail below trunc (relative) is dropped.
    """
    apb = loopnum.conj_star(ejiri_alpha_prime())
    lams = loopnum.circle_points(K)
    vals = np.array([expm(4j * math.sqrt(3) * math.pi * evaluate(apb, lam)) for lam in lams])
    modes = np.fft.fft(vals, axis=0) / K
    neg = np.abs(modes[K // 2 + 1:]).max()
    if neg > trunc * np.abs(modes).max():
        raise ArithmeticError(f"positive factor sampling aliased (negative modes {neg:.2e})")
    mags = np.abs(modes[:K // 2]).max(axis=(1, 2))
    keep = np.nonzero(mags > trunc * mags.max())[0].max() + 1
    return LaurentMatrix(7, 0, modes[:keep])


def lambda_sweep(pot: DelaunayPotential, lams) -> list:
    return [(complex(lam), spectrum(pot, lam)) for lam in lams]


__all__ = ["spectrum", "s3_spectrum_closed_form", "ClosingReport", "minimal_real_period",
           "MoebiusVerdict", "moebius_check", "moebius_eigentypes", "minimality_obstruction",
           "nonreal_period_check", "ejiri_b_plus", "lambda_sweep", "EJIRI_OMEGA"]
