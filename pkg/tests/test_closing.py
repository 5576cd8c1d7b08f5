import math
from math import gcd, pi, sqrt

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tewillmore import closing, loopnum
from tewillmore import potentials as P
from tewillmore.matcore import expm, match_spectra

GRID_C = np.linspace(-2, 2, 9)
GRID_T = np.linspace(0, pi, 9)


def test_s3_closed_form_against_reference_eigensolver():
    worst = 0.0
    for c in GRID_C:
        for t in GRID_T:
            ref = np.linalg.eigvals(P.s3_family(c, t).at(1.0))
            err = match_spectra(closing.s3_spectrum_closed_form(c, t), ref)[0]
            # (c, t) = (+-1, pi/2) is defective: a double eigenvalue sits in a Jordan block
            tol = 1e-5 if abs(abs(c) - 1) < 1e-12 and abs(t - pi / 2) < 1e-12 else 1e-9
            assert err < tol, (c, t, err)
            worst = max(worst, err if tol == 1e-9 else 0.0)
    assert worst < 1e-9


def test_s3_closed_form_uses_our_spectrum_too():
    for c, t in ((0.3, 0.4), (-0.7, 2.0), (1.5, 1.0)):
        assert match_spectra(closing.spectrum(P.s3_family(c, t)), closing.s3_spectrum_closed_form(c, t))[0] < 1e-9


@given(st.floats(0, 2 * pi))
def test_s3_at_c_zero(t):
    # c = 0: 0, +-sqrt(-2 +- 2|cos t|)
    r = abs(math.cos(t))
    ref = [0]
    for sg in (1, -1):
        w = np.sqrt(complex(-2 + sg * 2 * r))
        ref += [w, -w]
    assert match_spectra(closing.s3_spectrum_closed_form(0.0, t), ref)[0] < 1e-12


def test_spectrum_rejects_off_circle_lambda():
    with pytest.raises(ValueError):
        closing.spectrum(P.s3_family(0.1, 0.2), 2.0)


@pytest.mark.parametrize("m,l", [(2, 1), (3, 1), (4, 3), (5, 2)])
def test_s3_cylinder_periods(m, l):
    c = (m * m - l * l) / (m * m + l * l)
    rep = closing.minimal_real_period(P.s3_family(c, pi / 2))
    assert rep.minimal_period == pytest.approx(pi * sqrt(m * m + l * l), rel=1e-12)
    assert rep.period_residual < 1e-8
    js = rep.to_json()
    assert js["minimal_period"] == rep.minimal_period and not js["degenerate"]


def test_period_failures_carry_reasons():
    rep = closing.minimal_real_period(P.s3_family(1.0, pi / 2), pmax=200.0)
    assert rep.minimal_period is None and rep.period_residual > 1e-8
    rep = closing.minimal_real_period(P.s3_family(0.5, 0.3))
    assert rep.minimal_period is None and "real part" in rep.reason
    z = closing.minimal_real_period(P.zero_potential(1))
    assert z.degenerate and z.minimal_period is None


def test_period_residual_scan_marks_the_period():
    pot = P.s3_family(0.6, pi / 2)
    p = pi * sqrt(5)
    res = closing.period_residual_scan(pot, [p / 2, p, 1.5 * p, 2 * p])
    assert res[1] < 1e-9 and res[3] < 1e-9
    assert res[0] > 1e-2 and res[2] > 1e-2


def test_moebius_scan_pass_set():
    """Over coprime (m, l) the strip certificate holds exactly when m is even and l odd."""
    for m in range(1, 9):
        for l in range(1, 9):
            if gcd(m, l) != 1:
                continue
            for bstar in (0.0, 0.5, 1.0):
                v = closing.moebius_check(P.moebius_family(m, l, bstar))
                assert v.passed == (m % 2 == 0 and l % 2 == 1), (m, l, bstar)


def test_moebius_verdict_details():
    v = closing.moebius_check(P.moebius_family(4, 1, 0.5))
    assert v.algebraic_ok and v.eigenvalue_condition_ok
    assert np.array_equal(np.diag(v.W0), [1, 1, 1, -1, -1])
    assert v.lemma["exp_2pi_k1"] == pytest.approx([-1.0, 0.0], abs=1e-12)
    js = v.to_json()
    assert js["passed"] and js["W0"] == [1.0, 1.0, 1.0, -1.0, -1.0]


def test_w0_candidates_have_unit_determinant():
    for n in (1, 2, 3):
        cands = closing.w0_candidates(n)
        assert len(cands) == 2 ** (n - 1)
        assert all(np.linalg.det(W) == pytest.approx(1.0) for W in cands)


def test_s4_strip_verdict():
    v = closing.moebius_check(P.s4_moebius(1.0))
    assert v.passed
    assert np.array_equal(np.diag(v.W0), [1, 1, 1, -1, -1, 1])
    assert v.half_monodromy_residual < 1e-10


@given(st.integers(1, 6), st.integers(1, 6), st.floats(0, 2), st.floats(0, 2 * pi))
def test_moebius_eigentypes_match_numeric(m, l, bstar, phi):
    lam = np.exp(1j * phi)
    beta1 = sqrt(2) / 2 * 1j * bstar
    et = closing.moebius_eigentypes(m, l, beta1, lam)
    M = P.moebius_family(m, l, bstar).at(lam)
    ref = np.linalg.eigvals(M)
    scale = max(1.0, np.abs(M).max())
    # near-degenerate pairs split like sqrt(eps), hence the loose bound
    assert match_spectra(et.spectrum, ref)[0] < 1e-6 * scale


def test_minimality_obstruction_on_moebius_family():
    # at lambda = i the (2, 1) strip has two real and two imaginary eigenvalues
    et = closing.minimality_obstruction(P.moebius_family(2, 1, 1.0), 1j)
    ref = closing.moebius_eigentypes(2, 1, sqrt(2) / 2 * 1j, 1j)
    assert et.n_real == ref.n_real and et.n_imag == ref.n_imag
    assert et.minimality_obstruction == ref.minimality_obstruction


def test_classify():
    assert closing.classify([0, 1, 1j, 1 + 1j]) == ["zero", "real", "imaginary", "complex"]


def _printed_sign_b_plus(K=256):
    apb = loopnum.conj_star(P.ejiri_alpha_prime())
    lams = loopnum.circle_points(K)
    vals = np.array([expm(-4j * sqrt(3) * pi * loopnum.evaluate(apb, x)) for x in lams])
    return loopnum.LaurentMatrix(7, 0, (np.fft.fft(vals, axis=0) / K)[:K // 2])


def test_ejiri_nonreal_period_split():
    A, B, pot = P.ejiri_data()
    omega = 2j * sqrt(3) * pi
    bp = closing.ejiri_b_plus()
    chi = lambda x: expm(2 * sqrt(3) * pi * B(x))
    good = closing.nonreal_period_check(pot, omega, bp, chi=chi)
    assert good.passed(1e-8), good.to_json()
    assert good.chi_source == "given"
    bad = closing.nonreal_period_check(pot, omega, _printed_sign_b_plus(), chi=chi)
    assert bad.factorization > 1.0
    assert not bad.passed(1e-8)


def test_ejiri_split_chi_is_ill_conditioned():
    _, _, pot = P.ejiri_data()
    rep = closing.nonreal_period_check(pot, 2j * sqrt(3) * pi, closing.ejiri_b_plus(),
                                       lams=loopnum.circle_points(4))
    assert rep.chi_source == "split"
    assert rep.condition > 1e8
    assert rep.commutator < 1e-8


def test_nonreal_rejects_negative_loops():
    _, _, pot = P.ejiri_data()
    neg = loopnum.LaurentMatrix(7, -1, np.stack([np.eye(7), np.eye(7)]))
    with pytest.raises(ValueError):
        closing.nonreal_period_check(pot, 1j, neg)


def test_zero_potential_closing():
    z = P.zero_potential(1)
    assert np.all(closing.spectrum(z).values == 0)
    v = closing.moebius_check(z)
    assert v.w0_conjugation_residual == 0 and not v.passed


def test_lambda_sweep():
    out = closing.lambda_sweep(P.moebius_family(2, 1), loopnum.circle_points(4))
    assert len(out) == 4 and all(len(s.values) == 5 for _, s in out)
