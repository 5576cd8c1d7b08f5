import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from tewillmore import loopnum as ln
from tewillmore.loopnum import BlockStructure, LaurentMatrix

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@st.composite
def laurent(draw, dim=None, span=(-2, 2)):
    n = dim or draw(st.integers(1, 4))
    lo = draw(st.integers(span[0], span[1]))
    k = draw(st.integers(1, 3))
    re = draw(arrays(float, (k, n, n), elements=finite))
    im = draw(arrays(float, (k, n, n), elements=finite))
    return LaurentMatrix(n, lo, re + 1j * im)


def same_series(a, b, tol=1e-12):
    lo, hi = min(a.dmin, b.dmin), max(a.dmax, b.dmax)
    return all(np.abs(a.coeff(d) - b.coeff(d)).max() <= tol for d in range(lo, hi + 1))


def test_block_structure():
    bs = BlockStructure(3)
    assert bs.dim == 7 and bs.split == (4, 3)
    assert np.array_equal(np.diag(bs.J), [-1, 1, 1, 1, 1, 1, 1])
    with pytest.raises(ValueError):
        BlockStructure(0)


def test_coefficients_are_read_only():
    a = LaurentMatrix(2, -1, np.ones((2, 2, 2)))
    with pytest.raises(ValueError):
        a.coeffs[0, 0, 0] = 5
    assert a.window == (-1, 0)
    assert np.all(a.coeff(3) == 0)


def test_constructor_rejects_bad_input():
    with pytest.raises(ValueError):
        LaurentMatrix(3, 0, np.ones((1, 2, 2)))
    with pytest.raises(ValueError):
        LaurentMatrix(2, 0, np.full((1, 2, 2), np.nan))
    with pytest.raises(ValueError):
        LaurentMatrix.from_dict({})


def test_evaluate_scalar_and_vector():
    a = LaurentMatrix.from_dict({-1: np.eye(2), 1: 2 * np.eye(2)})
    assert np.allclose(a(2.0), (0.5 + 4) * np.eye(2))
    lams = ln.circle_points(4)
    vals = a(lams)
    assert vals.shape == (4, 2, 2)
    assert np.allclose(vals[1], (1 / 1j + 2j) * np.eye(2))
    with pytest.raises(ValueError):
        a(0.0)


@given(laurent(dim=3), laurent(dim=3), st.complex_numbers(min_magnitude=0.5, max_magnitude=2))
def test_mul_is_pointwise_product(a, b, lam):
    assert np.allclose((a @ b)(lam), a(lam) @ b(lam), atol=1e-9)
    assert np.allclose((a + b)(lam), a(lam) + b(lam), atol=1e-12)
    assert np.allclose((a - b)(lam), a(lam) - b(lam), atol=1e-12)
    c = ln.commutator(a, b)(lam)
    assert np.allclose(c, a(lam) @ b(lam) - b(lam) @ a(lam), atol=1e-9)


def test_mul_truncation_window():
    a = LaurentMatrix.from_dict({-1: np.eye(2), 1: np.eye(2)})
    full = ln.mul(a, a)
    assert full.window == (-2, 2)
    t = ln.mul(a, a, truncate_to=(0, 3))
    assert t.window == (0, 3)
    assert np.allclose(t.coeff(0), 2 * np.eye(2))
    assert np.allclose(t.coeff(2), np.eye(2)) and np.allclose(t.coeff(3), 0)
    with pytest.raises(ValueError):
        ln.mul(a, a, truncate_to=(2, 1))


@given(laurent())
def test_conj_star_is_involution(a):
    assert same_series(ln.conj_star(ln.conj_star(a)), a, 0.0)
    lam = np.exp(0.3j)
    # on the unit circle a*(lam) = conj(a(lam))
    assert np.allclose(ln.conj_star(a)(lam), np.conj(a(lam)))


@given(laurent())
def test_json_round_trip(a):
    b = ln.loads(ln.dumps(a))
    assert b.dim == a.dim
    assert same_series(a, b, 0.0)
    assert ln.dumps(b) == ln.dumps(a)


def test_json_omits_zero_degrees_and_validates():
    a = LaurentMatrix.from_dict({-1: np.eye(2), 1: np.eye(2)})
    obj = ln.to_json_obj(a)
    assert sorted(obj["coeffs"]) == ["-1", "1"]
    with pytest.raises(ValueError):
        ln.from_json_obj({"dim": 2, "coeffs": {"0": [[1, 2]]}})
    with pytest.raises(ValueError):
        ln.from_json_obj({"coeffs": {}})


@given(laurent(dim=2, span=(-3, 0)))
def test_circle_samples_recover_coefficients(a):
    K = 16
    s = a(ln.circle_points(K))
    b = ln.from_circle_samples(s, a.window)
    assert same_series(a, b, 1e-12)


def test_circle_samples_window_too_wide():
    with pytest.raises(ValueError):
        ln.from_circle_samples(np.zeros((4, 2, 2)), (-3, 3))


def test_twist_parity():
    bs = BlockStructure(1)
    off = np.zeros((5, 5))
    off[4, 0] = off[0, 4] = 1.0
    diag = np.zeros((5, 5))
    diag[0, 1] = diag[1, 0] = 1.0
    good = LaurentMatrix.from_dict({-1: off, 0: diag, 1: off})
    assert ln.twist_parity_check(good, bs)
    bad = LaurentMatrix.from_dict({-1: diag, 0: diag})
    assert not ln.twist_parity_check(bad, bs)
    assert ln.parity_residual(bad, bs) == 1.0
    with pytest.raises(ValueError):
        ln.twist_parity_check(LaurentMatrix.zero(3), bs)
