import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import ellipkinc

from tewillmore import flow
from tewillmore import potentials as P
from tewillmore import surfaces as S
from tewillmore.matcore import expm

# nu(2, 1) = 4 K(3/4) / 2, frozen from scipy.special.ellipk
NU_2_1 = 4.313031294999286


def test_lawson_period_frozen_value():
    assert S.LawsonCoordinate(2, 1).nu == pytest.approx(NU_2_1, abs=1e-13)


@pytest.mark.parametrize("m,l", [(2, 1), (4, 3), (3, 2)])
def test_lawson_coordinate_is_an_elliptic_integral(m, l):
    coord = S.LawsonCoordinate(m, l)
    for vh in (0.3, 1.0, 1.5):
        assert coord.v_of_vhat(vh) == pytest.approx(ellipkinc(vh, 1 - l * l / (m * m)) / m, abs=1e-13)


@given(st.floats(-8, 8))
def test_vhat_inverts_v(v):
    coord = S.LawsonCoordinate(4, 3)
    vh = coord.vhat_of_v(v)
    assert coord.v_of_vhat(vh) == pytest.approx(v, abs=1e-12)


def test_lawson_immersion_symmetries():
    m, l = 2, 1
    coord = S.LawsonCoordinate(m, l)
    u = np.linspace(0, 2 * math.pi, 65)[:-1]
    v = np.linspace(-coord.nu / 4, coord.nu / 4, 9)
    mesh = S.lawson_immersion(m, l, u, v)
    assert np.abs(np.linalg.norm(mesh.y, axis=-1) - 1).max() < 1e-15
    # glide: y(u + pi, -v) = y(u, v) for m even, l odd
    assert S.symmetry_check(mesh, "glide") < 1e-12
    # translation: y(u + t, v) = R(t) y(u, v) with rotations at speeds m and l
    D = np.zeros((5, 5))
    D[1, 2], D[2, 1] = -m, m
    D[3, 4], D[4, 3] = -l, l
    assert S.symmetry_check(mesh, "te", t=u[3], D=D) < 1e-12
    assert np.isfinite(mesh.sym_residual[:-3]).all() and np.isnan(mesh.sym_residual[-3:]).all()


def test_lawson_diagnostics_converge():
    coord = S.LawsonCoordinate(2, 1)
    res = []
    for n in (64, 128):
        u = np.linspace(0, 2 * math.pi, n + 1)[:-1]
        v = np.linspace(-coord.nu / 4, coord.nu / 4, n // 4 + 1)
        res.append(S.diagnostics(S.lawson_immersion(2, 1, u, v)).max_conf)
    assert res[1] < res[0] / 3.5


def test_symmetry_check_rejects_bad_input():
    coord = S.LawsonCoordinate(2, 1)
    mesh = S.lawson_immersion(2, 1, np.linspace(0, 2, 11), np.linspace(-0.5, 0.5, 5))
    with pytest.raises(ValueError, match="aligned"):
        S.symmetry_check(mesh, "te", t=0.33, D=np.zeros((5, 5)))
    with pytest.raises(ValueError):
        S.symmetry_check(mesh, "te")
    with pytest.raises(ValueError):
        S.symmetry_check(mesh, "spin")
    lop = S.lawson_immersion(2, 1, np.linspace(0, 2, 11), np.linspace(-0.5, coord.nu / 8, 5))
    with pytest.raises(ValueError, match="symmetric"):
        S.symmetry_check(lop, "glide", mu=0.2)


def test_lawson_invariants_match_moebius_family():
    inv, frame, extras = S.lawson_invariants(2, 1)
    ref = P.moebius_invariants(2, 1, 0.0)
    assert abs(inv.s - ref.s) < 1e-9
    assert np.abs(inv.kappa - ref.kappa).max() < 1e-9
    assert np.abs(inv.beta).max() < 1e-9
    assert extras["nu"] == pytest.approx(NU_2_1, abs=1e-12)
    assert extras["frame_det"] == pytest.approx(-1.0, abs=1e-9)


def test_lawson_compare_small_grid():
    cmp_ = S.lawson_compare(2, 1, nu_pts=32, nv_pts=9)
    assert cmp_.max_deviation < 1e-8
    js = cmp_.to_json()
    assert js["max_deviation"] == cmp_.max_deviation


def boost(t):
    g = np.eye(5)
    g[:2, :2] = [[math.cosh(t), math.sinh(t)], [math.sinh(t), math.cosh(t)]]
    return g


def test_act_conformal():
    y = np.array([[0.0, 1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]])
    out = S.act_conformal(np.eye(5), y)
    assert np.array_equal(out, y)
    out = S.act_conformal(boost(0.8), y)
    assert np.allclose(np.linalg.norm(out, axis=-1), 1.0)
    # a boost along y_1 fixes the poles +-e_1 and moves other points towards e_1
    assert np.allclose(out[1], [1, 0, 0, 0])
    assert out[0, 0] == pytest.approx(math.tanh(0.8))
    refl = np.diag([1.0, 1, 1, 1, -1])
    with pytest.raises(S.NotInGroupError, match="determinant"):
        S.act_conformal(refl, y)
    assert np.allclose(S.act_conformal(refl, y, require_proper=False), y)
    with pytest.raises(S.NotInGroupError):
        S.act_conformal(np.diag([-1.0, 1, 1, 1, -1]), y)
    with pytest.raises(S.NotInGroupError):
        S.act_conformal(2 * np.eye(5), y)
    with pytest.raises(S.NotInGroupError):
        S.act_conformal(np.eye(5) * (1 + 0j) + 1e-3j, y)
    with pytest.raises(ValueError):
        S.act_conformal(np.eye(5), np.zeros((2, 3)))


@given(st.floats(-2, 2), st.floats(0, 2 * math.pi))
def test_act_conformal_preserves_the_sphere(t, phi):
    g = boost(t) @ expm(np.pad(np.array([[0, -phi], [phi, 0]]), ((2, 1), (2, 1))))
    y = np.array([math.cos(phi), 0.0, math.sin(phi), 0.0])
    assert abs(np.linalg.norm(S.act_conformal(g, y)) - 1) < 1e-12


def _B2(rows):
    return np.array(rows, dtype=complex)


def test_null_candidates_errors():
    with pytest.raises(S.EnvelopeError, match="trivial"):
        S._null_candidates(_B2(np.eye(4)), 1e-9, 1e-6)
    with pytest.raises(S.EnvelopeError, match="not determined"):
        S._null_candidates(_B2(np.zeros((1, 4))), 1e-9, 1e-6)
    with pytest.raises(S.EnvelopeError, match="no lightlike"):
        S._null_candidates(_B2([[1, 0, 0, 0], [0, 0, 0, 1]]), 1e-9, 1e-6)
    with pytest.raises(S.EnvelopeError, match="not lightlike"):
        S._null_candidates(_B2([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]]), 1e-9, 1e-6)


def test_null_candidates_lightlike_plane():
    dim, cands = S._null_candidates(_B2([[0, 0, 1, 0], [0, 0, 0, 1]]), 1e-9, 1e-6)
    assert dim == 2 and len(cands) == 2
    for c in cands:
        assert abs(S.mink(c, c)) < 1e-14 and abs(np.linalg.norm(c) - 1) < 1e-14


def test_synthesized_moebius_strip():
    pot = P.moebius_family(2, 1, 0.5)
    u = np.linspace(0, 2 * math.pi, 33)[:-1]
    v = np.linspace(-0.5, 0.5, 9)
    mesh, traj, frame = S.synthesize(pot, 1.0, u, v, max_dv=0.01)
    d = S.diagnostics(mesh)
    assert d.max_norm_dev < 1e-10
    assert d.min_speed > 0.1
    assert mesh.meta["null_residual"] < 1e-10 and mesh.meta["lightlike_residual"] < 1e-10
    assert mesh.meta["potential_sha256"] == P.content_hash(pot)
    assert S.symmetry_check(mesh, "glide") < 1e-8
    assert S.symmetry_check(mesh, "te", t=u[2], D=pot.at(1.0)) < 1e-8
    lc = mesh.point(3, 4)
    assert max(lc.residuals()) < 1e-10


def test_synthesize_respects_strip():
    pot = P.moebius_family(2, 1, 0.5)
    with pytest.raises(flow.StripError):
        S.synthesize(pot, 1.0, [0.0], [-0.5, 0.5], strip=(-0.25, 0.25))


def test_ejiri_oracle():
    r = S.ejiri_oracle()
    assert r["unit_norm"] < 1e-12
    assert r["printed_homogeneity"] < 1e-12
    assert r["printed_s"][0] == pytest.approx(1 / 6, abs=1e-9) and abs(r["printed_s"][1]) < 1e-9
    assert r["printed_k2"] == pytest.approx(1 / 8, abs=1e-9)
    assert r["joint_spectrum_mismatch"] < 1e-10
    assert r["u_period_residual"] < 1e-10 and r["v_period_residual"] < 1e-10
    assert r["synth_closure_u"] < 1e-8 and r["synth_closure_v"] < 1e-8
    assert r["nonreal"]["factorization"] < 1e-8
    assert "17*sqrt2/48" in r["note"]


def test_stereographic_and_obj_export(tmp_path):
    y = np.array([[1.0, 0, 0, 0], [0, 0, 0, -1.0]])
    assert np.allclose(S.stereographic(y), [[1, 0, 0], [0, 0, 0]])
    # a generic pole: points project to finite values and the map is injective
    X = S.stereographic(y, pole=(1.0, 1.0, 0.0, 0.0))
    assert np.isfinite(X).all() and not np.allclose(X[0], X[1])

    u = np.linspace(0, math.pi, 5)
    v = np.array([-math.pi / 2, 0.0, math.pi / 2])
    Y = np.zeros((5, 3, 5))
    y = np.stack([np.cos(u)[:, None] * np.cos(v), np.sin(u)[:, None] * np.cos(v),
                  np.zeros((5, 3)), np.sin(v) * np.ones((5, 1))], axis=-1)
    mesh = S.SurfaceMesh(u, v, Y, y, {})
    path = tmp_path / "m.obj"
    dropped = S.mesh_to_obj(mesh, path)
    assert dropped == 5  # the v = pi/2 column sits on the pole
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# stereographic")
    assert sum(l.startswith("v ") for l in lines) == 10
    assert sum(l.startswith("f ") for l in lines) == 4
    path2 = tmp_path / "m2.obj"
    S.mesh_to_obj(mesh, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_csv_export(tmp_path):
    mesh = S.lawson_immersion(2, 1, np.linspace(0, 1, 4), np.linspace(-0.2, 0.2, 3))
    S.diagnostics(mesh)
    path = tmp_path / "m.csv"
    S.mesh_to_csv(mesh, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "u,v,y0,y1,y2,y3,conf_residual,speed,sym_residual"
    assert len(lines) == 13
    assert lines[1].endswith("nan,nan,nan")
    assert lines[5].split(",")[-3] != "nan"  # interior node carries a residual
