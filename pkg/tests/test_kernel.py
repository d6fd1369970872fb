import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from excursion_lab import (
    ChartPoint,
    ValidationError,
    build_mesh,
    e_derivatives,
    frame_vector,
    gaussian_check,
    normalized_kernel,
    quadrature_rule,
    szego_diag,
    tangent_infinity,
    tyz_check,
)
from excursion_lab.geometry import ELLIPTIC, PROJECTIVE
from excursion_lab.kernel import szego_diag_many

from conftest import make_basis
from oracles import cauchy_derivative, contour_E_derivatives, cp1_gaussian_curve, cp1_normalized_kernel

_, ONB1 = make_basis(PROJECTIVE, 1)
_, ONB5 = make_basis(PROJECTIVE, 5)


def test_frame_vector_linear_system():
    fv = frame_vector(ONB1, 0.0)
    assert abs(fv.F[1]) < 1e-15 and abs(fv.F[0]) > 0
    assert abs(fv.Fprime[0]) < 1e-15 and abs(fv.Fprime[1]) > 0


@pytest.mark.parametrize("family,N,degL,z", [
    (PROJECTIVE, 5, 1, 0.3 - 0.7j),
    (PROJECTIVE, 5, 1, ChartPoint(1, np.array([0.2 + 0.1j]))),
    (ELLIPTIC, 1, 3, 0.4 + 0.3j),
])
def test_frame_derivative_matches_contour_oracle(family, N, degL, z):
    _, onb = make_basis(family, N, degL=degL)
    p = z if isinstance(z, ChartPoint) else ChartPoint(0, np.array([z]))
    fv = frame_vector(onb, p)
    ref = cauchy_derivative(lambda s: onb.evaluate([p.chart], [[s]])[0][0], p.z[0])
    assert np.max(np.abs(fv.Fprime - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_frame_vector_rejects_bad_points():
    with pytest.raises(ValidationError):
        frame_vector(ONB1, [0.1, 0.2])
    with pytest.raises(ValidationError):
        frame_vector(ONB1, np.nan)


@pytest.mark.parametrize("N", [1, 4, 9])
def test_szego_diagonal_is_constant_on_cp1(N):
    _, onb = make_basis(PROJECTIVE, N)
    rng = np.random.default_rng(N)
    z = rng.normal(size=50) * 3 + 1j * rng.normal(size=50)
    vals = szego_diag_many(onb, np.zeros(50, dtype=int), z)
    assert np.max(np.abs(vals - (N + 1) / math.pi)) <= 1e-6


@pytest.mark.parametrize("family,N,degL", [(PROJECTIVE, 6, 1), (ELLIPTIC, 2, 2)])
def test_szego_trace_integrates_to_dimension(family, N, degL):
    geo, onb = make_basis(family, N, degL=degL)
    rule = quadrature_rule(geo, quadrature_rule(geo).order + 6)
    vals = szego_diag_many(onb, rule.charts, rule.coords)
    assert abs(rule.integrate(vals) / geo.N - onb.n_sections) <= 1e-6


def test_normalized_kernel_closed_form():
    for w in (0.0, 0.5, 2 - 1j, 10.0):
        assert normalized_kernel(ONB1, 0.0, w) == pytest.approx(1 / math.sqrt(1 + abs(w) ** 2), abs=1e-12)
    for z, w in ((0.3 + 0.1j, -0.4j), (1.2, 0.9 - 0.2j)):
        assert normalized_kernel(ONB5, z, w) == pytest.approx(cp1_normalized_kernel(5, z, w), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False))
def test_normalized_kernel_bounds(z, w):
    v = normalized_kernel(ONB5, z, w)
    assert 0 <= v <= 1
    assert normalized_kernel(ONB5, z, z) == pytest.approx(1.0, abs=1e-12)


def test_e_derivatives_on_the_diagonal():
    d = e_derivatives(ONB5, 0.4j, 0.4j)
    assert d.E == pytest.approx(1.0) and abs(d.Ez) == 0.0


@pytest.mark.parametrize("family,N,degL", [(PROJECTIVE, 5, 1), (ELLIPTIC, 1, 3)])
def test_diagonal_mixed_derivative_matches_tangent_point(family, N, degL):
    _, onb = make_basis(family, N, degL=degL)
    for z in (0.1 + 0.2j, 0.6 - 0.3j):
        d = e_derivatives(onb, z, 0.3 + 0.3j)
        fv = frame_vector(onb, z)
        T = fv.Fprime - (np.vdot(fv.F, fv.Fprime) / np.vdot(fv.F, fv.F)) * fv.F
        ref = np.vdot(T, T).real / np.vdot(fv.F, fv.F).real
        assert d.EzwbarDiagZ == pytest.approx(ref, rel=1e-10)
        assert tangent_infinity(onb, z).homogeneous == pytest.approx(T / np.linalg.norm(T))


@pytest.mark.parametrize("family,N,degL,z,w", [
    (PROJECTIVE, 5, 1, 0.2 + 0.1j, 0.5 - 0.3j),
    (PROJECTIVE, 3, 1, -0.4j, 0.9),
    (ELLIPTIC, 1, 3, 0.3 + 0.2j, 0.45 + 0.5j),
])
def test_e_derivatives_match_polarized_contours(family, N, degL, z, w):
    _, onb = make_basis(family, N, degL=degL)
    d = e_derivatives(onb, z, w)
    e0, ez, ezw = contour_E_derivatives(onb, z, w)
    assert d.E == pytest.approx(e0.real, rel=1e-10)
    assert abs(d.Ez - ez) <= 1e-8 * abs(ez)
    assert abs(d.Ezwbar - ezw) <= 1e-8 * abs(ezw)


def test_tyz_exact_on_cp1():
    geo, onb = make_basis(PROJECTIVE, 8)
    rep = tyz_check(onb, build_mesh(geo, 0.2 / math.sqrt(8)))
    assert rep.max_deviation == pytest.approx(1 / 8, abs=1e-6)
    assert rep.spread <= 1e-6
    assert rep.to_csv().splitlines()[0] == "chart,re,im,ratio"


def test_gaussian_check_diagonal_and_oracle():
    geo, onb = make_basis(PROJECTIVE, 64)
    same = gaussian_check(onb, 0.0, [0.5 + 0.5j], [0.5 + 0.5j])
    assert same.max_deviation <= 1e-12
    g = np.array([-2, -1, 0, 1, 2], dtype=float) * 0.5
    pts = (g[:, None] + 1j * g[None, :]).ravel()
    u, v = np.repeat(pts, len(pts)), np.tile(pts, len(pts))
    rep = gaussian_check(onb, 0.0, u, v)
    oracle = np.abs(cp1_gaussian_curve(64, u, v) - np.exp(-0.5 * np.abs(u - v) ** 2))
    got = np.array([r["deviation"] for r in rep.rows])
    assert np.max(np.abs(got - oracle)) <= 1e-10
    assert rep.fitted_constant > 0


def test_gaussian_check_rejects_wide_offsets():
    _, onb = make_basis(PROJECTIVE, 4)
    with pytest.raises(ValidationError):
        gaussian_check(onb, 0.0, [3.0], [-3.0])


def test_e_derivatives_contour_equivalence_on_random_pairs():
    _, onb = make_basis(PROJECTIVE, 4)
    rng = np.random.default_rng(44)
    z = rng.normal(size=100) * 0.6 + 1j * rng.normal(size=100) * 0.6
    w = z + (rng.normal(size=100) + 1j * rng.normal(size=100)) * 0.3
    worst = 0.0
    for a, b in zip(z, w):
        d = e_derivatives(onb, a, b)
        _, ez, ezw = contour_E_derivatives(onb, a, b, nodes=24)
        worst = max(worst, abs(d.Ez - ez) / abs(ez), abs(d.Ezwbar - ezw) / abs(ezw))
    assert worst <= 1e-8
