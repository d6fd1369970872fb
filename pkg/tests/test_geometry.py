import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from excursion_lab import GeometrySpec, ValidationError, build_mesh, make_geometry, quadrature_rule
from excursion_lab.geometry import ELLIPTIC, PROJECTIVE, curvature_fd, curvature_form, icosphere


def test_projective_volume_and_genus():
    g = make_geometry(GeometrySpec(PROJECTIVE, N=4))
    assert g.genus == 0
    assert g.total_volume == pytest.approx(4 * math.pi, rel=1e-10)


def test_elliptic_volume_and_genus():
    g = make_geometry(GeometrySpec(ELLIPTIC, N=1, tau=1j, degL=3))
    assert g.genus == 1
    assert g.total_volume == pytest.approx(3 * math.pi, rel=1e-10)


@pytest.mark.parametrize("bad", [
    dict(family=PROJECTIVE, N=0),
    dict(family=PROJECTIVE, N=-2),
    dict(family="Torus", N=1),
    dict(family=ELLIPTIC, N=1, tau=-1j),
    dict(family=ELLIPTIC, N=1, m=2),
    dict(family=PROJECTIVE, N=1, degL=2),
])
def test_spec_validation(bad):
    with pytest.raises(ValidationError):
        GeometrySpec(**bad)


def test_spec_dict_roundtrip():
    s = GeometrySpec(ELLIPTIC, N=2, tau=0.25 + 1.5j, degL=3)
    assert GeometrySpec.from_dict(s.to_dict()) == s


def test_curvature_at_origin():
    g = make_geometry(GeometrySpec(PROJECTIVE, N=4))
    assert curvature_form(g, 0.0)[0, 0].real == pytest.approx(4.0)


@pytest.mark.parametrize("spec", [
    GeometrySpec(PROJECTIVE, N=3),
    GeometrySpec(PROJECTIVE, N=2, m=2),
    GeometrySpec(ELLIPTIC, N=2, tau=0.3 + 1.1j, degL=2),
])
def test_curvature_positive_and_matches_finite_differences(spec, rng):
    g = make_geometry(spec)
    for _ in range(5):
        z = rng.normal(size=spec.m) + 1j * rng.normal(size=spec.m)
        a = curvature_form(g, z)
        assert np.all(np.linalg.eigvalsh(a) > 0)
        fd = curvature_fd(g, z)
        assert np.max(np.abs(fd - a)) <= 1e-6 * np.max(np.abs(a))


def test_chart_handoff_and_transition():
    g = make_geometry(GeometrySpec(PROJECTIVE, N=2))
    c, z = g.normalize([0, 0], [[1.4], [2.0]])
    assert list(c) == [0, 1]
    assert z[1, 0] == pytest.approx(0.5)
    c2, z2 = g.to_chart(c, z, 0)
    assert np.allclose(z2[:, 0], [1.4, 2.0])


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_projective_distance_symmetric_and_bounded(a, b, c, d):
    g = make_geometry(GeometrySpec(PROJECTIVE, N=1))
    d1 = g.distance([0], [[a + 1j * b]], [0], [[c + 1j * d]])[0]
    d2 = g.distance([0], [[c + 1j * d]], [0], [[a + 1j * b]])[0]
    assert d1 == pytest.approx(d2, abs=1e-12)
    assert 0 <= d1 <= math.pi / 2 + 1e-12


def test_elliptic_distance_is_lattice_invariant():
    g = make_geometry(GeometrySpec(ELLIPTIC, N=1, tau=0.2 + 1j, degL=3))
    z = np.array([[0.1 + 0.3j]])
    w = np.array([[0.35 + 0.6j]])
    shifted = w + 2 + 3 * g.spec.tau
    assert g.distance([0], z, [0], w)[0] == pytest.approx(g.distance([0], z, [0], shifted)[0], abs=1e-12)


def test_midpoint_is_equidistant():
    for spec in (GeometrySpec(PROJECTIVE, N=1), GeometrySpec(ELLIPTIC, N=1, degL=2)):
        g = make_geometry(spec)
        rng = np.random.default_rng(1)
        c1, z1 = g.sample_uniform(rng, 20)
        c2, z2 = g.sample_uniform(rng, 20)
        cm, zm = g.midpoint(c1, z1, c2, z2)
        a = g.distance(c1, z1, cm, zm)
        b = g.distance(cm, zm, c2, z2)
        assert np.allclose(a, b, atol=1e-10)
        assert np.allclose(a + b, g.distance(c1, z1, c2, z2), atol=1e-10)


@pytest.mark.parametrize("spec,chi", [
    (GeometrySpec(PROJECTIVE, N=4), 2),
    (GeometrySpec(ELLIPTIC, N=1, degL=3), 0),
])
def test_mesh_euler_characteristic(spec, chi):
    mesh = build_mesh(make_geometry(spec), 0.1)
    assert mesh.euler_characteristic == chi
    assert mesh.max_edge_length <= 0.1 * (1 + 1e-9)


@pytest.mark.parametrize("spec", [GeometrySpec(PROJECTIVE, N=4), GeometrySpec(ELLIPTIC, N=1, degL=3)])
def test_mesh_refinement_scales_triangle_count(spec):
    g = make_geometry(spec)
    a = len(build_mesh(g, 0.1).triangles)
    b = len(build_mesh(g, 0.05).triangles)
    assert 4 * 0.7 <= b / a <= 4 * 1.3


def test_mesh_rejects_surfaces_and_bad_edges():
    with pytest.raises(ValidationError):
        build_mesh(make_geometry(GeometrySpec(PROJECTIVE, N=2, m=2)), 0.1)
    with pytest.raises(ValidationError):
        build_mesh(make_geometry(GeometrySpec(PROJECTIVE, N=2)), 0.0)


def test_icosphere_counts():
    V, T = icosphere(3)
    assert len(V) - (3 * len(T)) // 2 + len(T) == 2


def test_quadrature_volume_and_symmetry():
    g = make_geometry(GeometrySpec(PROJECTIVE, N=4))
    rule = quadrature_rule(g)
    assert abs(rule.integrate(np.ones(len(rule.weights))) - 4 * math.pi) <= 1e-8
    z = g.homogeneous(rule.charts, rule.coords)
    # odd integrand Z1 / Z0 weighted by the FS factor integrates to zero
    odd = z[:, 1] * np.conj(z[:, 0]) / np.sum(np.abs(z) ** 2, axis=1)
    assert abs(rule.integrate(odd)) <= 1e-10


def test_quadrature_projective_plane_volume():
    g = make_geometry(GeometrySpec(PROJECTIVE, N=3, m=2))
    # (N omega)^2 / 2 integrates to N^2 pi^2 / 2
    assert g.total_volume == pytest.approx(9 * math.pi**2 / 2, rel=1e-10)


def test_domain_checks():
    g = make_geometry(GeometrySpec(PROJECTIVE, N=2))
    with pytest.raises(ValidationError):
        g.check_domain([0], [[1e5]])
    with pytest.raises(ValidationError):
        g.check_domain([3], [[0.1]])
