import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from excursion_lab import (
    ValidationError,
    build_mesh,
    component_count,
    field_on_mesh,
    mc_run,
    sample_coefficients,
    sup_refine,
    superlevel_euler,
)
from excursion_lab.excursion import DegenerateThresholdError, field_hnorm, patch_topology, sample_block, _lipschitz
from excursion_lab.geometry import ELLIPTIC, PROJECTIVE

from conftest import make_basis
from oracles import region_growing_components


def test_sampling_is_reproducible_and_unit():
    a = sample_coefficients(7, 123, 4)
    b = sample_coefficients(7, 123, 4)
    assert np.array_equal(a.C, b.C)
    assert np.linalg.norm(a.C) == pytest.approx(1.0)
    assert not np.array_equal(a.C, sample_coefficients(7, 124, 4).C)
    assert not np.array_equal(a.C, sample_coefficients(7, 123, 4, attempt=1).C)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 10**6), st.integers(1, 12))
def test_sample_block_matches_single_draws(seed, start, n):
    block = sample_block(seed, start, 3, n)
    for i in range(3):
        assert np.array_equal(block[i], sample_coefficients(seed, start + i, n).C)


def test_sphere_measure_symmetry():
    n, K = 4, 100_000
    x = np.abs(sample_block(11, 0, K, n)[:, 0]) ** 2
    se = x.std(ddof=1) / math.sqrt(K)
    assert abs(x.mean() - 1 / (n + 1)) <= 5 * se


def test_sampling_rejects_bad_seed():
    with pytest.raises(ValidationError):
        sample_coefficients(-1, 0, 3)
    with pytest.raises(ValidationError):
        sample_coefficients(1.5, 0, 3)


def test_field_at_embedded_vertex_is_one(cp1_n4):
    geo, onb, mesh = cp1_n4
    F, _ = onb.evaluate(mesh.charts[[10]], mesh.coords[[10]])
    vals = field_on_mesh(onb, F[0], mesh).values
    assert vals[10] == pytest.approx(1.0, abs=1e-14)
    assert np.all(vals <= 1.0)


def test_monomial_field_profile(cp1_n4):
    geo, onb, mesh = cp1_n4
    k, N = 1, 4
    # C picks the k-th orthonormal section, a multiple of z^k
    vals = field_on_mesh(onb, np.eye(5)[k], mesh).values
    Z = geo.homogeneous(mesh.charts, mesh.coords)
    t = np.abs(Z[:, 1]) ** 2 / np.sum(np.abs(Z) ** 2, axis=1)
    profile = np.sqrt(math.comb(N, k) * t**k * (1 - t) ** (N - k))
    assert np.max(np.abs(vals - profile)) <= 1e-12


@pytest.mark.parametrize("fixture", ["cp1_n4", "elliptic_d3"])
def test_hnorm_identity(fixture, request):
    geo, onb, mesh = request.getfixturevalue(fixture)
    rng = np.random.default_rng(3)
    for _ in range(10):
        C = rng.normal(size=onb.n_sections) + 1j * rng.normal(size=onb.n_sections)
        a = field_on_mesh(onb, C, mesh).values
        b = field_hnorm(onb, C, mesh).values
        assert np.max(np.abs(a - b)) <= 1e-10


def test_superlevel_extremes(cp1_n4, elliptic_d3):
    for (geo, onb, mesh), chi in ((cp1_n4, 2), (elliptic_d3, 0)):
        vals = field_on_mesh(onb, sample_coefficients(0, 0, onb.n_sections - 1), mesh).values
        assert superlevel_euler(mesh, vals, vals.min() / 2) == chi
        assert superlevel_euler(mesh, vals, (1 + vals.max()) / 2) == 0
        assert component_count(mesh, vals, (1 + vals.max()) / 2) == 0


def _sphere_xyz(geo, mesh):
    Z = geo.homogeneous(mesh.charts, mesh.coords)
    Z = Z / np.linalg.norm(Z, axis=1)[:, None]
    w = Z[:, 1] * np.conj(Z[:, 0])
    return np.stack([2 * w.real, 2 * w.imag, np.abs(Z[:, 0]) ** 2 - np.abs(Z[:, 1]) ** 2], axis=1)


def test_synthetic_caps(cp1_n4):
    geo, onb, mesh = cp1_n4
    X = _sphere_xyz(geo, mesh)
    height = X[:, 2] + 1e-7 * X[:, 0]
    for u in (-0.5, 0.0, 0.7):
        assert superlevel_euler(mesh, height, u) == 1
        assert component_count(mesh, height, u) == 1 == region_growing_components(mesh, height > u)
    two = np.abs(X[:, 2]) + 1e-7 * X[:, 0]
    assert component_count(mesh, two, 0.5) == 2 == region_growing_components(mesh, two > 0.5)
    assert superlevel_euler(mesh, two, 0.5) == 2


def test_degenerate_threshold_is_reported(cp1_n4):
    geo, onb, mesh = cp1_n4
    vals = np.linspace(0, 1, mesh.n_vertices)
    with pytest.raises(DegenerateThresholdError):
        superlevel_euler(mesh, vals, float(vals[5]) + 1e-12)


def test_sup_refine_linear_system():
    geo, onb = make_basis(PROJECTIVE, 1)
    mesh = build_mesh(geo, 0.2)
    for i in range(5):
        C = sample_coefficients(5, i, 1)
        assert sup_refine(onb, C, mesh) == pytest.approx(1.0, abs=1e-9)


def test_sup_refine_beats_mesh(cp1_n4):
    geo, onb, mesh = cp1_n4
    fine = build_mesh(geo, 0.02)
    for i in range(5):
        C = sample_coefficients(9, i, 4)
        s = sup_refine(onb, C, mesh)
        assert s >= field_on_mesh(onb, C, mesh).values.max()
        assert s >= field_on_mesh(onb, C, fine).values.max() - 1e-12


def test_patch_topology_single_cap(cp1_n4):
    geo, onb, mesh = cp1_n4
    F, _ = onb.evaluate([0], [[0.3 + 0.1j]])
    vals = field_on_mesh(onb, F[0], mesh).values
    chi, comp, _ = patch_topology(onb, F[0], mesh, vals, 0.97, _lipschitz(onb, mesh))
    assert (chi, comp) == (1, 1)


def test_mc_u_one_is_empty(cp1_n4):
    geo, onb, mesh = cp1_n4
    rep = mc_run(geo, onb, mesh, 1.0, 200, seed=1)
    assert rep.mean_chi == 0 and rep.prob_nonempty == 0


def test_mc_linear_system_always_one_ball():
    geo, onb = make_basis(PROJECTIVE, 1)
    rep = mc_run(geo, onb, build_mesh(geo, 0.2), 0.9, 300, seed=2)
    assert rep.mean_chi == 1.0 and rep.prob_nonempty == 1.0 and rep.stderr_chi == 0.0


def test_mc_small_run_report(cp1_n4):
    geo, onb, mesh = cp1_n4
    rep = mc_run(geo, onb, mesh, 0.9, 3000, seed=4, chunk_size=1000)
    js = rep.to_json()
    assert js["nSamples"] == 3000
    assert set(js["supQuantiles"]) == {"0.01", "0.05", "0.25", "0.5", "0.75", "0.95", "0.99"}
    assert sum(rep.component_histogram.values()) == 3000
    assert rep.samples_csv().splitlines()[0] == "index,sup,chi,components"
    # chunking does not change results
    again = mc_run(geo, onb, mesh, 0.9, 3000, seed=4, chunk_size=700)
    assert [s.chi for s in again.samples] == [s.chi for s in rep.samples]


def test_mc_worker_count_does_not_change_results(cp1_n4):
    geo, onb, mesh = cp1_n4
    a = mc_run(geo, onb, mesh, 0.96, 1500, seed=8, workers=1, chunk_size=500)
    b = mc_run(geo, onb, mesh, 0.96, 1500, seed=8, workers=3, chunk_size=500)
    assert a.to_json() == b.to_json()


def test_mc_validation(cp1_n4):
    geo, onb, mesh = cp1_n4
    with pytest.raises(ValidationError):
        mc_run(geo, onb, mesh, 0.0, 10, seed=0)
    with pytest.raises(ValidationError):
        mc_run(geo, onb, build_mesh(geo, 0.5), 0.9, 10, seed=0)
    g2, o2 = make_basis(PROJECTIVE, 2, m=2)
    with pytest.raises(ValidationError):
        mc_run(g2, o2, mesh, 0.9, 10, seed=0)


def test_empty_iff_sup_below_threshold(cp1_n4):
    geo, onb, mesh = cp1_n4
    rep = mc_run(geo, onb, mesh, 0.93, 400, seed=21)
    for s in rep.samples:
        C = sample_coefficients(21, s.index, onb.n_sections - 1, s.attempts).C
        sup = sup_refine(onb, C, mesh)
        assert (sup <= 0.93) == (s.chi == 0 and s.components == 0) == (not s.nonempty)


@pytest.mark.slow
def test_mesh_refinement_stability():
    geo, onb = make_basis(PROJECTIVE, 4)
    a = mc_run(geo, onb, build_mesh(geo, 0.1), 0.96, 10_000, seed=77)
    b = mc_run(geo, onb, build_mesh(geo, 0.05), 0.96, 10_000, seed=77)
    assert abs(a.mean_chi - b.mean_chi) < a.stderr_chi
