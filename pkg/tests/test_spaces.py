import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from dsbem.mesh import make_box, make_icosphere
from dsbem.oracle import point_source_field
from dsbem.spaces import (
    DensityP0,
    DensityP1,
    TracePair,
    WeakData,
    apply_zero_mean_gauge,
    density_from_json,
    density_from_weak,
    interpolate_p1,
    mass_matrices,
    mean_value,
    p0_from_p1_tested,
    p1_from_p0_tested,
    project_to_p0,
    vertex_weights,
    weak_form,
)

ICO0 = make_icosphere(0)
ICO2 = make_icosphere(2)
BOX = make_box()


def test_interpolate_constant_and_z():
    assert_allclose(interpolate_p1(ICO2, lambda x: 1.0).coefficients, 1.0)
    assert_allclose(interpolate_p1(ICO2, lambda x: x[:, 2]).coefficients, ICO2.vertices[:, 2])


def test_interpolate_point_source_peak():
    f = interpolate_p1(ICO2, lambda x: point_source_field((0, 0, 2), x))
    k = int(np.argmax(f.coefficients))
    nearest = int(np.argmin(np.linalg.norm(ICO2.vertices - [0, 0, 1], axis=1)))
    assert k == nearest
    assert_allclose(f.coefficients[k], 1 / (4 * np.pi), rtol=1e-12)


def test_interpolate_rejects_nonfinite():
    with pytest.raises(ValueError, match="non-finite"):
        interpolate_p1(ICO0, lambda x: np.where(x[:, 2] == x[0, 2], np.inf, 0.0))


def test_project_constant():
    assert_allclose(project_to_p0(ICO2, lambda x: 3.5).coefficients, 3.5)


def test_project_z_zero_mean():
    g = project_to_p0(ICO2, lambda x: x[:, 2])
    assert abs(g.coefficients @ ICO2.areas) < 1e-10


def test_project_linear_is_centroid_value():
    g = project_to_p0(ICO2, lambda x: 1 + 2 * x[:, 0] - x[:, 1] + 0.5 * x[:, 2], quad_order=1)
    c = ICO2.centroids
    assert_allclose(g.coefficients, 1 + 2 * c[:, 0] - c[:, 1] + 0.5 * c[:, 2], rtol=1e-13)
    g4 = project_to_p0(ICO2, lambda x: 1 + 2 * x[:, 0] - x[:, 1] + 0.5 * x[:, 2], quad_order=4)
    assert_allclose(g4.coefficients, g.coefficients, rtol=1e-13)


def test_project_rejects_nonfinite():
    with pytest.raises(ValueError, match="non-finite"):
        project_to_p0(ICO0, lambda x: np.full(len(x), np.nan))


@pytest.mark.parametrize("mesh", [ICO0, ICO2, BOX])
def test_mass_matrix_sums(mesh):
    M = mass_matrices(mesh)
    area = mesh.total_area
    assert_allclose(M.M00.sum(), area, rtol=1e-13)
    assert_allclose(M.M11.sum(), area, rtol=1e-13)
    assert_allclose(np.ones(mesh.n_triangles) @ (M.M01 @ np.ones(mesh.n_vertices)), area, rtol=1e-13)
    assert_allclose(M.M00.diagonal(), mesh.areas)
    assert abs(M.M11 - M.M11.T).max() == 0
    assert np.linalg.eigvalsh(M.M11.toarray()).min() > 0


def test_mass_matrix_exact_for_linear_functions():
    # int x^2 over the unit sphere's inscribed polyhedron, P1-exact
    M = mass_matrices(ICO2)
    x = ICO2.vertices[:, 0]
    C = ICO2.corners
    # exact integral of a linear function squared on a flat triangle
    lin = C[:, :, 0]
    exact = np.sum(ICO2.areas * (lin.sum(1) ** 2 + (lin**2).sum(1)) / 12)
    assert_allclose(x @ (M.M11 @ x), exact, rtol=1e-13)


def test_mean_value_examples():
    assert_allclose(mean_value(BOX, DensityP0(np.ones(BOX.n_triangles))), 24.0, rtol=1e-14)
    z = interpolate_p1(ICO2, lambda x: x[:, 2])
    assert abs(mean_value(ICO2, z)) < 1e-10
    assert mean_value(ICO2, DensityP1(np.zeros(ICO2.n_vertices))) == 0.0
    assert_allclose(vertex_weights(ICO2).sum(), ICO2.total_area, rtol=1e-14)


def test_mean_value_rejects_wrong_length():
    with pytest.raises(ValueError, match="coefficients"):
        mean_value(ICO2, DensityP1(np.ones(3)))


def test_gauge_examples():
    d, info = apply_zero_mean_gauge(ICO2, DensityP1(np.full(ICO2.n_vertices, 2.5)))
    assert_allclose(d.coefficients, 0.0, atol=1e-14)
    assert_allclose(info.mean_value, 2.5)
    assert info.gauge == "zero_mean"

    z = interpolate_p1(ICO2, lambda x: x[:, 2])
    zz, info = apply_zero_mean_gauge(ICO2, z)
    assert_allclose(zz.coefficients, z.coefficients, atol=1e-15)

    e = np.zeros(ICO0.n_vertices)
    e[0] = 1.0
    q, info = apply_zero_mean_gauge(ICO0, DensityP1(e))
    assert abs(mean_value(ICO0, q)) < 1e-15
    assert_allclose(info.mean_value, vertex_weights(ICO0)[0] / ICO0.total_area)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=ICO0.n_vertices, max_size=ICO0.n_vertices))
def test_gauge_idempotent_and_zero_mean(values):
    q = DensityP1(values)
    g1, _ = apply_zero_mean_gauge(ICO0, q)
    g2, info2 = apply_zero_mean_gauge(ICO0, g1)
    scale = max(np.linalg.norm(values), 1.0)
    assert abs(mean_value(ICO0, g1)) <= 1e-12 * scale
    assert_allclose(g2.coefficients, g1.coefficients, rtol=0, atol=1e-14 * scale)
    assert abs(info2.mean_value) <= 1e-14 * scale


def test_weak_form_pairings(rng):
    M = mass_matrices(ICO2)
    s = DensityP0(rng.standard_normal(ICO2.n_triangles))
    q = DensityP1(rng.standard_normal(ICO2.n_vertices))
    assert_allclose(weak_form(ICO2, M, s, "p1") @ q.coefficients, s.coefficients @ (M.M01 @ q.coefficients))
    w = WeakData(np.ones(ICO2.n_vertices), "p1")
    assert weak_form(ICO2, M, w, "p1") is not None
    with pytest.raises(TypeError):
        weak_form(ICO2, M, w, "p0")


def test_density_recovery_exact_for_own_space(rng):
    M = mass_matrices(ICO2)
    q = rng.standard_normal(ICO2.n_vertices)
    assert_allclose(p1_from_p0_tested(M, M.M01 @ q), q, atol=1e-10)
    assert_allclose(density_from_weak(M, WeakData(M.M11 @ q, "p1"), "p1").coefficients, q, atol=1e-10)
    s = rng.standard_normal(ICO2.n_triangles)
    rec = p0_from_p1_tested(M, M.M01.T @ s)
    assert_allclose(M.M01.T @ rec, M.M01.T @ s, atol=1e-12)
    # a P1 function's triangle averages are reproduced
    avg = (M.M01 @ q) / ICO2.areas
    assert_allclose(p0_from_p1_tested(M, M.M01.T @ avg), avg, atol=1e-10)


def test_density_json_and_types():
    d = density_from_json({"p0": [1, 2]})
    assert isinstance(d, DensityP0)
    assert d.to_json() == {"p0": [1.0, 2.0]}
    with pytest.raises(ValueError):
        density_from_json({"p2": [1]})
    with pytest.raises(ValueError, match="non-finite"):
        DensityP1([np.inf])
    with pytest.raises(TypeError):
        DensityP0([1.0]) + DensityP1([1.0])
    assert_allclose((2 * DensityP1([1.0, 2.0]) - DensityP1([1.0, 1.0])).coefficients, [1.0, 3.0])


def test_trace_pair_kind_checks():
    p0, p1 = DensityP0([1.0]), DensityP1([1.0])
    TracePair("mixed_int_d_ext_n", p1, p0)
    with pytest.raises(TypeError, match="P1"):
        TracePair("dirichlet", p0, p1)
    with pytest.raises(ValueError):
        TracePair("robin", p1, p1)
