import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dsbem.mesh import make_icosphere
from dsbem.operators import eval_double_layer, eval_single_layer
from dsbem.oracle import (
    MAX_DEGREE,
    HarmonicMode,
    PointSourceReference,
    brute_force_potential,
    point_source_field,
    point_source_gradient,
    sphere_integrate,
    sphere_operator_eigenvalue,
    transmission_reference,
)
from dsbem.spaces import DensityP0, DensityP1

MESH2 = make_icosphere(2)
MESH3 = make_icosphere(3)
ALL_MODES = [HarmonicMode(n, m) for n in range(MAX_DEGREE + 1) for m in range(-n, n + 1)]


def _laplacian_fd(f, x, eps=1e-3):
    out = -6 * f(x)
    for a in range(3):
        e = np.zeros(3)
        e[a] = eps
        out = out + f(x + e) + f(x - e)
    return out / eps**2


def _gradient_fd(f, x, eps=1e-6):
    cols = []
    for a in range(3):
        e = np.zeros(3)
        e[a] = eps
        cols.append((f(x + e) - f(x - e)) / (2 * eps))
    return np.stack(cols, axis=-1)


# ----------------------------------------------------------------------------
# eigenvalue table


@pytest.mark.parametrize(
    "op, n, value",
    [("V", 0, 1.0), ("K", 0, 0.5), ("T", 0, 0.0), ("V", 1, 1 / 3), ("K", 1, 1 / 6), ("T", 1, 2 / 3),
     ("V", 4, 1 / 9), ("K", 4, 1 / 18), ("T", 4, 20 / 9)],
)
def test_eigenvalue_table(op, n, value):
    assert_allclose(sphere_operator_eigenvalue(op, n), value, rtol=1e-15)
    assert_allclose(sphere_operator_eigenvalue(op.lower(), n), value, rtol=1e-15)


def test_eigenvalue_calderon_relation():
    # V T = 1/4 - K^2 on every harmonic degree
    for n in range(10):
        v, k, t = (sphere_operator_eigenvalue(op, n) for op in "VKT")
        assert_allclose(v * t, 0.25 - k**2, atol=1e-15)


def test_eigenvalue_errors():
    with pytest.raises(ValueError):
        sphere_operator_eigenvalue("V", -1)
    with pytest.raises(ValueError):
        sphere_operator_eigenvalue("W", 1)


def test_v_eigenvalue_from_brute_force_shell():
    # the degree-0 single layer value on the surface, approached from outside
    one = DensityP0(np.ones(MESH3.n_triangles))
    x = np.array([0.0, 0.0, 1.5])
    assert_allclose(brute_force_potential(MESH3, one, x) * 1.5, sphere_operator_eigenvalue("V", 0), rtol=1e-2)


# ----------------------------------------------------------------------------
# point sources


def test_point_source_examples():
    assert_allclose(point_source_field((0, 0, 0), (0, 0, 1)), 1 / (4 * np.pi), rtol=1e-15)
    assert_allclose(point_source_field((0, 0, 0), (0, 0, 1)), 0.0795775, rtol=1e-6)
    assert_allclose(point_source_field((1, 0, 0), (1, 2, 0)), 0.5 * point_source_field((0, 0, 0), (0, 0, 1)), rtol=1e-15)
    a, b = (0.3, -1.0, 2.0), (1.5, 0.2, -0.7)
    assert point_source_field(a, b) == point_source_field(b, a)


def test_point_source_vectorized_and_coincident():
    x = np.array([[0, 0, 1.0], [0, 0, 2.0]])
    assert_allclose(point_source_field((0, 0, 0), x), [1 / (4 * np.pi), 1 / (8 * np.pi)])
    with pytest.raises(ValueError, match="coincides"):
        point_source_field((1, 2, 3), (1, 2, 3))
    with pytest.raises(ValueError, match="coincides"):
        point_source_gradient((1, 2, 3), np.array([[1.0, 2, 3]]))


def test_point_source_gradient_matches_finite_differences():
    x0 = np.array([0.0, 0.0, 2.0])
    x = np.array([0.3, -0.4, 0.5])
    assert_allclose(point_source_gradient(x0, x), _gradient_fd(lambda p: point_source_field(x0, p), x), rtol=1e-7)


# ----------------------------------------------------------------------------
# harmonics


def test_low_degree_harmonics_have_expected_shape():
    x = np.array([[0.3, -0.5, 0.8], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
    assert_allclose(HarmonicMode(0).racah(x), 1.0)
    assert_allclose(HarmonicMode(1, 0).racah(x), x[:, 2] / np.linalg.norm(x, axis=1))
    assert_allclose(HarmonicMode(1, 1).racah(x), x[:, 0] / np.linalg.norm(x, axis=1))
    assert_allclose(HarmonicMode(1, -1).racah(x), x[:, 1] / np.linalg.norm(x, axis=1))
    assert_allclose(HarmonicMode(0)(x), 1 / np.sqrt(4 * np.pi))


@pytest.mark.parametrize("mode", ALL_MODES, ids=lambda h: f"{h.n},{h.m}")
def test_solid_harmonics_are_harmonic_and_homogeneous(mode):
    x = np.array([0.4, -0.3, 0.7])
    scale = max(1.0, abs(float(mode.solid(x))))
    assert abs(_laplacian_fd(mode.solid, x)) <= 1e-5 * scale
    assert_allclose(mode.solid(2.5 * x), 2.5**mode.n * mode.solid(x), rtol=1e-12, atol=1e-15)
    assert_allclose(mode.solid_gradient(x), _gradient_fd(mode.solid, x), rtol=1e-6, atol=1e-9)


def test_modes_orthonormal_on_level3():
    # the invariant is stated at the mesh level 3 sphere quadrature
    worst = 0.0
    for a, b in itertools.combinations_with_replacement(ALL_MODES, 2):
        ip = sphere_integrate(MESH3, lambda x: a(x) * b(x))
        worst = max(worst, abs(ip - (1.0 if a == b else 0.0)))
    assert worst <= 1e-3


def test_harmonic_mode_errors():
    with pytest.raises(ValueError):
        HarmonicMode(1, 2)
    with pytest.raises(ValueError):
        HarmonicMode(-1)
    with pytest.raises(ValueError):
        HarmonicMode(MAX_DEGREE + 1)


# ----------------------------------------------------------------------------
# transmission references


def _traces(ref, x):
    return np.array([ref.f_i(x), ref.f_e(x), ref.g_i(x), ref.g_e(x)])


def test_transmission_examples():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((6, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    assert_allclose(_traces(transmission_reference(0), x), np.array([1, 1, 0, -1.0])[:, None] * np.ones(6))
    z = x[:, 2]
    assert_allclose(_traces(transmission_reference(1, 0, 1, 1), x), np.array([z, z, z, -2 * z]), atol=1e-15)
    assert not _traces(transmission_reference(2, 1, 0, 0), x).any()
    with pytest.raises(ValueError):
        transmission_reference(-1)


@pytest.mark.parametrize("n, m, a, b", [(0, 0, 1.0, 2.0), (1, 0, 1.0, 1.0), (2, -1, 0.5, -1.5), (3, 2, 2.0, 0.7)])
def test_transmission_invariants(n, m, a, b):
    ref = transmission_reference(n, m, a, b)
    rng = np.random.default_rng(n)
    x = rng.standard_normal((8, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y = ref.mode.racah(x)
    # jumps of the traces
    assert_allclose(ref.f_i(x) - ref.f_e(x), (a - b) * y, atol=1e-14)
    assert_allclose(ref.g_i(x) - ref.g_e(x), (n * a + (n + 1) * b) * y, atol=1e-13)
    # traces agree with the closed-form fields and their radial derivatives
    assert_allclose(ref.interior(x), ref.f_i(x), atol=1e-14)
    assert_allclose(ref.exterior(x), ref.f_e(x), atol=1e-14)
    assert_allclose(np.sum(ref.interior_gradient(x) * x, axis=1), ref.g_i(x), atol=1e-13)
    assert_allclose(np.sum(ref.exterior_gradient(x) * x, axis=1), ref.g_e(x), atol=1e-13)


@pytest.mark.parametrize("n, m", [(1, 0), (2, 1), (4, -3)])
def test_transmission_fields_harmonic(n, m):
    ref = transmission_reference(n, m, 1.0, 1.0)
    inside = np.array([0.2, -0.1, 0.3])
    outside = np.array([1.2, 0.9, -0.8])
    assert abs(_laplacian_fd(ref.interior, inside)) <= 1e-5
    assert abs(_laplacian_fd(ref.exterior, outside)) <= 1e-5
    assert_allclose(ref.exterior_gradient(outside), _gradient_fd(ref.exterior, outside), rtol=1e-6, atol=1e-10)


def test_point_source_reference_sides():
    ps = PointSourceReference()
    v = ps.field([[0.5, 0, 0], [0, 0, 1.5]], [True, False])
    assert_allclose(v, [point_source_field((0, 0, 2), (0.5, 0, 0)), point_source_field((0, 0, 0.3), (0, 0, 1.5))])


def test_normal_derivatives_p0_of_shell():
    gi, ge = transmission_reference(0).normal_derivatives_p0(MESH2)
    assert_allclose(gi.coefficients, 0.0, atol=1e-15)
    # Gauss: the flux of grad(1/r) through the closed polyhedron is -4 pi
    assert_allclose(ge.coefficients @ MESH2.areas, -4 * np.pi, rtol=1e-5)
    assert np.all(ge.coefficients < -1)


# ----------------------------------------------------------------------------
# brute-force potentials


def test_brute_force_matches_single_layer_evaluator(rng):
    for level in (1, 2):
        mesh = make_icosphere(level)
        s = DensityP0(rng.standard_normal(mesh.n_triangles))
        x = np.array([0.0, 0.0, 2.0])
        ref = brute_force_potential(mesh, s, x)
        assert abs(eval_single_layer(mesh, s, x) - ref) <= 1e-4 * abs(ref)


def test_brute_force_matches_double_layer_evaluator(rng):
    for level in (1, 2):
        mesh = make_icosphere(level)
        q = DensityP1(rng.standard_normal(mesh.n_vertices))
        for x in ([0.0, 0.0, 2.0], [0.1, 0.2, -0.1]):
            ref = brute_force_potential(mesh, q, x)
            assert abs(eval_double_layer(mesh, q, x) - ref) <= 1e-4 * abs(ref)


def test_brute_force_shell_far_point():
    # the inscribed polyhedron converges to the sphere at rate h^2; level 4 is
    # the first one whose geometric defect is below the tolerance
    mesh = make_icosphere(4)
    one = DensityP0(np.ones(mesh.n_triangles))
    assert_allclose(brute_force_potential(mesh, one, [0, 0, 3.0]), 1 / 3, atol=1e-3)


def test_brute_force_solid_angle():
    one = DensityP1(np.ones(MESH2.n_vertices))
    assert_allclose(brute_force_potential(MESH2, one, [0.1, 0.0, 0.2]), 1.0, atol=1e-3)
    assert_allclose(brute_force_potential(MESH2, one, [0.0, 2.0, 0.0]), 0.0, atol=1e-3)


def test_brute_force_rejects_close_points():
    one = DensityP0(np.ones(MESH2.n_triangles))
    with pytest.raises(ValueError, match="closer"):
        brute_force_potential(MESH2, one, MESH2.centroids[0] * 1.01)
