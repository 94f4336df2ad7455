import numpy as np
import pytest

from errors import BoundaryPoint, DegenerateOrbit, NonCompact, NonUnimodularVertex, ZeroVector
from geometry.kahler_core import ProjectiveSpace
from geometry.lagrangian import hslag_residual, induced_geometry, volume
from geometry.toric import (
    LabelledPolytope,
    ToricManifold,
    action_angle_to_affine,
    cpn_moment_map,
    cube,
    delzant_lift,
    delzant_subtorus,
    guillemin_metric,
    moment_fiber,
    orbit_volume,
    reduction_volume_factor,
    require_delzant,
    simplex,
    validate_delzant,
)
from utils.spectral import TorusGrid


def bad_triangle():
    return LabelledPolytope(np.array([[1, 0], [0, 1], [-1, -2]]), np.array([0.0, 0.0, 1.0]))


@pytest.mark.parametrize("polytope", [simplex(1), simplex(2), cube(2)], ids=["interval", "triangle", "square"])
def test_standard_polytopes_are_delzant(polytope):
    assert validate_delzant(polytope).delzant


def test_bad_triangle_fails_at_its_apex():
    report = validate_delzant(bad_triangle())
    assert not report.delzant
    assert len(report.failing_vertices) == 1
    failing = report.failing_vertices[0]
    assert failing["reason"] == "NonUnimodularVertex"
    np.testing.assert_allclose(failing["vertex"], [0.0, 0.5], atol=1e-12)
    assert abs(failing["determinant"]) == pytest.approx(2.0)
    with pytest.raises(NonUnimodularVertex):
        require_delzant(bad_triangle())


def test_unbounded_polytope():
    with pytest.raises(NonCompact):
        validate_delzant(LabelledPolytope(np.eye(2), np.zeros(2)))


def test_interval_guillemin_metric_at_midpoint():
    c = 3.0
    data = guillemin_metric(LabelledPolytope(np.array([[1.0], [-1.0]]), np.array([0.0, c])), [c / 2])
    assert data.hessian[0, 0] == pytest.approx(2.0 / c)
    assert data.inverse[0, 0] == pytest.approx(c / 2.0)


def test_square_guillemin_metric_is_diagonal():
    data = guillemin_metric(cube(2), [0.5, 0.5])
    np.testing.assert_allclose(data.hessian, 2.0 * np.eye(2), atol=1e-14)


def test_guillemin_metric_blows_up_at_facets():
    smallest = [np.linalg.eigvalsh(guillemin_metric(simplex(2), [t, 0.3]).inverse).min() for t in (1e-2, 1e-4, 1e-6)]
    assert smallest[0] > smallest[1] > smallest[2]
    with pytest.raises(BoundaryPoint):
        guillemin_metric(simplex(2), [0.0, 0.3])


@pytest.mark.parametrize("n", [1, 2])
def test_guillemin_matches_fubini_study(n, rng):
    toric = ToricManifold(simplex(n))
    fs = ProjectiveSpace(n)
    x = rng.dirichlet(np.ones(n + 1), size=20)[:, :n] * 0.9 + 0.1 / (n + 1)
    theta = rng.uniform(0.0, 2 * np.pi, size=(20, n))
    points = np.empty((20, 2 * n))
    points[:, 0::2], points[:, 1::2] = x, theta
    z, jac = action_angle_to_affine(x, theta)
    pulled = np.einsum("qai,qab,qbj->qij", jac, fs.metric(z), jac)
    np.testing.assert_allclose(pulled, toric.metric(points), rtol=1e-8, atol=1e-10)


def test_moment_fiber_of_square():
    manifold = ToricManifold(cube(2))
    fiber = moment_fiber(manifold, [0.5, 0.5], TorusGrid(2, 8))
    assert fiber.lagrangian_defect() < 1e-14
    np.testing.assert_allclose(induced_geometry(fiber).metric, np.broadcast_to(0.5 * np.eye(2), (64, 2, 2)), atol=1e-14)


def test_interval_midpoint_fiber_is_the_equator():
    fiber = moment_fiber(ToricManifold(simplex(1)), [0.5], TorusGrid(1, 16))
    # the polytope has length 1, so the sphere has area 2π and radius 1/√2
    assert volume(fiber) == pytest.approx(2 * np.pi / np.sqrt(2), rel=1e-12)


def test_clifford_fiber_of_cp2_is_hslag():
    fiber = moment_fiber(ToricManifold(simplex(2)), [1 / 3, 1 / 3], TorusGrid(2, 12))
    _, report = hslag_residual(fiber)
    assert report.sup < 1e-8
    metric = induced_geometry(fiber).metric
    assert np.ptp(metric, axis=0).max() < 1e-9


def test_moment_fiber_rejects_boundary_points():
    with pytest.raises(BoundaryPoint):
        moment_fiber(ToricManifold(simplex(1)), [1.0], TorusGrid(1, 8))


@pytest.mark.parametrize(
    "z, expected",
    [([1, 1], [0.5, 0.5]), ([1, 0, 0], [1.0, 0.0, 0.0]), ([1, 2, 2], [1 / 9, 4 / 9, 4 / 9])],
)
def test_cpn_moment_map(z, expected):
    np.testing.assert_allclose(cpn_moment_map(z), expected, atol=1e-15)


def test_cpn_moment_map_of_zero():
    with pytest.raises(ZeroVector):
        cpn_moment_map([0, 0])


def test_hopf_orbit_length_is_constant(rng):
    iota = np.array([[1], [1]])
    z = rng.normal(size=(100, 2)) + 1j * rng.normal(size=(100, 2))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    lengths = np.array([orbit_volume(iota, p) for p in z])
    np.testing.assert_allclose(lengths, 2 * np.pi, rtol=1e-12)


def test_full_torus_orbit_in_c2():
    assert orbit_volume(np.eye(2), np.array([1, 1]) / np.sqrt(2)) == pytest.approx(2 * np.pi**2)


def test_collapsed_orbit():
    with pytest.raises(DegenerateOrbit):
        orbit_volume(np.eye(2), [1.0, 0.0])


def test_hopf_reduction_factor(rng):
    z = rng.normal(size=(30, 2)) + 1j * rng.normal(size=(30, 2))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    report = reduction_volume_factor(np.array([[1], [1]]), z)
    assert report.kappa == pytest.approx(2 * np.pi)
    assert report.kappa_spread < 1e-10
    assert report.on_level_set


def test_samples_off_the_level_set_are_reported():
    report = reduction_volume_factor(np.array([[1], [1]]), np.array([[1.0, 1.0], [2.0, 0.5]]))
    assert not report.on_level_set


def test_delzant_subtorus_of_interval():
    iota = delzant_subtorus(simplex(1))
    np.testing.assert_array_equal(np.abs(iota), [[1], [1]])


@pytest.mark.parametrize("polytope, point", [(simplex(1), [0.3]), (cube(2), [0.4, 0.7])], ids=["interval", "square"])
def test_lift_volume_is_kappa_times_fiber_volume(polytope, point):
    lift = delzant_lift(polytope, point)
    assert lift.relative_error < 1e-10
    fiber = moment_fiber(ToricManifold(polytope), point, TorusGrid(polytope.dimension, 8))
    assert volume(fiber) == pytest.approx(lift.fiber_volume, rel=1e-12)


def test_reduction_with_fiber_reports_the_lift():
    fiber = moment_fiber(ToricManifold(simplex(1)), [0.3], TorusGrid(1, 8))
    radii = np.sqrt(2.0 * np.array([0.3, 0.7]))
    samples = radii * np.exp(1j * np.array([[0.0, 0.0], [0.4, 2.0], [1.0, -3.0]]))
    report = reduction_volume_factor(np.array([[1], [1]]), samples, fiber)
    assert report.kappa == pytest.approx(2 * np.pi * np.sqrt(2))
    assert report.lift.relative_error < 1e-10
