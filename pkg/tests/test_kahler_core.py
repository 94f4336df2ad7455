import numpy as np
import pytest
import sympy as sp

from errors import PointOutsideChart
from geometry.kahler_core import (
    FlatTorus,
    ProjectiveSpace,
    SurfaceOfRevolution,
    compatible_structure,
    eval_tensors,
    hamiltonian_flow,
    killing_potentials,
    laplacian,
    standard_acs,
    standard_omega,
    structure_distance,
)
from utils.fields import ConstantField, SymbolicField


def _random_points(rng, count, dim, scale=1.5):
    return rng.uniform(-scale, scale, size=(count, dim))


def test_flat_tensors_are_standard():
    tensors = eval_tensors(FlatTorus(1), [0.2, -0.7])
    np.testing.assert_array_equal(tensors.omega, [[0.0, 1.0], [-1.0, 0.0]])
    np.testing.assert_array_equal(tensors.acs, [[0.0, -1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(tensors.metric, np.eye(2))
    np.testing.assert_array_equal(tensors.ricci, np.zeros((2, 2)))


def test_fubini_study_at_origin_is_scalar(cp1):
    tensors = eval_tensors(cp1, [0.0, 0.0])
    np.testing.assert_allclose(tensors.metric, 2.0 * np.eye(2), atol=1e-12)


@pytest.mark.parametrize("point", [[0.0, 0.0], [0.4, -0.3], [1.2, 0.9]])
def test_fubini_study_is_einstein(cp1, point):
    tensors = eval_tensors(cp1, point)
    np.testing.assert_allclose(tensors.ricci, 2.0 * tensors.metric, rtol=1e-8, atol=1e-10)


def test_unit_sphere_gauss_curvature_at_equator(sphere):
    tensors = eval_tensors(sphere, [1.0, 0.0])
    np.testing.assert_allclose(tensors.ricci, tensors.metric, atol=1e-8)


def test_eval_outside_chart():
    with pytest.raises(PointOutsideChart):
        eval_tensors(FlatTorus(1, extent=10.0), [20.0, 0.0])


@pytest.mark.parametrize(
    "backend",
    [lambda: FlatTorus(2), lambda: ProjectiveSpace(1), lambda: SurfaceOfRevolution((1.0, 2.0, 3.0))],
    ids=["flat", "cp1", "triaxial"],
)
def test_compatibility_at_random_points(backend, rng):
    manifold = backend()
    points = _random_points(rng, 50, manifold.real_dimension)
    acs, metric = manifold.acs(points), manifold.metric(points)
    eye = np.eye(manifold.real_dimension)
    assert np.abs(acs @ acs + eye).max() < 1e-10
    assert np.abs(metric - np.swapaxes(metric, 1, 2)).max() < 1e-10
    assert np.linalg.eigvalsh(metric).min() > 0


def test_constant_potential_generates_no_motion(cp1):
    p = np.array([[0.3, 0.4]])
    np.testing.assert_array_equal(hamiltonian_flow(cp1, ConstantField(2.0, 2), 1.0, p), p)


def test_flat_momentum_flow_translates_conjugate_coordinate():
    x, y = sp.symbols("x y", real=True)
    out = hamiltonian_flow(FlatTorus(1), SymbolicField(x, (x, y)), 0.5, [[0.2, 0.3]])
    np.testing.assert_allclose(out, [[0.2, -0.2]], atol=1e-12)


def test_height_flow_rotates_sphere(sphere):
    height = killing_potentials(sphere)[3]
    start = np.array([[0.6, 0.2], [1.0, 0.0]])
    out = hamiltonian_flow(sphere, height, np.pi, start, steps=200)
    np.testing.assert_allclose(out, -start, atol=1e-7)


def test_killing_flow_is_isometric(cp1):
    potential = killing_potentials(cp1)[1]
    start = np.array([[0.3, 0.1]])
    vectors = np.array([[1.0, 0.0], [0.0, 1.0]])
    h = 1e-6
    end = hamiltonian_flow(cp1, potential, 0.4, start, steps=64)
    g0, g1 = cp1.metric(start)[0], cp1.metric(end)[0]
    for v in vectors:
        pushed = (hamiltonian_flow(cp1, potential, 0.4, start + h * v, steps=64) - end)[0] / h
        assert pushed @ g1 @ pushed == pytest.approx(v @ g0 @ v, rel=1e-5)


@pytest.mark.parametrize(
    "manifold, dimension",
    [(FlatTorus(1), 1), (SurfaceOfRevolution(), 4), (SurfaceOfRevolution((1.0, 1.0, 2.0)), 2), (ProjectiveSpace(1), 4)],
    ids=["flat", "round", "revolution", "cp1"],
)
def test_killing_potential_counts(manifold, dimension):
    assert len(killing_potentials(manifold)) == dimension


def test_cp2_has_nine_potentials():
    assert len(killing_potentials(ProjectiveSpace(2))) == 9


def test_compatible_structure_keeps_compatible_input():
    result = compatible_structure(standard_omega(2), np.eye(4))
    np.testing.assert_allclose(result.acs, standard_acs(2), atol=1e-14)
    np.testing.assert_allclose(result.metric, np.eye(4), atol=1e-14)


def test_compatible_structure_of_random_metric(rng):
    a = rng.normal(size=(4, 4))
    h = a @ a.T + 4 * np.eye(4)
    omega = standard_omega(2)
    result = compatible_structure(omega, h)
    np.testing.assert_allclose(result.acs @ result.acs, -np.eye(4), atol=1e-10)
    np.testing.assert_allclose(result.metric, omega @ result.acs, atol=1e-10)
    assert np.linalg.eigvalsh(result.metric).min() > 0


def test_structure_distance_vanishes_for_equal_structures(cp1, rng):
    points = _random_points(rng, 10, 2)
    assert structure_distance(cp1.acs(points), cp1.acs(points), cp1.metric(points)) == 0.0


def test_laplacian_of_r_squared_in_the_plane():
    x, y = sp.symbols("x y", real=True)
    values = laplacian(FlatTorus(1), SymbolicField(x**2 + y**2, (x, y)), [[0.0, 0.0], [0.5, 1.0]])
    np.testing.assert_allclose(values, [-4.0, -4.0], atol=1e-12)
