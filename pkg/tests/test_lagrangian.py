import numpy as np
import pytest
import sympy as sp

from errors import DegenerateInducedMetric, PreconditionViolation, UnsupportedBackend
from geometry.kahler_core import FlatTorus, hamiltonian_flow, killing_potentials
from geometry.lagrangian import (
    NodeTree,
    TorusImmersion,
    deform,
    fibration_seed,
    fourier_curve,
    geodesic_curvature,
    harmonic_graph,
    harmonic_one_forms,
    hslag_residual,
    linear_torus,
    load_snapshot,
    mean_curvature,
    parallel_circle,
    parallels_family,
    product_torus,
    save_snapshot,
    tube_radius,
    variation_check_first,
    volume,
)
from utils.fields import SymbolicField
from utils.spectral import TorusGrid

TWO_PI = 2.0 * np.pi


@pytest.fixture
def wobbly_curve(sphere, circle_grid):
    return fourier_curve(
        sphere,
        circle_grid,
        (0.0, 0.0),
        [(1, [0.8, 0.0], [0.0, 0.8]), (2, [0.1, 0.05], [0.0, 0.05]), (3, [0.0, 0.03], [0.04, 0.0])],
    )


def test_product_torus_in_flat_space():
    torus = product_torus(FlatTorus(2), (1.0, 0.5), TorusGrid(2, 16))
    assert torus.check_lagrangian() < 1e-12
    assert volume(torus) == pytest.approx(2 * np.pi**2, rel=1e-12)
    _, report = hslag_residual(torus)
    assert report.sup < 1e-10


def test_non_lagrangian_torus_is_rejected():
    grid = TorusGrid(2, 8)
    t1, t2 = grid.theta.T
    values = np.stack([np.cos(t1), np.cos(t2), np.sin(t1), np.sin(t2)], axis=-1)
    torus = TorusImmersion(FlatTorus(2), grid, values, np.zeros((4, 2)))
    with pytest.raises(PreconditionViolation):
        torus.check_lagrangian()


@pytest.mark.parametrize(("name", "length"), [("equator", TWO_PI), ("cp1_equator", TWO_PI / np.sqrt(2.0))])
def test_great_circles_are_minimal(name, length, request):
    circle = request.getfixturevalue(name)
    data = mean_curvature(circle)
    assert np.abs(data.H).max() < 1e-10
    assert data.volume == pytest.approx(length, rel=1e-10)


def test_latitude_curvature(sphere, circle_grid):
    latitude = parallel_circle(sphere, 0.5, circle_grid)
    kappa = geodesic_curvature(latitude)
    np.testing.assert_allclose(kappa, 1.0 / np.sqrt(3.0), rtol=1e-8)
    # constant curvature curves are Hamiltonian stationary
    _, report = hslag_residual(latitude)
    assert report.sup < 1e-8
    assert volume(latitude) == pytest.approx(TWO_PI * np.sqrt(3.0) / 2, rel=1e-10)


def test_parallels_family_lengths(sphere, circle_grid):
    levels = [-0.5, 0.0, 0.8]
    family = parallels_family(sphere, levels, circle_grid)
    assert [member.metadata["level"] for member in family] == levels
    lengths = [volume(member) for member in family]
    np.testing.assert_allclose(lengths, TWO_PI * np.sqrt(1.0 - np.square(levels)), rtol=1e-10)


def test_parallel_level_range(sphere, cp1, circle_grid):
    with pytest.raises(PreconditionViolation):
        parallel_circle(sphere, 1.0, circle_grid)
    with pytest.raises(PreconditionViolation):
        parallel_circle(cp1, 0.0, circle_grid)


def test_generic_curve_has_balanced_residual(wobbly_curve):
    _, report = hslag_residual(wobbly_curve)
    assert report.sup > 1e-4
    assert abs(report.integral) < 1e-10


def test_constant_curve_has_degenerate_metric(sphere, circle_grid):
    point = fourier_curve(sphere, circle_grid, (0.2, 0.1), [])
    with pytest.raises(DegenerateInducedMetric):
        volume(point)


def test_tube_radius_of_equator(equator):
    assert tube_radius(equator) == pytest.approx(0.5, rel=1e-10)


def test_deform_by_constant_is_identity(equator):
    for f in (np.zeros(equator.grid.size), np.full(equator.grid.size, 3.0)):
        moved = deform(equator, f)
        assert np.array_equal(moved.values, equator.values)


def test_deform_rejects_wrong_shape(equator):
    with pytest.raises(PreconditionViolation):
        deform(equator, np.zeros(5))


def test_equator_is_volume_minimizing(equator):
    theta = equator.grid.theta[:, 0]
    moved = deform(equator, 0.01 * np.cos(2 * theta))
    assert moved.check_lagrangian() < 1e-12
    assert volume(moved) - TWO_PI > 1e-4


def test_first_variation_matches_finite_difference(sphere, wobbly_curve):
    u, v = sphere.symbols
    potential = SymbolicField(u**2 + 0.5 * v + sp.Rational(1, 3) * u * v, sphere.symbols, "test potential")
    report = variation_check_first(wobbly_curve, potential)
    assert report.absolute_error <= 1e-3 * max(abs(report.predicted), 1e-3)


def test_harmonic_forms_on_flat_torus(flat_t4):
    torus = linear_torus(flat_t4, [0.0, 0.0], TorusGrid(2, 8))
    forms = harmonic_one_forms(torus)
    assert forms.nonvanishing
    np.testing.assert_allclose(forms.forms[0], np.tile([1.0, 0.0], (torus.grid.size, 1)), atol=1e-12)
    np.testing.assert_allclose(forms.forms[1], np.tile([0.0, 1.0], (torus.grid.size, 1)), atol=1e-12)
    np.testing.assert_allclose(forms.potentials, 0.0, atol=1e-12)


def test_fibration_seed_shifts_linear_torus(flat_t4):
    torus = linear_torus(flat_t4, [0.0, 0.0], TorusGrid(2, 8))
    family = fibration_seed(torus, np.eye(2), 0.2, samples=1)
    assert len(family.members) == 5
    assert family.min_separation == pytest.approx(0.2, rel=1e-12)
    offsets = set()
    for member in family.members:
        y = member.values[:, 1::2]
        assert np.ptp(y, axis=0).max() < 1e-12
        offsets.add(tuple(np.round(y[0], 12)))
    assert offsets == {(0.0, 0.0), (0.2, 0.0), (-0.2, 0.0), (0.0, 0.2), (0.0, -0.2)}


def test_fibration_seed_needs_affine_chart(equator):
    with pytest.raises(UnsupportedBackend):
        fibration_seed(equator, [[1.0]], 0.1)


def test_snapshot_round_trip(tmp_path, equator, cp1):
    csv_path, json_path = save_snapshot(equator, tmp_path / "equator")
    assert csv_path.exists() and json_path.exists()
    loaded = load_snapshot(equator.manifold, tmp_path / "equator")
    assert np.array_equal(loaded.values, equator.values)
    assert np.array_equal(loaded.winding, equator.winding)
    with pytest.raises(PreconditionViolation):
        load_snapshot(cp1, tmp_path / "equator")


@pytest.fixture
def mild_curve(sphere):
    return fourier_curve(
        sphere, TorusGrid(1, 64), (0.0, 0.0), [(1, [0.8, 0.0], [0.0, 0.8]), (2, [0.01, 0.0], [0.0, 0.01])]
    )


def test_node_tree_wraps_periodic_coordinates(flat_cylinder):
    tree = NodeTree(flat_cylinder, np.array([[0.005, 0.0], [TWO_PI - 0.005, 0.0], [3.0, 0.0]]))
    assert tree.pairs(0.05).tolist() == [[0, 1]]
    assert tree.nearest([[-0.001, 0.01]])[0] == 1
    assert tree.distance([[TWO_PI + 0.005, 0.0]])[0] == pytest.approx(0.0, abs=1e-12)


def test_tube_radius_sees_self_approach(sphere, circle_grid):
    # a long peanut whose waist is 0.3 wide and whose curvature stays below 3
    peanut = fourier_curve(sphere, circle_grid, (0.0, 0.0), [(1, [4.0, 0.0], [0.0, 1.5]), (3, [0.0, 0.0], [0.0, 1.35])])
    assert tube_radius(peanut) == pytest.approx(0.15, rel=1e-9)


def test_deform_round_trip_retraces_the_flow(sphere, circle_grid):
    latitude = parallel_circle(sphere, 0.3, circle_grid)
    theta = circle_grid.theta[:, 0]
    f = 0.01 * np.cos(theta) + 0.005 * np.sin(2 * theta)
    moved = deform(latitude, f)
    assert np.abs(moved.values - latitude.values).max() > 1e-3
    back = deform(moved, -f)
    assert np.abs(back.values - latitude.values).max() < 1e-7


def test_volume_is_reparametrization_invariant(mild_curve):
    theta = mild_curve.grid.theta[:, 0]
    warped = theta + 0.1 * np.sin(theta)
    values = mild_curve.at(warped[:, None])[0]
    reparametrized = TorusImmersion(mild_curve.manifold, mild_curve.grid, values, np.zeros((2, 1)))
    assert volume(reparametrized) == pytest.approx(volume(mild_curve), abs=1e-8)


def test_residual_is_invariant_under_isometries(sphere, mild_curve):
    rotation = killing_potentials(sphere)[1]
    values = hamiltonian_flow(sphere, rotation, 0.2, mild_curve.values, steps=256)
    rotated = mild_curve.with_values(values)
    residual, report = hslag_residual(mild_curve)
    rotated_residual, rotated_report = hslag_residual(rotated)
    assert report.sup > 1e-3
    np.testing.assert_allclose(rotated_residual, residual, atol=1e-8)
    assert rotated_report.l2 == pytest.approx(report.l2, abs=1e-8)


def test_harmonic_graph_of_linear_torus(flat_line):
    graph = harmonic_graph(flat_line, [0.2])
    np.testing.assert_allclose(graph.values[:, 0], flat_line.values[:, 0], atol=1e-14)
    assert np.ptp(graph.values[:, 1]) < 1e-12
    assert abs(graph.values[0, 1]) == pytest.approx(0.2, rel=1e-12)
    assert graph.metadata["fibration_parameter"] == [0.2]
