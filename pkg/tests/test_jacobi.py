import numpy as np
import pytest

from errors import NonIntegrableBackend, QuadratureUnderResolved
from geometry.jacobi import (
    BoxSource,
    assemble_box,
    box_fd,
    pseudo_inverse,
    quadratic_form,
    rigidity_check,
    selfadjoint_diagnostics,
    spectrum,
    stability_check,
)
from geometry.kahler_core import ProjectiveSpace, anisotropic_perturbation, hamiltonian_flow, killing_potentials
from geometry.lagrangian import deform, fourier_curve, linear_torus, parallel_circle, product_torus, volume
from geometry.toric import ToricManifold, moment_fiber, simplex
from utils.spectral import TorusGrid


@pytest.fixture
def flat_linear(flat_t4):
    return linear_torus(flat_t4, [0.0, 0.0], TorusGrid(2, 16))


def _doubled(values):
    return np.sort([values[0]] + [v for v in values[1:] for _ in range(2)])


def test_flat_linear_torus_spectrum(flat_linear):
    op = assemble_box(flat_linear, 3)
    report = spectrum(op)
    modes = flat_linear.grid.modes(3)
    expected = _doubled([float(np.sum(np.square(xi))) ** 2 for xi in modes])
    np.testing.assert_allclose(report.eigenvalues, expected, rtol=1e-9, atol=1e-9)
    assert report.kernel_dimension == 1
    assert report.asymmetry < 1e-10
    verdict = stability_check(report)
    assert verdict.stable
    assert verdict.margin == pytest.approx(1.0, rel=1e-9)
    assert rigidity_check(flat_linear, report, op).rigid


def test_equator_spectrum_and_rigidity(equator):
    op = assemble_box(equator, 6)
    assert op.source is BoxSource.ANALYTIC
    report = spectrum(op)
    expected = _doubled([float(k**4 - k**2) for k in range(7)])
    np.testing.assert_allclose(report.eigenvalues, expected, rtol=1e-6, atol=1e-6)
    assert report.kernel_dimension == 3
    assert np.abs(op.transport).max() < 1e-10
    rigidity = rigidity_check(equator, report, op)
    assert rigidity.rigid
    assert rigidity.deficit == 0
    assert len(rigidity.complement_fields()) == 3


def test_clifford_circle_in_cp1(cp1_equator):
    op = assemble_box(cp1_equator, 4)
    report = spectrum(op)
    expected = _doubled([4.0 * k**4 - 4.0 * k**2 for k in range(5)])
    np.testing.assert_allclose(report.eigenvalues, expected, rtol=1e-6, atol=1e-6)
    assert report.kernel_dimension == 3
    potentials = killing_potentials(cp1_equator.manifold)
    assert rigidity_check(cp1_equator, report, op, potentials).rigid
    # without Im Z0Z1* the rotations of the kernel are not all generated
    partial = rigidity_check(cp1_equator, report, op, potentials[:2] + potentials[3:])
    assert not partial.rigid
    assert partial.deficit == 1


@pytest.mark.slow
def test_clifford_torus_in_cp2():
    torus = product_torus(ProjectiveSpace(2), (1.0, 1.0), TorusGrid(2, 8))
    op = assemble_box(torus, 2)
    report = spectrum(op)
    assert report.kernel_dimension == 7
    assert rigidity_check(torus, report, op).rigid
    assert stability_check(report).stable


def test_toric_fiber_operator_is_symmetric():
    fiber = moment_fiber(ToricManifold(simplex(1)), [0.3], TorusGrid(1, 16))
    op = assemble_box(fiber, 4)
    assert op.asymmetry < 1e-6
    assert spectrum(op).kernel_dimension == 3
    diagnostics = selfadjoint_diagnostics(fiber, op)
    assert diagnostics.div_jh_sup < 1e-8


def test_finite_difference_operator_agrees(equator):
    analytic = assemble_box(equator, 2)
    numeric = box_fd(equator, 2)
    assert numeric.source is BoxSource.FINITE_DIFFERENCE
    assert numeric.transport is None
    gap = np.linalg.norm(numeric.matrix - analytic.matrix) / np.linalg.norm(analytic.matrix)
    assert gap < 1e-2


def test_quadratic_form_of_eigenvectors(equator):
    op = assemble_box(equator, 4)
    report = spectrum(op)
    for i in (3, 5, 8):
        v = report.eigenvectors[:, i]
        assert quadratic_form(op, v) == pytest.approx(report.eigenvalues[i], rel=1e-8)


def test_pseudo_inverse_solves_on_range(flat_linear):
    op = assemble_box(flat_linear, 2)
    report = spectrum(op)
    rhs = op.matrix @ np.eye(op.matrix.shape[0])[3]
    solution = pseudo_inverse(report, rhs)
    np.testing.assert_allclose(op.matrix @ solution, rhs, atol=1e-9 * np.abs(rhs).max())


def test_underresolved_quadrature(sphere):
    coarse = parallel_circle(sphere, 0.0, TorusGrid(1, 8))
    with pytest.raises(QuadratureUnderResolved):
        assemble_box(coarse, 4)


def test_non_integrable_structure_needs_volume_hessian(flat_t4, flat_linear):
    bent = anisotropic_perturbation(flat_t4, 0.1, [1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0])
    with pytest.raises(NonIntegrableBackend):
        assemble_box(flat_linear.on(bent), 2)


@pytest.fixture
def latitude(sphere, circle_grid):
    return parallel_circle(sphere, 0.5, circle_grid)


@pytest.mark.parametrize("name", ["equator", "cp1_equator", "latitude"])
def test_second_variation_matches_volume(name, request, rng):
    immersion = request.getfixturevalue(name)
    op = assemble_box(immersion, 3)
    base = volume(immersion)

    def second_difference(u, h):
        return (volume(deform(immersion, h * u)) - 2 * base + volume(deform(immersion, -h * u))) / h**2

    for _ in range(10):
        c = 0.3 * rng.standard_normal(op.basis.shape[0])
        u = c @ op.basis
        # Richardson step removes the h² term
        fd = (4 * second_difference(u, 1e-3) - second_difference(u, 2e-3)) / 3
        assert fd == pytest.approx(quadratic_form(op, c), rel=1e-3, abs=1e-6)


def test_d_part_is_symmetric_on_generic_curve(sphere, circle_grid):
    curve = fourier_curve(
        sphere,
        circle_grid,
        (0.0, 0.0),
        [(1, [0.8, 0.0], [0.0, 0.8]), (2, [0.1, 0.05], [0.0, 0.05]), (3, [0.0, 0.03], [0.04, 0.0])],
    )
    op = assemble_box(curve, 4)
    diagnostics = selfadjoint_diagnostics(curve, op)
    assert diagnostics.div_jh_sup > 1e-3
    assert diagnostics.d_asymmetry < 1e-6
    assert diagnostics.full_asymmetry > 1e-6
    assert 0.1 <= diagnostics.tracking_ratio <= 10.0


def test_spectrum_is_invariant_under_isometries(sphere, latitude):
    values = hamiltonian_flow(sphere, killing_potentials(sphere)[1], 0.2, latitude.values, steps=256)
    rotated = latitude.with_values(values)
    report = spectrum(assemble_box(latitude, 4))
    rotated_report = spectrum(assemble_box(rotated, 4))
    np.testing.assert_allclose(rotated_report.eigenvalues, report.eigenvalues, rtol=1e-6, atol=1e-6)
    assert rotated_report.kernel_dimension == report.kernel_dimension == 3
