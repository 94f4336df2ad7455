import numpy as np
import pytest

from utils.spectral import TorusGrid, TrigInterpolant


def test_derivative_of_trigonometric_field():
    grid = TorusGrid(2, 16)
    t1, t2 = grid.theta[:, 0], grid.theta[:, 1]
    f = np.sin(2 * t1) * np.cos(t2)
    np.testing.assert_allclose(grid.derivative(f, 0), 2 * np.cos(2 * t1) * np.cos(t2), atol=1e-12)
    np.testing.assert_allclose(grid.derivative(f, 1, order=2), -f, atol=1e-12)


def test_integrate_matches_closed_form():
    grid = TorusGrid(1, 16)
    theta = grid.theta[:, 0]
    assert grid.integrate(np.cos(theta) ** 2) == pytest.approx(np.pi, rel=1e-14)
    assert grid.integrate(np.ones(grid.size)) == pytest.approx(2 * np.pi, rel=1e-14)


def test_real_basis_layout():
    grid = TorusGrid(2, 8)
    basis, labels = grid.real_basis(2)
    assert basis.shape == (25, grid.size)
    assert labels[0] == "1"
    assert grid.modes(2)[0] == (0, 0)
    gram = basis @ basis.T * grid.weight
    np.testing.assert_allclose(gram, np.diag(np.diag(gram)), atol=1e-12)


def test_interpolant_reproduces_samples_and_derivatives():
    grid = TorusGrid(1, 16)
    theta = grid.theta[:, 0]
    interp = TrigInterpolant(grid, np.sin(3 * theta))
    value, slope = interp.evaluate(np.array([[0.3], [1.7]]), order=1)
    np.testing.assert_allclose(value, np.sin(3 * np.array([0.3, 1.7])), atol=1e-12)
    np.testing.assert_allclose(slope[:, 0], 3 * np.cos(3 * np.array([0.3, 1.7])), atol=1e-11)


def test_grid_rejects_tiny_resolution():
    with pytest.raises(ValueError):
        TorusGrid(1, 2)
