"""Scalar functions on chart coordinates with value, gradient and Hessian."""
from abc import ABC, abstractmethod
from collections.abc import Callable, Sequence

import numpy as np
import sympy as sp

# Fourth-order central stencil for a first derivative.
STENCIL = ((-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0))


def lambdify_array(exprs, symbols: Sequence[sp.Symbol]) -> Callable[[np.ndarray], np.ndarray]:
    """Compile an array of sympy expressions into f(points (Q, d)) -> (Q, *shape)."""
    arr = np.asarray(exprs, dtype=object)
    shape = arr.shape
    flat = list(arr.ravel())
    fn = sp.lambdify(list(symbols), flat, modules="numpy", cse=True)

    def evaluate(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        q = points.shape[0]
        raw = fn(*points.T)
        out = np.empty((q, len(flat)))
        for i, column in enumerate(raw):
            out[:, i] = np.broadcast_to(np.asarray(column, dtype=float), (q,))
        return out.reshape((q,) + shape)

    return evaluate


def central_difference(fn: Callable[[np.ndarray], np.ndarray], points: np.ndarray, step: float) -> np.ndarray:
    """∂_k fn at each point, stacked on a new axis after the point axis: (Q, d, ...)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    q, d = points.shape
    shifted = []
    for k in range(d):
        for offset, _ in STENCIL:
            p = points.copy()
            p[:, k] += offset * step
            shifted.append(p)
    values = fn(np.concatenate(shifted, axis=0))
    values = values.reshape((d, len(STENCIL), q) + values.shape[1:])
    weights = np.array([w for _, w in STENCIL]).reshape((1, len(STENCIL), 1) + (1,) * (values.ndim - 3))
    deriv = (values * weights).sum(axis=1) / step
    return np.moveaxis(deriv, 0, 1)


class ScalarField(ABC):
    label: str = ""

    @abstractmethod
    def value(self, points: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def gradient(self, points: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def hessian(self, points: np.ndarray) -> np.ndarray: ...

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.value(points)


class SymbolicField(ScalarField):
    def __init__(self, expr: sp.Expr, symbols: Sequence[sp.Symbol], label: str = ""):
        self.expr = expr
        self.symbols = list(symbols)
        self.label = label or str(expr)
        grad = [sp.diff(expr, s) for s in self.symbols]
        hess = [[sp.diff(g, s) for s in self.symbols] for g in grad]
        self._value = lambdify_array([expr], self.symbols)
        self._grad = lambdify_array(grad, self.symbols)
        self._hess = lambdify_array(hess, self.symbols)

    def value(self, points):
        return self._value(points)[:, 0]

    def gradient(self, points):
        return self._grad(points)

    def hessian(self, points):
        return self._hess(points)


class NumericField(ScalarField):
    """Wraps a vectorized callable; derivatives by fourth-order differences."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], step: float = 1e-3, label: str = "numeric"):
        self.fn = fn
        self.step = step
        self.label = label

    def value(self, points):
        return np.asarray(self.fn(np.atleast_2d(points)), dtype=float)

    def gradient(self, points):
        return central_difference(self.value, points, self.step)

    def hessian(self, points):
        h = central_difference(self.gradient, points, self.step)
        return 0.5 * (h + np.swapaxes(h, 1, 2))


class ConstantField(ScalarField):
    def __init__(self, constant: float = 1.0, dimension: int = 2, label: str = "1"):
        self.constant = float(constant)
        self.dimension = dimension
        self.label = label

    def value(self, points):
        return np.full(np.atleast_2d(points).shape[0], self.constant)

    def gradient(self, points):
        return np.zeros((np.atleast_2d(points).shape[0], self.dimension))

    def hessian(self, points):
        return np.zeros((np.atleast_2d(points).shape[0], self.dimension, self.dimension))


class LinearCombination(ScalarField):
    def __init__(self, fields: Sequence[ScalarField], coefficients: Sequence[float]):
        if len(fields) != len(coefficients):
            raise ValueError("fields and coefficients differ in length")
        self.fields = list(fields)
        self.coefficients = np.asarray(coefficients, dtype=float)
        self.label = " + ".join(f"{c:.6g}*{f.label}" for f, c in zip(self.fields, self.coefficients))

    def _combine(self, method: str, points):
        out = None
        for f, c in zip(self.fields, self.coefficients):
            if c == 0.0:
                continue
            term = c * getattr(f, method)(points)
            out = term if out is None else out + term
        if out is None:
            out = 0.0 * getattr(self.fields[0], method)(points)
        return out

    def value(self, points):
        return self._combine("value", points)

    def gradient(self, points):
        return self._combine("gradient", points)

    def hessian(self, points):
        return self._combine("hessian", points)
