"""Fourier machinery on the standard torus grid (ℝ/2πℤ)^n.

Fields live on N^n equispaced nodes flattened in C order, with the node axis
last: a scalar field has shape (..., P) and P = N**n.
"""
import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class TorusGrid:
    n: int
    N: int

    def __post_init__(self):
        if self.n < 1 or self.N < 4:
            raise ValueError(f"grid needs n >= 1 and N >= 4, got n={self.n}, N={self.N}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def size(self) -> int:
        return self.N**self.n

    @property
    def weight(self) -> float:
        """Trapezoid weight of a single node."""
        return (2.0 * np.pi / self.N) ** self.n

    @cached_property
    def theta(self) -> np.ndarray:
        axis = 2.0 * np.pi * np.arange(self.N) / self.N
        mesh = np.meshgrid(*([axis] * self.n), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        # Nyquist mode dropped so differentiation maps real fields to real fields.
        k = np.fft.fftfreq(self.N, 1.0 / self.N)
        if self.N % 2 == 0:
            k[self.N // 2] = 0.0
        return k

    def _grid(self, f: np.ndarray) -> np.ndarray:
        return np.reshape(f, f.shape[:-1] + self.shape)

    def _flat(self, f: np.ndarray) -> np.ndarray:
        return np.reshape(f, f.shape[: f.ndim - self.n] + (self.size,))

    def derivative(self, f: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        g = self._grid(f)
        ax = g.ndim - self.n + axis
        shape = [1] * g.ndim
        shape[ax] = self.N
        factor = (1j * self.wavenumbers.reshape(shape)) ** order
        out = np.fft.ifft(np.fft.fft(g, axis=ax) * factor, axis=ax).real
        return self._flat(out)

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """Shape (..., P) -> (..., P, n)."""
        return np.stack([self.derivative(f, i) for i in range(self.n)], axis=-1)

    def divergence(self, v: np.ndarray) -> np.ndarray:
        """Shape (..., P, n) -> (..., P)."""
        return sum(self.derivative(v[..., i], i) for i in range(self.n))

    def integrate(self, f: np.ndarray, density: np.ndarray | None = None) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if density is not None:
            f = f * density
        return f.sum(axis=-1) * self.weight

    def modes(self, m: int) -> list[tuple[int, ...]]:
        """Frequency vectors ξ with |ξ|_∞ <= m, one representative per ±ξ pair, zero first."""
        out = [(0,) * self.n]
        for xi in itertools.product(range(-m, m + 1), repeat=self.n):
            nonzero = [c for c in xi if c != 0]
            if nonzero and nonzero[0] > 0:
                out.append(xi)
        return out

    def real_basis(self, m: int) -> tuple[np.ndarray, list[str]]:
        """Samples of 1, cos(ξ·θ), sin(ξ·θ) for |ξ|_∞ <= m: shape ((2m+1)^n, P)."""
        rows, labels = [np.ones(self.size)], ["1"]
        for xi in self.modes(m)[1:]:
            phase = self.theta @ np.asarray(xi, dtype=float)
            rows.extend([np.cos(phase), np.sin(phase)])
            labels.extend([f"cos{xi}", f"sin{xi}"])
        return np.array(rows), labels


class TrigInterpolant:
    """Band-limited interpolant of periodic samples, evaluable anywhere."""

    def __init__(self, grid: TorusGrid, samples: np.ndarray, cutoff: float = 1e-14):
        samples = np.asarray(samples, dtype=float)
        self.grid = grid
        self.scalar = samples.ndim == 1
        data = samples[:, None] if self.scalar else samples
        spectrum = np.fft.fftn(np.reshape(data.T, (data.shape[1],) + grid.shape), axes=tuple(range(1, grid.n + 1)))
        coeffs = np.reshape(spectrum, (data.shape[1], grid.size)).T / grid.size
        k = np.fft.fftfreq(grid.N, 1.0 / grid.N)
        kvec = np.array(list(itertools.product(k, repeat=grid.n)))
        keep = np.all(np.abs(kvec) < grid.N / 2, axis=1)
        mag = np.abs(coeffs).max(axis=1)
        keep &= mag > cutoff * max(mag.max(), 1e-300)
        self.k = kvec[keep]
        self.coeffs = coeffs[keep]

    def evaluate(self, theta: np.ndarray, order: int = 0) -> tuple[np.ndarray, ...]:
        """Value, and up to second θ-derivatives, at points θ (Q, n).

        Shapes are (Q, d), (Q, d, n), (Q, d, n, n); the d axis is dropped for scalar samples.
        """
        phases = np.exp(1j * (np.atleast_2d(theta) @ self.k.T))
        out = [(phases @ self.coeffs).real]
        if order >= 1:
            out.append(np.einsum("qm,mi,md->qdi", phases, 1j * self.k, self.coeffs).real)
        if order >= 2:
            kk = -np.einsum("mi,mj->mij", self.k, self.k)
            out.append(np.einsum("qm,mij,md->qdij", phases, kk, self.coeffs).real)
        if self.scalar:
            out = [o[:, 0] for o in out]
        return tuple(out)

    def value(self, theta: np.ndarray) -> np.ndarray:
        return self.evaluate(theta)[0]
