"""Charted symplectic manifolds with a compatible almost complex structure.

Chart coordinates are interleaved (x1, y1, ..., xn, yn). The symplectic form
satisfies ω(∂x_i, ∂y_i) = 1 on flat space, the metric is g = ΩJ and a
Hamiltonian field is defined by dv = ι_X ω, so X = -Ω⁻¹∇v.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import sympy as sp

from config import settings
from errors import (
    DegenerateMetric,
    FlowLeftAtlas,
    NotCompatible,
    PointOutsideChart,
    UnsupportedBackend,
)
from utils.fields import ConstantField, ScalarField, SymbolicField, central_difference, lambdify_array

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricConvention:
    laplacian: str = "d*d (nonnegative spectrum)"
    mean_curvature: str = "trace of second fundamental form; first variation of volume is -<H, V>"
    distance: str = "unit-speed parameter"


@dataclass(frozen=True)
class ChartDescriptor:
    lower: np.ndarray
    upper: np.ndarray
    periods: np.ndarray
    note: str = ""

    @property
    def dimension(self) -> int:
        return len(self.lower)


@dataclass(frozen=True)
class TensorEval:
    point: np.ndarray
    omega: np.ndarray
    acs: np.ndarray
    metric: np.ndarray
    christoffel: np.ndarray
    ricci: np.ndarray


@dataclass(frozen=True)
class CompatibleStructure:
    acs: np.ndarray
    metric: np.ndarray


def standard_omega(n: int) -> np.ndarray:
    return np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def standard_acs(n: int) -> np.ndarray:
    return np.kron(np.eye(n), np.array([[0.0, -1.0], [1.0, 0.0]]))


def christoffel_from_jet(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Γ^a_bc with shape (Q, a, b, c) from g (Q,d,d) and dg[q,k,i,j] = ∂_k g_ij."""
    lower = 0.5 * (
        np.einsum("qbec->qebc", dg) + np.einsum("qceb->qebc", dg) - dg
    )
    return np.einsum("qae,qebc->qabc", np.linalg.inv(g), lower)


def ricci_from_jet(g: np.ndarray, dg: np.ndarray, ddg: np.ndarray) -> np.ndarray:
    """Ricci tensor R_bc from the metric and its first two derivatives."""
    ginv = np.linalg.inv(g)
    lower = 0.5 * (np.einsum("qbec->qebc", dg) + np.einsum("qceb->qebc", dg) - dg)
    gamma = np.einsum("qae,qebc->qabc", ginv, lower)
    # ddg[q,l,k,i,j] = ∂_l ∂_k g_ij
    dlower = 0.5 * (
        np.einsum("qdbec->qdebc", ddg) + np.einsum("qdceb->qdebc", ddg) - ddg
    )
    dginv = -np.einsum("qaf,qdfh,qhe->qdae", ginv, dg, ginv)
    dgamma = np.einsum("qdae,qebc->qdabc", dginv, lower) + np.einsum("qae,qdebc->qdabc", ginv, dlower)
    return (
        np.einsum("qaabc->qbc", dgamma)
        - np.einsum("qcaab->qbc", dgamma)
        + np.einsum("qaad,qdbc->qbc", gamma, gamma)
        - np.einsum("qacd,qdab->qbc", gamma, gamma)
    )


def compatible_structure(omega: np.ndarray, h: np.ndarray) -> CompatibleStructure:
    """Polar retraction of a positive metric h onto the ω-compatible structures.

    In an h-orthonormal frame the antisymmetric matrix of ω factors as U·P with
    U orthogonal; the structure is -U and the returned metric is ω(·, J·).
    """
    omega = np.asarray(omega, dtype=float)
    h = np.asarray(h, dtype=float)
    single = omega.ndim == 2
    if single:
        omega, h = omega[None], h[None]
    try:
        chol = np.linalg.cholesky(0.5 * (h + np.swapaxes(h, 1, 2)))
    except np.linalg.LinAlgError as exc:
        raise NotCompatible("reference metric is not positive definite") from exc
    linv = np.linalg.inv(chol)
    omega_hat = linv @ omega @ np.swapaxes(linv, 1, 2)
    # |Ω̂| = (Ω̂ᵀΩ̂)^{1/2}; the orthogonal polar factor is Ω̂|Ω̂|⁻¹.
    evals, evecs = np.linalg.eigh(np.swapaxes(omega_hat, 1, 2) @ omega_hat)
    if np.any(evals <= 0):
        raise NotCompatible("symplectic form is degenerate at some point")
    inv_abs = evecs @ (evecs.swapaxes(1, 2) / np.sqrt(evals)[..., None])
    polar_u = omega_hat @ inv_abs
    acs = np.swapaxes(linv, 1, 2) @ (-polar_u) @ np.swapaxes(chol, 1, 2)
    metric = omega @ acs
    metric = 0.5 * (metric + np.swapaxes(metric, 1, 2))
    if single:
        return CompatibleStructure(acs[0], metric[0])
    return CompatibleStructure(acs, metric)


def structure_distance(acs_a: np.ndarray, acs_b: np.ndarray, metric: np.ndarray) -> float:
    """Sup over points of the g-norm of J_a - J_b."""
    diff = np.asarray(acs_a, dtype=float) - np.asarray(acs_b, dtype=float)
    if diff.ndim == 2:
        diff = diff[None]
    metric = metric if metric.ndim == 3 else metric[None]
    ginv = np.linalg.inv(metric)
    sq = np.einsum("qba,qbc,qcd,qda->q", diff, metric, diff, ginv)
    return float(np.sqrt(np.clip(sq, 0.0, None)).max())


class ChartedManifold(ABC):
    kind: str = "abstract"
    kahler: bool = True

    def __init__(self, real_dimension: int, chart: ChartDescriptor, fd_step: float | None = None):
        if real_dimension % 2:
            raise ValueError("symplectic manifolds have even dimension")
        self.real_dimension = real_dimension
        self.n = real_dimension // 2
        self.chart = chart
        self.fd_step = fd_step or settings.fd_step
        self.convention = MetricConvention()

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dim={self.real_dimension})"

    # chart bookkeeping

    def in_domain(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        periodic = self.chart.periods > 0
        inside = (points >= self.chart.lower) & (points <= self.chart.upper)
        return np.all(inside | periodic, axis=1)

    def check_points(self, points: np.ndarray, error: type = PointOutsideChart) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.real_dimension:
            raise PointOutsideChart(
                f"expected points of dimension {self.real_dimension}, got {points.shape[1]}"
            )
        bad = ~self.in_domain(points)
        if np.any(bad):
            raise error(
                f"{int(bad.sum())} point(s) outside the {self.kind} chart",
                first=points[bad][0],
            )
        return points

    def wrap(self, points: np.ndarray) -> np.ndarray:
        out = np.array(points, dtype=float)
        per = self.chart.periods
        mask = per > 0
        if np.any(mask):
            low = self.chart.lower[mask]
            out[..., mask] = low + np.mod(out[..., mask] - low, per[mask])
        return out

    def chart_difference(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        diff = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
        per = self.chart.periods
        mask = per > 0
        if np.any(mask):
            diff[..., mask] -= per[mask] * np.round(diff[..., mask] / per[mask])
        return diff

    # tensors

    @abstractmethod
    def metric(self, points: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def omega(self, points: np.ndarray) -> np.ndarray: ...

    def acs(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.omega(points), self.metric(points))

    def metric_jet(self, points: np.ndarray, order: int = 1) -> tuple[np.ndarray, ...]:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        g = self.metric(points)
        dg = central_difference(self.metric, points, self.fd_step)
        if order < 2:
            return g, dg
        ddg = central_difference(lambda p: central_difference(self.metric, p, self.fd_step), points, self.fd_step)
        ddg = 0.5 * (ddg + np.swapaxes(ddg, 1, 2))
        return g, dg, ddg

    def christoffel(self, points: np.ndarray) -> np.ndarray:
        g, dg = self.metric_jet(points, order=1)[:2]
        return christoffel_from_jet(g, dg)

    def ricci(self, points: np.ndarray) -> np.ndarray:
        g, dg, ddg = self.metric_jet(points, order=2)
        return ricci_from_jet(g, dg, ddg)

    def killing_potentials(self) -> list[ScalarField]:
        raise UnsupportedBackend(f"no Killing potentials are known for {self.kind}")

    def sphere_embedding(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise UnsupportedBackend(f"{self.kind} carries no round-sphere chart")


class FlatTorus(ChartedManifold):
    """Flat ℂⁿ, or a flat torus quotient when coordinate periods are given."""

    kind = "FlatTorus"

    def __init__(self, n: int, periods: list[float] | None = None, extent: float = 1e6, fd_step: float | None = None):
        per = np.zeros(2 * n) if periods is None else np.asarray(periods, dtype=float)
        if per.shape != (2 * n,) or np.any(per < 0):
            raise ValueError("periods must list 2n non-negative numbers")
        lower = np.where(per > 0, 0.0, -extent)
        upper = np.where(per > 0, per, extent)
        super().__init__(2 * n, ChartDescriptor(lower, upper, per, "global affine chart"), fd_step)

    def metric(self, points):
        q = np.atleast_2d(points).shape[0]
        return np.broadcast_to(np.eye(self.real_dimension), (q, self.real_dimension, self.real_dimension)).copy()

    def omega(self, points):
        q = np.atleast_2d(points).shape[0]
        return np.broadcast_to(standard_omega(self.n), (q, self.real_dimension, self.real_dimension)).copy()

    def acs(self, points):
        q = np.atleast_2d(points).shape[0]
        return np.broadcast_to(standard_acs(self.n), (q, self.real_dimension, self.real_dimension)).copy()

    def metric_jet(self, points, order=1):
        g = self.metric(points)
        d = self.real_dimension
        dg = np.zeros((g.shape[0], d, d, d))
        if order < 2:
            return g, dg
        return g, dg, np.zeros((g.shape[0], d, d, d, d))

    def killing_potentials(self):
        return [ConstantField(1.0, self.real_dimension)]


class SymbolicKahler(ChartedManifold):
    """Backend whose metric and symplectic form are closed-form sympy expressions."""

    def __init__(self, symbols, metric_expr: sp.Matrix, omega_expr: sp.Matrix, chart: ChartDescriptor):
        super().__init__(len(symbols), chart)
        self.symbols = list(symbols)
        self.metric_expr = metric_expr
        self.omega_expr = omega_expr

    @cached_property
    def _compiled(self):
        d = self.real_dimension
        g = [[self.metric_expr[i, j] for j in range(d)] for i in range(d)]
        dg = [[[sp.diff(g[i][j], s) for j in range(d)] for i in range(d)] for s in self.symbols]
        ddg = [[[[sp.diff(dg[k][i][j], s) for j in range(d)] for i in range(d)] for k in range(d)] for s in self.symbols]
        om = [[self.omega_expr[i, j] for j in range(d)] for i in range(d)]
        logger.debug("compiled %s tensors", self.kind)
        return (
            lambdify_array(g, self.symbols),
            lambdify_array(dg, self.symbols),
            lambdify_array(ddg, self.symbols),
            lambdify_array(om, self.symbols),
        )

    def metric(self, points):
        return self._compiled[0](points)

    def omega(self, points):
        return self._compiled[3](points)

    def metric_jet(self, points, order=1):
        g, dg, ddg, _ = self._compiled
        if order < 2:
            return g(points), dg(points)
        out = ddg(points)
        return g(points), dg(points), 0.5 * (out + np.swapaxes(out, 1, 2))


def inverse_stereographic(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit-sphere point S(u, v) = (2u, 2v, 1 - r²)/(1 + r²) and its Jacobian (Q, 3, 2)."""
    points = np.atleast_2d(points)
    u, v = points[:, 0], points[:, 1]
    r2 = u * u + v * v
    den = 1.0 + r2
    s = np.stack([2 * u, 2 * v, 1 - r2], axis=-1) / den[:, None]
    jac = np.empty((points.shape[0], 3, 2))
    jac[:, 0, 0] = 2 * (1 - u * u + v * v) / den**2
    jac[:, 0, 1] = -4 * u * v / den**2
    jac[:, 1, 0] = -4 * u * v / den**2
    jac[:, 1, 1] = 2 * (1 + u * u - v * v) / den**2
    jac[:, 2, 0] = -4 * u / den**2
    jac[:, 2, 1] = -4 * v / den**2
    return s, jac


class ProjectiveSpace(SymbolicKahler):
    """CPⁿ with the Fubini–Study form i∂∂̄ log(1 + |z|²) on the affine chart Z₀ = 1."""

    kind = "ProjectiveSpace"

    def __init__(self, n: int = 1, extent: float = 1e3):
        symbols = sp.symbols(" ".join(f"x{i} y{i}" for i in range(1, n + 1)), real=True)
        xs, ys = symbols[0::2], symbols[1::2]
        potential = sp.log(1 + sum(x**2 + y**2 for x, y in zip(xs, ys)))
        d = 2 * n
        g = sp.zeros(d, d)
        for i in range(n):
            for j in range(n):
                a = (sp.diff(potential, xs[i], xs[j]) + sp.diff(potential, ys[i], ys[j])) / 4
                b = (sp.diff(potential, xs[i], ys[j]) - sp.diff(potential, ys[i], xs[j])) / 4
                a, b = sp.simplify(a), sp.simplify(b)
                g[2 * i, 2 * j] = 2 * a
                g[2 * i + 1, 2 * j + 1] = 2 * a
                g[2 * i, 2 * j + 1] = 2 * b
                g[2 * i + 1, 2 * j] = -2 * b
        omega = sp.Matrix(standard_acs(n)).T * g
        chart = ChartDescriptor(np.full(d, -extent), np.full(d, extent), np.zeros(d), "affine chart Z0 = 1")
        super().__init__(symbols, g, omega, chart)
        self.xs, self.ys = xs, ys

    def acs(self, points):
        q = np.atleast_2d(points).shape[0]
        return np.broadcast_to(standard_acs(self.n), (q, self.real_dimension, self.real_dimension)).copy()

    def killing_potentials(self):
        zs = [(sp.Integer(1), sp.Integer(0))] + list(zip(self.xs, self.ys))
        norm = sum(a**2 + b**2 for a, b in zs)
        fields = []
        for i, (ai, bi) in enumerate(zs):
            for j in range(i, len(zs)):
                aj, bj = zs[j]
                if i == j:
                    fields.append(SymbolicField((ai**2 + bi**2) / norm, self.symbols, f"|Z{i}|^2/|Z|^2"))
                    continue
                # Z_i conj(Z_j) = (ai + i bi)(aj - i bj)
                fields.append(SymbolicField((ai * aj + bi * bj) / norm, self.symbols, f"Re Z{i}Z{j}*/|Z|^2"))
                fields.append(SymbolicField((bi * aj - ai * bj) / norm, self.symbols, f"Im Z{i}Z{j}*/|Z|^2"))
        return fields

    def sphere_embedding(self, points):
        if self.n != 1:
            raise UnsupportedBackend("sphere embedding exists only for CP^1")
        return inverse_stereographic(points)


class SurfaceOfRevolution(SymbolicKahler):
    """Ellipsoid diag(a, b, c)·S² with its area form, in the stereographic chart from the south pole."""

    kind = "SurfaceOfRevolution"

    def __init__(self, semi_axes=(1.0, 1.0, 1.0), extent: float = 50.0):
        a, b, c = (float(s) for s in semi_axes)
        if min(a, b, c) <= 0:
            raise ValueError("semi-axes must be positive")
        self.semi_axes = (a, b, c)
        a, b, c = (sp.nsimplify(s) for s in (a, b, c))
        u, v = sp.symbols("u v", real=True)
        r2 = u**2 + v**2
        sphere = sp.Matrix([2 * u, 2 * v, 1 - r2]) / (1 + r2)
        embedding = sp.diag(a, b, c) * sphere
        jac = embedding.jacobian([u, v])
        h = sp.simplify(jac.T * jac)
        area = sp.sqrt(sp.factor(sp.simplify(h.det())))
        omega = area * sp.Matrix([[0, 1], [-1, 0]])
        chart = ChartDescriptor(np.full(2, -extent), np.full(2, extent), np.zeros(2), "stereographic chart")
        super().__init__((u, v), h, omega, chart)
        self.height = sphere[2]
        self.sphere = sphere

    @property
    def round(self) -> bool:
        a, b, c = self.semi_axes
        return np.isclose(a, b) and np.isclose(b, c)

    def axial_moment(self) -> sp.Expr:
        a, _, c = self.semi_axes
        s = self.height
        k = sp.nsimplify(1.0 - a * a / (c * c))
        if abs(float(k)) < 1e-14:
            integral = s
        elif k > 0:
            integral = (s * sp.sqrt(1 - k * s**2) + sp.asin(sp.sqrt(k) * s) / sp.sqrt(k)) / 2
        else:
            integral = (s * sp.sqrt(1 - k * s**2) + sp.asinh(sp.sqrt(-k) * s) / sp.sqrt(-k)) / 2
        return a * c * integral

    def killing_potentials(self):
        a, b, c = self.semi_axes
        constant = ConstantField(1.0, 2)
        if self.round:
            r2 = a * a
            return [constant] + [
                SymbolicField(r2 * self.sphere[i], self.symbols, label)
                for i, label in enumerate(("x", "y", "z"))
            ]
        if np.isclose(a, b):
            return [constant, SymbolicField(self.axial_moment(), self.symbols, "axial moment")]
        logger.info("triaxial ellipsoid %s has no continuous isometries", self.semi_axes)
        return [constant]

    def sphere_embedding(self, points):
        if not self.round:
            raise UnsupportedBackend("sphere embedding requires a round sphere")
        return inverse_stereographic(points)


class MetricPerturbation(ChartedManifold):
    """Keeps ω of a reference backend and swaps J for the retraction of a new metric."""

    kind = "MetricPerturbation"

    def __init__(self, reference: ChartedManifold, target_metric, label: str = "perturbation"):
        super().__init__(reference.real_dimension, reference.chart, reference.fd_step)
        self.reference = reference
        self.target_metric = target_metric
        self.label = label
        self.kahler = reference.real_dimension == 2

    def in_domain(self, points):
        return self.reference.in_domain(points)

    def omega(self, points):
        return self.reference.omega(points)

    def structure(self, points) -> CompatibleStructure:
        points = np.atleast_2d(points)
        return compatible_structure(self.reference.omega(points), self.target_metric(points))

    def metric(self, points):
        return self.structure(points).metric

    def acs(self, points):
        return self.structure(points).acs

    def sphere_embedding(self, points):
        return self.reference.sphere_embedding(points)


def tilted_ellipsoid(reference: ChartedManifold, axes, rotation: np.ndarray, label: str = "tilted ellipsoid") -> MetricPerturbation:
    """Structure induced by the ellipsoid p ↦ R·diag(axes)·Rᵀ p over the round sphere."""
    stretch = np.asarray(rotation) @ np.diag(axes) @ np.asarray(rotation).T

    def target(points):
        _, jac = reference.sphere_embedding(points)
        push = np.einsum("ab,qbi->qai", stretch, jac)
        return np.einsum("qai,qaj->qij", push, push)

    reference.sphere_embedding(np.zeros((1, reference.real_dimension)))
    return MetricPerturbation(reference, target, label)


def anisotropic_perturbation(reference: ChartedManifold, epsilon: float, direction, wavevector) -> MetricPerturbation:
    """g + ε(1 + cos k·p)/2 · vvᵀ, which changes the conformal class in every dimension."""
    v = np.asarray(direction, dtype=float)
    k = np.asarray(wavevector, dtype=float)
    outer = np.outer(v, v)

    def target(points):
        points = np.atleast_2d(points)
        bump = 0.5 * (1.0 + np.cos(points @ k))
        return reference.metric(points) + epsilon * bump[:, None, None] * outer

    return MetricPerturbation(reference, target, f"anisotropic eps={epsilon}")


def eval_tensors(manifold: ChartedManifold, point, fd_step: float | None = None) -> TensorEval:
    p = manifold.check_points(point)
    previous = manifold.fd_step
    manifold.fd_step = fd_step or previous
    try:
        g, dg, ddg = manifold.metric_jet(p, order=2)
    finally:
        manifold.fd_step = previous
    if np.linalg.eigvalsh(g[0]).min() < 1e-12:
        raise DegenerateMetric("metric is numerically singular", point=p[0])
    return TensorEval(
        point=p[0],
        omega=manifold.omega(p)[0],
        acs=manifold.acs(p)[0],
        metric=g[0],
        christoffel=christoffel_from_jet(g, dg)[0],
        ricci=ricci_from_jet(g, dg, ddg)[0],
    )


def hamiltonian_vector_field(manifold: ChartedManifold, potential: ScalarField, points) -> np.ndarray:
    points = np.atleast_2d(points)
    grad = potential.gradient(points)
    return np.linalg.solve(manifold.omega(points), -grad[..., None])[..., 0]


def hamiltonian_flow(manifold: ChartedManifold, potential: ScalarField, t: float, points, steps: int | None = None) -> np.ndarray:
    """Fixed-step RK4 integration of the Hamiltonian field of `potential` for time t."""
    p = manifold.check_points(points).copy()
    steps = steps or settings.flow_steps
    if t == 0.0:
        return p
    h = t / steps

    def field(x):
        return hamiltonian_vector_field(manifold, potential, x)

    for step in range(steps):
        k1 = field(p)
        k2 = field(p + 0.5 * h * k1)
        k3 = field(p + 0.5 * h * k2)
        k4 = field(p + h * k3)
        p = p + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(manifold.in_domain(p)):
            raise FlowLeftAtlas(f"trajectory left the {manifold.kind} chart", step=step + 1, time=(step + 1) * h)
    return p


def laplacian(manifold: ChartedManifold, potential: ScalarField, points) -> np.ndarray:
    """Δ = d*d = -tr Hess on functions."""
    points = np.atleast_2d(points)
    g, dg = manifold.metric_jet(points, order=1)[:2]
    gamma = christoffel_from_jet(g, dg)
    hess = potential.hessian(points) - np.einsum("qkij,qk->qij", gamma, potential.gradient(points))
    return -np.einsum("qij,qij->q", np.linalg.inv(g), hess)


def killing_potentials(manifold: ChartedManifold) -> list[ScalarField]:
    """Potentials of the Hamiltonian isometries known for the backend."""
    return manifold.killing_potentials()
