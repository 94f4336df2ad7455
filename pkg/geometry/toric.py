"""Delzant polytopes, Guillemin metrics and symplectic reduction of ℂ^d."""
import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
import sympy as sp
from scipy.optimize import linprog

from errors import (
    BoundaryPoint,
    DegenerateOrbit,
    NonCompact,
    NonSimpleVertex,
    NonUnimodularVertex,
    PreconditionViolation,
    ZeroVector,
)
from geometry.kahler_core import (
    ChartDescriptor,
    ChartedManifold,
    ProjectiveSpace,
    standard_acs,
    standard_omega,
)
from geometry.lagrangian import TorusImmersion
from utils.fields import ConstantField, SymbolicField
from utils.spectral import TorusGrid

logger = logging.getLogger(__name__)

INTERIOR_TOL = 1e-12


@dataclass(frozen=True)
class LabelledPolytope:
    """Polytope {x : ⟨ν_k, x⟩ + c_k ≥ 0} with primitive inward normals ν_k."""

    normals: np.ndarray
    offsets: np.ndarray
    lattice: np.ndarray = None

    def __post_init__(self):
        normals = np.atleast_2d(np.asarray(self.normals, dtype=float))
        offsets = np.asarray(self.offsets, dtype=float)
        if normals.shape[0] != offsets.shape[0]:
            raise PreconditionViolation("one offset is required per facet normal")
        lattice = np.eye(normals.shape[1]) if self.lattice is None else np.asarray(self.lattice, dtype=float)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "lattice", lattice)

    @property
    def dimension(self) -> int:
        return self.normals.shape[1]

    @property
    def facets(self) -> int:
        return self.normals.shape[0]

    def affine(self, x: np.ndarray) -> np.ndarray:
        """ℓ_k(x) for every facet, shape (..., d)."""
        return np.asarray(x, dtype=float) @ self.normals.T + self.offsets

    def is_interior(self, x: np.ndarray) -> np.ndarray:
        return np.all(self.affine(np.atleast_2d(x)) > INTERIOR_TOL, axis=-1)

    def lattice_normals(self) -> np.ndarray:
        return np.linalg.solve(self.lattice, self.normals.T).T

    def to_dict(self) -> dict:
        return {"normals": self.normals.tolist(), "offsets": self.offsets.tolist(), "lattice": self.lattice.tolist()}


def simplex(n: int, size: float = 1.0) -> LabelledPolytope:
    normals = np.vstack([np.eye(n), -np.ones((1, n))])
    offsets = np.concatenate([np.zeros(n), [size]])
    return LabelledPolytope(normals, offsets)


def cube(n: int, size: float = 1.0) -> LabelledPolytope:
    normals = np.vstack([np.eye(n), -np.eye(n)])
    offsets = np.concatenate([np.zeros(n), np.full(n, size)])
    return LabelledPolytope(normals, offsets)


@dataclass
class DelzantReport:
    delzant: bool
    vertices: list[list[float]]
    failing_vertices: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"delzant": self.delzant, "vertices": self.vertices, "failing_vertices": self.failing_vertices}


def _check_compact(polytope: LabelledPolytope) -> None:
    n = polytope.dimension
    a_ub, b_ub = -polytope.normals, polytope.offsets
    free = [(None, None)] * n
    for i in range(n):
        for sign in (1.0, -1.0):
            cost = np.zeros(n)
            cost[i] = sign
            res = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=free, method="highs")
            if res.status == 2:
                raise NonCompact("polytope is empty")
            if res.status == 3:
                raise NonCompact("polytope is unbounded", direction=i, sign=-sign)
    # maximize the common slack t: ⟨ν_k, x⟩ + c_k ≥ t
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    a_slack = np.hstack([-polytope.normals, np.ones((polytope.facets, 1))])
    res = linprog(cost, A_ub=a_slack, b_ub=b_ub, bounds=free + [(None, 1.0)], method="highs")
    if res.status != 0 or -res.fun <= 1e-9:
        raise NonCompact("polytope has empty interior")


def validate_delzant(polytope: LabelledPolytope) -> DelzantReport:
    """Simple, rational and smooth at every vertex; compactness is a precondition."""
    _check_compact(polytope)
    n = polytope.dimension
    lattice_normals = polytope.lattice_normals()
    rational = np.allclose(lattice_normals, np.round(lattice_normals), atol=1e-9)
    vertices: dict[tuple, np.ndarray] = {}
    for subset in itertools.combinations(range(polytope.facets), n):
        block = polytope.normals[list(subset)]
        if abs(np.linalg.det(block)) < 1e-12:
            continue
        x = np.linalg.solve(block, -polytope.offsets[list(subset)])
        if np.all(polytope.affine(x) >= -1e-9):
            vertices.setdefault(tuple(np.round(x, 9)), x)
    failing = []
    for x in vertices.values():
        active = np.flatnonzero(np.abs(polytope.affine(x)) < 1e-9)
        entry = {"vertex": x.tolist(), "active_facets": active.tolist()}
        if len(active) != n:
            failing.append({**entry, "reason": "NonSimpleVertex", "determinant": None})
            continue
        det = float(np.linalg.det(lattice_normals[active]))
        if not rational or not np.isclose(abs(det), 1.0, atol=1e-9):
            failing.append({**entry, "reason": "NonUnimodularVertex", "determinant": round(det, 9)})
    report = DelzantReport(
        delzant=not failing,
        vertices=[v.tolist() for v in vertices.values()],
        failing_vertices=failing,
    )
    logger.info("polytope with %d facets: %d vertices, delzant=%s", polytope.facets, len(vertices), report.delzant)
    return report


def require_delzant(polytope: LabelledPolytope) -> DelzantReport:
    report = validate_delzant(polytope)
    if not report.delzant:
        first = report.failing_vertices[0]
        error = NonSimpleVertex if first["reason"] == "NonSimpleVertex" else NonUnimodularVertex
        raise error(f"Delzant condition fails at vertex {first['vertex']}", failing=report.failing_vertices)
    return report


@dataclass(frozen=True)
class GuilleminData:
    potential: float
    hessian: np.ndarray
    inverse: np.ndarray


def guillemin_jet(polytope: LabelledPolytope, x: np.ndarray, order: int = 0):
    """G = ½ Σ ν_kν_kᵀ/ℓ_k at points x (Q, n) with up to two x-derivatives."""
    x = np.atleast_2d(x)
    ell = polytope.affine(x)
    if np.any(ell <= INTERIOR_TOL):
        raise BoundaryPoint("point is not interior to the moment polytope", first=x[np.any(ell <= INTERIOR_TOL, axis=1)][0])
    nu = polytope.normals
    g = 0.5 * np.einsum("fi,fj,qf->qij", nu, nu, 1.0 / ell)
    if order == 0:
        return (g,)
    dg = -0.5 * np.einsum("fi,fj,fk,qf->qkij", nu, nu, nu, 1.0 / ell**2)
    if order == 1:
        return g, dg
    ddg = np.einsum("fi,fj,fk,fl,qf->qklij", nu, nu, nu, nu, 1.0 / ell**3)
    return g, dg, ddg


def guillemin_metric(polytope: LabelledPolytope, x) -> GuilleminData:
    x = np.asarray(x, dtype=float)
    (g,) = guillemin_jet(polytope, x[None])
    ell = polytope.affine(x)
    return GuilleminData(
        potential=float(0.5 * np.sum(ell * np.log(ell))),
        hessian=g[0],
        inverse=np.linalg.inv(g[0]),
    )


class ToricManifold(ChartedManifold):
    """Action-angle chart (x1, θ1, ..., xn, θn) with the Guillemin metric."""

    kind = "Toric"

    def __init__(self, polytope: LabelledPolytope, check: bool = True):
        n = polytope.dimension
        report_vertices = np.array(require_delzant(polytope).vertices) if check else None
        lower, upper = np.zeros(2 * n), np.zeros(2 * n)
        periods = np.zeros(2 * n)
        if report_vertices is not None and len(report_vertices):
            lower[0::2], upper[0::2] = report_vertices.min(axis=0), report_vertices.max(axis=0)
        else:
            lower[0::2], upper[0::2] = -np.inf, np.inf
        upper[1::2] = 2 * np.pi
        periods[1::2] = 2 * np.pi
        super().__init__(2 * n, ChartDescriptor(lower, upper, periods, "action-angle chart"))
        self.polytope = polytope
        self.symbols = sp.symbols(" ".join(f"x{i} t{i}" for i in range(1, n + 1)), real=True)

    def in_domain(self, points):
        points = np.atleast_2d(points)
        return self.polytope.is_interior(points[:, 0::2])

    def check_points(self, points, error=BoundaryPoint):
        return super().check_points(points, error)

    def _assemble(self, g_x: np.ndarray, h_x: np.ndarray) -> np.ndarray:
        out = np.zeros(g_x.shape[:-2] + (self.real_dimension, self.real_dimension))
        out[..., 0::2, 0::2] = g_x
        out[..., 1::2, 1::2] = h_x
        return out

    def metric(self, points):
        points = np.atleast_2d(points)
        (g,) = guillemin_jet(self.polytope, points[:, 0::2])
        return self._assemble(g, np.linalg.inv(g))

    def omega(self, points):
        q = np.atleast_2d(points).shape[0]
        return np.broadcast_to(standard_omega(self.n), (q, self.real_dimension, self.real_dimension)).copy()

    def acs(self, points):
        return standard_acs(self.n) @ self.metric(points)

    def metric_jet(self, points, order=1):
        points = np.atleast_2d(points)
        q, d = points.shape[0], self.real_dimension
        jet = guillemin_jet(self.polytope, points[:, 0::2], order=max(order, 1))
        g, dg_x = jet[0], jet[1]
        h = np.linalg.inv(g)
        dh_x = -np.einsum("qab,qkbc,qcd->qkad", h, dg_x, h)
        metric = self._assemble(g, h)
        dg = np.zeros((q, d, d, d))
        dg[:, 0::2] = self._assemble(dg_x, dh_x)
        if order < 2:
            return metric, dg
        ddg_x = jet[2]
        ddh_x = (
            -np.einsum("qlab,qkbc,qcd->qklad", dh_x, dg_x, h)
            - np.einsum("qab,qklbc,qcd->qklad", h, ddg_x, h)
            - np.einsum("qab,qkbc,qlcd->qklad", h, dg_x, dh_x)
        )
        ddg = np.zeros((q, d, d, d, d))
        ddg[:, 0::2, 0::2] = self._assemble(ddg_x, ddh_x)
        return metric, dg, ddg

    def killing_potentials(self):
        xs = self.symbols[0::2]
        return [ConstantField(1.0, self.real_dimension)] + [
            SymbolicField(x, self.symbols, f"x{i + 1}") for i, x in enumerate(xs)
        ]


def moment_fiber(manifold: ToricManifold, point, grid: TorusGrid) -> TorusImmersion:
    """The torus {x = point} in action-angle coordinates."""
    point = np.asarray(point, dtype=float)
    if grid.n != manifold.n or point.shape != (manifold.n,):
        raise PreconditionViolation("fiber point and grid must match the polytope dimension")
    manifold.check_points(np.concatenate([[p, 0.0] for p in point]))
    winding = np.zeros((manifold.real_dimension, manifold.n))
    winding[1::2, :] = np.eye(manifold.n)
    values = np.zeros((grid.size, manifold.real_dimension))
    values[:, 0::2] = point
    values[:, 1::2] = grid.theta
    return TorusImmersion(
        manifold, grid, values, winding,
        metadata={"polytope": manifold.polytope, "fiber_point": point.tolist()},
    )


def action_angle_to_affine(x: np.ndarray, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map the standard simplex chart to the affine chart of CPⁿ.

    z_j = sqrt(x_j / x_0) e^{iθ_j} with x_0 = 1 - Σ x_j; returns real coordinates
    (Q, 2n) and the Jacobian (Q, 2n, 2n) in the interleaved (x, θ) ordering.
    """
    x, theta = np.atleast_2d(x), np.atleast_2d(theta)
    q, n = x.shape
    x0 = 1.0 - x.sum(axis=1)
    if np.any(x0 <= INTERIOR_TOL) or np.any(x <= INTERIOR_TOL):
        raise BoundaryPoint("point is not interior to the standard simplex")
    rho = np.sqrt(x / x0[:, None])
    cos, sin = np.cos(theta), np.sin(theta)
    z = np.empty((q, 2 * n))
    z[:, 0::2], z[:, 1::2] = rho * cos, rho * sin
    drho = (np.eye(n)[None] / x0[:, None, None] + (x / x0[:, None] ** 2)[:, :, None]) / (2 * rho[:, :, None])
    jac = np.zeros((q, 2 * n, 2 * n))
    jac[:, 0::2, 0::2] = drho * cos[:, :, None]
    jac[:, 1::2, 0::2] = drho * sin[:, :, None]
    idx = np.arange(n)
    jac[:, 2 * idx, 2 * idx + 1] = -rho * sin
    jac[:, 2 * idx + 1, 2 * idx + 1] = rho * cos
    return z, jac


def cpn_fiber(manifold: ProjectiveSpace, point, grid: TorusGrid) -> TorusImmersion:
    """Torus orbit over an interior point of the moment simplex, in the affine chart."""
    point = np.asarray(point, dtype=float)
    if grid.n != manifold.n or point.shape != (manifold.n,):
        raise PreconditionViolation("fiber point and grid must match the projective dimension")
    values, _ = action_angle_to_affine(np.broadcast_to(point, (grid.size, manifold.n)), grid.theta)
    return TorusImmersion(
        manifold, grid, values, np.zeros((manifold.real_dimension, manifold.n)),
        metadata={"polytope": simplex(manifold.n), "fiber_point": point.tolist()},
    )


def cpn_moment_map(z) -> np.ndarray:
    """(|Z_0|², ..., |Z_n|²)/|Z|² for homogeneous coordinates."""
    z = np.asarray(z, dtype=complex)
    norm = np.sum(np.abs(z) ** 2, axis=-1, keepdims=True)
    if np.any(norm <= 0.0):
        raise ZeroVector("homogeneous coordinates must not all vanish")
    return np.abs(z) ** 2 / norm


def orbit_volume(iota, z, tol: float = 1e-12) -> float:
    """Volume of the orbit of the subtorus with weight matrix ι (d × k) through z ∈ ℂ^d.

    The orbit is parametrized by s ∈ [0, 2π)^k via z_j e^{i(ιs)_j}; its Gram matrix
    is ιᵀ diag|z|² ι and the volume is (2π)^k sqrt(det).
    """
    iota = np.atleast_2d(np.asarray(iota, dtype=float))
    if iota.shape[0] == 1 and np.size(z) != 1:
        iota = iota.T
    r2 = np.abs(np.asarray(z, dtype=complex)) ** 2
    touched = np.any(iota != 0.0, axis=1)
    if np.any(r2[touched] <= tol):
        raise DegenerateOrbit("orbit passes through a fixed coordinate hyperplane")
    gram = iota.T @ (r2[:, None] * iota)
    det = np.linalg.det(gram)
    if det <= tol * max(1.0, float(np.max(np.abs(gram)))) ** iota.shape[1]:
        raise DegenerateOrbit("subtorus orbit is not free", det=det)
    return float((2 * np.pi) ** iota.shape[1] * np.sqrt(det))


def delzant_subtorus(polytope: LabelledPolytope) -> np.ndarray:
    """Integer basis (d × (d - n)) of the kernel of e_k ↦ ν_k."""
    normals = sp.Matrix(np.round(polytope.lattice_normals()).astype(int).T.tolist())
    columns = []
    for vec in normals.nullspace():
        denom = sp.ilcm(*[sp.fraction(sp.nsimplify(v))[1] for v in vec])
        ints = [int(v * denom) for v in vec]
        common = int(np.gcd.reduce(np.abs(ints)))
        columns.append([v // common for v in ints])
    return np.array(columns, dtype=int).T


@dataclass(frozen=True)
class LiftReport:
    radii: list[float]
    lift_volume: float
    fiber_volume: float
    volume_ratio: float
    kappa: float
    relative_error: float


def delzant_lift(polytope: LabelledPolytope, point) -> LiftReport:
    """Compare vol(π⁻¹L) / vol(L) for the moment fiber over `point` with κ."""
    point = np.asarray(point, dtype=float)
    require_delzant(polytope)
    data = guillemin_metric(polytope, point)
    radii = np.sqrt(2.0 * polytope.affine(point))
    iota = delzant_subtorus(polytope)
    lift = (2 * np.pi) ** polytope.facets * float(np.prod(radii))
    fiber = (2 * np.pi) ** polytope.dimension * float(np.sqrt(np.linalg.det(data.inverse)))
    kappa = orbit_volume(iota, radii.astype(complex))
    ratio = lift / fiber
    return LiftReport(radii.tolist(), lift, fiber, ratio, kappa, abs(ratio - kappa) / kappa)


@dataclass
class ReductionReport:
    kappa: float
    kappa_spread: float
    level_spread: float
    on_level_set: bool
    lift: LiftReport | None = None

    def to_dict(self) -> dict:
        out = {
            "kappa": self.kappa,
            "kappa_spread": self.kappa_spread,
            "level_spread": self.level_spread,
            "on_level_set": self.on_level_set,
        }
        if self.lift is not None:
            out["lift"] = self.lift.__dict__
        return out


def reduction_volume_factor(iota, samples, fiber: TorusImmersion | None = None) -> ReductionReport:
    """κ = vol(K-orbit) sampled over points of one level set of the K moment map."""
    iota = np.atleast_2d(np.asarray(iota, dtype=float))
    samples = np.atleast_2d(np.asarray(samples, dtype=complex))
    if iota.shape[0] != samples.shape[1]:
        iota = iota.T
    kappas = np.array([orbit_volume(iota, z) for z in samples])
    levels = 0.5 * (np.abs(samples) ** 2) @ iota
    scale = max(float(np.abs(levels).max()), 1e-300)
    level_spread = float(np.ptp(levels, axis=0).max() / scale)
    kappa = float(kappas.mean())
    report = ReductionReport(
        kappa=kappa,
        kappa_spread=float(np.ptp(kappas) / kappa),
        level_spread=level_spread,
        on_level_set=level_spread < 1e-9,
    )
    if not report.on_level_set:
        logger.warning("samples span several level sets (relative spread %.3e)", level_spread)
    if fiber is not None:
        polytope = fiber.metadata.get("polytope")
        point = fiber.metadata.get("fiber_point")
        if polytope is None or point is None:
            raise PreconditionViolation("fiber does not record its polytope and moment point")
        report.lift = delzant_lift(polytope, point)
    return report
