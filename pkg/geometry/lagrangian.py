"""Sampled Lagrangian tori: induced geometry, Maslov data and Hamiltonian deformations.

A torus is stored as its values on the grid of utils.spectral.TorusGrid,
written ℓ(θ) = Wθ + periodic(θ) with an integer-period winding matrix W, so
that spectral differentiation applies to the periodic part.
"""
import csv
import json
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres
from scipy.spatial import cKDTree

from config import settings
from errors import (
    DegenerateInducedMetric,
    FamilyOverlap,
    FlowLeftAtlas,
    PreconditionViolation,
    SolverDiverged,
    TubeTooSmall,
    UnsupportedBackend,
)
from geometry.kahler_core import ChartedManifold, christoffel_from_jet
from utils.fields import ScalarField
from utils.spectral import TorusGrid, TrigInterpolant

logger = logging.getLogger(__name__)


class NodeTree:
    """k-d tree over chart points, periodic along the chart's periodic coordinates."""

    def __init__(self, manifold: ChartedManifold, values: np.ndarray):
        self.lower = manifold.chart.lower
        self.periods = manifold.chart.periods
        self.mask = self.periods > 0
        self.tree = cKDTree(self.place(values), boxsize=self.periods if np.any(self.mask) else None)

    def place(self, points: np.ndarray) -> np.ndarray:
        out = np.array(np.atleast_2d(points), dtype=float)
        if np.any(self.mask):
            per = self.periods[self.mask]
            shifted = np.mod(out[:, self.mask] - self.lower[self.mask], per)
            out[:, self.mask] = np.where(shifted >= per, 0.0, shifted)
        return out

    def nearest(self, points: np.ndarray) -> np.ndarray:
        return self.tree.query(self.place(points), k=1)[1]

    def distance(self, points: np.ndarray) -> np.ndarray:
        return self.tree.query(self.place(points), k=1)[0]

    def pairs(self, radius: float) -> np.ndarray:
        """Index pairs (i < j) closer than `radius` in the chart."""
        return self.tree.query_pairs(radius, output_type="ndarray")


@dataclass(frozen=True, eq=False)
class TorusImmersion:
    manifold: ChartedManifold
    grid: TorusGrid
    values: np.ndarray
    winding: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        winding = np.asarray(self.winding, dtype=float)
        d = self.manifold.real_dimension
        if values.shape != (self.grid.size, d):
            raise PreconditionViolation(f"expected samples of shape {(self.grid.size, d)}, got {values.shape}")
        if winding.shape != (d, self.grid.n):
            raise PreconditionViolation(f"winding matrix must have shape {(d, self.grid.n)}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "winding", winding)

    @property
    def n(self) -> int:
        return self.grid.n

    @cached_property
    def periodic(self) -> np.ndarray:
        return self.values - self.grid.theta @ self.winding.T

    @cached_property
    def interpolant(self) -> TrigInterpolant:
        return TrigInterpolant(self.grid, self.periodic)

    @cached_property
    def spectral(self) -> np.ndarray:
        """Fourier coefficients of the periodic part, shape (d, N, ..., N)."""
        data = np.reshape(self.periodic.T, (self.manifold.real_dimension,) + self.grid.shape)
        return np.fft.fftn(data, axes=tuple(range(1, self.n + 1))) / self.grid.size

    @cached_property
    def tangent(self) -> np.ndarray:
        """∂ℓ/∂θ_i at the nodes, shape (P, d, n)."""
        grad = self.grid.gradient(self.periodic.T)
        return np.transpose(grad, (1, 0, 2)) + self.winding[None]

    @cached_property
    def second(self) -> np.ndarray:
        """∂²ℓ/∂θ_i∂θ_j at the nodes, shape (P, d, n, n)."""
        per = self.periodic.T
        out = np.empty((self.grid.size, self.manifold.real_dimension, self.n, self.n))
        for i in range(self.n):
            di = self.grid.derivative(per, i)
            for j in range(i, self.n):
                dij = self.grid.derivative(di, j).T
                out[:, :, i, j] = dij
                out[:, :, j, i] = dij
        return out

    def at(self, theta: np.ndarray, order: int = 0) -> tuple[np.ndarray, ...]:
        """Point, tangent frame and second derivatives at arbitrary parameters."""
        theta = np.atleast_2d(theta)
        out = list(self.interpolant.evaluate(theta, order))
        out[0] = out[0] + theta @ self.winding.T
        if order >= 1:
            out[1] = out[1] + self.winding[None]
        return tuple(out)

    def with_values(self, values: np.ndarray, **metadata) -> "TorusImmersion":
        meta = {k: v for k, v in self.metadata.items() if k != "fiber_point"}
        meta.update(metadata)
        return TorusImmersion(self.manifold, self.grid, values, self.winding, meta)

    def on(self, manifold: ChartedManifold) -> "TorusImmersion":
        """Same map, measured with another structure sharing the chart and ω."""
        return replace(self, manifold=manifold)

    @cached_property
    def ambient(self) -> dict:
        g, dg = self.manifold.metric_jet(self.values, order=1)[:2]
        return {
            "metric": g,
            "christoffel": christoffel_from_jet(g, dg),
            "omega": self.manifold.omega(self.values),
        }

    @cached_property
    def node_tree(self) -> NodeTree:
        return NodeTree(self.manifold, self.values)

    def lagrangian_defect(self) -> float:
        pulled = np.einsum("pai,pab,pbj->pij", self.tangent, self.ambient["omega"], self.tangent)
        return float(np.abs(pulled).max())

    def check_lagrangian(self, tol: float | None = None) -> float:
        tol = settings.lagrangian_tol if tol is None else tol
        defect = self.lagrangian_defect()
        if defect >= tol:
            raise PreconditionViolation(f"immersion is not Lagrangian: defect {defect:.3e} >= {tol:.1e}", defect=defect)
        return defect


@dataclass(frozen=True, eq=False)
class InducedGeometry:
    metric: np.ndarray
    inverse: np.ndarray
    sqrt_det: np.ndarray
    christoffel: np.ndarray
    volume: float


def induced_geometry(immersion: TorusImmersion) -> InducedGeometry:
    t = immersion.tangent
    g_l = np.einsum("pai,pab,pbj->pij", t, immersion.ambient["metric"], t)
    g_l = 0.5 * (g_l + np.swapaxes(g_l, 1, 2))
    smallest = np.linalg.eigvalsh(g_l)[:, 0]
    if smallest.min() <= 1e-10:
        raise DegenerateInducedMetric(
            "induced metric is not positive definite", node=int(smallest.argmin()), eigenvalue=float(smallest.min())
        )
    grid = immersion.grid
    flat = np.moveaxis(g_l, 0, -1)
    dg_l = np.moveaxis(np.stack([grid.derivative(flat, k) for k in range(grid.n)]), -1, 0)
    sqrt_det = np.sqrt(np.linalg.det(g_l))
    return InducedGeometry(
        metric=g_l,
        inverse=np.linalg.inv(g_l),
        sqrt_det=sqrt_det,
        christoffel=christoffel_from_jet(g_l, dg_l),
        volume=float(grid.integrate(sqrt_det)),
    )


def volume(immersion: TorusImmersion) -> float:
    return induced_geometry(immersion).volume


def codifferential(immersion: TorusImmersion, geometry: InducedGeometry, alpha: np.ndarray) -> np.ndarray:
    """d*α = -(1/√g) ∂_i(√g g^{ij} α_j) for one-forms of shape (..., P, n)."""
    flux = geometry.sqrt_det[:, None] * np.einsum("pij,...pj->...pi", geometry.inverse, alpha)
    return -immersion.grid.divergence(flux) / geometry.sqrt_det


def laplacian_on(immersion: TorusImmersion, geometry: InducedGeometry, u: np.ndarray) -> np.ndarray:
    """Δu = d*du on L, for fields of shape (..., P)."""
    return codifferential(immersion, geometry, immersion.grid.gradient(u))


@dataclass(frozen=True, eq=False)
class MaslovData:
    H: np.ndarray
    alpha: np.ndarray
    residual: np.ndarray
    volume: float
    second_fundamental: np.ndarray
    jh: np.ndarray
    geometry: InducedGeometry

    @property
    def sup(self) -> float:
        return float(np.abs(self.residual).max())

    @property
    def l2(self) -> float:
        return float(np.sqrt(max(self._integral(self.residual**2), 0.0)))

    @property
    def integral(self) -> float:
        return self._integral(self.residual)

    def _integral(self, f: np.ndarray) -> float:
        n = self.alpha.shape[-1]
        weight = (2.0 * np.pi) ** n / self.residual.shape[0]
        return float(np.sum(f * self.geometry.sqrt_det) * weight)


def mean_curvature(immersion: TorusImmersion) -> MaslovData:
    geo = induced_geometry(immersion)
    t = immersion.tangent
    g = immersion.ambient["metric"]
    acc = immersion.second + np.einsum("pabc,pbi,pcj->paij", immersion.ambient["christoffel"], t, t)
    # tangential part: T g_L⁻¹ Tᵀ g
    coeff = np.einsum("pkl,pbl,pba,paij->pkij", geo.inverse, t, g, acc)
    second_fundamental = acc - np.einsum("pbk,pkij->pbij", t, coeff)
    H = np.einsum("pij,paij->pa", geo.inverse, second_fundamental)
    alpha = np.einsum("pa,pab,pbi->pi", H, immersion.ambient["omega"], t)
    jh_vec = np.einsum("pab,pb->pa", immersion.manifold.acs(immersion.values), H)
    jh = np.einsum("pkl,pbl,pba,pa->pk", geo.inverse, t, g, jh_vec)
    return MaslovData(
        H=H,
        alpha=alpha,
        residual=codifferential(immersion, geo, alpha),
        volume=geo.volume,
        second_fundamental=second_fundamental,
        jh=jh,
        geometry=geo,
    )


@dataclass(frozen=True)
class ResidualReport:
    sup: float
    l2: float
    integral: float

    def to_dict(self) -> dict:
        return {"sup": self.sup, "l2": self.l2, "integral": self.integral}


def hslag_residual(immersion: TorusImmersion) -> tuple[np.ndarray, ResidualReport]:
    data = mean_curvature(immersion)
    return data.residual, ResidualReport(data.sup, data.l2, data.integral)


def geodesic_curvature(immersion: TorusImmersion) -> np.ndarray:
    """|H|_g along a curve; for n = 1 this is the unsigned geodesic curvature."""
    data = mean_curvature(immersion)
    g = immersion.ambient["metric"]
    return np.sqrt(np.einsum("pa,pab,pb->p", data.H, g, data.H))


def tube_radius(immersion: TorusImmersion, cap: float | None = None) -> float:
    """Half a focal-radius estimate in chart units, limited by self-approach of the image."""
    cap = settings.tube_radius_cap if cap is None else cap
    t, s2 = immersion.tangent, immersion.second
    gram = np.einsum("pai,paj->pij", t, t)
    proj = np.einsum("pai,pij,pbj->pab", t, np.linalg.inv(gram), t)
    diag = np.einsum("paii->pai", s2)
    normal = diag - np.einsum("pab,pbi->pai", proj, diag)
    speed2 = np.sum(t * t, axis=1)
    kappa = float((np.linalg.norm(normal, axis=1) / speed2).max())
    rho = cap if kappa < 1e-12 else min(cap, 0.5 / kappa)
    # nodes far apart on the torus must stay apart in the chart
    pairs = immersion.node_tree.pairs(2 * rho)
    if len(pairs):
        i, j = pairs.T
        theta = immersion.grid.theta
        dtheta = np.abs(theta[i] - theta[j])
        far = np.minimum(dtheta, 2 * np.pi - dtheta).max(axis=-1) > np.pi / 2
        if np.any(far):
            diff = immersion.manifold.chart_difference(immersion.values[i[far]], immersion.values[j[far]])
            rho = min(rho, 0.5 * float(np.linalg.norm(diff, axis=-1).min()))
    if rho <= 0:
        raise TubeTooSmall("tubular neighbourhood estimate is not positive")
    return rho


def quintic_cutoff(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """χ(s) = 1 - 10s³ + 15s⁴ - 6s⁵ on [0, 1], zero beyond; C² at both ends."""
    s = np.clip(s, 0.0, 1.0)
    chi = 1 - 10 * s**3 + 15 * s**4 - 6 * s**5
    dchi = -30 * s**2 + 60 * s**3 - 30 * s**4
    return chi, dchi


@dataclass(frozen=True, eq=False)
class HamiltonianDeformation:
    f: np.ndarray
    rho: float | None = None
    flow_steps: int | None = None


class NormalProjection:
    """Nearest-point projection π onto ℓ(L), started from the closest node."""

    def __init__(self, immersion: TorusImmersion):
        self.immersion = immersion
        self.manifold = immersion.manifold

    def start(self, points: np.ndarray) -> np.ndarray:
        return self.immersion.grid.theta[self.immersion.node_tree.nearest(points)]

    def foot(self, points: np.ndarray, theta: np.ndarray, metric: np.ndarray | None = None, iterations: int = 12):
        """Gauss–Newton for the foot point; `metric` (Q, d, d) weights the normal condition."""
        theta = np.array(theta, dtype=float)
        for _ in range(iterations):
            x, t = self.immersion.at(theta, order=1)
            r = self.manifold.chart_difference(points, x)
            w = t if metric is None else np.einsum("qab,qbi->qai", metric, t)
            step = np.linalg.solve(np.einsum("qai,qaj->qij", w, t), np.einsum("qai,qa->qi", w, r)[..., None])[..., 0]
            theta += step
            if np.abs(step).max() < 1e-13:
                break
        x, t, s2 = self.immersion.at(theta, order=2)
        return theta, self.manifold.chart_difference(points, x), t, s2


def tangential_velocity(immersion: TorusImmersion, f: np.ndarray) -> np.ndarray:
    """X_f̃ at the nodes for f̃ = (f∘π)·χ(dist/ρ) built around `immersion`.

    On ℓ(L) the cutoff is one and π is the identity, so only the tangential
    derivative of f enters: ∇f̃ = T(TᵀT)⁻¹∂_θ f.
    """
    t = immersion.tangent
    gram = np.einsum("pai,paj->pij", t, t)
    dtheta = np.linalg.solve(gram, immersion.grid.gradient(f)[..., None])[..., 0]
    grad = np.einsum("pai,pi->pa", t, dtheta)
    return np.linalg.solve(immersion.manifold.omega(immersion.values), -grad[..., None])[..., 0]


def deform(immersion: TorusImmersion, deformation: HamiltonianDeformation | np.ndarray) -> TorusImmersion:
    """Move the nodes along the isotopy generated by f̃ rebuilt around the moving torus.

    At every flow time the Hamiltonian is the cutoff normal extension of the
    node values f about the current torus, so the flow depends only on the
    current nodes and deform(deform(ℓ, f), -f) retraces the same path.
    """
    if not isinstance(deformation, HamiltonianDeformation):
        deformation = HamiltonianDeformation(np.asarray(deformation, dtype=float))
    f = np.asarray(deformation.f, dtype=float)
    if f.shape != (immersion.grid.size,):
        raise PreconditionViolation("deformation potential must be sampled on the immersion grid")
    if np.ptp(f) == 0.0:
        return immersion.with_values(immersion.values.copy())
    rho = deformation.rho or tube_radius(immersion)
    steps = deformation.flow_steps or settings.deform_steps
    manifold = immersion.manifold

    def field(points):
        return tangential_velocity(immersion.with_values(points), f)

    p = immersion.values.copy()
    reach = float(np.linalg.norm(field(p), axis=1).max())
    if reach >= 0.5 * rho:
        raise TubeTooSmall(f"displacement {reach:.3e} exceeds half the tube radius {rho:.3e}", reach=reach, rho=rho)
    h = 1.0 / steps
    for step in range(steps):
        k1 = field(p)
        k2 = field(p + 0.5 * h * k1)
        k3 = field(p + 0.5 * h * k2)
        k4 = field(p + h * k3)
        p = p + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(manifold.in_domain(p)):
            raise FlowLeftAtlas("deformed torus left the chart", step=step + 1)
    return immersion.with_values(p)


@dataclass(frozen=True)
class FirstVariationReport:
    finite_difference: float
    predicted: float
    absolute_error: float
    relative_error: float

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def variation_check_first(immersion: TorusImmersion, potential: ScalarField, h: float = 1e-3) -> FirstVariationReport:
    data = mean_curvature(immersion)
    v = potential.value(immersion.values)
    predicted = -float(immersion.grid.integrate(data.residual * v, data.geometry.sqrt_det))
    plus = volume(deform(immersion, h * v))
    minus = volume(deform(immersion, -h * v))
    fd = (plus - minus) / (2 * h)
    err = abs(fd - predicted)
    scale = max(abs(fd), abs(predicted))
    return FirstVariationReport(fd, predicted, err, err / scale if scale > 0 else 0.0)


@dataclass(frozen=True, eq=False)
class HarmonicForms:
    forms: np.ndarray
    potentials: np.ndarray
    min_norms: np.ndarray
    min_frame_singular: float

    @property
    def nonvanishing(self) -> bool:
        return bool(np.all(self.min_norms > 1e-8) and self.min_frame_singular > 1e-8)


def harmonic_one_forms(immersion: TorusImmersion, tol: float = 1e-11) -> HarmonicForms:
    """Harmonic representatives dθ_i + dφ_i for the induced metric."""
    geo = induced_geometry(immersion)
    grid = immersion.grid
    n, size = grid.n, grid.size
    weight = geo.sqrt_det[:, None, None] * geo.inverse
    mean_weight = weight.mean(axis=0)
    k = grid.wavenumbers
    kgrid = np.stack(np.meshgrid(*([k] * n), indexing="ij"), axis=-1).reshape(size, n)
    symbol = np.einsum("pi,ij,pj->p", kgrid, mean_weight, kgrid)
    symbol[symbol == 0.0] = 1.0

    def apply(phi):
        return grid.divergence(np.einsum("pij,pj->pi", weight, grid.gradient(phi)))

    def precondition(r):
        spec = np.fft.fftn(np.reshape(r, grid.shape)).ravel()
        return np.fft.ifftn(np.reshape(-spec / symbol, grid.shape)).real.ravel()

    op = LinearOperator((size, size), matvec=apply, dtype=float)
    pre = LinearOperator((size, size), matvec=precondition, dtype=float)
    forms, potentials = np.empty((n, size, n)), np.empty((n, size))
    for i in range(n):
        rhs = -grid.divergence(weight[:, :, i])
        if np.abs(rhs).max() < 1e-14:
            phi = np.zeros(size)
        else:
            phi, info = gmres(op, rhs, M=pre, rtol=tol, atol=0.0, maxiter=200, restart=min(size, 60))
            if info != 0:
                raise SolverDiverged(f"Hodge solve for generator {i} did not converge", info=info)
            phi -= phi.mean()
        potentials[i] = phi
        forms[i] = np.eye(n)[i][None, :] + grid.gradient(phi)
    norms = np.sqrt(np.einsum("kpi,pij,kpj->kp", forms, geo.inverse, forms))
    # pointwise independence of the frame, measured in g_L
    evals, evecs = np.linalg.eigh(geo.inverse)
    root = evecs @ (np.sqrt(evals)[..., None] * np.swapaxes(evecs, 1, 2))
    frame = np.einsum("kpi,pij->pkj", forms, root)
    singular = np.linalg.svd(frame, compute_uv=False)[:, -1]
    return HarmonicForms(forms, potentials, norms.min(axis=1), float(singular.min()))


@dataclass(frozen=True, eq=False)
class FibrationFamily:
    parameters: np.ndarray
    members: list[TorusImmersion]
    min_separation: float


def _affine_frame(immersion: TorusImmersion) -> np.ndarray:
    """Constant conjugate frame N with ω(N_j, T_i) = δ_ij, or UnsupportedBackend."""
    t = immersion.tangent
    omega = immersion.ambient["omega"]
    if np.ptp(t, axis=0).max() > 1e-10 or np.ptp(omega, axis=0).max() > 1e-12:
        raise UnsupportedBackend("graph seeds need a Darboux-affine chart with a linear torus")
    geo = induced_geometry(immersion)
    jt = np.einsum("ab,bi->ai", immersion.manifold.acs(immersion.values[:1])[0], t[0])
    return -jt @ geo.inverse[0]


def harmonic_graph(
    immersion: TorusImmersion, coefficients, forms: HarmonicForms | None = None, parameter=None
) -> TorusImmersion:
    """Graph of Σ c_i α_i over ℓ for the harmonic forms α_i, in a Darboux-affine chart."""
    forms = harmonic_one_forms(immersion) if forms is None else forms
    frame = _affine_frame(immersion)
    c = np.asarray(coefficients, dtype=float)
    beta = np.einsum("i,ipk->pk", c, forms.forms)
    values = immersion.values + beta @ frame.T
    immersion.manifold.check_points(values)
    label = c if parameter is None else np.asarray(parameter, dtype=float)
    member = immersion.with_values(values, fibration_parameter=label.tolist())
    member.check_lagrangian()
    return member


def fibration_seed(
    immersion: TorusImmersion,
    directions: np.ndarray,
    radius: float,
    samples: int = 2,
) -> FibrationFamily:
    """Graphs of t·α over ℓ for harmonic forms α, in flat or action-angle charts.

    `directions` (k, n) combines the harmonic basis; parameters fill the ball of
    radius `radius` on a (2·samples + 1)^k grid.
    """
    forms = harmonic_one_forms(immersion)
    if not forms.nonvanishing:
        raise PreconditionViolation("harmonic forms vanish somewhere; no fibration seed")
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    _affine_frame(immersion)
    axis = np.linspace(-radius, radius, 2 * samples + 1)
    grid_t = np.stack(np.meshgrid(*([axis] * directions.shape[0]), indexing="ij"), axis=-1).reshape(-1, directions.shape[0])
    params = grid_t[np.linalg.norm(grid_t, axis=1) <= radius + 1e-12]
    members = [harmonic_graph(immersion, t @ directions, forms, parameter=t) for t in params]
    separation = np.inf
    for i in range(len(members)):
        for j in range(i + 1, len(members)):
            separation = min(separation, float(members[j].node_tree.distance(members[i].values).min()))
    if separation < 1e-9:
        raise FamilyOverlap("family members intersect", separation=separation)
    return FibrationFamily(params, members, separation)


def parallel_circle(manifold: ChartedManifold, level: float, grid: TorusGrid) -> TorusImmersion:
    """Circle of revolution: height level on the sphere/ellipsoid, moment level on CP¹."""
    if manifold.real_dimension != 2 or grid.n != 1:
        raise UnsupportedBackend("parallels exist only on surfaces")
    kind = getattr(manifold, "reference", manifold).kind
    if kind == "ProjectiveSpace":
        if not 0.0 < level < 1.0:
            raise PreconditionViolation("moment level must lie in (0, 1)")
        radius = np.sqrt(level / (1.0 - level))
    elif kind == "SurfaceOfRevolution":
        if not -1.0 < level < 1.0:
            raise PreconditionViolation("height level must lie in (-1, 1)")
        radius = np.sqrt((1.0 - level) / (1.0 + level))
    else:
        raise UnsupportedBackend(f"no parallels on {manifold.kind}")
    theta = grid.theta[:, 0]
    values = radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return TorusImmersion(manifold, grid, values, np.zeros((2, 1)), metadata={"level": level})


def parallels_family(manifold: ChartedManifold, levels, grid: TorusGrid) -> list[TorusImmersion]:
    return [parallel_circle(manifold, level, grid) for level in levels]


def linear_torus(manifold: ChartedManifold, offsets, grid: TorusGrid) -> TorusImmersion:
    """{y = offsets} in a flat torus whose x-coordinates are periodic."""
    periods = manifold.chart.periods[0::2]
    if np.any(periods <= 0) or grid.n != manifold.n:
        raise PreconditionViolation("linear tori need periodic x-coordinates and a matching grid")
    winding = np.zeros((manifold.real_dimension, grid.n))
    winding[0::2, :] = np.diag(periods / (2 * np.pi))
    values = grid.theta @ winding.T
    values[:, 1::2] = np.asarray(offsets, dtype=float)
    return TorusImmersion(manifold, grid, values, winding, metadata={"offsets": list(map(float, offsets))})


def product_torus(manifold: ChartedManifold, radii, grid: TorusGrid) -> TorusImmersion:
    """Π{|z_i| = r_i} in the affine chart."""
    radii = np.asarray(radii, dtype=float)
    if radii.shape != (manifold.n,) or grid.n != manifold.n:
        raise PreconditionViolation("one radius per complex dimension is required")
    values = np.empty((grid.size, manifold.real_dimension))
    values[:, 0::2] = radii * np.cos(grid.theta)
    values[:, 1::2] = radii * np.sin(grid.theta)
    return TorusImmersion(manifold, grid, values, np.zeros((manifold.real_dimension, grid.n)), metadata={"radii": radii.tolist()})


def fourier_curve(manifold: ChartedManifold, grid: TorusGrid, center, modes) -> TorusImmersion:
    """center + Σ a_k cos kθ + b_k sin kθ for a list of (k, a_k, b_k)."""
    if grid.n != 1 or manifold.real_dimension != 2:
        raise UnsupportedBackend("explicit Fourier data is supported for curves on surfaces")
    theta = grid.theta[:, 0]
    values = np.tile(np.asarray(center, dtype=float), (grid.size, 1))
    for k, a, b in modes:
        values += np.outer(np.cos(k * theta), a) + np.outer(np.sin(k * theta), b)
    return TorusImmersion(manifold, grid, values, np.zeros((2, 1)))


def save_snapshot(immersion: TorusImmersion, prefix: Path) -> tuple[Path, Path]:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = prefix.with_suffix(".csv"), prefix.with_suffix(".json")
    d, n = immersion.manifold.real_dimension, immersion.n
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node"] + [f"theta{i + 1}" for i in range(n)] + [f"c{a + 1}" for a in range(d)])
        for node, (theta, point) in enumerate(zip(immersion.grid.theta, immersion.values)):
            writer.writerow([node] + [repr(float(v)) for v in theta] + [repr(float(v)) for v in point])
    spec = immersion.spectral.reshape(d, -1)
    payload = {
        "backend": immersion.manifold.kind,
        "n": n,
        "N": immersion.grid.N,
        "winding": immersion.winding.tolist(),
        "fourier_real": spec.real.tolist(),
        "fourier_imag": spec.imag.tolist(),
    }
    json_path.write_text(json.dumps(payload), encoding="utf-8")
    return csv_path, json_path


def load_snapshot(manifold: ChartedManifold, prefix: Path) -> TorusImmersion:
    prefix = Path(prefix)
    payload = json.loads(prefix.with_suffix(".json").read_text(encoding="utf-8"))
    if payload["backend"] != manifold.kind:
        raise PreconditionViolation(f"snapshot was taken on {payload['backend']}, not {manifold.kind}")
    grid = TorusGrid(payload["n"], payload["N"])
    with prefix.with_suffix(".csv").open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    values = np.array([[float(v) for v in row[1 + grid.n:]] for row in rows])
    return TorusImmersion(manifold, grid, values, np.array(payload["winding"], dtype=float))
