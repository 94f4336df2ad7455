"""Relative HSLAG solves, orbit minimization, continuation and positive perturbation paths."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage, optimize
from scipy.spatial.transform import Rotation

from config import settings
from errors import (
    ConstraintDriftExceeded,
    ContinuationStopped,
    DegenerateMinimum,
    DescentStalled,
    HslagError,
    IllConditionedBox,
    NewtonDiverged,
    NonIntegrableBackend,
    NonTransverseSubgroup,
    NotCompatible,
    ObstructionRankLoss,
    PreconditionViolation,
    TubeTooSmall,
)
from geometry.jacobi import BoxOperator, SpectralReport, assemble_box, pseudo_inverse, rigidity_check, spectrum
from geometry.kahler_core import (
    ChartedManifold,
    MetricPerturbation,
    christoffel_from_jet,
    compatible_structure,
    eval_tensors,
    hamiltonian_flow,
    hamiltonian_vector_field,
    killing_potentials,
    structure_distance,
    tilted_ellipsoid,
)
from geometry.lagrangian import (
    NormalProjection,
    TorusImmersion,
    deform,
    geodesic_curvature,
    induced_geometry,
    mean_curvature,
    parallel_circle,
    quintic_cutoff,
    tube_radius,
    volume,
)
from utils.fields import LinearCombination, NumericField, ScalarField, central_difference
from utils.spectral import TorusGrid

logger = logging.getLogger(__name__)

# Newton gives up when the best of the last STALL_WINDOW residuals is above
# STALL_RATIO times the residual before them.
STALL_WINDOW = 5
STALL_RATIO = 0.9

# a jump is a minimizer at least JUMP_MIN_PARAM from the identity under a
# perturbation of size below JUMP_MAX_SIZE
JUMP_MIN_PARAM = 0.1
JUMP_MAX_SIZE = 0.05


# relative HSLAG problem


@dataclass(eq=False)
class RelativeHslagProblem:
    structure: ChartedManifold
    seed: TorusImmersion
    obstruction: list[ScalarField]
    obstruction_rank: int
    potentials: list[ScalarField]
    box: BoxOperator
    box_spectrum: SpectralReport
    m: int | None = None
    residual_tol: float = field(default_factory=lambda: settings.residual_tol)
    max_iter: int = field(default_factory=lambda: settings.max_iter)

    @property
    def reference(self) -> ChartedManifold:
        return self.seed.manifold

    def moved(self, seed: TorusImmersion) -> "RelativeHslagProblem":
        """Same structure and reference operator around another seed.

        The obstruction is taken from every Killing potential, whose restrictions
        span ℓ*𝒦_M for any seed in the orbit.
        """
        return replace(self, seed=seed, obstruction=self.potentials)

    def with_structure(self, structure: ChartedManifold) -> "RelativeHslagProblem":
        return replace(self, structure=structure)


def build_problem(
    structure: ChartedManifold,
    seed: TorusImmersion,
    m: int | None = None,
    potentials: list[ScalarField] | None = None,
    require_rigid: bool = True,
) -> RelativeHslagProblem:
    """Rigidity analysis of the seed under its own backend, packaged for the solver."""
    seed.check_lagrangian()
    op = assemble_box(seed, m)
    report = spectrum(op)
    potentials = killing_potentials(seed.manifold) if potentials is None else list(potentials)
    rigidity = rigidity_check(seed, report, op, potentials)
    if require_rigid and not rigidity.rigid:
        raise PreconditionViolation(
            "seed is not rigid under the reference structure", rank=rigidity.rank, kernel=rigidity.kernel_dimension
        )
    return RelativeHslagProblem(
        structure=structure,
        seed=seed,
        obstruction=rigidity.complement_fields(),
        obstruction_rank=rigidity.rank,
        potentials=potentials,
        box=op,
        box_spectrum=report,
        m=op.m,
    )


@dataclass(frozen=True, eq=False)
class RelativeSolution:
    h: np.ndarray
    immersion: TorusImmersion
    obstruction: np.ndarray
    obstruction_coefficients: np.ndarray
    history: list[float]
    residual_sup: float

    @property
    def iterations(self) -> int:
        return len(self.history) - 1

    @property
    def volume(self) -> float:
        return volume(self.immersion)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "history": self.history,
            "residual_sup": self.residual_sup,
            "obstruction_coefficients": self.obstruction_coefficients.tolist(),
            "volume": self.volume,
        }


def _obstruction_frame(fields: list[ScalarField], immersion: TorusImmersion, weight: np.ndarray, rank: int):
    """L²-orthonormal basis (rank, P) of the span of restricted fields."""
    restricted = np.array([f.value(immersion.values) for f in fields])
    root = np.sqrt(weight)
    left, sing, right = np.linalg.svd(restricted * root, full_matrices=False)
    if sing.size < rank or (rank and sing[rank - 1] < 1e-10 * max(sing[0], 1e-300)):
        raise ObstructionRankLoss(
            "restricted obstruction space lost rank", expected=rank, singular_values=sing
        )
    frame = right[:rank] / root
    return restricted, frame


def _matched_kernel(report: SpectralReport, rank: int) -> SpectralReport:
    """Treat the `rank` eigenvalues of smallest magnitude as the kernel."""
    size = np.sort(np.abs(report.eigenvalues))
    if rank == 0 or rank >= size.size:
        return report
    tol = 0.5 * (size[rank - 1] + size[rank])
    return replace(report, kernel_tol=tol, kernel_dimension=rank)


def solve_relative_hslag(problem: RelativeHslagProblem, initial_h: np.ndarray | None = None) -> RelativeSolution:
    """Newton iteration h ← h + □⁺ P_⊥(d*α_H) until P_⊥(d*α_H) vanishes."""
    structure = problem.structure
    current = problem.seed
    h_total = np.zeros(current.grid.size)
    if initial_h is not None and np.ptp(initial_h) > 0:
        current = deform(current, initial_h)
        h_total = np.asarray(initial_h, dtype=float).copy()
    history: list[float] = []
    for iteration in range(problem.max_iter + 1):
        evaluated = current.on(structure)
        data = mean_curvature(evaluated)
        weight = data.geometry.sqrt_det * current.grid.weight
        restricted, frame = _obstruction_frame(problem.obstruction, evaluated, weight, problem.obstruction_rank)
        projected = frame.T @ (frame @ (weight * data.residual))
        perp = data.residual - projected
        norm = float(np.sqrt(np.sum(weight * perp**2)))
        history.append(norm)
        logger.debug("newton %d: |P d*a_H| = %.3e", iteration, norm)
        if norm < problem.residual_tol:
            coefficients = np.linalg.lstsq(restricted.T, projected, rcond=None)[0]
            logger.info("relative solve converged in %d iterations", iteration)
            return RelativeSolution(h_total, evaluated, projected, coefficients, history, data.sup)
        if iteration == problem.max_iter:
            break
        if len(history) > STALL_WINDOW and min(history[-STALL_WINDOW:]) > STALL_RATIO * history[-STALL_WINDOW - 1]:
            raise NewtonDiverged(
                f"residual fell by less than {1 - STALL_RATIO:.0%} over {STALL_WINDOW} iterations", history=history
            )
        if structure.kahler:
            op = assemble_box(evaluated, problem.m)
            report = _matched_kernel(spectrum(op), problem.obstruction_rank)
        else:
            op, report = problem.box, problem.box_spectrum
        nonkernel = np.abs(report.eigenvalues[np.abs(report.eigenvalues) >= report.kernel_tol])
        condition = float(nonkernel.max() / nonkernel.min()) if nonkernel.size else np.inf
        if condition > settings.condition_max:
            raise IllConditionedBox(f"condition number {condition:.3e} of the box operator", condition=condition)
        rhs = op.basis @ (weight * perp)
        step = pseudo_inverse(report, rhs) @ op.basis
        current = deform(current, step)
        h_total = h_total + step
    raise NewtonDiverged(f"no convergence within {problem.max_iter} iterations", history=history)


# orbit of the isometry group


@dataclass(frozen=True, eq=False)
class OrbitGroup:
    manifold: ChartedManifold
    potentials: list[ScalarField]
    basis: np.ndarray
    stabilizer: np.ndarray
    singular_values: np.ndarray

    @property
    def dimension(self) -> int:
        return self.basis.shape[0]

    def generator(self, params: np.ndarray) -> ScalarField:
        return LinearCombination(self.potentials, np.asarray(params, dtype=float) @ self.basis)

    def apply(self, immersion: TorusImmersion, params: np.ndarray) -> TorusImmersion:
        params = np.asarray(params, dtype=float)
        if params.size == 0 or not np.any(params):
            return immersion
        moved = hamiltonian_flow(self.manifold, self.generator(params), 1.0, immersion.values)
        return immersion.with_values(moved, group_params=params.tolist())


def orbit_group(seed: TorusImmersion, potentials: list[ScalarField] | None = None, tol: float = 1e-8) -> OrbitGroup:
    """Split Killing potentials into directions moving ℓ(L) and the stabilizer G_ℓ°.

    A potential is in the stabilizer when its restriction to ℓ is constant,
    i.e. its flow is tangent to ℓ(L).
    """
    potentials = killing_potentials(seed.manifold) if potentials is None else list(potentials)
    geo = induced_geometry(seed)
    weight = geo.sqrt_det * seed.grid.weight
    restricted = np.array([p.value(seed.values) for p in potentials])
    mean = (restricted @ weight) / weight.sum()
    centered = (restricted - mean[:, None]) * np.sqrt(weight)
    left, sing, _ = np.linalg.svd(centered, full_matrices=True)
    scale = float(sing.max()) if sing.size else 0.0
    rank = int(np.sum(sing > tol * max(scale, 1.0))) if scale > tol else 0
    return OrbitGroup(seed.manifold, potentials, left[:, :rank].T, left[:, rank:].T, sing)


def _evaluate(problem: RelativeHslagProblem, group: OrbitGroup, params, initial_h=None) -> RelativeSolution:
    moved = group.apply(problem.seed, params)
    target = problem if moved is problem.seed else problem.moved(moved)
    return solve_relative_hslag(target, initial_h)


def modified_volume(problem: RelativeHslagProblem, params, group: OrbitGroup | None = None) -> float:
    group = orbit_group(problem.seed, problem.potentials) if group is None else group
    return _evaluate(problem, group, params).volume


@dataclass(frozen=True, eq=False)
class OrbitMinimum:
    params: np.ndarray
    value: float
    solution: RelativeSolution
    hessian: np.ndarray
    hessian_eigenvalues: np.ndarray
    nondegenerate: bool
    gradient_norm: float
    evaluations: int
    grad_tol: float = field(default_factory=lambda: settings.grad_tol)

    @property
    def immersion(self) -> TorusImmersion:
        return self.solution.immersion

    @property
    def residual_sup(self) -> float:
        return self.solution.residual_sup

    @property
    def status(self) -> str:
        if self.gradient_norm >= self.grad_tol:
            return DescentStalled.__name__
        if self.residual_sup >= settings.hslag_tol:
            return "ResidualAboveTolerance"
        return "converged"

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        out = {
            "params": self.params.tolist(),
            "value": self.value,
            "hessian_eigenvalues": self.hessian_eigenvalues.tolist(),
            "nondegenerate": self.nondegenerate,
            "gradient_norm": self.gradient_norm,
            "evaluations": self.evaluations,
            "residual_sup": self.residual_sup,
            "param_norm": float(np.linalg.norm(self.params)),
            "status": self.status,
        }
        if not self.nondegenerate:
            out["warning"] = DegenerateMinimum(
                "orbit minimum is degenerate", smallest=float(self.hessian_eigenvalues.min())
            ).to_dict()
        return out


def _map(fn, items):
    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        return list(pool.map(fn, items))


def minimize_over_orbit(
    problem: RelativeHslagProblem,
    group: OrbitGroup | None = None,
    initial: np.ndarray | None = None,
    initial_h: np.ndarray | None = None,
    grad_tol: float | None = None,
    hessian_tol: float = 1e-6,
    stall_tol: float = 1e-5,
    polish_steps: int = 3,
) -> OrbitMinimum:
    """BFGS on the modified volume over G/G_ℓ° with central-difference gradients.

    BFGS is followed by up to `polish_steps` Newton steps with the orbit
    Hessian while the gradient is above `grad_tol`. A gradient still above
    `stall_tol` raises DescentStalled; between the two tolerances, or with the
    final residual above hslag_tol, the minimum is returned with a
    non-converged `status`.
    """
    group = orbit_group(problem.seed, problem.potentials) if group is None else group
    grad_tol = settings.grad_tol if grad_tol is None else grad_tol
    k = group.dimension
    x0 = np.zeros(k) if initial is None else np.asarray(initial, dtype=float)
    step = settings.orbit_fd_step
    count = 0

    def value(x):
        nonlocal count
        count += 1
        return _evaluate(problem, group, x).volume

    def gradient(x):
        shifts = [x + step * e for e in np.eye(k)] + [x - step * e for e in np.eye(k)]
        vals = np.array(_map(value, shifts))
        return (vals[:k] - vals[k:]) / (2 * step)

    if k:
        result = optimize.minimize(value, x0, jac=gradient, method="BFGS", options={"gtol": grad_tol, "maxiter": 60})
        x_star = result.x
        grad = gradient(x_star)
        for _ in range(polish_steps):
            if np.linalg.norm(grad) < grad_tol:
                break
            hessian = _orbit_hessian(value, x_star, 10 * step)
            if np.linalg.eigvalsh(hessian).min() <= hessian_tol:
                break
            candidate = x_star - np.linalg.solve(hessian, grad)
            candidate_grad = gradient(candidate)
            if np.linalg.norm(candidate_grad) >= np.linalg.norm(grad):
                break
            x_star, grad = candidate, candidate_grad
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm >= stall_tol:
            raise DescentStalled(f"orbit descent stopped with gradient {grad_norm:.3e}", message=result.message)
    else:
        x_star, grad_norm = x0, 0.0
    solution = _evaluate(problem, group, x_star, initial_h)
    hessian = _orbit_hessian(value, x_star, 10 * step)
    eigenvalues = np.linalg.eigvalsh(hessian) if k else np.zeros(0)
    nondegenerate = bool(k == 0 or eigenvalues.min() > hessian_tol)
    if not nondegenerate:
        logger.warning("orbit minimum is degenerate: smallest Hessian eigenvalue %.3e", eigenvalues.min())
    minimum = OrbitMinimum(x_star, solution.volume, solution, hessian, eigenvalues, nondegenerate, grad_norm, count, grad_tol)
    if not minimum.converged:
        logger.warning(
            "orbit minimum not converged (%s): gradient %.3e, residual %.3e", minimum.status, grad_norm, solution.residual_sup
        )
    logger.info("orbit minimum at |u| = %.4f, volume %.10f", np.linalg.norm(x_star), solution.volume)
    return minimum


def _orbit_hessian(value: Callable, x: np.ndarray, step: float) -> np.ndarray:
    k = x.size
    if k == 0:
        return np.zeros((0, 0))
    eye = np.eye(k)
    points = [x]
    for i in range(k):
        points += [x + step * eye[i], x - step * eye[i]]
    for i in range(k):
        for j in range(i + 1, k):
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                points.append(x + step * (si * eye[i] + sj * eye[j]))
    vals = iter(_map(value, points))
    center = next(vals)
    hess = np.zeros((k, k))
    for i in range(k):
        plus, minus = next(vals), next(vals)
        hess[i, i] = (plus - 2 * center + minus) / step**2
    for i in range(k):
        for j in range(i + 1, k):
            pp, pm, mp, mm = (next(vals) for _ in range(4))
            hess[i, j] = hess[j, i] = (pp - pm - mp + mm) / (4 * step**2)
    return hess


# continuation


def curvature_statistics(immersion: TorusImmersion) -> tuple[float, float]:
    """Mean of |H| and its relative spread (max - min)/mean."""
    kappa = geodesic_curvature(immersion)
    mean = float(kappa.mean())
    spread = float(np.ptp(kappa) / mean) if mean > 1e-12 else float(np.ptp(kappa))
    return mean, spread


@dataclass(frozen=True, eq=False)
class ContinuationResult:
    rows: list[dict]
    members: dict[float, OrbitMinimum]
    reached: tuple[float, float]
    stops: list[dict]

    def to_dict(self) -> dict:
        return {"rows": self.rows, "reached": list(self.reached), "stops": self.stops}


def _row(t: float, minimum: OrbitMinimum) -> dict:
    mean, spread = curvature_statistics(minimum.immersion)
    return {
        "t": t,
        "volume": minimum.value,
        "residual_sup": minimum.residual_sup,
        "curvature_mean": mean,
        "curvature_spread": spread,
        "params": minimum.params.tolist(),
    }


def continuation(
    problem: RelativeHslagProblem,
    family: Callable[[float], TorusImmersion],
    t_grid: Sequence[float],
    step_constant: float = 10.0,
) -> ContinuationResult:
    """March the orbit minimum along a seed family, separately on each side of t = 0."""
    t_grid = sorted({float(t) for t in t_grid} | {0.0})
    start = minimize_over_orbit(problem.moved(family(0.0)))
    if not start.nondegenerate:
        raise ContinuationStopped("orbit minimum at t = 0 is degenerate", t=0.0, reason=DegenerateMinimum.__name__)
    if not start.converged:
        raise ContinuationStopped("orbit minimum at t = 0 did not converge", t=0.0, reason=start.status)
    members = {0.0: start}
    stops = []
    reached = [0.0, 0.0]
    for side, ts in ((1, [t for t in t_grid if t > 0]), (0, sorted((t for t in t_grid if t < 0), reverse=True))):
        previous, t_prev = start, 0.0
        for t in ts:
            reason = None
            try:
                minimum = minimize_over_orbit(problem.moved(family(t)), initial=previous.params, initial_h=previous.solution.h)
            except HslagError as exc:
                reason = exc.code
            else:
                jump = float(np.linalg.norm(minimum.params - previous.params))
                if not minimum.nondegenerate:
                    reason = DegenerateMinimum.__name__
                elif not minimum.converged:
                    reason = minimum.status
                elif jump > step_constant * abs(t - t_prev):
                    reason = "ParameterJump"
            if reason is not None:
                logger.warning("continuation stopped at t = %g: %s", t, reason)
                stops.append({"t": t, "reason": reason})
                break
            members[t] = minimum
            reached[side] = t
            previous, t_prev = minimum, t
            logger.info("continuation t = %g: volume %.10f", t, minimum.value)
    rows = [_row(t, members[t]) for t in sorted(members)]
    return ContinuationResult(rows, members, (reached[0], reached[1]), stops)


# variation of the structure


def _hessians(manifold: ChartedManifold, phi: ScalarField, points: np.ndarray) -> np.ndarray:
    g, dg = manifold.metric_jet(points, order=1)[:2]
    gamma = christoffel_from_jet(g, dg)
    return phi.hessian(points) - np.einsum("qkij,qk->qij", gamma, phi.gradient(points))


def _variation(hess: np.ndarray, acs: np.ndarray, mode: str) -> np.ndarray:
    jt = np.swapaxes(acs, -1, -2)
    anti = hess - jt @ hess @ acs
    if mode == "b":
        return anti
    if mode == "a":
        return -jt @ anti
    raise PreconditionViolation(f"unknown variation mode {mode!r}; expected 'a' or 'b'")


def metric_variation(manifold: ChartedManifold, phi: ScalarField, mode: str, point) -> np.ndarray:
    """ġ = ω(·, J̇·) for X = -Ω⁻¹∇φ.

    Mode a is J̇ = -ℒ_X J, giving -Jᵀ(2D⁻dφ); mode b is J̇ = J ℒ_X J, giving 2D⁻dφ.
    """
    if not manifold.kahler:
        raise NonIntegrableBackend("metric variation formulas need an integrable structure")
    tensors = eval_tensors(manifold, point)
    p = tensors.point[None]
    hess = phi.hessian(p)[0] - np.einsum("kij,k->ij", tensors.christoffel, phi.gradient(p)[0])
    return _variation(hess, tensors.acs, mode)


def metric_variation_along(manifold: ChartedManifold, phi: ScalarField, immersion: TorusImmersion) -> np.ndarray:
    """ġ at s = 0 of the path ∂_s J = -ℒ_X J + J ℒ_X J, sampled at the nodes."""
    if not manifold.kahler:
        raise NonIntegrableBackend("metric variation formulas need an integrable structure")
    hess = _hessians(manifold, phi, immersion.values)
    acs = manifold.acs(immersion.values)
    return _variation(hess, acs, "a") + _variation(hess, acs, "b")


def flow_jet(manifold: ChartedManifold, phi: ScalarField, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """X = -Ω⁻¹∇φ and dX[q, a, c] = ∂_c X^a from the Hessian of φ."""
    points = np.atleast_2d(points)
    omega = manifold.omega(points)
    field_x = np.linalg.solve(omega, -phi.gradient(points)[..., None])[..., 0]
    # Ω ∂_c X = -(∂_c∇φ + ∂_cΩ X)
    domega = central_difference(manifold.omega, points, manifold.fd_step)
    rhs = phi.hessian(points) + np.einsum("qcab,qb->qac", domega, field_x)
    return field_x, -np.linalg.solve(omega, rhs)


def _lie_rhs(acs: np.ndarray, transport: np.ndarray, dx: np.ndarray) -> np.ndarray:
    """-ℒ_X J + J ℒ_X J with ℒ_X J = X·∇J - (∂X)J + J(∂X)."""
    lx = transport - dx @ acs + acs @ dx
    return -lx + acs @ lx


@dataclass(frozen=True, eq=False)
class PerturbationPath:
    """J_s on a chart mesh; `delta` holds J_s - J_0 at every s in `s_grid`."""

    manifold: ChartedManifold
    phi: ScalarField
    s_grid: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    shape: tuple[int, ...]
    delta: np.ndarray
    drift: np.ndarray

    @cached_property
    def delta_grad(self) -> np.ndarray:
        """∂_c(J_s - J_0) on the mesh, shape (steps + 1, *shape, c, a, b)."""
        d = self.manifold.real_dimension
        spacing = (self.upper - self.lower) / (np.asarray(self.shape) - 1)
        grads = np.gradient(self.delta, *spacing, axis=tuple(range(1, d + 1)), edge_order=2)
        return np.stack(grads, axis=-3)

    def transport_correction(self, s: float, points: np.ndarray) -> np.ndarray:
        """Interpolated ∂_c(J_s - J_0) at points, shape (Q, c, a, b); zero outside the mesh."""
        points = np.atleast_2d(points)
        s = float(np.clip(s, self.s_grid[0], self.s_grid[-1]))
        k = int(np.clip(np.searchsorted(self.s_grid, s) - 1, 0, len(self.s_grid) - 2))
        lam = (s - self.s_grid[k]) / (self.s_grid[k + 1] - self.s_grid[k])
        index = ((points - self.lower) / (self.upper - self.lower) * (np.asarray(self.shape) - 1)).T
        d = self.manifold.real_dimension
        out = np.zeros((points.shape[0], d, d, d))
        for weight, frame in ((1.0 - lam, self.delta_grad[k]), (lam, self.delta_grad[k + 1])):
            if weight == 0.0 or not np.any(frame):
                continue
            for c, a, b in np.ndindex(d, d, d):
                out[:, c, a, b] += weight * ndimage.map_coordinates(
                    frame[..., c, a, b], index, order=3, mode="constant", cval=0.0
                )
        return out

    def acs_at(self, s: float, points: np.ndarray) -> np.ndarray:
        """J_s at points by RK4 in s from J_0 there.

        X, ∂X and ∇J_0 are evaluated at the points themselves; the mesh only
        supplies X·∇(J_s - J_0), which vanishes wherever X does.
        """
        points = np.atleast_2d(points)
        manifold = self.manifold
        acs = manifold.acs(points)
        if s <= 0.0:
            return acs
        omega = manifold.omega(points)
        field_x, dx = flow_jet(manifold, self.phi, points)
        base = np.einsum("qc,qcab->qab", field_x, central_difference(manifold.acs, points, manifold.fd_step))
        steps = max(1, int(np.ceil(s / (self.s_grid[1] - self.s_grid[0]) - 1e-9)))
        ds = s / steps
        cache: dict[float, np.ndarray] = {}

        def transport(sigma):
            if sigma not in cache:
                cache[sigma] = base + np.einsum("qc,qcab->qab", field_x, self.transport_correction(sigma, points))
            return cache[sigma]

        for step in range(steps):
            sigma = step * ds
            k1 = _lie_rhs(acs, transport(sigma), dx)
            k2 = _lie_rhs(acs + 0.5 * ds * k1, transport(sigma + 0.5 * ds), dx)
            k3 = _lie_rhs(acs + 0.5 * ds * k2, transport(sigma + 0.5 * ds), dx)
            k4 = _lie_rhs(acs + ds * k3, transport(sigma + ds), dx)
            raw = acs + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            metric = omega @ raw
            acs = compatible_structure(omega, 0.5 * (metric + np.swapaxes(metric, 1, 2))).acs
        return acs

    def structure(self, s: float) -> "PathStructure":
        return PathStructure(self, s)


class PathStructure(MetricPerturbation):
    kind = "PathStructure"

    def __init__(self, path: PerturbationPath, s: float):
        reference = path.manifold

        def target(points):
            points = np.atleast_2d(points)
            metric = reference.omega(points) @ path.acs_at(s, points)
            return 0.5 * (metric + np.swapaxes(metric, 1, 2))

        super().__init__(reference, target, f"path s={s:g}")
        self.path = path
        self.s = s

    def killing_potentials(self):
        return self.reference.killing_potentials()


def _mesh(lower: np.ndarray, upper: np.ndarray, shape: tuple[int, ...]) -> tuple[np.ndarray, list[float]]:
    axes = [np.linspace(lo, hi, k) for lo, hi, k in zip(lower, upper, shape)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack(grids, axis=-1), [ax[1] - ax[0] for ax in axes]


def integrate_positive_path(
    manifold: ChartedManifold,
    phi: ScalarField,
    lower,
    upper,
    shape: tuple[int, ...] | int = 41,
    s_max: float = 0.1,
    steps: int = 10,
) -> PerturbationPath:
    """RK4 in s for ∂_s J = -ℒ_X J + J ℒ_X J on a chart mesh, retracted to compatibility each step."""
    d = manifold.real_dimension
    lower, upper = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    shape = (shape,) * d if isinstance(shape, int) else tuple(shape)
    mesh, spacing = _mesh(lower, upper, shape)
    flat = mesh.reshape(-1, d)
    omega = manifold.omega(flat)
    acs0 = manifold.acs(flat).reshape(shape + (d, d))
    field_x, dx = flow_jet(manifold, phi, flat)
    base = np.einsum("qc,qcab->qab", field_x, central_difference(manifold.acs, flat, manifold.fd_step))
    base = base.reshape(shape + (d, d))
    field_x = field_x.reshape(shape + (d,))
    dx = dx.reshape(shape + (d, d))

    def rhs(delta):
        ddelta = np.gradient(delta, *spacing, axis=tuple(range(d)), edge_order=2)
        transport = base + sum(field_x[..., c, None, None] * ddelta[c] for c in range(d))
        return _lie_rhs(acs0 + delta, transport, dx)

    delta = np.zeros_like(acs0)
    ds = s_max / steps
    deltas, drifts = [delta], [0.0]
    eye = np.eye(d)
    for step in range(steps):
        k1 = rhs(delta)
        k2 = rhs(delta + 0.5 * ds * k1)
        k3 = rhs(delta + 0.5 * ds * k2)
        k4 = rhs(delta + ds * k3)
        raw = acs0 + delta + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        drift = float(np.abs(raw @ raw + eye).max())
        if drift > settings.drift_tol:
            raise ConstraintDriftExceeded(f"J^2 + I drifted to {drift:.3e}", step=step + 1, drift=drift)
        metric = omega @ raw.reshape(-1, d, d)
        try:
            retracted = compatible_structure(omega, 0.5 * (metric + np.swapaxes(metric, 1, 2)))
        except NotCompatible as exc:
            raise ConstraintDriftExceeded("path left the positive structures", step=step + 1) from exc
        delta = retracted.acs.reshape(shape + (d, d)) - acs0
        deltas.append(delta)
        drifts.append(drift)
        logger.debug("path step %d: drift %.3e", step + 1, drift)
    return PerturbationPath(
        manifold=manifold,
        phi=phi,
        s_grid=np.linspace(0.0, s_max, steps + 1),
        lower=lower,
        upper=upper,
        shape=shape,
        delta=np.array(deltas),
        drift=np.array(drifts),
    )


def path_volume_derivative(manifold: ChartedManifold, phi: ScalarField, immersion: TorusImmersion) -> float:
    """d/ds vol_{J_s}(ℓ) at s = 0, as ½∫ tr(g_L⁻¹ ℓ*ġ)."""
    gdot = metric_variation_along(manifold, phi, immersion)
    geo = induced_geometry(immersion)
    t = immersion.tangent
    pulled = np.einsum("pai,pab,pbj->pij", t, gdot, t)
    density = 0.5 * np.einsum("pij,pji->p", geo.inverse, pulled)
    return float(immersion.grid.integrate(density, geo.sqrt_det))


def path_bounds(immersion: TorusImmersion, margin: float) -> tuple[np.ndarray, np.ndarray]:
    return immersion.values.min(axis=0) - margin, immersion.values.max(axis=0) + margin


# model potentials and experiments


def _plateau_cutoff(s: np.ndarray) -> np.ndarray:
    """1 on [0, 1/2], quintic fall-off to 0 at 1."""
    return quintic_cutoff(np.clip(2.0 * s - 1.0, 0.0, 1.0))[0]


def bump_quartic_potential(immersion: TorusImmersion, rho: float | None = None) -> NumericField:
    """φ = -d⁴/(4(n+2)) near ℓ(L), d the fiberwise distance, cut off at radius ρ."""
    rho = tube_radius(immersion) if rho is None else rho
    if rho <= 0:
        raise TubeTooSmall("tube radius must be positive")
    manifold = immersion.manifold
    projection = NormalProjection(immersion)
    factor = -1.0 / (4.0 * (immersion.n + 2))

    def fn(points):
        points = np.atleast_2d(points)
        theta, r, _, _ = projection.foot(points, projection.start(points), metric=manifold.metric(points))
        foot_points = immersion.at(theta)[0]
        dist2 = np.einsum("qa,qab,qb->q", r, manifold.metric(foot_points), r)
        return factor * dist2**2 * _plateau_cutoff(np.sqrt(dist2) / rho)

    return NumericField(fn, settings.fd_step, label=f"quartic bump rho={rho:.3g}")


@dataclass(frozen=True)
class PositivityReport:
    s_values: list[float]
    second_derivatives: list[float]
    dt: float
    subgroup: str

    @property
    def positive(self) -> bool:
        ok = True
        for s, d2 in zip(self.s_values, self.second_derivatives):
            ok &= abs(d2) < 1e-7 if s == 0.0 else d2 > 0.0
        return ok

    def to_dict(self) -> dict:
        return {
            "s": self.s_values,
            "second_derivative": self.second_derivatives,
            "dt": self.dt,
            "subgroup": self.subgroup,
            "positive": self.positive,
        }


def positivity_experiment(
    immersion: TorusImmersion,
    s_list: Sequence[float],
    subgroup: ScalarField,
    path: PerturbationPath | None = None,
    dt: float = 0.05,
) -> PositivityReport:
    """Second t-derivative of vol_{J_s}(u_t ∘ ℓ) at t = 0, u_t the flow of `subgroup`."""
    restricted = subgroup.value(immersion.values)
    if np.ptp(restricted) < 1e-8 * max(1.0, float(np.abs(restricted).max())):
        raise NonTransverseSubgroup(f"{subgroup.label} preserves the torus")
    manifold = immersion.manifold
    if path is None:
        phi = bump_quartic_potential(immersion)
        lower, upper = path_bounds(immersion, 1.5 * tube_radius(immersion))
        s_max = max(max(s_list), 1e-3)
        path = integrate_positive_path(manifold, phi, lower, upper, s_max=s_max, steps=max(4, int(np.ceil(s_max / 0.01))))
    moved = {t: immersion.with_values(hamiltonian_flow(manifold, subgroup, t, immersion.values)) for t in (-dt, dt)}
    moved[0.0] = immersion
    values = []
    for s in s_list:
        structure = path.structure(s)
        vol = {t: volume(member.on(structure)) for t, member in moved.items()}
        d2 = (vol[dt] - 2 * vol[0.0] + vol[-dt]) / dt**2
        values.append(float(d2))
        logger.info("positivity s = %g: d2 vol = %.6e", s, d2)
    return PositivityReport([float(s) for s in s_list], values, dt, subgroup.label)


def axis_rotation(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    return Rotation.from_rotvec(angle * axis / np.linalg.norm(axis)).as_matrix()


@dataclass(frozen=True, eq=False)
class JumpReport:
    minimum: OrbitMinimum
    perturbation_size: float
    epsilon: float
    tilt: float

    @property
    def param_norm(self) -> float:
        return float(np.linalg.norm(self.minimum.params))

    @property
    def jumped(self) -> bool:
        """A far-from-identity minimizer caused by a small perturbation."""
        return self.param_norm > JUMP_MIN_PARAM and self.perturbation_size < JUMP_MAX_SIZE

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "tilt": self.tilt,
            "param_norm": self.param_norm,
            "perturbation_size": self.perturbation_size,
            "jumped": self.jumped,
            "minimum": self.minimum.to_dict(),
        }


def jump_experiment(
    reference: ChartedManifold,
    grid: TorusGrid,
    epsilon: float = 0.015,
    tilt: float = 0.6,
    axis=(1.0, 1.0, 0.0),
    mesh_extent: float = 2.0,
    mesh_size: int = 21,
) -> JumpReport:
    """Tilted nearly-round ellipsoid: the orbit minimizer of the equator sits near the tilt, not the identity."""
    structure = tilted_ellipsoid(reference, (1.0 - epsilon, 1.0, 1.0 + epsilon), axis_rotation(axis, tilt))
    axis_1d = np.linspace(-mesh_extent, mesh_extent, mesh_size)
    mesh = np.stack(np.meshgrid(axis_1d, axis_1d, indexing="ij"), axis=-1).reshape(-1, 2)
    size = structure_distance(structure.acs(mesh), reference.acs(mesh), reference.metric(mesh))
    seed = parallel_circle(reference, 0.5 if reference.kind == "ProjectiveSpace" else 0.0, grid)
    problem = build_problem(structure, seed)
    minimum = minimize_over_orbit(problem)
    report = JumpReport(minimum, size, epsilon, tilt)
    logger.info("jump experiment: |u*| = %.4f for perturbation size %.4f", report.param_norm, size)
    return report
