"""Second variation of volume among Hamiltonian deformations.

For an integrable structure the operator on functions u of L reads

    □u = Δ²u + d*α_{Ric⊥(J∇u)} - 2 d*α_{B(JH, ∇u)} - JH·JH·u,

with α_V = ω(V, ·). It is assembled as a dense matrix on a real Fourier
basis with the L²(g_L) pairing M_ab = ⟨φ_a, □φ_b⟩.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import linalg

from config import settings
from errors import EigenSolverFailure, NonIntegrableBackend, PreconditionViolation, QuadratureUnderResolved
from geometry.kahler_core import killing_potentials
from geometry.lagrangian import TorusImmersion, codifferential, deform, laplacian_on, mean_curvature, volume
from utils.fields import LinearCombination, ScalarField

logger = logging.getLogger(__name__)


class BoxSource(str, Enum):
    ANALYTIC = "AnalyticKahler"
    FINITE_DIFFERENCE = "FiniteDifferenceVolume"


@dataclass(frozen=True, eq=False)
class BoxOperator:
    immersion: TorusImmersion
    m: int
    basis: np.ndarray
    labels: list[str]
    matrix: np.ndarray
    gram: np.ndarray
    source: BoxSource
    transport: np.ndarray | None = None

    @property
    def asymmetry(self) -> float:
        scale = np.linalg.norm(self.matrix)
        return float(np.linalg.norm(self.matrix - self.matrix.T) / scale) if scale > 0 else 0.0

    def apply(self, coefficients: np.ndarray) -> np.ndarray:
        """Weak form ⟨φ_a, □u⟩ for u = Σ c_b φ_b."""
        return self.matrix @ coefficients


def default_truncation(immersion: TorusImmersion) -> int:
    return immersion.grid.N // 2 - 1


def fourier_basis(immersion: TorusImmersion, m: int | None = None) -> tuple[int, np.ndarray, list[str]]:
    m = default_truncation(immersion) if m is None else m
    if immersion.grid.N < 2 * m + 2:
        raise QuadratureUnderResolved(f"N = {immersion.grid.N} cannot resolve modes up to m = {m}", m=m)
    basis, labels = immersion.grid.real_basis(m)
    return m, basis, labels


def assemble_box(immersion: TorusImmersion, m: int | None = None) -> BoxOperator:
    manifold = immersion.manifold
    if not manifold.kahler:
        raise NonIntegrableBackend(f"{manifold.kind} is not integrable; use box_fd", backend=manifold.kind)
    m, basis, labels = fourier_basis(immersion, m)
    grid = immersion.grid
    data = mean_curvature(immersion)
    geo = data.geometry
    t = immersion.tangent
    acs = manifold.acs(immersion.values)
    ricci = manifold.ricci(immersion.values)
    omega = immersion.ambient["omega"]

    du = grid.gradient(basis)
    grad = np.einsum("pij,bpj->bpi", geo.inverse, du)
    j_grad = np.einsum("pac,pci,bpi->bpa", acs, t, grad)
    jt = np.einsum("pab,pbk->pak", acs, t)
    alpha_ricci = -np.einsum("bpa,pac,pck->bpk", j_grad, ricci, jt)
    b_term = np.einsum("pi,bpj,paij->bpa", data.jh, grad, data.second_fundamental)
    alpha_b = np.einsum("epa,pab,pbk->epk", b_term, omega, t)
    along = np.einsum("pi,bpi->bp", data.jh, du)
    transport = np.einsum("pi,bpi->bp", data.jh, grid.gradient(along))

    lap = laplacian_on(immersion, geo, basis)
    box = (
        laplacian_on(immersion, geo, lap)
        + codifferential(immersion, geo, alpha_ricci)
        - 2.0 * codifferential(immersion, geo, alpha_b)
        - transport
    )
    weighted = basis * (geo.sqrt_det * grid.weight)
    logger.debug("assembled box on %d basis functions", basis.shape[0])
    return BoxOperator(
        immersion=immersion,
        m=m,
        basis=basis,
        labels=labels,
        matrix=weighted @ box.T,
        gram=weighted @ basis.T,
        source=BoxSource.ANALYTIC,
        transport=-(weighted @ transport.T),
    )


def box_fd(immersion: TorusImmersion, m: int | None = None, h: float = 1e-3) -> BoxOperator:
    """Hessian of volume along deform(ℓ, s·φ_i + t·φ_j) by central differences."""
    m, basis, labels = fourier_basis(immersion, 2 if m is None else m)
    size = basis.shape[0]
    base = volume(immersion)
    jobs: list[np.ndarray] = []
    for i in range(size):
        jobs.extend([h * basis[i], -h * basis[i]])
    for i in range(size):
        for j in range(i + 1, size):
            s, d = basis[i] + basis[j], basis[i] - basis[j]
            jobs.extend([h * s, h * d, -h * d, -h * s])

    def measure(f: np.ndarray) -> float:
        return volume(deform(immersion, f))

    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        vols = list(pool.map(measure, jobs))

    matrix = np.zeros((size, size))
    for i in range(size):
        matrix[i, i] = (vols[2 * i] - 2 * base + vols[2 * i + 1]) / h**2
    pos = 2 * size
    for i in range(size):
        for j in range(i + 1, size):
            pp, pm, mp, mm = vols[pos: pos + 4]
            matrix[i, j] = matrix[j, i] = (pp - pm - mp + mm) / (4 * h**2)
            pos += 4
    geo_weight = mean_curvature(immersion).geometry.sqrt_det * immersion.grid.weight
    weighted = basis * geo_weight
    return BoxOperator(
        immersion=immersion,
        m=m,
        basis=basis,
        labels=labels,
        matrix=matrix,
        gram=weighted @ basis.T,
        source=BoxSource.FINITE_DIFFERENCE,
    )


@dataclass(frozen=True, eq=False)
class SpectralReport:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    kernel_dimension: int
    kernel_basis: np.ndarray
    min_nonkernel_eigenvalue: float
    kernel_tol: float
    asymmetry: float

    def to_dict(self) -> dict:
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "kernel_dimension": self.kernel_dimension,
            "min_nonkernel_eigenvalue": self.min_nonkernel_eigenvalue,
            "kernel_tol": self.kernel_tol,
            "asymmetry": self.asymmetry,
        }


def spectrum(op: BoxOperator, kernel_tol: float | None = None) -> SpectralReport:
    """Generalized eigenproblem M v = λ G v; eigenvectors are L²(g_L)-orthonormal."""
    sym = 0.5 * (op.matrix + op.matrix.T)
    try:
        evals, evecs = linalg.eigh(sym, op.gram)
    except (linalg.LinAlgError, ValueError) as exc:
        raise EigenSolverFailure(str(exc)) from exc
    scale = float(np.abs(evals).max()) if evals.size else 0.0
    tol = kernel_tol if kernel_tol is not None else 1e-6 * max(scale, 1e-300)
    kernel = np.abs(evals) < tol
    rest = evals[~kernel]
    return SpectralReport(
        eigenvalues=evals,
        eigenvectors=evecs,
        kernel_dimension=int(kernel.sum()),
        kernel_basis=evecs[:, kernel].T,
        min_nonkernel_eigenvalue=float(rest.min()) if rest.size else float("inf"),
        kernel_tol=tol,
        asymmetry=op.asymmetry,
    )


def pseudo_inverse(report: SpectralReport, rhs: np.ndarray) -> np.ndarray:
    """Coefficients c with M c = rhs on the complement of the kernel."""
    keep = np.abs(report.eigenvalues) >= report.kernel_tol
    vecs = report.eigenvectors[:, keep]
    return vecs @ ((vecs.T @ rhs) / report.eigenvalues[keep])


def quadratic_form(op: BoxOperator, coefficients: np.ndarray) -> float:
    """⟨□u, u⟩ for u = Σ c_a φ_a."""
    c = np.asarray(coefficients, dtype=float)
    return float(c @ op.apply(c))


@dataclass(frozen=True, eq=False)
class RigidityReport:
    rigid: bool
    rank: int
    kernel_dimension: int
    singular_values: np.ndarray
    complement: np.ndarray
    potentials: list[ScalarField]

    @property
    def deficit(self) -> int:
        return self.kernel_dimension - self.rank

    def complement_fields(self) -> list[ScalarField]:
        """Combinations of Killing potentials mapping isomorphically onto the kernel."""
        return [LinearCombination(self.potentials, row) for row in self.complement]

    def to_dict(self) -> dict:
        return {
            "rigid": self.rigid,
            "rank": self.rank,
            "kernel_dimension": self.kernel_dimension,
            "deficit": self.deficit,
            "singular_values": self.singular_values.tolist(),
        }


def restricted_potentials(immersion: TorusImmersion, potentials: list[ScalarField]) -> np.ndarray:
    return np.array([p.value(immersion.values) for p in potentials])


def rigidity_check(
    immersion: TorusImmersion,
    report: SpectralReport,
    op: BoxOperator,
    potentials: list[ScalarField] | None = None,
) -> RigidityReport:
    potentials = killing_potentials(immersion.manifold) if potentials is None else list(potentials)
    if not potentials:
        raise PreconditionViolation("at least one Killing potential is required")
    restricted = restricted_potentials(immersion, potentials)
    kernel_fields = report.kernel_basis @ op.basis
    sqrt_det = mean_curvature(immersion).geometry.sqrt_det
    weight = sqrt_det * immersion.grid.weight
    projection = (restricted * weight) @ kernel_fields.T
    if projection.size == 0:
        return RigidityReport(True, 0, report.kernel_dimension, np.zeros(0), np.zeros((0, len(potentials))), potentials)
    left, sing, _ = np.linalg.svd(projection, full_matrices=False)
    rank = int(np.sum(sing > 1e-6 * max(sing.max(), 1e-300))) if sing.max() > 1e-12 else 0
    result = RigidityReport(
        rigid=rank == report.kernel_dimension,
        rank=rank,
        kernel_dimension=report.kernel_dimension,
        singular_values=sing,
        complement=left[:, :rank].T,
        potentials=potentials,
    )
    logger.info("rigidity: rank %d of kernel dimension %d", rank, report.kernel_dimension)
    return result


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    margin: float


def stability_check(report: SpectralReport) -> StabilityVerdict:
    margin = report.min_nonkernel_eigenvalue
    return StabilityVerdict(stable=bool(margin > 0), margin=margin)


@dataclass(frozen=True)
class SelfAdjointReport:
    d_asymmetry: float
    full_asymmetry: float
    full_asymmetry_abs: float
    predicted_transport_asymmetry: float
    div_jh_sup: float
    transport_norm: float

    @property
    def tracking_ratio(self) -> float:
        if self.predicted_transport_asymmetry == 0.0:
            return float("nan")
        return self.full_asymmetry_abs / self.predicted_transport_asymmetry

    def to_dict(self) -> dict:
        return {**self.__dict__, "tracking_ratio": self.tracking_ratio}


def selfadjoint_diagnostics(immersion: TorusImmersion, op: BoxOperator) -> SelfAdjointReport:
    """Split □ = D - (JH)² and measure which part breaks symmetry."""
    if op.transport is None:
        raise PreconditionViolation("diagnostics need an analytically assembled operator")
    data = mean_curvature(immersion)
    grid = immersion.grid
    d_part = op.matrix - op.transport
    d_scale = np.linalg.norm(d_part)
    d_asym = float(np.linalg.norm(d_part - d_part.T) / d_scale) if d_scale > 0 else 0.0
    # div JH = -d*α_H
    div = -data.residual
    along = np.einsum("pi,bpi->bp", data.jh, grid.gradient(op.basis))
    weighted = op.basis * (div * data.geometry.sqrt_det * grid.weight)
    predicted = weighted @ along.T
    predicted = predicted - predicted.T
    return SelfAdjointReport(
        d_asymmetry=d_asym,
        full_asymmetry=op.asymmetry,
        full_asymmetry_abs=float(np.linalg.norm(op.matrix - op.matrix.T)),
        predicted_transport_asymmetry=float(np.linalg.norm(predicted)),
        div_jh_sup=float(np.abs(div).max()),
        transport_norm=float(np.abs(op.transport).max()),
    )
