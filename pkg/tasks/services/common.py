from dataclasses import dataclass, field

import numpy as np

from errors import UnsupportedBackend
from geometry.deform import PerturbationPath, bump_quartic_potential, integrate_positive_path, path_bounds
from geometry.kahler_core import ChartedManifold
from geometry.lagrangian import TorusImmersion, geodesic_curvature, tube_radius
from schemas import ExperimentConfig
from tasks.builders import build_grid, build_immersion, build_reference, build_structure
from utils.spectral import TorusGrid


@dataclass
class TaskOutcome:
    verdict: bool
    results: dict = field(default_factory=dict)
    tables: dict[str, list[dict]] = field(default_factory=dict)
    immersions: dict[str, TorusImmersion] = field(default_factory=dict)


@dataclass
class Setup:
    reference: ChartedManifold
    structure: ChartedManifold
    grid: TorusGrid
    immersion: TorusImmersion | None


def prepare(config: ExperimentConfig, with_immersion: bool = True) -> Setup:
    reference = build_reference(config.manifold)
    structure = build_structure(config.manifold, reference)
    grid = build_grid(config, reference)
    immersion = build_immersion(config, reference, grid) if with_immersion else None
    return Setup(reference, structure, grid, immersion)


def curve_rows(immersion: TorusImmersion) -> list[dict]:
    """Node samples; for curves on a sphere model the embedded point is added."""
    rows = []
    kappa = geodesic_curvature(immersion) if immersion.n == 1 else None
    try:
        sphere, _ = immersion.manifold.sphere_embedding(immersion.values)
    except UnsupportedBackend:
        sphere = None
    for i, (theta, point) in enumerate(zip(immersion.grid.theta, immersion.values)):
        row = {"node": i, "theta": theta.tolist(), "chart": point.tolist()}
        if sphere is not None:
            row["sphere"] = sphere[i].tolist()
        if kappa is not None:
            row["curvature"] = float(kappa[i])
        rows.append(row)
    return rows


def positive_path(config: ExperimentConfig, reference: ChartedManifold, seed: TorusImmersion) -> PerturbationPath:
    block = config.path
    phi = bump_quartic_potential(seed)
    margin = block.margin if block.margin is not None else 1.5 * tube_radius(seed)
    lower, upper = path_bounds(seed, margin)
    return integrate_positive_path(reference, phi, lower, upper, block.mesh, block.s_max, block.steps)


def mesh_points(path: PerturbationPath, size: int = 15) -> np.ndarray:
    axes = [np.linspace(lo, hi, size) for lo, hi in zip(path.lower, path.upper)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
