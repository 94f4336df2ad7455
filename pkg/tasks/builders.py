"""Turn validated experiment blocks into backends, grids and immersions."""
import json

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from contextlib import contextmanager
from pathlib import Path
from typing import Callable

import numpy as np

from config import settings
from errors import ConfigInvalid
from geometry.kahler_core import (
    ChartedManifold,
    FlatTorus,
    ProjectiveSpace,
    SurfaceOfRevolution,
    anisotropic_perturbation,
    tilted_ellipsoid,
)
from geometry.deform import axis_rotation
from geometry.lagrangian import (
    TorusImmersion,
    fourier_curve,
    harmonic_graph,
    harmonic_one_forms,
    linear_torus,
    parallel_circle,
    product_torus,
)
from geometry.toric import LabelledPolytope, ToricManifold, cpn_fiber, moment_fiber
from schemas import ExperimentConfig, LagrangianKind, ManifoldBlock, PolytopeBlock
from utils.spectral import TorusGrid


def read_structured(path: Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read {path}: {exc.strerror}", path=str(path)) from exc
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigInvalid(f"cannot parse {path}: {exc}", path=str(path)) from exc


def load_polytope(block: ManifoldBlock) -> LabelledPolytope:
    data = block.polytope
    if data is None:
        data = PolytopeBlock.model_validate(read_structured(Path(block.polytope_file)))
    normals = [f.normal for f in data.facets]
    if len({len(v) for v in normals}) != 1:
        raise ConfigInvalid("facet normals differ in length", key="manifold.polytope.facets")
    return LabelledPolytope(np.array(normals), np.array([f.offset for f in data.facets]), data.lattice)


def build_reference(block: ManifoldBlock) -> ChartedManifold:
    try:
        if block.backend == "flat":
            return FlatTorus(block.n, block.periods)
        if block.backend == "projective":
            return ProjectiveSpace(block.n)
        if block.backend == "surface":
            return SurfaceOfRevolution(tuple(block.semi_axes))
    except ValueError as exc:
        raise ConfigInvalid(str(exc), key="manifold") from exc
    return ToricManifold(load_polytope(block))


def build_structure(block: ManifoldBlock, reference: ChartedManifold) -> ChartedManifold:
    pert = block.perturbation
    if pert is None:
        return reference
    d = reference.real_dimension
    if pert.kind == "anisotropic":
        direction = pert.direction or [1.0] + [0.0] * (d - 1)
        wavevector = pert.wavevector or [1.0] + [0.0] * (d - 1)
        if len(direction) != d or len(wavevector) != d:
            raise ConfigInvalid("direction and wavevector need one entry per real coordinate", key="manifold.perturbation")
        return anisotropic_perturbation(reference, pert.epsilon, direction, wavevector)
    axes = pert.axes or [1.0 - pert.epsilon, 1.0, 1.0 + pert.epsilon]
    return tilted_ellipsoid(reference, axes, axis_rotation(pert.axis, pert.tilt))


def default_nodes(n: int) -> int:
    return 32 if n <= 2 else 16


def build_grid(config: ExperimentConfig, manifold: ChartedManifold) -> TorusGrid:
    nodes = config.discretization.N
    return TorusGrid(manifold.n, default_nodes(manifold.n) if nodes is None else nodes)


def _require(value, key: str):
    if value is None:
        raise ConfigInvalid(f"missing key '{key}'", key=key)
    return value


def build_immersion(config: ExperimentConfig, manifold: ChartedManifold, grid: TorusGrid, shift: float = 0.0) -> TorusImmersion:
    """The configured torus; `shift` moves it along its family parameter."""
    block = _require(config.lagrangian, "lagrangian")
    kind = block.kind
    if kind == LagrangianKind.moment_fiber:
        point = np.asarray(block.point, dtype=float)
        direction = config.deformation.direction
        if shift:
            point = point + shift * (np.asarray(direction, dtype=float) if direction else np.ones_like(point) / point.size)
        if isinstance(manifold, ToricManifold):
            return moment_fiber(manifold, point, grid)
        if isinstance(manifold, ProjectiveSpace):
            return cpn_fiber(manifold, point, grid)
        raise ConfigInvalid("moment fibers need a toric or projective backend", key="lagrangian.kind")
    if kind == LagrangianKind.linear:
        offsets = np.asarray(_require(block.offsets, "lagrangian.offsets"), dtype=float) + shift
        return linear_torus(manifold, offsets, grid)
    if kind == LagrangianKind.product:
        return product_torus(manifold, np.asarray(_require(block.radii, "lagrangian.radii")) + shift, grid)
    if kind == LagrangianKind.parallel:
        return parallel_circle(manifold, _require(block.level, "lagrangian.level") + shift, grid)
    modes = [(m.k, m.a, m.b) for m in block.modes]
    return fourier_curve(manifold, grid, _require(block.center, "lagrangian.center"), modes)


def seed_family(config: ExperimentConfig, manifold: ChartedManifold, grid: TorusGrid) -> Callable[[float], TorusImmersion]:
    """Family through the configured torus: harmonic graphs over linear tori, parameter shifts otherwise."""
    if config.lagrangian is not None and config.lagrangian.kind == LagrangianKind.linear:
        seed = build_immersion(config, manifold, grid)
        forms = harmonic_one_forms(seed)
        direction = config.deformation.direction
        weights = np.ones(seed.n) if direction is None else np.asarray(direction, dtype=float)
        if weights.shape != (seed.n,):
            raise ConfigInvalid(f"deformation.direction needs {seed.n} entries", key="deformation.direction")
        return lambda t: harmonic_graph(seed, t * weights, forms, parameter=[t])
    return lambda t: build_immersion(config, manifold, grid, shift=t)


@contextmanager
def overrides(config: ExperimentConfig):
    """Apply per-run tolerances and fd_step to the process settings."""
    values = {k: v for k, v in config.tolerances.model_dump().items() if v is not None}
    if config.discretization.fd_step is not None:
        values["fd_step"] = config.discretization.fd_step
    previous = {k: getattr(settings, k) for k in values}
    for k, v in values.items():
        setattr(settings, k, v)
    try:
        yield settings
    finally:
        for k, v in previous.items():
            setattr(settings, k, v)
