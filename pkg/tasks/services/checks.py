import logging

import numpy as np

from config import settings
from errors import ConfigInvalid
from geometry.lagrangian import geodesic_curvature, hslag_residual, variation_check_first
from geometry.kahler_core import killing_potentials
from geometry.toric import (
    delzant_subtorus,
    reduction_volume_factor,
    require_delzant,
    validate_delzant,
)
from schemas import ExperimentConfig, LagrangianKind
from tasks.builders import load_polytope
from tasks.services.common import TaskOutcome, curve_rows, prepare

logger = logging.getLogger(__name__)


def run_validate(config: ExperimentConfig) -> TaskOutcome:
    results, verdict = {}, True
    if config.manifold.backend == "toric":
        report = validate_delzant(load_polytope(config.manifold))
        results["delzant"] = report.to_dict()
        verdict = report.delzant
        if not verdict:
            return TaskOutcome(False, results)
    if config.lagrangian is not None:
        setup = prepare(config)
        defect = setup.immersion.lagrangian_defect()
        results["lagrangian_defect"] = defect
        verdict &= defect < settings.lagrangian_tol
    return TaskOutcome(verdict, results)


def run_hslag_check(config: ExperimentConfig) -> TaskOutcome:
    setup = prepare(config)
    immersion = setup.immersion
    immersion.check_lagrangian()
    evaluated = immersion.on(setup.structure)
    _, report = hslag_residual(evaluated)
    results = {"residual": report.to_dict(), "structure": setup.structure.kind}
    tables = {}
    if immersion.n == 1:
        kappa = geodesic_curvature(evaluated)
        results["curvature"] = {"mean": float(kappa.mean()), "spread": float(np.ptp(kappa))}
        tables["curve"] = curve_rows(evaluated)
    # first-variation cross-check along a non-trivial Killing potential when one exists
    for potential in killing_potentials(setup.reference):
        if np.ptp(potential.value(immersion.values)) > 1e-8:
            results["first_variation"] = variation_check_first(evaluated, potential).to_dict()
            results["first_variation"]["potential"] = potential.label
            break
    verdict = report.sup < settings.hslag_tol
    logger.info("hslag-check: sup residual %.3e", report.sup)
    return TaskOutcome(verdict, results, tables, {"immersion": immersion})


def _interior_samples(polytope, count: int, rng: np.random.Generator) -> np.ndarray:
    vertices = np.array(require_delzant(polytope).vertices)
    centre = vertices.mean(axis=0)
    weights = rng.dirichlet(np.ones(len(vertices)), size=count)
    return centre + 0.9 * (weights @ vertices - centre)


def run_reduction(config: ExperimentConfig) -> TaskOutcome:
    if config.manifold.backend != "toric":
        raise ConfigInvalid("reduction needs a toric backend", key="manifold.backend")
    polytope = load_polytope(config.manifold)
    iota = delzant_subtorus(polytope)
    rng = np.random.default_rng(config.reduction.seed)
    points = _interior_samples(polytope, config.reduction.samples, rng)
    radii = np.sqrt(2.0 * polytope.affine(points))
    phases = rng.uniform(0.0, 2 * np.pi, size=radii.shape)
    samples = radii * np.exp(1j * phases)
    fiber = None
    if config.lagrangian is not None and config.lagrangian.kind == LagrangianKind.moment_fiber:
        fiber = prepare(config).immersion
    report = reduction_volume_factor(iota, samples, fiber)
    verdict = report.on_level_set and (report.lift is None or report.lift.relative_error < 1e-6)
    tables = {
        "orbits": [
            {"sample": i, "point": p.tolist(), "radii": r.tolist()} for i, (p, r) in enumerate(zip(points, radii))
        ]
    }
    return TaskOutcome(verdict, {"subtorus": iota.tolist(), **report.to_dict()}, tables)
