import logging

from config import settings
from geometry.deform import build_problem, continuation, jump_experiment, minimize_over_orbit, solve_relative_hslag
from geometry.kahler_core import ChartedManifold
from geometry.lagrangian import TorusImmersion
from schemas import ExperimentConfig
from tasks.builders import seed_family
from tasks.services.common import TaskOutcome, curve_rows, positive_path, prepare

logger = logging.getLogger(__name__)


def _structure(config: ExperimentConfig, reference: ChartedManifold, structure: ChartedManifold, seed: TorusImmersion):
    if config.deformation.positive_path:
        return positive_path(config, reference, seed).structure(config.deformation.s)
    return structure


def run_deform(config: ExperimentConfig) -> TaskOutcome:
    setup = prepare(config)
    seed = setup.immersion
    structure = _structure(config, setup.reference, setup.structure, seed)
    problem = build_problem(structure, seed, config.discretization.m)
    solution = solve_relative_hslag(problem)
    results = {"structure": structure.kind, "relative": solution.to_dict()}
    tables = {"newton": [{"iteration": i, "residual": r} for i, r in enumerate(solution.history)]}
    final = solution
    if config.deformation.minimize:
        minimum = minimize_over_orbit(problem)
        results["orbit_minimum"] = minimum.to_dict()
        final = minimum.solution
    if final.immersion.n == 1:
        tables["curve"] = curve_rows(final.immersion)
    verdict = final.residual_sup < settings.hslag_tol
    return TaskOutcome(verdict, results, tables, {"deformed": final.immersion})


def run_fibrate(config: ExperimentConfig) -> TaskOutcome:
    setup = prepare(config)
    seed = setup.immersion
    structure = _structure(config, setup.reference, setup.structure, seed)
    problem = build_problem(structure, seed, config.discretization.m, require_rigid=False)
    result = continuation(problem, seed_family(config, setup.reference, setup.grid), config.deformation.t_grid, config.deformation.step_constant)
    tables = {"fibration": result.rows}
    immersions = {}
    for t, member in result.members.items():
        name = f"fiber_t{t:+.4f}"
        immersions[name] = member.immersion
        if member.immersion.n == 1:
            tables[f"curve_t{t:+.4f}"] = curve_rows(member.immersion)
    verdict = result.reached[0] < 0.0 or result.reached[1] > 0.0
    return TaskOutcome(verdict, result.to_dict(), tables, immersions)


def run_jump(config: ExperimentConfig) -> TaskOutcome:
    setup = prepare(config, with_immersion=False)
    block = config.jump
    report = jump_experiment(setup.reference, setup.grid, block.epsilon, block.tilt, block.axis)
    tables = {"curve": curve_rows(report.minimum.immersion)}
    verdict = report.jumped
    logger.info("jump: |u*| = %.4f at perturbation size %.4f", report.param_norm, report.perturbation_size)
    return TaskOutcome(verdict, report.to_dict(), tables, {"minimizer": report.minimum.immersion})
