import logging

from config import settings
from errors import ConfigInvalid
from geometry.deform import path_volume_derivative, positivity_experiment
from geometry.kahler_core import killing_potentials, structure_distance
from geometry.lagrangian import hslag_residual, volume
from schemas import ExperimentConfig
from tasks.services.common import TaskOutcome, mesh_points, positive_path, prepare
from utils.fields import LinearCombination

logger = logging.getLogger(__name__)


def run_perturb_path(config: ExperimentConfig) -> TaskOutcome:
    setup = prepare(config)
    seed = setup.immersion
    path = positive_path(config, setup.reference, seed)
    rows = []
    for s, drift in zip(path.s_grid, path.drift):
        evaluated = seed.on(path.structure(s))
        _, report = hslag_residual(evaluated)
        rows.append({"s": float(s), "volume": volume(evaluated), "residual_sup": report.sup, "drift": float(drift)})
    ds = float(path.s_grid[1])
    results = {
        "volume_derivative_fd": (rows[1]["volume"] - rows[0]["volume"]) / ds,
        "max_drift": float(path.drift.max()),
    }
    if setup.reference.kahler:
        results["volume_derivative"] = path_volume_derivative(setup.reference, path.phi, seed)
    mesh = mesh_points(path)
    end = path.structure(path.s_grid[-1])
    results["perturbation_size"] = structure_distance(end.acs(mesh), setup.reference.acs(mesh), setup.reference.metric(mesh))
    verdict = all(row["residual_sup"] < settings.hslag_tol for row in rows)
    return TaskOutcome(verdict, results, {"path": rows})


def run_positivity(config: ExperimentConfig) -> TaskOutcome:
    if config.positivity is None:
        raise ConfigInvalid("missing key 'positivity'", key="positivity")
    setup = prepare(config)
    seed = setup.immersion
    potentials = killing_potentials(setup.reference)
    path = positive_path(config, setup.reference, seed)
    block = config.positivity
    if max(block.s_list) > path.s_grid[-1] + 1e-12:
        raise ConfigInvalid("positivity.s_list exceeds path.s_max", key="positivity.s_list")
    tables, reports = {}, []
    for i, coefficients in enumerate(block.subgroups):
        if len(coefficients) != len(potentials):
            raise ConfigInvalid(
                f"subgroup {i} needs {len(potentials)} coefficients", key=f"positivity.subgroups.{i}"
            )
        subgroup = LinearCombination(potentials, coefficients)
        report = positivity_experiment(seed, block.s_list, subgroup, path, block.dt)
        reports.append(report.to_dict())
        tables[f"positivity_{i}"] = [
            {"s": s, "second_derivative": d2} for s, d2 in zip(report.s_values, report.second_derivatives)
        ]
    verdict = all(r["positive"] for r in reports)
    logger.info("positivity: %d subgroups, verdict %s", len(reports), verdict)
    return TaskOutcome(verdict, {"subgroups": reports, "potentials": [p.label for p in potentials]}, tables)
