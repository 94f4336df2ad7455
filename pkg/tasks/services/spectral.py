import logging

from geometry.jacobi import (
    assemble_box,
    box_fd,
    rigidity_check,
    selfadjoint_diagnostics,
    spectrum,
    stability_check,
)
from schemas import ExperimentConfig
from tasks.services.common import TaskOutcome, prepare

logger = logging.getLogger(__name__)


def _operator(config: ExperimentConfig, immersion):
    if config.discretization.fd_box or not immersion.manifold.kahler:
        return box_fd(immersion, config.discretization.m)
    return assemble_box(immersion, config.discretization.m)


def _spectrum_rows(report) -> list[dict]:
    return [{"index": i, "eigenvalue": float(v)} for i, v in enumerate(report.eigenvalues)]


def run_spectrum(config: ExperimentConfig) -> TaskOutcome:
    setup = prepare(config)
    setup.immersion.check_lagrangian()
    op = _operator(config, setup.immersion.on(setup.structure))
    report = spectrum(op)
    stability = stability_check(report)
    results = {"source": op.source.value, "m": op.m, **report.to_dict(), "stable": stability.stable, "margin": stability.margin}
    logger.info("spectrum: kernel dimension %d, margin %.4e", report.kernel_dimension, stability.margin)
    return TaskOutcome(stability.stable, results, {"spectrum": _spectrum_rows(report)})


def run_rigidity(config: ExperimentConfig) -> TaskOutcome:
    setup = prepare(config)
    immersion = setup.immersion
    immersion.check_lagrangian()
    op = assemble_box(immersion, config.discretization.m)
    report = spectrum(op)
    rigidity = rigidity_check(immersion, report, op)
    stability = stability_check(report)
    diagnostics = selfadjoint_diagnostics(immersion, op)
    results = {
        "spectrum": report.to_dict(),
        "rigidity": rigidity.to_dict(),
        "stable": stability.stable,
        "margin": stability.margin,
        "selfadjoint": diagnostics.to_dict(),
        "potentials": [p.label for p in rigidity.potentials],
    }
    verdict = rigidity.rigid and stability.stable
    return TaskOutcome(verdict, results, {"spectrum": _spectrum_rows(report)})
