import logging
from typing import Callable

from schemas import ExperimentConfig, TaskName
from tasks.services.checks import run_hslag_check, run_reduction, run_validate
from tasks.services.common import TaskOutcome
from tasks.services.deformation import run_deform, run_fibrate, run_jump
from tasks.services.perturbation import run_perturb_path, run_positivity
from tasks.services.spectral import run_rigidity, run_spectrum

logger = logging.getLogger(__name__)

TASKS: dict[TaskName, Callable[[ExperimentConfig], TaskOutcome]] = {
    TaskName.validate: run_validate,
    TaskName.hslag_check: run_hslag_check,
    TaskName.spectrum: run_spectrum,
    TaskName.rigidity: run_rigidity,
    TaskName.deform: run_deform,
    TaskName.fibrate: run_fibrate,
    TaskName.perturb_path: run_perturb_path,
    TaskName.positivity: run_positivity,
    TaskName.jump: run_jump,
    TaskName.reduction: run_reduction,
}


def dispatch(config: ExperimentConfig) -> TaskOutcome:
    handler = TASKS[config.task]
    logger.info("task %s started", config.task.value)
    outcome = handler(config)
    logger.info("task %s finished: verdict %s", config.task.value, outcome.verdict)
    return outcome
