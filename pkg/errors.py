from typing import Any

from utils.export import plain


class HslagError(Exception):
    """Base error carrying a stable code and a human readable detail."""

    exit_code = 1

    def __init__(self, detail: str, **context: Any):
        super().__init__(detail)
        self.detail = detail
        self.context = context

    @property
    def code(self) -> str:
        return type(self).__name__

    def to_dict(self) -> dict:
        return {"code": self.code, "detail": self.detail, "context": plain(self.context)}


class PointOutsideChart(HslagError):
    """Evaluation point lies outside every chart of the atlas."""


class FlowLeftAtlas(HslagError):
    """A Hamiltonian flow trajectory left the chart domain."""


class UnsupportedBackend(HslagError):
    """The operation is not available for this backend."""


class NonIntegrableBackend(HslagError):
    """The operation requires an integrable (Kähler) structure."""


class NotCompatible(HslagError):
    """The almost complex structure is not ω-compatible."""


class NonCompact(HslagError):
    """The polytope is unbounded or has empty interior."""


class NotDelzant(HslagError):
    """The polytope fails the Delzant condition."""


class BoundaryPoint(HslagError):
    """The point is not in the open interior of the moment polytope."""


class ZeroVector(HslagError):
    """The homogeneous coordinate vector vanishes."""


class DegenerateOrbit(HslagError):
    """The subtorus orbit through the point is not free."""


class DegenerateInducedMetric(HslagError):
    """The induced metric is not positive definite."""


class TubeTooSmall(HslagError):
    """The normal displacement exceeds the admissible tubular neighbourhood."""


class QuadratureUnderResolved(HslagError):
    """The grid cannot resolve the requested Fourier modes."""


class EigenSolverFailure(HslagError):
    """The generalized symmetric eigensolver failed."""


class SolverDiverged(HslagError):
    """An iterative linear solver did not converge."""


class FamilyOverlap(HslagError):
    """Two members of a Lagrangian family intersect."""


class ObstructionRankLoss(HslagError):
    """Restricted obstruction potentials lost rank."""


class IllConditionedBox(HslagError):
    """The stability operator is too ill-conditioned off its kernel."""


class NewtonDiverged(HslagError):
    """The relative Newton iteration did not converge."""


class DescentStalled(HslagError):
    """Orbit descent stopped before the gradient tolerance was met."""


class DegenerateMinimum(HslagError):
    """The orbit minimum has a degenerate Hessian."""


class ConstraintDriftExceeded(HslagError):
    """The integrated structure drifted off the compatible set."""


class ContinuationStopped(HslagError):
    """Continuation of orbit minima stopped early."""


class PreconditionViolation(HslagError):
    """An input does not satisfy a documented precondition."""


class ConfigInvalid(HslagError):
    """The experiment configuration could not be parsed or validated."""


class TaskFailed(HslagError):
    """A task failed for an unexpected reason."""


class DegenerateMetric(HslagError):
    """The ambient metric is numerically singular at the evaluation point."""


class NonSimpleVertex(NotDelzant):
    """More than n facets meet at a vertex."""


class NonUnimodularVertex(NotDelzant):
    """The facet normals at a vertex do not form a lattice basis."""


class NonTransverseSubgroup(HslagError):
    """The one-parameter subgroup preserves the Lagrangian."""
