from datetime import datetime
from enum import Enum
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ===== Experiment config =====
class Facet(Strict):
    normal: list[float]
    offset: float


class PolytopeBlock(Strict):
    facets: list[Facet] = Field(..., min_length=1)
    lattice: list[list[float]] | None = Field(default=None, description="lattice basis; defaults to ℤⁿ")


class PerturbationBlock(Strict):
    kind: Literal["anisotropic", "tilted_ellipsoid"]
    epsilon: float = Field(0.01, description="size of the metric change")
    direction: list[float] | None = None
    wavevector: list[float] | None = None
    axes: list[float] | None = Field(default=None, description="ellipsoid semi-axes")
    axis: list[float] = Field(default_factory=lambda: [1.0, 1.0, 0.0])
    tilt: float = 0.0


class ManifoldBlock(Strict):
    backend: Literal["flat", "projective", "toric", "surface"]
    n: int = Field(1, ge=1, le=3)
    periods: list[float] | None = None
    semi_axes: list[float] = Field(default_factory=lambda: [1.0, 1.0, 1.0])
    polytope: PolytopeBlock | None = None
    polytope_file: str | None = Field(default=None, description="TOML/JSON file with facets")
    perturbation: PerturbationBlock | None = None

    @model_validator(mode="after")
    def check_polytope(self):
        if self.backend == "toric" and self.polytope is None and self.polytope_file is None:
            raise ValueError("toric backend needs 'polytope' or 'polytope_file'")
        return self


class FourierMode(Strict):
    k: int = Field(..., ge=1)
    a: list[float]
    b: list[float]


class LagrangianKind(str, Enum):
    moment_fiber = "moment_fiber"
    linear = "linear"
    product = "product"
    parallel = "parallel"
    fourier = "fourier"


class LagrangianBlock(Strict):
    kind: LagrangianKind
    point: list[float] | None = Field(default=None, description="moment point of a fiber")
    offsets: list[float] | None = None
    radii: list[float] | None = None
    level: float | None = None
    center: list[float] | None = None
    modes: list[FourierMode] = Field(default_factory=list)


class DiscretizationBlock(Strict):
    N: int | None = Field(default=None, ge=4, description="nodes per circle; 32 for n <= 2 and 16 for n = 3 when unset")
    m: int | None = Field(default=None, ge=1, description="Fourier truncation; N/2 - 1 when unset")
    fd_step: float | None = Field(default=None, gt=0)
    fd_box: bool = Field(False, description="use the volume-difference operator")


class ToleranceBlock(Strict):
    lagrangian_tol: float | None = None
    residual_tol: float | None = None
    hslag_tol: float | None = None
    grad_tol: float | None = None
    max_iter: int | None = Field(default=None, ge=1)


class DeformationBlock(Strict):
    minimize: bool = True
    t_grid: list[float] = Field(default_factory=lambda: [-0.05, -0.025, 0.025, 0.05])
    direction: list[float] | None = Field(default=None, description="moment-space direction of the family")
    step_constant: float = 10.0
    positive_path: bool = Field(False, description="use J_s from the quartic bump path as structure")
    s: float = Field(0.05, ge=0.0)


class PathBlock(Strict):
    s_max: float = Field(0.1, gt=0.0)
    steps: int = Field(10, ge=1)
    mesh: int = Field(41, ge=5)
    margin: float | None = Field(default=None, gt=0.0)


class PositivityBlock(Strict):
    s_list: list[float] = Field(default_factory=lambda: [0.0, 0.02, 0.05, 0.1])
    dt: float = Field(0.05, gt=0.0)
    subgroups: list[list[float]] = Field(..., min_length=1, description="coefficients on the Killing potentials")


class JumpBlock(Strict):
    epsilon: float = Field(0.015, gt=0.0)
    tilt: float = 0.6
    axis: list[float] = Field(default_factory=lambda: [1.0, 1.0, 0.0])


class ReductionBlock(Strict):
    samples: int = Field(16, ge=1)
    seed: int = 0


class OutputBlock(Strict):
    directory: str | None = None
    csv: bool = True
    snapshot: bool = False


class TaskName(str, Enum):
    validate = "validate"
    hslag_check = "hslag-check"
    spectrum = "spectrum"
    rigidity = "rigidity"
    deform = "deform"
    fibrate = "fibrate"
    perturb_path = "perturb-path"
    positivity = "positivity"
    jump = "jump"
    reduction = "reduction"


class ExperimentConfig(Strict):
    task: TaskName
    manifold: ManifoldBlock
    lagrangian: LagrangianBlock | None = None
    discretization: DiscretizationBlock = Field(default_factory=DiscretizationBlock)
    tolerances: ToleranceBlock = Field(default_factory=ToleranceBlock)
    deformation: DeformationBlock = Field(default_factory=DeformationBlock)
    path: PathBlock = Field(default_factory=PathBlock)
    positivity: PositivityBlock | None = None
    jump: JumpBlock = Field(default_factory=JumpBlock)
    reduction: ReductionBlock = Field(default_factory=ReductionBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)

    @field_validator("lagrangian")
    @classmethod
    def fiber_point_given(cls, v: LagrangianBlock | None):
        if v is not None and v.kind == LagrangianKind.moment_fiber and v.point is None:
            raise ValueError("moment_fiber needs 'point'")
        return v


# ===== Reports =====
class ErrorInfo(BaseModel):
    code: str
    detail: str
    context: dict[str, Any] = Field(default_factory=dict)


class RunReport(BaseModel):
    task: str
    config: dict[str, Any]
    config_hash: str
    tool_version: str
    started_at: datetime
    elapsed_seconds: float
    verdict: bool | None = None
    exit_status: int
    results: dict[str, Any] = Field(default_factory=dict)
    tables: dict[str, list[dict[str, Any]]] = Field(default_factory=dict)
    error: ErrorInfo | None = None


class RunRecordRead(BaseModel):
    id: int
    task: str
    config_hash: str
    report_hash: str | None = None
    exit_status: int
    error_code: str | None = None
    report_path: str | None = None
    created_at: datetime

    model_config = ConfigDict(from_attributes=True)
