from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="HSLAG_", extra="ignore")

    app_name: str = "hslag-toolkit"
    tool_version: str = "0.3.0"
    log_level: str = Field("INFO", description="Root logging level")
    threads: int = Field(1, ge=1, description="Worker threads for independent evaluations")
    database_url: str = Field("sqlite:///hslag_runs.db", description="Run ledger database")
    output_root: Path = Field(Path("runs"), description="Default directory for reports")

    lagrangian_tol: float = 1e-8
    residual_tol: float = 1e-8
    hslag_tol: float = 1e-6
    grad_tol: float = 1e-7
    max_iter: int = 25
    fd_step: float = 1e-3
    orbit_fd_step: float = 1e-3
    flow_steps: int = 32
    deform_steps: int = 8
    tube_radius_cap: float = 0.5
    condition_max: float = 1e12
    drift_tol: float = 1e-3


settings = Settings()
