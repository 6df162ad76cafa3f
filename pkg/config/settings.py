from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, Field
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    YamlConfigSettingsSource,
)

CONFIG_PATH = Path(__file__).resolve().parent.parent / "config.yaml"


class SolverDefaults(BaseModel):
    """Defaults for the projected-gradient ERM/EV solver."""

    max_iterations: int = 2000
    gradient_tolerance: float = 1e-8
    objective_tolerance: float = 1e-14
    armijo_initial_step: float = 1.0
    armijo_backtrack: float = 0.5
    armijo_sufficient_decrease: float = 1e-4
    mu_schedule: List[float] = [1e-1, 1e-2, 1e-3, 1e-4]
    multistart_count: int = 8
    multistart_high: float = 2.0
    # Tail stages and tolerances that finish a solve once the main schedule is done
    exact_min_mu_tail: List[float] = [1e-8, 1e-12, 1e-16]
    refine_gradient_tolerance: float = 1e-16
    refine_objective_tolerance: float = 1e-32


class CheckerDefaults(BaseModel):
    """Defaults for R0 / stochastic R0 checks and the degenerate-set scan."""

    zero_tolerance: float = 1e-10
    decision_tolerance: float = 1e-6
    support_tolerance: float = 1e-9
    condition_tolerance: float = 1e-10
    xi_tolerance: float = 1e-8
    grid_resolution: Dict[int, int] = {1: 20, 2: 20, 3: 20, 4: 10, 5: 8}
    grid_resolution_fallback: int = 4
    random_starts: int = 200
    polish_count: int = 16
    polish_iterations: int = 200
    polish_mu_schedule: List[float] = [1e-4, 1e-8, 1e-12]

    def resolution_for(self, dim: int) -> int:
        return self.grid_resolution.get(dim, self.grid_resolution_fallback)


class ProbeDefaults(BaseModel):
    """Defaults for ray probes, coercivity scans and boundedness probes."""

    lambda_exponent_min: float = 0.0
    lambda_exponent_max: float = 4.0
    lambda_exponent_step: float = 0.5
    overflow_clamp: float = 1e300
    random_directions: int = 100
    direction_resolution: Dict[int, int] = {1: 8, 2: 8, 3: 8, 4: 8, 5: 5}
    direction_resolution_fallback: int = 3
    vanishing_tolerance: float = 1e-6

    def resolution_for(self, dim: int) -> int:
        return self.direction_resolution.get(dim, self.direction_resolution_fallback)


class RuntimeDefaults(BaseModel):
    seed: int = 0
    max_workers: int = 1
    progress: bool = False


class Settings(BaseSettings):
    """Central settings: config.yaml defaults, overridden by STCP_* environment variables."""

    solver: SolverDefaults = SolverDefaults()
    checker: CheckerDefaults = CheckerDefaults()
    probe: ProbeDefaults = ProbeDefaults()
    runtime: RuntimeDefaults = RuntimeDefaults()

    # Thread-count override, the only environment knob the CLI documents
    threads: Optional[int] = Field(default=None, alias="STCP_THREADS")

    model_config = SettingsConfigDict(
        # Load .env first, then .env.local overrides (last file wins in pydantic-settings)
        env_file=[".env", ".env.local"],
        env_prefix="STCP_",
        env_nested_delimiter="__",
        yaml_file=CONFIG_PATH,
        case_sensitive=False,
        populate_by_name=True,
        extra="ignore",
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        return (
            init_settings,
            env_settings,
            dotenv_settings,
            YamlConfigSettingsSource(settings_cls),
            file_secret_settings,
        )

    @property
    def max_workers(self) -> int:
        return max(1, self.threads or self.runtime.max_workers)


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return a cached Settings instance."""
    return Settings()


settings = get_settings()
