from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

SchemeTag = Literal["R1", "R2", "R3", "N1", "N2", "N3"]
StrategyTag = Literal["S1", "S2", "S3"]
IntegratorTag = Literal["bpt", "ppm", "vcm", "gmis"]

ALL_SCHEMES: tuple[SchemeTag, ...] = ("R1", "R2", "R3", "N1", "N2", "N3")


class BaseModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class EstimatorReport(BaseModelConfig):
    estimate: float
    trials: int = Field(ge=1)
    sample_mean: float
    sample_variance: float = Field(ge=0.0)
    standard_error: float = Field(ge=0.0)


class DensitySpec(BaseModelConfig):
    """One density of a lab config: a family tag and its parameters."""

    family: Literal["normal", "uniform", "mixture"]
    params: list[float]

    @model_validator(mode="after")
    def _check_arity(self) -> DensitySpec:
        n = len(self.params)
        if self.family in ("normal", "uniform") and n != 2:
            raise ValueError(f"{self.family} takes 2 parameters, got {n}")
        if self.family == "mixture" and (n == 0 or n % 3):
            raise ValueError("mixture takes triples W MU SIGMA")
        return self


class LabConfig(BaseModelConfig):
    target: DensitySpec
    proposals: list[DensitySpec] = Field(min_length=1)
    domain: tuple[float, float] = (-10.0, 14.0)
    schemes: list[SchemeTag] = Field(default_factory=lambda: list(ALL_SCHEMES))
    trials: int = Field(default=100_000, ge=1_000)
    samples: Optional[int] = Field(default=None, ge=1)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check(self) -> LabConfig:
        lo, hi = self.domain
        if not lo < hi:
            raise ValueError(f"empty domain [{lo}, {hi}]")
        if any(p.family == "mixture" for p in self.proposals):
            raise ValueError("proposals must be normal or uniform")
        n = len(self.proposals)
        if self.samples is not None and self.samples % n:
            raise ValueError(f"samples ({self.samples}) must be a multiple of N = {n}")
        return self

    @property
    def samples_per_run(self) -> int:
        return self.samples if self.samples is not None else len(self.proposals)


class LabRow(BaseModelConfig):
    scheme: SchemeTag
    analytic_var: float
    empirical_var: float
    empirical_mean: float
    stderr: float
    trials: int
    seed: int
    var_stderr: float = Field(default=0.0, exclude=True)

    @property
    def variance_gap(self) -> float:
        """|empirical - analytic| in standard errors of the sample variance."""

        gap = abs(self.empirical_var - self.analytic_var)
        if self.var_stderr > 0:
            return gap / self.var_stderr
        return 0.0 if gap == 0 else float("inf")


class OrderingVerdict(BaseModelConfig):
    relation: str
    passed: bool
    analytic_margin: float
    empirical_margin: float
    gated: bool = True


class RowCheck(BaseModelConfig):
    """One scheme's estimate measured against what it should converge to."""

    scheme: SchemeTag
    quantity: Literal["variance", "mean"]
    gap_sigmas: float
    passed: bool


class LabReport(BaseModelConfig):
    integral: float
    rows: list[LabRow]
    outer_chain: list[OrderingVerdict]
    inner_chain: list[OrderingVerdict]
    row_checks: list[RowCheck] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        orderings = all(v.passed for v in self.outer_chain + self.inner_chain if v.gated)
        return orderings and all(c.passed for c in self.row_checks)

    def row(self, scheme: SchemeTag) -> LabRow:
        for r in self.rows:
            if r.scheme == scheme:
                return r
        raise KeyError(scheme)


class UniformityReport(BaseModelConfig):
    strategy: StrategyTag
    n: int
    cycles: int
    frequencies: list[float]
    slot_frequencies: list[list[float]]
    chi_square: float
    p_value: float


class IntegratorConfig(BaseModelConfig):
    integrator: IntegratorTag = "vcm"
    max_samples: int = Field(default=20, ge=1)
    branch: int = Field(default=4, ge=1)
    max_depth: int = Field(default=12, ge=1)
    radius_fraction: float = Field(default=0.003, gt=0.0)
    alpha: float = Field(default=0.75, gt=0.5, lt=1.0)
    rr_depth: int = Field(default=5, ge=1)
    seed: int = Field(default=0, ge=0)
    threads: int = Field(default=1, ge=1)


class ConvergenceRow(BaseModelConfig):
    iteration: int
    seconds: float
    rmse: Optional[float] = None


class RenderStats(BaseModelConfig):
    integrator: IntegratorTag
    iterations: int = 0
    light_paths: int = 0
    rejected_samples: int = 0
    dropped_degenerate: int = 0
    average_path_length: float = 0.0
    average_branch_factor: float = 0.0
    max_charged_samples: int = 0
    final_radius: float = 0.0
