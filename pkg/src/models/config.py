"""Validated run configuration, loaded from the YAML sections problem/solver/output/sweep."""
from __future__ import annotations

from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.settings import settings
from src.models.spaces import GridSpec

ProblemId = Literal["P1", "P2", "P3", "P4", "oscillator"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProblemConfig(_Section):
    id: ProblemId = "oscillator"

    # grid (ignored by the oscillator)
    dimension: Literal[1, 2] = 1
    extent: Union[float, List[float]] = 1.0
    nodes: Union[int, List[int]] = 32
    embedding_order: Literal["standard", "chain"] = "standard"

    # exponents and signs
    p: float = 4.0
    q: float = 2.0
    r: float = 2.0
    s_u: Literal[-1, 1] = 1
    s_v: Literal[-1, 1] = 1

    # coefficients
    mu: float = 1.0
    nu: float = 1.0
    rho: float = 1.0
    double_well: bool = True
    mass_damping: float = 0.0
    velocity_perturbation: bool = True

    # P3 b-law
    b_law: Literal["linear", "cubic_truncated", "zero"] = "linear"
    b_coefficient: float = 1.0
    truncation_radius: float = 1.0

    # P4 stress
    stress: Literal["linear", "double_well"] = "linear"
    route: Literal["perturbation", "energy"] = "perturbation"

    # time-dependent test energy E_t = (1 + a sin(omega t)) E
    modulation_amplitude: float = 0.0
    modulation_frequency: float = 1.0

    # oscillator
    model_dim: int = 1
    stiffness: Optional[List[List[float]]] = None
    damping: Optional[List[List[float]]] = None

    forcing: str = "0"
    u0: Optional[Union[str, float, List[float]]] = None
    v0: Optional[Union[str, float, List[float]]] = None

    # growth constants for the audits and the step bound
    beta: float = 1.0
    c: float = 0.25
    c_tilde: float = 0.25
    growth_nu: float = 0.5
    C1: Optional[float] = None
    C_hat: Optional[float] = None
    sigma: float = 1.0

    @field_validator("p")
    @classmethod
    def p_at_least_two(cls, v):
        if v < 2.0:
            raise ValueError("must be at least 2")
        return v

    @field_validator("q", "r")
    @classmethod
    def exponent_above_one(cls, v):
        if v <= 1.0:
            raise ValueError("must exceed 1")
        return v

    @field_validator("mu", "nu", "rho")
    @classmethod
    def coefficient_positive(cls, v):
        if v <= 0.0:
            raise ValueError("must be positive")
        return v

    @field_validator("mass_damping")
    @classmethod
    def non_negative(cls, v):
        if v < 0.0:
            raise ValueError("must be non-negative")
        return v

    @field_validator("modulation_amplitude")
    @classmethod
    def amplitude_below_one(cls, v):
        if not 0.0 <= v < 1.0:
            raise ValueError("must lie in [0, 1)")
        return v

    @field_validator("model_dim")
    @classmethod
    def model_dim_positive(cls, v):
        if v < 1:
            raise ValueError("must be at least 1")
        return v

    @model_validator(mode="after")
    def constants_admissible(self):
        if self.c < 0 or self.c_tilde < 0 or self.c + self.c_tilde >= 1.0:
            raise ValueError("growth constants need c, c_tilde >= 0 and c + c_tilde < 1")
        return self

    def grid(self) -> GridSpec:
        d = self.dimension
        extent = self.extent if isinstance(self.extent, list) else [self.extent] * d
        nodes = self.nodes if isinstance(self.nodes, list) else [self.nodes] * d
        return GridSpec(dimension=d, extent=tuple(extent), nodes=tuple(nodes))


class SolverConfig(_Section):
    tau: float
    T: float
    inner_tol: float = Field(default_factory=lambda: settings.inner_tol)
    inner_max_iters: int = Field(default_factory=lambda: settings.inner_max_iters)
    tau_star_guard: bool = True

    @field_validator("tau", "T", "inner_tol")
    @classmethod
    def positive(cls, v):
        if not v > 0.0:
            raise ValueError("must be positive")
        return v

    @field_validator("inner_max_iters")
    @classmethod
    def iters_positive(cls, v):
        if v < 1:
            raise ValueError("must be at least 1")
        return v

    @model_validator(mode="after")
    def tau_within_horizon(self):
        if self.tau > self.T:
            raise ValueError("tau must not exceed T")
        return self


class OutputConfig(_Section):
    directory: str = "out"
    edi: bool = True
    apriori: bool = True
    audit: bool = True
    shift_gap_h: List[float] = Field(default_factory=list)
    seed: int = 0
    audit_samples: int = 200

    @field_validator("shift_gap_h")
    @classmethod
    def h_positive(cls, v):
        if any(h <= 0 for h in v):
            raise ValueError("shift lengths must be positive")
        return v

    @field_validator("audit_samples")
    @classmethod
    def samples_positive(cls, v):
        if v < 1:
            raise ValueError("must be at least 1")
        return v


class SweepConfig(_Section):
    taus: List[float]
    reference_tau: Optional[float] = None
    exact: bool = True

    @field_validator("taus")
    @classmethod
    def strictly_decreasing(cls, v):
        if not v:
            raise ValueError("needs at least one step size")
        if any(t <= 0 for t in v):
            raise ValueError("step sizes must be positive")
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("must be strictly decreasing")
        return v

    @model_validator(mode="after")
    def reference_fine_enough(self):
        if self.reference_tau is not None and not 0 < self.reference_tau < min(self.taus) / 4.0:
            raise ValueError("reference_tau must be positive and below min(taus)/4")
        return self


class RunConfig(_Section):
    problem: ProblemConfig = Field(default_factory=ProblemConfig)
    solver: SolverConfig
    output: OutputConfig = Field(default_factory=OutputConfig)
    sweep: Optional[SweepConfig] = None
