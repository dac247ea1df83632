"""Request and response models for the HTTP layer.

These mirror the dict shapes produced by `sessions.Session`; the HTTP
layer validates inbound JSON with them and lets FastAPI serialize the
session dicts directly on the way out.
"""

from __future__ import annotations

import math

from pydantic import BaseModel, ConfigDict, Field, field_validator


class SessionCreate(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: str
    params: dict[str, float] | None = None
    seed: int | None = Field(default=None, ge=0)
    lease_seconds: float = Field(default=60.0, gt=0.0, le=3600.0)
    verify_fraction: float = Field(default=0.1, ge=0.0, le=1.0)
    strict_digest: bool = True


class ParamsPatch(BaseModel):
    """Partial update of evolution parameters; omitted fields keep their value."""

    model_config = ConfigDict(extra="forbid")

    mutation_sigma_scale: float | None = None
    per_gene_mutation_prob: float | None = None
    eval_duration: float | None = None
    settle_duration: float | None = None

    def changes(self) -> dict[str, float]:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class ResultIn(BaseModel):
    model_config = ConfigDict(extra="forbid")

    task_id: str
    worker_id: str
    fitness: float
    log_digest: str = ""
    diverged: bool = False

    @field_validator("fitness")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("fitness must be finite")
        return value


class GenomeOut(BaseModel):
    kind: str
    genes: list[float]


class SpecOut(BaseModel):
    kind: str
    genome_length: int
    n_joints: int


class ParamsOut(BaseModel):
    mutation_sigma_scale: float
    per_gene_mutation_prob: float
    eval_duration: float
    settle_duration: float


class TaskOut(BaseModel):
    task_id: str
    session_id: str
    genome: GenomeOut
    spec: SpecOut
    params: ParamsOut


class RecordOut(BaseModel):
    eval_index: int
    kind: str
    genes: list[float]
    fitness: float
    accepted: bool
    rng_seed: int
    diverged: bool
    log_digest: str
    verified: bool
    worker_id: str


class ResultOut(BaseModel):
    task_id: str
    accepted: bool
    verified: bool
    rejected_reason: str | None
    eval_index: int | None


class SessionInfo(BaseModel):
    session_id: str
    kind: str
    seed: int
    params: ParamsOut
    eval_count: int
    best: RecordOut | None
    parent_fitness: float | None
    parent_version: int
    open_tasks: int
    lease_seconds: float
    verify_fraction: float
    closed: bool
