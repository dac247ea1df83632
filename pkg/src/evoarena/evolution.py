"""A 1+1 evolution strategy over animat controller genomes.

One parent, one child per generation: the child is a per-gene Gaussian
mutation of the parent and replaces it when its fitness is at least as good.
Fitness is the planar distance the torso travels during a fixed evaluation
window, after a settle phase in which the joints hold their offset angles.
Every evaluation yields a trajectory log carrying enough metadata to re-run
and verify it.

All randomness flows through per-evaluation seeds derived from the master
seed, so a run is reproducible from (kind, params, seed, n_evals) alone.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, fields

import numpy as np
from numba import njit

from . import simlog
from .animats import AnimatKind, GenomeSpec, _nb_targets, build_animat, genome_spec
from .physics import SimulationDivergedError, _step_core

SIGMA_SCALE_MAX = 10.0
EVAL_DURATION_MAX = 120.0
SETTLE_DURATION_MAX = 30.0


@dataclass
class EvolutionParams:
    """Run parameters; mutation fields may be changed between evaluations."""

    mutation_sigma_scale: float = 0.1
    per_gene_mutation_prob: float = 0.3
    eval_duration: float = 10.0
    settle_duration: float = 1.0

    def validate(self) -> "EvolutionParams":
        s = self.mutation_sigma_scale
        if not (math.isfinite(s) and 0.0 < s <= SIGMA_SCALE_MAX):
            raise ValueError(f"mutation_sigma_scale must be in (0, {SIGMA_SCALE_MAX}], got {s}")
        p = self.per_gene_mutation_prob
        if not (math.isfinite(p) and 0.0 < p <= 1.0):
            raise ValueError(f"per_gene_mutation_prob must be in (0, 1], got {p}")
        d = self.eval_duration
        if not (math.isfinite(d) and 0.0 < d <= EVAL_DURATION_MAX):
            raise ValueError(f"eval_duration must be in (0, {EVAL_DURATION_MAX}] s, got {d}")
        d = self.settle_duration
        if not (math.isfinite(d) and 0.0 <= d <= SETTLE_DURATION_MAX):
            raise ValueError(f"settle_duration must be in [0, {SETTLE_DURATION_MAX}] s, got {d}")
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "EvolutionParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown parameter(s): {sorted(unknown)}")
        return cls(**d).validate()

    def copy(self) -> "EvolutionParams":
        return EvolutionParams(**self.to_dict())


@dataclass
class Genome:
    kind: AnimatKind
    genes: np.ndarray

    def copy(self) -> "Genome":
        return Genome(self.kind, self.genes.copy())

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "genes": self.genes.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Genome":
        return cls(AnimatKind(d["kind"]), np.asarray(d["genes"], dtype=np.float64))


@dataclass
class EvalRecord:
    """Outcome of one evaluation. wall_time is informational only and is
    deliberately left out of the serialized form so that run artifacts are
    byte-reproducible."""

    eval_index: int
    genome: Genome
    fitness: float
    accepted: bool
    rng_seed: int
    diverged: bool = False
    log_digest: str = ""
    wall_time: float = field(default=0.0, compare=False)

    def to_dict(self) -> dict:
        return {"eval_index": self.eval_index,
                "kind": self.genome.kind.value,
                "genes": self.genome.genes.tolist(),
                "fitness": self.fitness,
                "accepted": self.accepted,
                "rng_seed": self.rng_seed,
                "diverged": self.diverged,
                "log_digest": self.log_digest}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalRecord":
        return cls(int(d["eval_index"]),
                   Genome(AnimatKind(d["kind"]), np.asarray(d["genes"], dtype=np.float64)),
                   float(d["fitness"]), bool(d["accepted"]), int(d["rng_seed"]),
                   bool(d["diverged"]), str(d["log_digest"]))


def derive_eval_seed(master_seed: int, eval_index: int) -> int:
    """Stable per-evaluation seed; independent of evaluation order."""
    ss = np.random.SeedSequence([int(master_seed), int(eval_index)])
    return int(ss.generate_state(1, np.uint64)[0])


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def random_genome(spec: GenomeSpec, rng: np.random.Generator) -> Genome:
    genes = spec.lower + (spec.upper - spec.lower) * rng.random(spec.length)
    return Genome(spec.kind, genes)


def mutate(parent: Genome, params: EvolutionParams, rng: np.random.Generator) -> Genome:
    """Per-gene Bernoulli-gated Gaussian mutation, clamped to the bounds.

    Both random draws happen for every gene so the stream consumed per call
    is fixed regardless of which genes mutate.
    """
    spec = genome_spec(parent.kind)
    mask = rng.random(spec.length) < params.per_gene_mutation_prob
    noise = rng.standard_normal(spec.length) * (
        params.mutation_sigma_scale * (spec.upper - spec.lower))
    genes = parent.genes.copy()
    genes[mask] += noise[mask]
    np.clip(genes, spec.lower, spec.upper, out=genes)
    return Genome(parent.kind, genes)


@njit(cache=True)
def _nb_rollout(pos, quat, linvel, angvel, inv_mass, inv_ib, hext,
                jp, jc, jap, jac, jxp, jxc, jlo, jhi, jtq, jtg, jref,
                genes, torso, n_settle, n_total,
                gravity, dt, iters, beta, slop, mu, omega_max, frames):
    """Settle-then-evaluate schedule fused into one kernel: per step, write the
    controller targets, record the pre-step frame, then advance the world.
    Returns (diverged, body, steps_done, fitness)."""
    nb = pos.shape[0]
    start_x = 0.0
    start_z = 0.0
    for i in range(n_total):
        if i < n_settle:
            _nb_targets(genes, jlo, jhi, 0.0, False, jtg)
        else:
            _nb_targets(genes, jlo, jhi, (i - n_settle) * dt, True, jtg)
        if i == n_settle:
            start_x = pos[torso, 0]
            start_z = pos[torso, 2]
        for b in range(nb):
            frames[i, b, 0] = pos[b, 0]
            frames[i, b, 1] = pos[b, 1]
            frames[i, b, 2] = pos[b, 2]
            frames[i, b, 3] = quat[b, 0]
            frames[i, b, 4] = quat[b, 1]
            frames[i, b, 5] = quat[b, 2]
            frames[i, b, 6] = quat[b, 3]
        status = _step_core(pos, quat, linvel, angvel, inv_mass, inv_ib, hext,
                            jp, jc, jap, jac, jxp, jxc, jlo, jhi, jtq, jtg, jref,
                            gravity, dt, iters, beta, slop, mu, omega_max)
        if status >= 0:
            return 1, status, i + 1, 0.0
    dx = pos[torso, 0] - start_x
    dz = pos[torso, 2] - start_z
    return 0, -1, n_total, math.hypot(dx, dz)


def evaluate(genome: Genome, params: EvolutionParams, extra_meta=None):
    """Simulate one genome and return (fitness, SimLog).

    Fitness is the planar (x, z) displacement of the torso center over the
    evaluation window; the controller clock starts at zero when the window
    opens, after the settle phase. The log holds one frame per step taken,
    frame i being the state after i steps. If the simulation diverges the
    error propagates with the failing body and step.
    """
    params.validate()
    spec = genome_spec(genome.kind)
    genes = np.ascontiguousarray(genome.genes, dtype=np.float64)
    if genes.shape != (spec.length,):
        raise ValueError(f"{genome.kind.value} genome must have {spec.length} genes, "
                         f"got shape {genes.shape}")
    if not np.all(np.isfinite(genes)):
        raise ValueError("genome genes must be finite")
    world = build_animat(genome.kind)
    n_settle = round(params.settle_duration / world.dt)
    n_eval = round(params.eval_duration / world.dt)
    n_total = n_settle + n_eval
    frames_arr = np.empty((n_total, world.n_bodies, 7))
    diverged, body, steps_done, fitness = _nb_rollout(
        world._pos, world._quat, world._linvel, world._angvel,
        world._inv_mass, world._inv_inertia, world._hext,
        world._jp, world._jc, world._jap, world._jac, world._jxp, world._jxc,
        world._jlo, world._jhi, world._jtq, world._jtg, world._jref,
        genes, 0, n_settle, n_total,
        world.gravity, world.dt, world.solver_iterations,
        world.baumgarte, world.penetration_slop, world.ground_friction,
        world.motor_max_speed, frames_arr)
    world.step_count += steps_done
    if diverged:
        raise SimulationDivergedError(world._names[body], int(body), world.step_count)
    meta = {"kind": genome.kind.value,
            "genome": json.dumps(genes.tolist(), separators=(",", ":")),
            "params": json.dumps(params.to_dict(), separators=(",", ":")),
            "fitness": repr(float(fitness))}
    if extra_meta:
        meta.update(extra_meta)
    header = simlog.header_from_world(world, meta)
    frames = [simlog.Frame(i * world.dt, frames_arr[i]) for i in range(n_total)]
    return float(fitness), simlog.SimLog(header, frames)


def best_record(history) -> "EvalRecord | None":
    """Highest fitness in the history; earliest wins ties."""
    best = None
    for rec in history:
        if best is None or rec.fitness > best.fitness:
            best = rec
    return best


def run_1p1(kind: AnimatKind, params: EvolutionParams, seed: int, n_evals: int,
            on_record=None):
    """Run the 1+1 strategy for n_evals evaluations.

    Returns (best_record, history). Evaluation 0 is the random initial parent;
    each later evaluation mutates the current parent and replaces it when the
    child scores at least as well. Diverged evaluations score 0 and are never
    accepted. `on_record(record)` is called after each evaluation; `params` is
    re-read every generation, so its mutation fields may be adjusted from the
    callback while the run is in flight.
    """
    if int(seed) < 0:
        raise ValueError("seed must be a non-negative integer")
    if n_evals < 1:
        raise ValueError("n_evals must be >= 1")
    spec = genome_spec(AnimatKind(kind))
    history = []
    parent = None
    parent_fitness = None
    for i in range(n_evals):
        params.validate()
        eval_seed = derive_eval_seed(seed, i)
        rng = rng_from_seed(eval_seed)
        if parent is None:
            candidate = random_genome(spec, rng)
        else:
            candidate = mutate(parent, params, rng)
        t0 = time.perf_counter()
        diverged = False
        digest = ""
        try:
            fitness, log = evaluate(candidate, params)
            digest = log.digest()
        except SimulationDivergedError:
            fitness = 0.0
            diverged = True
        wall = time.perf_counter() - t0
        accepted = (not diverged) and (parent_fitness is None or fitness >= parent_fitness)
        if accepted:
            parent = candidate
            parent_fitness = fitness
        rec = EvalRecord(i, candidate, fitness, accepted, eval_seed,
                         diverged, digest, wall)
        history.append(rec)
        if on_record is not None:
            on_record(rec)
    return best_record(history), history
