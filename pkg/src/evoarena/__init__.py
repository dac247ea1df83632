"""Evolve box-and-hinge walking machines in a deterministic physics arena.

The pieces: a fixed-timestep rigid-body core (physics), three animat
morphologies with sinusoidal joint controllers (animats), a 1+1 evolution
strategy (evolution), a JSON-lines trajectory log format (simlog), and a
genome dispatch server plus worker client for distributed evaluation
(server, worker).
"""

__version__ = "0.1.0"

from .physics import (  # noqa: F401
    World,
    Body,
    HingeJoint,
    Contact,
    SimulationDivergedError,
    box_inertia,
    step,
    detect_ground_contacts,
    joint_angle,
    world_digest,
    world_to_snapshot,
    world_from_snapshot,
)
from .animats import AnimatKind, GenomeSpec, build_animat, genome_spec, controller_targets  # noqa: F401
from .evolution import (  # noqa: F401
    EvolutionParams,
    Genome,
    EvalRecord,
    random_genome,
    mutate,
    evaluate,
    run_1p1,
)
