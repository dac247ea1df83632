"""Animat morphologies and their sinusoidal joint controllers.

Three fixed body plans: a quadruped (torso plus four two-segment legs), an
octopod (longer torso, eight legs), and a crawler in the spirit of Karl Sims'
blocky creatures (a cube torso with two three-segment limb chains). Each hinge
is driven by a position servo whose target is

    target_j(t) = offset_j + amplitude_j * sin(2*pi*frequency*t + phase_j)

clamped to the joint limits. Genes are laid out per joint as (amplitude,
phase, offset) with a single shared frequency gene last.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from .physics import World

CLEARANCE = 0.01  # lowest foot vertex starts this far above the ground

FREQ_LO = 0.5
FREQ_HI = 2.5
AMP_FRACTION = 0.8  # amplitude bound as a fraction of the joint half-range
OFFSET_FRACTION = 0.25  # offset bound as a fraction of each limit

_LEG_HALF = (0.04, 0.15, 0.04)
_LEG_MASS = 0.25
_LEG_TORQUE = 6.0
_HIP_LIMIT = 0.9
_KNEE_LO, _KNEE_HI = -1.4, 0.0

_TORSO_COLOR = (0.8, 0.35, 0.25)
_UPPER_COLOR = (0.25, 0.45, 0.75)
_LOWER_COLOR = (0.35, 0.65, 0.85)


class AnimatKind(str, enum.Enum):
    QUADRUPED = "quadruped"
    OCTOPOD = "octopod"
    SIMS_CRAWLER = "sims-crawler"


@dataclass(frozen=True)
class _BodyPlan:
    name: str
    half_extents: tuple
    mass: float
    position: tuple
    color: tuple


@dataclass(frozen=True)
class _JointPlan:
    name: str
    parent: int
    child: int
    anchor_parent: tuple
    anchor_child: tuple
    axis: tuple
    limit_lo: float
    limit_hi: float
    motor_max_torque: float


@dataclass(frozen=True)
class Morphology:
    kind: AnimatKind
    bodies: tuple
    joints: tuple
    torso: int = 0


@dataclass(frozen=True)
class GenomeSpec:
    """Gene layout and bounds for one animat kind.

    Genes 3j..3j+2 are (amplitude, phase, offset) of joint j; the last gene is
    the shared oscillation frequency in Hz.
    """

    kind: AnimatKind
    gene_names: tuple
    lower: np.ndarray
    upper: np.ndarray
    joint_lo: np.ndarray
    joint_hi: np.ndarray

    @property
    def length(self) -> int:
        return self.lower.shape[0]

    @property
    def n_joints(self) -> int:
        return self.joint_lo.shape[0]


def _legged_morphology(kind, torso_half, torso_mass, legs):
    """Torso with two-segment legs hanging from hips at the torso's underside.

    `legs` is a sequence of (name, hip_x, side) with side +1 for the +z flank.
    """
    ty = torso_half[1]
    tz = torso_half[2]
    h0 = CLEARANCE + 4 * _LEG_HALF[1] + ty  # torso center height at rest
    bodies = [_BodyPlan("torso", torso_half, torso_mass, (0.0, h0, 0.0), _TORSO_COLOR)]
    joints = []
    for leg, hip_x, side in legs:
        hz = side * tz
        upper_id = len(bodies)
        bodies.append(_BodyPlan(
            f"{leg}_upper", _LEG_HALF, _LEG_MASS,
            (hip_x, h0 - ty - _LEG_HALF[1], hz), _UPPER_COLOR))
        joints.append(_JointPlan(
            f"hip_{leg}", 0, upper_id,
            (hip_x, -ty, hz), (0.0, _LEG_HALF[1], 0.0),
            (0.0, 0.0, 1.0), -_HIP_LIMIT, _HIP_LIMIT, _LEG_TORQUE))
        lower_id = len(bodies)
        bodies.append(_BodyPlan(
            f"{leg}_lower", _LEG_HALF, _LEG_MASS,
            (hip_x, h0 - ty - 3 * _LEG_HALF[1], hz), _LOWER_COLOR))
        joints.append(_JointPlan(
            f"knee_{leg}", upper_id, lower_id,
            (0.0, -_LEG_HALF[1], 0.0), (0.0, _LEG_HALF[1], 0.0),
            (0.0, 0.0, 1.0), _KNEE_LO, _KNEE_HI, _LEG_TORQUE))
    return Morphology(kind, tuple(bodies), tuple(joints))


def _sims_crawler_morphology():
    """Cube torso with a three-segment limb chain out of each x face, hinge
    axes alternating yaw/pitch/yaw along the chain."""
    torso_half = (0.15, 0.15, 0.15)
    seg_half = (0.125, 0.04, 0.04)
    seg_mass = 0.25
    limit = 1.2
    h0 = CLEARANCE + torso_half[1]
    bodies = [_BodyPlan("torso", torso_half, 1.5, (0.0, h0, 0.0), _TORSO_COLOR)]
    joints = []
    seg_colors = [(0.25, 0.45, 0.75), (0.35, 0.65, 0.85), (0.5, 0.8, 0.9)]
    for chain, sx in (("front", 1.0), ("back", -1.0)):
        parent = 0
        for k in range(3):
            cx = sx * (torso_half[0] + seg_half[0] + 2 * seg_half[0] * k)
            seg_id = len(bodies)
            bodies.append(_BodyPlan(
                f"{chain}_seg{k}", seg_half, seg_mass, (cx, h0, 0.0), seg_colors[k]))
            if k == 0:
                anchor_p = (sx * torso_half[0], 0.0, 0.0)
            else:
                anchor_p = (sx * seg_half[0], 0.0, 0.0)
            axis = (0.0, 1.0, 0.0) if k % 2 == 0 else (0.0, 0.0, 1.0)
            joints.append(_JointPlan(
                f"{chain}_j{k}", parent, seg_id,
                anchor_p, (-sx * seg_half[0], 0.0, 0.0),
                axis, -limit, limit, _LEG_TORQUE))
            parent = seg_id
    return Morphology(AnimatKind.SIMS_CRAWLER, tuple(bodies), tuple(joints))


@lru_cache(maxsize=None)
def morphology(kind: AnimatKind) -> Morphology:
    kind = AnimatKind(kind)
    if kind is AnimatKind.QUADRUPED:
        legs = [("fl", 0.3, 1.0), ("fr", 0.3, -1.0),
                ("bl", -0.3, 1.0), ("br", -0.3, -1.0)]
        return _legged_morphology(kind, (0.3, 0.075, 0.2), 2.0, legs)
    if kind is AnimatKind.OCTOPOD:
        legs = []
        for row, x in enumerate([0.5, 1.0 / 6.0, -1.0 / 6.0, -0.5]):
            legs.append((f"l{row}", x, 1.0))
            legs.append((f"r{row}", x, -1.0))
        return _legged_morphology(kind, (0.5, 0.075, 0.2), 3.0, legs)
    return _sims_crawler_morphology()


def build_animat(kind: AnimatKind) -> World:
    """A fresh world holding one animat at rest, every foot just above the
    ground; the torso is always body 0."""
    morph = morphology(AnimatKind(kind))
    world = World()
    for plan in morph.bodies:
        world.add_body(name=plan.name, half_extents=plan.half_extents,
                       mass=plan.mass, position=plan.position, color=plan.color)
    for jp in morph.joints:
        world.add_hinge(jp.parent, jp.child, jp.anchor_parent, jp.anchor_child,
                        jp.axis, limit_lo=jp.limit_lo, limit_hi=jp.limit_hi,
                        motor_max_torque=jp.motor_max_torque)
    return world


@lru_cache(maxsize=None)
def genome_spec(kind: AnimatKind) -> GenomeSpec:
    morph = morphology(AnimatKind(kind))
    names = []
    lower = []
    upper = []
    jlo = []
    jhi = []
    for jp in morph.joints:
        half_range = 0.5 * (jp.limit_hi - jp.limit_lo)
        names += [f"{jp.name}:amplitude", f"{jp.name}:phase", f"{jp.name}:offset"]
        lower += [0.0, 0.0, OFFSET_FRACTION * jp.limit_lo]
        upper += [AMP_FRACTION * half_range, 2.0 * math.pi, OFFSET_FRACTION * jp.limit_hi]
        jlo.append(jp.limit_lo)
        jhi.append(jp.limit_hi)
    names.append("frequency")
    lower.append(FREQ_LO)
    upper.append(FREQ_HI)
    lo = np.array(lower)
    hi = np.array(upper)
    jlo = np.array(jlo)
    jhi = np.array(jhi)
    for arr in (lo, hi, jlo, jhi):
        arr.setflags(write=False)
    return GenomeSpec(AnimatKind(kind), tuple(names), lo, hi, jlo, jhi)


@njit(cache=True)
def _nb_targets(genes, jlo, jhi, t, oscillate, out):
    nj = jlo.shape[0]
    w = 2.0 * math.pi * genes[3 * nj]
    for j in range(nj):
        v = genes[3 * j + 2]
        if oscillate:
            v += genes[3 * j] * math.sin(w * t + genes[3 * j + 1])
        if v < jlo[j]:
            v = jlo[j]
        elif v > jhi[j]:
            v = jhi[j]
        out[j] = v
    return out


def controller_targets(genes, spec: GenomeSpec, t: float) -> np.ndarray:
    """Motor target angles for every joint at controller time t (radians,
    clamped to the joint limits)."""
    g = np.asarray(genes, dtype=np.float64)
    if g.shape != (spec.length,):
        raise ValueError(f"expected {spec.length} genes for {spec.kind.value}, got shape {g.shape}")
    t = float(t)
    if not math.isfinite(t) or t < 0.0:
        raise ValueError(f"controller time must be finite and >= 0, got {t}")
    out = np.empty(spec.n_joints)
    _nb_targets(g, spec.joint_lo, spec.joint_hi, t, True, out)
    return out


def settle_targets(genes, spec: GenomeSpec, t: float = 0.0) -> np.ndarray:
    """Motor targets for the settle phase: each joint holds its offset gene
    (clamped to the limits), with the oscillation suppressed."""
    g = np.asarray(genes, dtype=np.float64)
    if g.shape != (spec.length,):
        raise ValueError(f"expected {spec.length} genes for {spec.kind.value}, got shape {g.shape}")
    out = np.empty(spec.n_joints)
    _nb_targets(g, spec.joint_lo, spec.joint_hi, float(t), False, out)
    return out


def apply_controller(world: World, genes, spec: GenomeSpec, t: float,
                     settling: bool = False) -> None:
    """Write controller targets for time t into the world's joint motors."""
    if world.n_joints != spec.n_joints:
        raise ValueError(f"world has {world.n_joints} joints, spec expects {spec.n_joints}")
    if settling:
        world._jtg[:] = settle_targets(genes, spec, t)
    else:
        world._jtg[:] = controller_targets(genes, spec, t)
