"""Simulation trajectory logs: a line-oriented JSON format plus replay checking.

A log is UTF-8 JSON lines. The first line is a header carrying everything
needed to rebuild and render the simulation (timestep, gravity, body and
joint configuration, free-form string metadata); every following line is one
frame with the poses of all bodies:

    {"log":"header","version":1,"dt":...,"gravity":[...],"bodies":[...],
     "joints":[...],"meta":{...}}
    {"log":"frame","t":0.0,"states":[[px,py,pz,qw,qx,qy,qz],...]}

Frame i holds the state after i steps, so t = i*dt and frame 0 is the initial
configuration. Floats are written with Python's shortest round-trip repr, so
write -> read -> write is byte-identical. Unknown fields on any record are
preserved. A static body is written with mass 0 (JSON has no infinity).

Logs produced by the evolution evaluator carry the genome and parameters in
meta, which lets `replay_verify` re-run the simulation and compare every
frame against the file.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

VERSION = 1

QUAT_NORM_TOL = 1e-6
TIME_GRID_TOL = 1e-9


class SimLogError(Exception):
    """Base class for log format errors."""


class MalformedLineError(SimLogError):
    """A line is not valid JSON or not a well-formed record."""

    def __init__(self, line_number: int, reason: str):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


class UnsupportedVersionError(SimLogError):
    """The header declares a format version this reader does not speak."""

    def __init__(self, found):
        super().__init__(f"unsupported log version {found!r} (supported: {VERSION})")
        self.found = found


class FrameError(SimLogError):
    """A frame is inconsistent with the header or with its neighbors."""

    def __init__(self, line_number: int, reason: str):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


class CannotReplayError(SimLogError):
    """The log lacks the metadata needed to re-run its simulation."""


@dataclass
class BodyInfo:
    id: int
    name: str
    half_extents: tuple
    mass: float  # 0.0 means static
    color: tuple
    shape: str = "box"
    extra: dict = field(default_factory=dict)


@dataclass
class JointInfo:
    id: int
    parent: int
    child: int
    anchor_parent: tuple
    anchor_child: tuple
    axis_parent: tuple
    limits: tuple
    extra: dict = field(default_factory=dict)


@dataclass
class LogHeader:
    dt: float
    gravity: tuple
    bodies: list
    joints: list
    meta: dict = field(default_factory=dict)
    version: int = VERSION
    extra: dict = field(default_factory=dict)


@dataclass
class Frame:
    t: float
    states: np.ndarray  # (n_bodies, 7): px py pz qw qx qy qz
    extra: dict = field(default_factory=dict)


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def header_line(header: LogHeader) -> str:
    bodies = []
    for b in header.bodies:
        d = {"id": b.id, "name": b.name, "shape": b.shape,
             "half_extents": list(b.half_extents), "mass": b.mass,
             "color": list(b.color)}
        d.update(b.extra)
        bodies.append(d)
    joints = []
    for j in header.joints:
        d = {"id": j.id, "parent": j.parent, "child": j.child,
             "anchor_parent": list(j.anchor_parent),
             "anchor_child": list(j.anchor_child),
             "axis_parent": list(j.axis_parent),
             "limits": list(j.limits)}
        d.update(j.extra)
        joints.append(d)
    out = {"log": "header", "version": header.version, "dt": header.dt,
           "gravity": list(header.gravity), "bodies": bodies, "joints": joints,
           "meta": dict(header.meta)}
    out.update(header.extra)
    return _dumps(out)


def frame_line(frame: Frame) -> str:
    states = np.asarray(frame.states, dtype=np.float64)
    out = {"log": "frame", "t": float(frame.t),
           "states": [list(row) for row in states]}
    out.update(frame.extra)
    return _dumps(out)


class SimLogWriter:
    """Streaming writer: header first, then frames appended one at a time.

    Produces bytes identical to `write` called with the full frame list.
    """

    def __init__(self, sink):
        if isinstance(sink, (str, Path)):
            self._fh = open(sink, "w", encoding="utf-8", newline="\n")
            self._owns = True
        else:
            self._fh = sink
            self._owns = False
        self._header = None

    def write_header(self, header: LogHeader) -> None:
        if self._header is not None:
            raise ValueError("header already written")
        self._fh.write(header_line(header) + "\n")
        self._header = header

    def append_frame(self, frame: Frame) -> None:
        if self._header is None:
            raise ValueError("cannot append a frame before the header")
        states = np.asarray(frame.states, dtype=np.float64)
        if states.shape != (len(self._header.bodies), 7):
            raise ValueError(
                f"frame has states of shape {states.shape}, header declares "
                f"{len(self._header.bodies)} bodies")
        self._fh.write(frame_line(frame) + "\n")

    def close(self) -> None:
        if self._owns:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write(header: LogHeader, frames, sink) -> None:
    """Write a complete log to a path or text file object."""
    with SimLogWriter(sink) as w:
        w.write_header(header)
        for f in frames:
            w.append_frame(f)


def _require(cond: bool, line_number: int, reason: str, cls=MalformedLineError):
    if not cond:
        raise cls(line_number, reason)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _vec(v, n) -> bool:
    return isinstance(v, list) and len(v) == n and all(_is_num(x) for x in v)


def _pop_known(obj: dict, keys) -> dict:
    """Split a parsed record into known fields (returned via obj) and the
    leftover unknown fields (returned), which round-trip untouched."""
    return {k: v for k, v in obj.items() if k not in keys}


def _parse_header(obj: dict) -> LogHeader:
    version = obj.get("version")
    _require(isinstance(version, int) and not isinstance(version, bool),
             1, "header version must be an integer")
    if version != VERSION:
        raise UnsupportedVersionError(version)
    dt = obj.get("dt")
    _require(_is_num(dt) and dt > 0.0, 1, "header dt must be a positive number")
    gravity = obj.get("gravity")
    _require(_vec(gravity, 3), 1, "header gravity must be a 3-vector")
    bodies_raw = obj.get("bodies")
    _require(isinstance(bodies_raw, list) and len(bodies_raw) > 0,
             1, "header must declare at least one body")
    bodies = []
    for i, b in enumerate(bodies_raw):
        _require(isinstance(b, dict), 1, f"body {i} is not an object")
        _require(b.get("id") == i, 1, f"body ids must be dense and ordered (body {i})")
        _require(isinstance(b.get("name"), str), 1, f"body {i} name must be a string")
        _require(b.get("shape") == "box", 1, f"body {i} has unsupported shape {b.get('shape')!r}")
        he = b.get("half_extents")
        _require(_vec(he, 3) and all(x > 0.0 for x in he),
                 1, f"body {i} half_extents must be 3 positive numbers")
        mass = b.get("mass")
        _require(_is_num(mass) and mass >= 0.0, 1, f"body {i} mass must be >= 0")
        color = b.get("color")
        _require(_vec(color, 3), 1, f"body {i} color must be a 3-vector")
        extra = _pop_known(b, ("id", "name", "shape", "half_extents", "mass", "color"))
        bodies.append(BodyInfo(i, b["name"], tuple(he), float(mass), tuple(color),
                               "box", extra))
    joints_raw = obj.get("joints")
    _require(isinstance(joints_raw, list), 1, "header joints must be a list")
    joints = []
    for j, jt in enumerate(joints_raw):
        _require(isinstance(jt, dict), 1, f"joint {j} is not an object")
        _require(jt.get("id") == j, 1, f"joint ids must be dense and ordered (joint {j})")
        for key in ("parent", "child"):
            v = jt.get(key)
            _require(isinstance(v, int) and not isinstance(v, bool)
                     and 0 <= v < len(bodies),
                     1, f"joint {j} {key} must reference a declared body")
        _require(jt["parent"] != jt["child"], 1, f"joint {j} parent equals child")
        for key in ("anchor_parent", "anchor_child", "axis_parent"):
            _require(_vec(jt.get(key), 3), 1, f"joint {j} {key} must be a 3-vector")
        limits = jt.get("limits")
        _require(_vec(limits, 2) and limits[0] <= limits[1],
                 1, f"joint {j} limits must be [lo, hi] with lo <= hi")
        extra = _pop_known(jt, ("id", "parent", "child", "anchor_parent",
                                "anchor_child", "axis_parent", "limits"))
        joints.append(JointInfo(j, jt["parent"], jt["child"],
                                tuple(jt["anchor_parent"]), tuple(jt["anchor_child"]),
                                tuple(jt["axis_parent"]), tuple(limits), extra))
    meta = obj.get("meta")
    _require(isinstance(meta, dict)
             and all(isinstance(k, str) and isinstance(v, str) for k, v in meta.items()),
             1, "header meta must map strings to strings")
    extra = _pop_known(obj, ("log", "version", "dt", "gravity", "bodies", "joints", "meta"))
    return LogHeader(float(dt), tuple(gravity), bodies, joints, dict(meta), VERSION, extra)


def _parse_frame(obj: dict, line_number: int, frame_index: int, header: LogHeader) -> Frame:
    t = obj.get("t")
    _require(_is_num(t), line_number, "frame t must be a finite number")
    expected_t = frame_index * header.dt
    _require(abs(t - expected_t) <= TIME_GRID_TOL, line_number,
             f"frame t={t!r} off the time grid (expected {expected_t!r})", FrameError)
    states_raw = obj.get("states")
    _require(isinstance(states_raw, list), line_number, "frame states must be a list")
    _require(len(states_raw) == len(header.bodies), line_number,
             f"frame has {len(states_raw)} states, header declares "
             f"{len(header.bodies)} bodies", FrameError)
    states = np.empty((len(header.bodies), 7))
    for i, s in enumerate(states_raw):
        _require(_vec(s, 7), line_number,
                 f"state {i} must be 7 finite numbers", FrameError)
        qn = math.sqrt(s[3] * s[3] + s[4] * s[4] + s[5] * s[5] + s[6] * s[6])
        _require(abs(qn - 1.0) <= QUAT_NORM_TOL, line_number,
                 f"state {i} orientation is not a unit quaternion (|q|={qn!r})", FrameError)
        states[i] = s
    extra = _pop_known(obj, ("log", "t", "states"))
    return Frame(float(t), states, extra)


def read(source):
    """Parse a log from a path, text file object, or iterable of lines.

    Returns (LogHeader, list[Frame]). Raises MalformedLineError,
    UnsupportedVersionError, or FrameError with the offending line number.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().split("\n")
    elif hasattr(source, "read"):
        lines = source.read().split("\n")
    else:
        lines = [line.rstrip("\n") for line in source]
    if lines and lines[-1] == "":
        lines.pop()
    _require(len(lines) > 0, 1, "empty log: missing header line")
    header = None
    frames = []
    for line_number, line in enumerate(lines, 1):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedLineError(line_number, f"invalid JSON ({e.msg})") from None
        _require(isinstance(obj, dict), line_number, "record must be a JSON object")
        kind = obj.get("log")
        if line_number == 1:
            _require(kind == "header", 1, "first line must be the header record")
            header = _parse_header(obj)
        else:
            _require(kind == "frame", line_number,
                     f"unknown record type {kind!r} (expected 'frame')")
            frames.append(_parse_frame(obj, line_number, len(frames), header))
    return header, frames


def log_digest(header: LogHeader, frames) -> str:
    """64-bit hex digest over the canonical header line and raw frame floats."""
    h = hashlib.blake2b(digest_size=8)
    h.update(header_line(header).encode("utf-8"))
    for f in frames:
        h.update(struct.pack("<d", float(f.t)))
        h.update(np.ascontiguousarray(f.states, dtype=np.float64).tobytes())
    return h.hexdigest()


@dataclass
class SimLog:
    """A parsed or freshly produced log: header plus all frames."""

    header: LogHeader
    frames: list

    def digest(self) -> str:
        return log_digest(self.header, self.frames)

    def write(self, sink) -> None:
        write(self.header, self.frames, sink)

    def dumps(self) -> str:
        lines = [header_line(self.header)]
        lines += [frame_line(f) for f in self.frames]
        return "\n".join(lines) + "\n"

    @classmethod
    def read(cls, source) -> "SimLog":
        header, frames = read(source)
        return cls(header, frames)


def header_from_world(world, meta=None) -> LogHeader:
    """Header describing a world's configuration (not its current poses)."""
    bodies = []
    for i, b in enumerate(world.bodies):
        bodies.append(BodyInfo(i, b.name, tuple(b.half_extents.tolist()),
                               0.0 if b.is_static else b.mass,
                               tuple(b.color.tolist())))
    joints = []
    for j, jt in enumerate(world.joints):
        joints.append(JointInfo(j, jt.parent, jt.child,
                                tuple(jt.anchor_parent.tolist()),
                                tuple(jt.anchor_child.tolist()),
                                tuple(jt.axis_parent.tolist()),
                                (jt.limit_lo, jt.limit_hi)))
    return LogHeader(world.dt, tuple(world.gravity.tolist()), bodies, joints,
                     dict(meta or {}))


def states_from_world(world) -> np.ndarray:
    return np.hstack([world._pos, world._quat])


def frame_from_world(world, t: float) -> Frame:
    return Frame(float(t), states_from_world(world))


@dataclass
class ReplayReport:
    max_position_error: float
    max_orientation_error: float
    frames_compared: int
    passed: bool
    reason: str = ""

    def to_dict(self) -> dict:
        return {"max_position_error": self.max_position_error,
                "max_orientation_error": self.max_orientation_error,
                "frames_compared": self.frames_compared,
                "pass": self.passed,
                "reason": self.reason}


def replay_verify(source, tolerance: float = 1e-9) -> ReplayReport:
    """Re-run the simulation described by a log's metadata and compare every
    logged frame against the replay.

    The header meta must carry `kind`, `genome`, and `params` as written by
    the evolution evaluator; otherwise CannotReplayError is raised.
    """
    if isinstance(source, SimLog):
        header, frames = source.header, source.frames
    else:
        header, frames = read(source)
    if not frames:
        # header-only logs are valid; nothing to compare, vacuous pass
        return ReplayReport(0.0, 0.0, 0, True, "no frames to compare")
    meta = header.meta
    for key in ("kind", "genome", "params"):
        if key not in meta:
            raise CannotReplayError(f"log meta lacks {key!r}; cannot re-run it")
    from .animats import AnimatKind
    from .evolution import EvolutionParams, Genome, evaluate

    try:
        kind = AnimatKind(meta["kind"])
        genes = json.loads(meta["genome"])
        params = EvolutionParams.from_dict(json.loads(meta["params"]))
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as e:
        raise CannotReplayError(f"log meta is not replayable: {e}") from None
    _, replog = evaluate(Genome(kind, np.asarray(genes, dtype=np.float64)), params)

    ref_h = replog.header
    same_config = (
        header.dt == ref_h.dt and tuple(header.gravity) == tuple(ref_h.gravity)
        and len(header.bodies) == len(ref_h.bodies)
        and len(header.joints) == len(ref_h.joints)
        and all(a.half_extents == b.half_extents and a.mass == b.mass
                for a, b in zip(header.bodies, ref_h.bodies))
        and all((a.parent, a.child, a.anchor_parent, a.anchor_child,
                 a.axis_parent, a.limits)
                == (b.parent, b.child, b.anchor_parent, b.anchor_child,
                    b.axis_parent, b.limits)
                for a, b in zip(header.joints, ref_h.joints)))
    if not same_config:
        return ReplayReport(math.inf, math.inf, 0, False,
                            "header does not match the rebuilt simulation")
    if len(frames) != len(replog.frames):
        return ReplayReport(math.inf, math.inf, 0, False,
                            f"log has {len(frames)} frames, replay produced "
                            f"{len(replog.frames)}")
    max_pos = 0.0
    max_ori = 0.0
    for logged, replayed in zip(frames, replog.frames):
        dp = np.abs(logged.states[:, :3] - replayed.states[:, :3]).max() if len(frames) else 0.0
        qa = logged.states[:, 3:]
        qb = replayed.states[:, 3:]
        dq = np.minimum(np.abs(qa - qb).max(axis=1), np.abs(qa + qb).max(axis=1)).max()
        max_pos = max(max_pos, float(dp))
        max_ori = max(max_ori, float(dq))
    passed = max_pos <= tolerance and max_ori <= tolerance
    reason = "" if passed else f"frame mismatch exceeds tolerance {tolerance:g}"
    return ReplayReport(max_pos, max_ori, len(frames), passed, reason)
