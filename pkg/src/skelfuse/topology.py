"""Skeleton topology, coordinate conventions, and shared geometric primitives.

The topology is data-driven: joint names, limb segments, the rigid-bone set
used for ratio normalization, multi-bone torso segments, and body-angle
definitions all come from configuration. The default topology covers the
twelve landmarks used for evaluation (shoulders, elbows, wrists, hips,
knees, ankles).

Coordinate conventions: world landmarks are meters, origin at the hip
midpoint, x right / y down / z away from the camera (axis-aligned with the
camera frame). Normalized landmarks are image fractions with (0, 0) at the
top-left corner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DegenerateLimbError, TopologyError

# An endpoint is either a joint name or a pair of joint names whose midpoint
# defines the segment end (used by spine and shoulder-line segments).
EndPoint = Union[str, tuple[str, str]]

DEGENERATE_EPS = 1e-12


@dataclass(frozen=True)
class SkeletonTopology:
    """Named joints plus the segment structure built on top of them."""

    joints: tuple[str, ...]
    limbs: dict[str, tuple[str, str]]                 # name -> (proximal, distal)
    rigid_bones: tuple[str, ...]                      # subset of limb names
    multi_segments: dict[str, tuple[EndPoint, EndPoint]]
    body_angles: dict[str, tuple[str, str, str]]      # name -> (a, vertex, b)
    elevation_joints: dict[str, tuple[str, str, str]] # side -> (shoulder, elbow, hip)

    _index: dict[str, int] = field(init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "_index", {name: i for i, name in enumerate(self.joints)})
        if len(self._index) != len(self.joints):
            raise TopologyError("duplicate joint names in topology")
        for name, (prox, dist) in self.limbs.items():
            if prox == dist:
                raise TopologyError(f"limb {name!r} references the same joint twice")
            for j in (prox, dist):
                if j not in self._index:
                    raise TopologyError(f"limb {name!r} references unknown joint {j!r}")
        for bone in self.rigid_bones:
            if bone not in self.limbs:
                raise TopologyError(f"rigid bone {bone!r} is not a defined limb")
        unpaired = [b for b in self.rigid_bones if self.pair_key(b) is None and b != "pelvis"]
        if unpaired:
            raise TopologyError(f"rigid bones must be left/right pairs or 'pelvis': {unpaired}")
        for name, (a, b) in self.multi_segments.items():
            for end in (a, b):
                for j in (end if isinstance(end, tuple) else (end,)):
                    if j not in self._index:
                        raise TopologyError(f"multi-segment {name!r} references unknown joint {j!r}")
        for name, triple in self.body_angles.items():
            for j in triple:
                if j not in self._index:
                    raise TopologyError(f"body angle {name!r} references unknown joint {j!r}")
        for side, triple in self.elevation_joints.items():
            for j in triple:
                if j not in self._index:
                    raise TopologyError(f"elevation joints for side {side!r} reference unknown joint {j!r}")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    def joint_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise TopologyError(f"unknown joint {name!r}") from None

    def limb_indices(self, limb: str) -> tuple[int, int]:
        try:
            prox, dist = self.limbs[limb]
        except KeyError:
            raise TopologyError(f"unknown limb {limb!r}") from None
        return self._index[prox], self._index[dist]

    @staticmethod
    def pair_key(bone: str) -> str | None:
        """Canonical name shared by a left/right bone pair, None if unpaired."""
        for suffix in ("_L", "_R"):
            if bone.endswith(suffix):
                return bone[: -len(suffix)]
        return None

    def rigid_bone_groups(self) -> dict[str, list[str]]:
        """Rigid bones grouped under their canonical (side-merged) name."""
        groups: dict[str, list[str]] = {}
        for bone in self.rigid_bones:
            key = self.pair_key(bone) or bone
            groups.setdefault(key, []).append(bone)
        return groups

    def multi_segment_groups(self) -> dict[str, list[str]]:
        groups: dict[str, list[str]] = {}
        for seg in self.multi_segments:
            key = self.pair_key(seg) or seg
            groups.setdefault(key, []).append(seg)
        return groups

    def pelvis_limb(self) -> str:
        """The unpaired rigid bone (the hip line used as the skeleton origin)."""
        for bone in self.rigid_bones:
            if self.pair_key(bone) is None:
                return bone
        raise TopologyError("topology has no unpaired rigid bone")

    def hip_midpoint(self, positions: np.ndarray) -> np.ndarray:
        p, d = self.limb_indices(self.pelvis_limb())
        return 0.5 * (positions[p] + positions[d])

    def segment_endpoint_indices(self, segment: str) -> tuple[tuple[int, int], tuple[int, int]]:
        """Endpoint joint indices of a multi-segment; single joints repeat their index."""
        try:
            a, b = self.multi_segments[segment]
        except KeyError:
            raise TopologyError(f"unknown multi-segment {segment!r}") from None

        def expand(end: EndPoint) -> tuple[int, int]:
            if isinstance(end, tuple):
                return self._index[end[0]], self._index[end[1]]
            i = self._index[end]
            return i, i

        return expand(a), expand(b)


def default_topology() -> SkeletonTopology:
    """Twelve-joint topology matching the common BlazePose evaluation subset."""
    joints = (
        "left_shoulder", "right_shoulder",
        "left_elbow", "right_elbow",
        "left_wrist", "right_wrist",
        "left_hip", "right_hip",
        "left_knee", "right_knee",
        "left_ankle", "right_ankle",
    )
    limbs = {
        "humerus_L": ("left_shoulder", "left_elbow"),
        "humerus_R": ("right_shoulder", "right_elbow"),
        "ulna_L": ("left_elbow", "left_wrist"),
        "ulna_R": ("right_elbow", "right_wrist"),
        "femur_L": ("left_hip", "left_knee"),
        "femur_R": ("right_hip", "right_knee"),
        "tibia_L": ("left_knee", "left_ankle"),
        "tibia_R": ("right_knee", "right_ankle"),
        "pelvis": ("left_hip", "right_hip"),
        # Trunk lines connect the arm chain to the leg chain for the
        # relative-angle cost; they are not part of the rigid-bone set.
        "trunk_L": ("left_hip", "left_shoulder"),
        "trunk_R": ("right_hip", "right_shoulder"),
    }
    rigid = ("ulna_L", "ulna_R", "humerus_L", "humerus_R",
             "femur_L", "femur_R", "tibia_L", "tibia_R", "pelvis")
    multi = {
        "shoulder_width": ("left_shoulder", "right_shoulder"),
        "spine": (("left_hip", "right_hip"), ("left_shoulder", "right_shoulder")),
        "lateral_trunk_L": ("left_hip", "left_shoulder"),
        "lateral_trunk_R": ("right_hip", "right_shoulder"),
    }
    body_angles = {
        "elbow_flexion_L": ("left_shoulder", "left_elbow", "left_wrist"),
        "elbow_flexion_R": ("right_shoulder", "right_elbow", "right_wrist"),
        "hip_flexion_L": ("left_shoulder", "left_hip", "left_knee"),
        "hip_flexion_R": ("right_shoulder", "right_hip", "right_knee"),
        "knee_flexion_L": ("left_hip", "left_knee", "left_ankle"),
        "knee_flexion_R": ("right_hip", "right_knee", "right_ankle"),
        "shoulder_elevation_L": ("left_elbow", "left_shoulder", "left_hip"),
        "shoulder_elevation_R": ("right_elbow", "right_shoulder", "right_hip"),
    }
    elevation = {
        "L": ("left_shoulder", "left_elbow", "left_hip"),
        "R": ("right_shoulder", "right_elbow", "right_hip"),
    }
    return SkeletonTopology(
        joints=joints,
        limbs=limbs,
        rigid_bones=rigid,
        multi_segments=multi,
        body_angles=body_angles,
        elevation_joints=elevation,
    )


def topology_from_dict(data: dict) -> SkeletonTopology:
    """Build a topology from a parsed config block (lists become tuples)."""
    try:
        joints = tuple(data["joints"])
        limbs = {name: (p, d) for name, (p, d) in data["limbs"].items()}
        rigid = tuple(data["rigid_bones"])

        def end(e) -> EndPoint:
            return (e[0], e[1]) if isinstance(e, (list, tuple)) else e

        multi = {name: (end(a), end(b)) for name, (a, b) in data["multi_segments"].items()}
        angles = {name: tuple(t) for name, t in data["body_angles"].items()}
        elevation = {side: tuple(t) for side, t in data["elevation_joints"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise TopologyError(f"malformed topology config: {exc}") from exc
    return SkeletonTopology(joints, limbs, rigid, multi, angles, elevation)


def topology_to_dict(topo: SkeletonTopology) -> dict:
    def end(e: EndPoint):
        return list(e) if isinstance(e, tuple) else e

    return {
        "joints": list(topo.joints),
        "limbs": {k: list(v) for k, v in topo.limbs.items()},
        "rigid_bones": list(topo.rigid_bones),
        "multi_segments": {k: [end(a), end(b)] for k, (a, b) in topo.multi_segments.items()},
        "body_angles": {k: list(v) for k, v in topo.body_angles.items()},
        "elevation_joints": {k: list(v) for k, v in topo.elevation_joints.items()},
    }


@dataclass(frozen=True)
class Pose:
    """Per-joint 3D coordinates in meters, ordered like the topology's joints."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise TopologyError(f"pose positions must be (J, 3), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise TopologyError("pose contains non-finite coordinates")
        object.__setattr__(self, "positions", pos)

    @property
    def n_joints(self) -> int:
        return self.positions.shape[0]


def limb_vector(pose: Pose, topo: SkeletonTopology, limb: str) -> np.ndarray:
    """Vector from the limb's proximal joint to its distal joint."""
    p, d = topo.limb_indices(limb)
    return pose.positions[d] - pose.positions[p]


def normalized_scalar_product(y: np.ndarray, z: np.ndarray) -> float:
    """Cosine of the angle between two vectors (the fusion similarity measure)."""
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    ny = float(np.linalg.norm(y))
    nz = float(np.linalg.norm(z))
    if ny <= DEGENERATE_EPS or nz <= DEGENERATE_EPS:
        raise DegenerateLimbError("normalized scalar product of a zero-length vector")
    return float(np.dot(y, z) / (ny * nz))


def angle_between(y: np.ndarray, z: np.ndarray) -> float:
    """Angle in [0, pi] between two vectors; arccos input is clamped."""
    xi = normalized_scalar_product(y, z)
    return float(math.acos(min(1.0, max(-1.0, xi))))


def inter_limb_angle(pose: Pose, topo: SkeletonTopology, limb_i: str, limb_j: str) -> float:
    """Angle between two limb vectors, radians in [0, pi]."""
    return angle_between(limb_vector(pose, topo, limb_i), limb_vector(pose, topo, limb_j))


def humerothoracic_elevation(pose: Pose, topo: SkeletonTopology, side: str) -> float:
    """Arm elevation relative to the trunk on one side.

    Measured between the upper-arm vector (shoulder -> elbow) and the
    downward trunk axis (shoulder -> hip): 0 with the arm hanging at the
    side, pi/2 horizontal, pi fully overhead. Invariant under rigid motion
    of the whole pose.
    """
    try:
        shoulder, elbow, hip = topo.elevation_joints[side]
    except KeyError:
        raise TopologyError(f"unknown elevation side {side!r}") from None
    s = pose.positions[topo.joint_index(shoulder)]
    humerus = pose.positions[topo.joint_index(elbow)] - s
    trunk_down = pose.positions[topo.joint_index(hip)] - s
    return angle_between(humerus, trunk_down)


def body_angle(pose: Pose, topo: SkeletonTopology, name: str) -> float:
    """Interior angle at the vertex of a configured joint triple, radians."""
    try:
        a, vertex, b = topo.body_angles[name]
    except KeyError:
        raise TopologyError(f"unknown body angle {name!r}") from None
    v = pose.positions[topo.joint_index(vertex)]
    va = pose.positions[topo.joint_index(a)] - v
    vb = pose.positions[topo.joint_index(b)] - v
    return angle_between(va, vb)


def segment_length(positions: np.ndarray, topo: SkeletonTopology, segment: str) -> float:
    """3D length of a multi-segment (midpoint endpoints supported)."""
    (a1, a2), (b1, b2) = topo.segment_endpoint_indices(segment)
    a = 0.5 * (positions[a1] + positions[a2])
    b = 0.5 * (positions[b1] + positions[b2])
    return float(np.linalg.norm(b - a))
