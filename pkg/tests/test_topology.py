import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from skelfuse.errors import DegenerateLimbError, TopologyError
from skelfuse.topology import (
    Pose,
    SkeletonTopology,
    default_topology,
    humerothoracic_elevation,
    inter_limb_angle,
    limb_vector,
    normalized_scalar_product,
)


def make_pose(topo, **positions):
    pos = np.zeros((topo.n_joints, 3))
    for name, p in positions.items():
        pos[topo.joint_index(name)] = p
    return Pose(pos)


class TestTopologyValidation:
    def test_default_topology_is_consistent(self, topo):
        assert len(topo.rigid_bones) == 9
        assert set(topo.multi_segments) == {
            "shoulder_width", "spine", "lateral_trunk_L", "lateral_trunk_R"}
        assert len(topo.body_angles) == 8

    def test_rigid_bones_pair_up(self, topo):
        groups = topo.rigid_bone_groups()
        assert sorted(groups) == ["femur", "humerus", "pelvis", "tibia", "ulna"]
        for key, members in groups.items():
            assert len(members) == (1 if key == "pelvis" else 2)

    def test_limb_with_same_joint_twice_rejected(self):
        with pytest.raises(TopologyError):
            SkeletonTopology(
                joints=("a", "b"), limbs={"bad": ("a", "a")}, rigid_bones=(),
                multi_segments={}, body_angles={}, elevation_joints={})

    def test_unknown_joint_in_limb_rejected(self):
        with pytest.raises(TopologyError):
            SkeletonTopology(
                joints=("a", "b"), limbs={"l": ("a", "c")}, rigid_bones=(),
                multi_segments={}, body_angles={}, elevation_joints={})

    def test_pose_rejects_non_finite(self, topo):
        pos = np.zeros((topo.n_joints, 3))
        pos[0, 0] = np.nan
        with pytest.raises(TopologyError):
            Pose(pos)


class TestLimbVector:
    def test_unit_case(self, topo):
        pose = make_pose(topo, left_hip=(0, 0, 0), left_knee=(0, 1, 0))
        assert np.allclose(limb_vector(pose, topo, "femur_L"), [0, 1, 0])

    def test_degenerate_zero_length(self, topo):
        pose = make_pose(topo, left_hip=(1, 2, 3), left_knee=(1, 2, 3))
        assert np.allclose(limb_vector(pose, topo, "femur_L"), [0, 0, 0])

    def test_random_pairs_match_direct_subtraction(self, topo, rng):
        # Oracle: coordinate-wise subtraction computed independently.
        for _ in range(10):
            pos = rng.normal(0, 1, (topo.n_joints, 3))
            pose = Pose(pos)
            for limb, (prox, dist) in topo.limbs.items():
                expect = [pos[topo.joint_index(dist)][k] - pos[topo.joint_index(prox)][k]
                          for k in range(3)]
                assert np.allclose(limb_vector(pose, topo, limb), expect)

    def test_unknown_limb_errors(self, topo):
        pose = Pose(np.zeros((topo.n_joints, 3)))
        with pytest.raises(TopologyError):
            limb_vector(pose, topo, "femur_X")


class TestNormalizedScalarProduct:
    def test_parallel(self):
        assert normalized_scalar_product([1, 0, 0], [1, 0, 0]) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert normalized_scalar_product([1, 0, 0], [0, 1, 0]) == pytest.approx(0.0)

    def test_cos_45_by_hand(self):
        # Oracle: cos(45 deg) = sqrt(2)/2 = 0.70710678...
        assert normalized_scalar_product([1, 1, 0], [1, 0, 0]) == pytest.approx(
            0.7071, abs=1e-4)

    def test_zero_length_raises(self):
        with pytest.raises(DegenerateLimbError):
            normalized_scalar_product([0, 0, 0], [1, 0, 0])

    @given(st.floats(min_value=1e-3, max_value=1e3),
           st.floats(min_value=1e-3, max_value=1e3))
    def test_invariant_under_positive_scaling(self, a, b):
        y = np.array([0.3, -1.2, 0.5])
        z = np.array([1.1, 0.4, -0.2])
        base = normalized_scalar_product(y, z)
        assert normalized_scalar_product(a * y, b * z) == pytest.approx(base, abs=1e-9)


class TestInterLimbAngle:
    def test_collinear(self, topo):
        pose = make_pose(topo, left_hip=(0, 0, 0), left_knee=(0, 1, 0),
                         left_ankle=(0, 2, 0))
        assert inter_limb_angle(pose, topo, "femur_L", "tibia_L") == pytest.approx(0.0)

    def test_perpendicular(self, topo):
        pose = make_pose(topo, left_hip=(0, 0, 0), left_knee=(0, 1, 0),
                         left_ankle=(1, 1, 0))
        assert inter_limb_angle(pose, topo, "femur_L", "tibia_L") == pytest.approx(
            math.pi / 2)

    def test_antiparallel(self, topo):
        pose = make_pose(topo, left_hip=(0, 0, 0), left_knee=(1, 0, 0),
                         left_ankle=(0, 0, 0))
        assert inter_limb_angle(pose, topo, "femur_L", "tibia_L") == pytest.approx(
            math.pi)

    def test_symmetric_in_arguments(self, topo, rng):
        pos = rng.normal(0, 1, (topo.n_joints, 3))
        pose = Pose(pos)
        limbs = list(topo.limbs)
        for i in range(len(limbs)):
            for j in range(i + 1, len(limbs)):
                a = inter_limb_angle(pose, topo, limbs[i], limbs[j])
                b = inter_limb_angle(pose, topo, limbs[j], limbs[i])
                assert a == pytest.approx(b, abs=1e-12)


class TestHumerothoracicElevation:
    def test_arm_at_side(self, topo):
        pose = make_pose(topo, left_shoulder=(0, 0, 0), left_elbow=(0, 1, 0),
                         left_hip=(0, 2, 0))
        assert humerothoracic_elevation(pose, topo, "L") == pytest.approx(0.0)

    def test_arm_horizontal(self, topo):
        pose = make_pose(topo, left_shoulder=(0, 0, 0), left_elbow=(1, 0, 0),
                         left_hip=(0, 2, 0))
        assert humerothoracic_elevation(pose, topo, "L") == pytest.approx(math.pi / 2)

    def test_arm_overhead(self, topo):
        pose = make_pose(topo, left_shoulder=(0, 0, 0), left_elbow=(0, -1, 0),
                         left_hip=(0, 2, 0))
        assert humerothoracic_elevation(pose, topo, "L") == pytest.approx(math.pi)

    def test_invariant_under_rigid_motion(self, topo, standing_positions, rng):
        pose = Pose(standing_positions)
        base = humerothoracic_elevation(pose, topo, "R")
        # random rotation + translation
        theta = rng.uniform(0, 2 * math.pi)
        axis = rng.normal(0, 1, 3)
        axis /= np.linalg.norm(axis)
        k = np.array([[0, -axis[2], axis[1]],
                      [axis[2], 0, -axis[0]],
                      [-axis[1], axis[0], 0]])
        rot = np.eye(3) + math.sin(theta) * k + (1 - math.cos(theta)) * (k @ k)
        moved = Pose(standing_positions @ rot.T + rng.normal(0, 5, 3))
        assert humerothoracic_elevation(moved, topo, "R") == pytest.approx(base, abs=1e-9)

    def test_unknown_side(self, topo, standing_positions):
        with pytest.raises(TopologyError):
            humerothoracic_elevation(Pose(standing_positions), topo, "X")
