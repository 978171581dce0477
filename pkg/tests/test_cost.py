import math

import numpy as np
import pytest

from skelfuse.bones import BoneModel, TorsoAdjustmentModel
from skelfuse.camera import CameraModel, LosFrame, build_los, project_to_normalized
from skelfuse.cost import (
    CostContext,
    CostWeights,
    bone_cost,
    cost_gradient,
    finite_difference_gradient,
    los_cost,
    multi_bone_cost,
    total_cost,
    visibility_weight,
    world_cost,
)
from skelfuse.synth import MotionScript, SubjectDims, generate, skeleton_positions, _script_pose
from skelfuse.topology import Pose, SkeletonTopology, default_topology


def standing(topo, subject=None):
    script = MotionScript(kind="static", duration_s=1.0, subject=subject or SubjectDims())
    return skeleton_positions(_script_pose(script, 0.0), script.subject, topo)


def truth_context(topo, camera, weights=None, subject=None, **kwargs):
    """Context whose global minimum is the standing truth pose itself."""
    subject = subject or SubjectDims()
    cam_pos = standing(topo, subject)
    world = cam_pos - topo.hip_midpoint(cam_pos)
    norm = project_to_normalized(cam_pos, camera)
    los = build_los(norm, camera, np.ones(topo.n_joints))
    model = BoneModel.from_initial(topo)
    truth = subject.true_ratios()
    for key, st in model.segments.items():
        st.estimate = truth[key]
    ctx = CostContext(world, los, model, topo, weights=weights, **kwargs)
    return ctx, world


def random_context(topo, camera, rng, torso_identity=False, boost=False):
    seq = generate(MotionScript(kind="squat", duration_s=2.0), camera,
                   seed=int(rng.integers(0, 10_000)))
    base = seq.camera_positions[int(rng.integers(0, len(seq.truth_frames)))]
    world = base - base.mean(axis=0) + rng.normal(0, 0.05, base.shape)
    los = build_los(np.clip(rng.normal(0.5, 0.15, (topo.n_joints, 2)), -0.4, 1.4),
                    camera, rng.uniform(0.2, 1.0, topo.n_joints))
    model = BoneModel.from_initial(topo)
    for st in model.segments.values():
        st.estimate *= rng.uniform(0.9, 1.1)
    torso = TorsoAdjustmentModel.identity() if torso_identity else TorsoAdjustmentModel({
        "spine": [1.0, -0.05, 0.01],
        "lateral_trunk": [1.0, 0.03],
        "shoulder_width": [1.0, -0.02, 0.005]})
    weights = CostWeights(
        w_world=rng.uniform(0.5, 2), w_los=rng.uniform(0.5, 4),
        w_bone=rng.uniform(0.5, 3), w_multi=rng.uniform(0.5, 2),
        lambda_rel=rng.uniform(0.5, 2), lambda_abs=rng.uniform(0.5, 1.5),
        lambda_los=rng.uniform(0.5, 1.5), lambda_vis=rng.uniform(1, 4),
        lambda_bone=rng.uniform(5, 15))
    ctx = CostContext(world, los, model, topo, weights=weights, torso_model=torso,
                      stability_boost_active=boost)
    pose = Pose(world + rng.normal(0, 0.08, world.shape))
    return ctx, pose


class TestWorldCost:
    def test_self_consistency_zero(self, topo, camera):
        ctx, world = truth_context(topo, camera)
        assert world_cost(Pose(world), ctx) == pytest.approx(0.0, abs=1e-18)

    def test_rigid_rotation_preserves_relative_only(self, topo, camera):
        # 90 degrees about the camera z-axis: relative angles survive,
        # absolute orientation does not.
        ctx, world = truth_context(topo, camera)
        rot = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        rotated = Pose(world @ rot.T)
        w = ctx.weights
        total = world_cost(rotated, ctx)
        # J_rel contribution alone, recomputed with lambda_rel scaled out:
        # rotating rigidly leaves inter-limb angles identical, so the whole
        # residual must come from the absolute term.
        eng = ctx.engine
        e = rotated.positions[eng.dist] - rotated.positions[eng.prox]
        unit = e / np.linalg.norm(e, axis=1, keepdims=True)
        cosd = np.einsum("ij,ij->i", unit[eng.pair_i], unit[eng.pair_j])
        alpha = np.arccos(np.clip(cosd, -1, 1))
        j_rel = 2.0 * w.lambda_rel * float(np.sum((ctx.world_pair_angle - alpha) ** 2))
        assert j_rel == pytest.approx(0.0, abs=1e-12)
        assert total > 0.1

    def test_three_limb_toy_matches_term_by_term_summation(self):
        # Oracle: spreadsheet-style evaluation of the relative and absolute
        # terms over the ordered adjacent pair set.
        topo = SkeletonTopology(
            joints=("a", "b", "c", "d"),
            limbs={"l1": ("a", "b"), "l2": ("b", "c"), "l3": ("c", "d")},
            rigid_bones=(), multi_segments={}, body_angles={}, elevation_joints={})
        world = np.array([[0.0, 0, 0], [1.0, 0, 0], [1.0, 1.0, 0], [2.0, 1.0, 0]])
        pose = world.copy()
        bend = math.radians(10.0)
        # bend limb l3 by 10 degrees in-plane around c
        pose[3] = pose[2] + np.array([math.cos(bend), math.sin(bend), 0.0])
        lam1, lam2 = 1.3, 0.9
        weights = CostWeights(lambda_rel=lam1, lambda_abs=lam2)
        los = LosFrame(np.tile([0.0, 0.0, 1.0], (4, 1)), np.ones(4), np.zeros(4, bool))
        ctx = CostContext(world, los, BoneModel(segments={}), topo, weights=weights)

        def limb(arr, name):
            p, d = topo.limb_indices(name)
            return arr[d] - arr[p]

        def ang(u, v):
            return math.acos(np.clip(np.dot(u, v) / np.linalg.norm(u)
                                     / np.linalg.norm(v), -1, 1))

        names = ["l1", "l2", "l3"]
        adjacent = {("l1", "l2"), ("l2", "l1"), ("l2", "l3"), ("l3", "l2")}
        expected = 0.0
        for i in names:
            for j in names:
                if i != j and (i, j) in adjacent:
                    expected += lam1 * (ang(limb(world, i), limb(world, j))
                                        - ang(limb(pose, i), limb(pose, j))) ** 2
            wk, k = limb(world, i), limb(pose, i)
            xi = np.dot(wk, k) / np.linalg.norm(wk) / np.linalg.norm(k)
            expected += (1.0 - lam2 * xi) ** 2
        assert world_cost(Pose(pose), ctx) == pytest.approx(expected, rel=1e-12)


class TestLosCost:
    def test_visibility_weight_at_one(self):
        assert visibility_weight(1.0, 3.0) == pytest.approx(1.0)

    def test_visibility_weight_at_zero_hand_value(self):
        # Oracle: 1/2 + 1/2 e^{-3} = 0.52489...
        assert visibility_weight(0.0, 3.0) == pytest.approx(0.5249, abs=1e-4)

    def test_zero_on_rays_full_visibility(self, topo, camera):
        ctx, world = truth_context(topo, camera)
        assert los_cost(Pose(world), ctx) == pytest.approx(0.0, abs=1e-18)

    def test_displaced_joint_matches_hand_evaluation(self, topo, camera):
        # Oracle: scalar arithmetic on a single perturbed joint's term.
        ctx, world = truth_context(topo, camera)
        pose = world.copy()
        j = topo.joint_index("left_wrist")
        x = pose[j] + ctx.camera_offset
        r = np.linalg.norm(x)
        perp = np.cross(x / r, [0.0, 0.0, 1.0])
        perp /= np.linalg.norm(perp)
        target_xi = 0.99
        # displace perpendicular to the ray so that cos(angle) = 0.99
        pose[j] = (x + perp * r * math.tan(math.acos(target_xi))) - ctx.camera_offset
        k = topo.n_joints
        f = 1.0  # visibility 1, lambda_vis default
        expect = ((1.0 - f * target_xi) ** 2) / k
        assert los_cost(Pose(pose), ctx) == pytest.approx(expect, rel=1e-9)


class TestBoneCost:
    def test_zero_at_target_ratios(self, topo, camera):
        ctx, world = truth_context(topo, camera)
        assert bone_cost(Pose(world), ctx) == pytest.approx(0.0, abs=1e-16)

    def test_scale_invariance(self, topo, camera, rng):
        ctx, pose = random_context(topo, camera, rng)
        a = bone_cost(pose, ctx)
        b = bone_cost(Pose(2.0 * pose.positions), ctx)
        assert a == pytest.approx(b, rel=1e-12)

    def test_femur_offset_hand_arithmetic(self, topo, camera):
        # Oracle: (10 * 0.01)^2 / 9 = 0.0011111... with one bone ratio off
        # by +0.01 and all others exact.
        ctx, world = truth_context(topo, camera)
        ctx.rigid_targets = ctx.rigid_targets.copy()
        idx = list(topo.rigid_bones).index("femur_L")
        ctx.rigid_targets[idx] -= 0.01
        assert bone_cost(Pose(world), ctx) == pytest.approx((10 * 0.01) ** 2 / 9,
                                                            abs=1e-9)

    def test_rigid_motion_invariance(self, topo, camera, rng):
        ctx, pose = random_context(topo, camera, rng)
        theta = 0.7
        rot = np.array([[math.cos(theta), -math.sin(theta), 0],
                        [math.sin(theta), math.cos(theta), 0], [0, 0, 1.0]])
        moved = Pose(pose.positions @ rot.T + np.array([0.3, -0.2, 0.5]))
        assert bone_cost(moved, ctx) == pytest.approx(bone_cost(pose, ctx), rel=1e-12)
        assert multi_bone_cost(moved, ctx) == pytest.approx(
            multi_bone_cost(pose, ctx), rel=1e-9)


class TestMultiBoneCost:
    def test_zero_with_identity_polynomials_at_targets(self, topo, camera):
        ctx, world = truth_context(topo, camera)
        assert multi_bone_cost(Pose(world), ctx) == pytest.approx(0.0, abs=1e-16)

    def test_spine_offset_hand_arithmetic(self, topo, camera):
        # Oracle: 0.02^2 / 4 = 1e-4 for one segment ratio off by 0.02.
        ctx, world = truth_context(topo, camera)
        ctx.multi_targets = ctx.multi_targets.copy()
        idx = list(topo.multi_segments).index("spine")
        ctx.multi_targets[idx] += 0.02
        assert multi_bone_cost(Pose(world), ctx) == pytest.approx(1e-4, abs=1e-12)

    def test_constructed_polynomial_cancellation(self, camera):
        # u(m*, beta) = m*(1 - 0.1 beta/pi); arms exactly overhead (beta = pi
        # requires hips directly below the shoulders) and pose spine shrunk
        # to 0.9 m*: the spine term contributes exactly zero.
        topo = default_topology()
        torso = TorsoAdjustmentModel({"spine": [1.0, -0.1 / math.pi]})

        def build(spine_scale):
            pos = np.zeros((topo.n_joints, 3))
            z = 2.5
            spine = 0.48 * spine_scale
            put = lambda name, x, y: pos.__setitem__(topo.joint_index(name),
                                                     [x, y, z])
            for sx, side in ((+0.16, "left"), (-0.16, "right")):
                put(f"{side}_hip", sx, 0.0)
                put(f"{side}_shoulder", sx, -spine)
                put(f"{side}_elbow", sx, -spine - 0.26)   # straight up
                put(f"{side}_wrist", sx, -spine - 0.26 - 0.22)
                put(f"{side}_knee", sx, 0.38)
                put(f"{side}_ankle", sx, 0.38 + 0.34)
            return pos

        world = build(1.0)
        los = build_los(project_to_normalized(world, camera), camera,
                        np.ones(topo.n_joints))
        model = BoneModel.from_initial(topo)
        # targets measured from the reference pose itself
        eng_lengths = lambda p: np.linalg.norm(
            p[[topo.joint_index(topo.limbs[b][1]) for b in topo.rigid_bones]]
            - p[[topo.joint_index(topo.limbs[b][0]) for b in topo.rigid_bones]], axis=1)
        total_len = eng_lengths(world).sum()
        from skelfuse.topology import segment_length
        for key, group in topo.rigid_bone_groups().items():
            p_i, d_i = topo.limb_indices(group[0])
            model.segments[key].estimate = float(
                np.linalg.norm(world[d_i] - world[p_i])) / total_len
        for key, group in topo.multi_segment_groups().items():
            model.segments[key].estimate = segment_length(world, topo, group[0]) / total_len

        ctx = CostContext(world - topo.hip_midpoint(world), los, model, topo,
                          torso_model=torso)
        pose = Pose(build(0.9) - topo.hip_midpoint(build(0.9)))
        _, bd = total_cost(pose, ctx)
        assert bd["beta_l"] == pytest.approx(math.pi, abs=1e-9)
        assert bd["beta_r"] == pytest.approx(math.pi, abs=1e-9)
        # spine measured ratio equals the adjusted expectation exactly
        spine_idx = list(topo.multi_segments).index("spine")
        m_spine = segment_length(pose.positions, topo, "spine") / eng_lengths(
            pose.positions).sum()
        u_spine = ctx.multi_targets[spine_idx] * (1.0 - 0.1 * bd["beta_l"] / math.pi)
        assert m_spine == pytest.approx(u_spine, abs=1e-12)
        # ... so the multi cost equals the hand-sum of the other three terms
        factors = np.array([ctx.torso_model.combined_factor(s, bd["beta_l"], bd["beta_r"])
                            for s in topo.multi_segments])
        m_all = np.array([segment_length(pose.positions, topo, s)
                          for s in topo.multi_segments]) / eng_lengths(pose.positions).sum()
        expect = float(np.mean((m_all - ctx.multi_targets * factors) ** 2))
        assert multi_bone_cost(pose, ctx) == pytest.approx(expect, rel=1e-12)


class TestTotalCost:
    def test_all_weights_zero(self, topo, camera, rng):
        ctx, pose = random_context(topo, camera, rng)
        ctx.weights = CostWeights(w_world=0, w_los=0, w_bone=0, w_multi=0)
        value, _ = total_cost(pose, ctx)
        assert value == 0.0

    def test_single_weight_isolates_subcost(self, topo, camera, rng):
        ctx, pose = random_context(topo, camera, rng)
        ctx.weights = CostWeights(w_world=1, w_los=0, w_bone=0, w_multi=0)
        ctx.stability_boost_active = False
        value, _ = total_cost(pose, ctx)
        assert value == pytest.approx(world_cost(pose, ctx), rel=1e-12)

    def test_random_equals_weighted_sum_of_subcosts(self, topo, camera, rng):
        # Oracle: compositional check against independently evaluated terms.
        for _ in range(5):
            ctx, pose = random_context(topo, camera, rng, boost=bool(rng.integers(2)))
            ww, ws, wb, wm = ctx.effective_weights()
            expect = (ww * world_cost(pose, ctx) + ws * los_cost(pose, ctx)
                      + wb * bone_cost(pose, ctx) + wm * multi_bone_cost(pose, ctx))
            value, bd = total_cost(pose, ctx)
            assert value == pytest.approx(expect, abs=1e-12 * max(1, abs(expect)))
            assert value >= 0.0
            for term in ("world", "los", "bone", "multi"):
                assert bd[term] >= 0.0

    def test_stability_boost_scales_bone_terms(self, topo, camera, rng):
        ctx, pose = random_context(topo, camera, rng)
        ctx.stability_boost_active = False
        base, bd0 = total_cost(pose, ctx)
        ctx.stability_boost_active = True
        boosted, bd1 = total_cost(pose, ctx)
        w = ctx.weights
        expect = base + (w.stability_boost - 1) * (
            w.w_bone * bd0["bone"] + w.w_multi * bd0["multi"])
        assert boosted == pytest.approx(expect, rel=1e-12)


class TestGradient:
    def test_stationary_at_consistent_truth(self, topo, camera):
        ctx, world = truth_context(topo, camera)
        g = cost_gradient(Pose(world), ctx)
        assert np.linalg.norm(g) < 1e-6

    def test_matches_central_differences_on_random_samples(self, topo, camera, rng):
        worst = 0.0
        for i in range(20):
            ctx, pose = random_context(topo, camera, rng,
                                       torso_identity=(i % 3 == 0),
                                       boost=(i % 2 == 0))
            ga = cost_gradient(pose, ctx)
            gf = finite_difference_gradient(pose, ctx, h=1e-6)
            rel = np.max(np.abs(ga - gf)) / max(np.max(np.abs(gf)), 1e-8)
            worst = max(worst, rel)
        assert worst < 1e-4

    def test_isolated_joint_zero_gradient_without_los(self):
        # A joint in no limb and no bone only feels the line-of-sight pull;
        # with w_los = 0 its gradient must vanish.
        topo = SkeletonTopology(
            joints=("a", "b", "lonely"),
            limbs={"pelvis": ("a", "b")},
            rigid_bones=("pelvis",),
            multi_segments={}, body_angles={}, elevation_joints={})
        world = np.array([[0.0, 0, 0], [0.3, 0, 0], [0.1, 0.5, 0.2]])
        los = LosFrame(np.tile([0.0, 0.0, 1.0], (3, 1)), np.ones(3), np.zeros(3, bool))
        model = BoneModel.from_initial(topo)
        ctx = CostContext(world, los, model, topo,
                          weights=CostWeights(w_los=0.0))
        pose = Pose(world + np.array([[0.01, 0, 0], [0, 0.01, 0], [0.05, -0.04, 0.03]]))
        g = cost_gradient(pose, ctx)
        assert np.allclose(g[2], 0.0, atol=1e-15)
