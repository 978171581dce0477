"""Total refinement cost and its gradient for a candidate pose.

Four weighted terms are summed per frame:

- world likeliness: keeps the candidate's limb geometry close to the 3D
  estimate, split into a relative part (squared differences of inter-limb
  angles) and an absolute part (limb direction agreement via the
  normalized scalar product),
- line of sight: pulls each joint onto the unit ray through its normalized
  2D landmark, trusting highly visible landmarks more,
- bone ratios: penalizes rigid-bone length ratios that deviate from the
  Kalman-refined bone model,
- multi-segment ratios: the same for torso segments, with the expected
  ratio adjusted for the candidate's arm elevation angles.

Ratios are scale-free (lengths normalized by the summed fixed-bone
length), so the bone terms are invariant under uniform scaling and rigid
motion of the pose.

Gradients are analytic; a central finite-difference path is provided as an
independent check and fallback. Gradient scatter from limbs/segments back
to joints uses precomputed incidence matrices, which keeps the per-frame
evaluation loop allocation-light.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bones import BoneModel, TorsoAdjustmentModel
from .camera import LosFrame
from .errors import FrameError
from .topology import Pose, SkeletonTopology

EPS = 1e-12
COST_SENTINEL = 1e12  # large finite stand-in for "infinite"; keeps line searches sane
DEFAULT_CAMERA_OFFSET = (0.0, 0.0, 2.5)


@dataclass(frozen=True)
class CostWeights:
    w_world: float = 1.0
    w_los: float = 4.0
    w_bone: float = 2.0
    w_multi: float = 1.0
    lambda_rel: float = 1.0         # relative-angle scale
    lambda_abs: float = 1.0         # absolute-orientation scale
    lambda_los: float = 1.0         # line-of-sight scale
    lambda_vis: float = 3.0         # visibility weighting sharpness
    lambda_bone: float = 10.0       # bone-ratio scale
    stability_boost: float = 2.0    # multiplies w_bone/w_multi once ratios settle
    stability_horizon: int = 60     # stable frames before the boost engages

    def __post_init__(self):
        for name in ("w_world", "w_los", "w_bone", "w_multi"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("lambda_rel", "lambda_abs", "lambda_los", "lambda_vis", "lambda_bone"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.stability_boost < 1.0:
            raise ValueError("stability_boost must be >= 1")


def visibility_weight(visibility, sharpness: float):
    """Trust factor in (1/2, 1]: 1 at full visibility, decaying toward 1/2."""
    v = np.asarray(visibility, dtype=np.float64)
    return 0.5 + 0.5 * np.exp(-sharpness * (1.0 - v))


class CostEngine:
    """Precomputed index/incidence structure for one topology."""

    def __init__(self, topology: SkeletonTopology, pair_mode: str = "adjacent"):
        if pair_mode not in ("adjacent", "all"):
            raise ValueError("pair_mode must be 'adjacent' or 'all'")
        self.topology = topology
        self.pair_mode = pair_mode
        n_joints = topology.n_joints

        limb_names = list(topology.limbs)
        self.limb_names = limb_names
        self.prox = np.array([topology.limb_indices(l)[0] for l in limb_names], dtype=np.intp)
        self.dist = np.array([topology.limb_indices(l)[1] for l in limb_names], dtype=np.intp)
        self.n_limbs = len(limb_names)

        # Joint-from-limb incidence: grad_joints += incidence @ grad_limb_vec.
        self.limb_incidence = np.zeros((n_joints, self.n_limbs))
        for l in range(self.n_limbs):
            self.limb_incidence[self.dist[l], l] += 1.0
            self.limb_incidence[self.prox[l], l] -= 1.0

        joint_sets = [set(topology.limbs[l]) for l in limb_names]
        pairs = [(i, j) for i in range(self.n_limbs) for j in range(i + 1, self.n_limbs)
                 if pair_mode == "all" or joint_sets[i] & joint_sets[j]]
        self.pair_i = np.array([p[0] for p in pairs], dtype=np.intp)
        self.pair_j = np.array([p[1] for p in pairs], dtype=np.intp)
        n_pairs = len(pairs)
        # Limb-from-pair incidences for the two pair slots.
        self.pair_sel_i = np.zeros((self.n_limbs, n_pairs))
        self.pair_sel_j = np.zeros((self.n_limbs, n_pairs))
        for k, (i, j) in enumerate(pairs):
            self.pair_sel_i[i, k] = 1.0
            self.pair_sel_j[j, k] = 1.0

        self.rigid_idx = np.array([limb_names.index(b) for b in topology.rigid_bones],
                                  dtype=np.intp)
        self.rigid_names = list(topology.rigid_bones)
        self.rigid_incidence = self.limb_incidence[:, self.rigid_idx]

        self.multi_names = list(topology.multi_segments)
        ends = [topology.segment_endpoint_indices(s) for s in self.multi_names]
        n_multi = len(self.multi_names)
        # Joint-from-segment incidence with midpoint weights baked in.
        self.multi_incidence = np.zeros((n_joints, n_multi))
        for m, ((a1, a2), (b1, b2)) in enumerate(ends):
            self.multi_incidence[b1, m] += 0.5
            self.multi_incidence[b2, m] += 0.5
            self.multi_incidence[a1, m] -= 0.5
            self.multi_incidence[a2, m] -= 0.5
        self.multi_ends = ends

        self.elev = {side: tuple(topology.joint_index(j) for j in triple)
                     for side, triple in topology.elevation_joints.items()}

    def limb_vectors(self, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        e = positions[self.dist] - positions[self.prox]
        return e, np.linalg.norm(e, axis=1)

    def segment_vectors(self, positions: np.ndarray) -> np.ndarray:
        # multi_incidence.T has +/-0.5 at endpoint joints, so this is
        # exactly midpoint(b) - midpoint(a) per segment.
        return self.multi_incidence.T @ positions


class CostContext:
    """Per-frame bundle of everything the cost needs besides the candidate pose.

    All components refer to the same frame timestamp. Instances are
    immutable by convention and safe to share across threads.
    """

    def __init__(self, world: np.ndarray, los: LosFrame, bone_model: BoneModel,
                 topology: SkeletonTopology, weights: CostWeights | None = None,
                 torso_model: TorsoAdjustmentModel | None = None,
                 camera_offset=DEFAULT_CAMERA_OFFSET,
                 stability_boost_active: bool = False,
                 engine: CostEngine | None = None,
                 pair_mode: str = "adjacent"):
        self.engine = engine or CostEngine(topology, pair_mode=pair_mode)
        self.topology = topology
        self.world = np.asarray(world, dtype=np.float64)
        self.los = los
        self.weights = weights or CostWeights()
        self.torso_model = torso_model or TorsoAdjustmentModel.identity()
        self.camera_offset = np.asarray(camera_offset, dtype=np.float64)
        self.stability_boost_active = bool(stability_boost_active)

        eng = self.engine
        w_e, w_n = eng.limb_vectors(self.world)
        self.world_limb_valid = w_n > EPS
        self.world_limb_unit = np.zeros_like(w_e)
        self.world_limb_unit[self.world_limb_valid] = (
            w_e[self.world_limb_valid] / w_n[self.world_limb_valid, None])

        ci = eng.pair_i
        cj = eng.pair_j
        cosw = np.einsum("ij,ij->i", self.world_limb_unit[ci], self.world_limb_unit[cj])
        self.pair_valid_world = self.world_limb_valid[ci] & self.world_limb_valid[cj]
        self.world_pair_angle = np.arccos(np.clip(cosw, -1.0, 1.0))

        self.vis_weight = visibility_weight(los.visibility, self.weights.lambda_vis)
        self.los_fac = self.weights.lambda_los * self.vis_weight
        self.rigid_targets = bone_model.rigid_targets(topology)
        self.multi_targets = bone_model.multi_targets(topology)

        # Torso adjustment, vectorized over segments: each segment's factor
        # is wl*g(beta_L) + wr*g(beta_R) for a per-segment polynomial g.
        model = self.torso_model
        self.torso_identity = not model.coefficients
        if not self.torso_identity:
            polys = []
            side_w = []
            for seg in eng.multi_names:
                key = SkeletonTopology.pair_key(seg) or seg
                polys.append(model._poly(key))
                if key == "lateral_trunk":
                    side_w.append((1.0, 0.0) if seg.endswith("_L") else (0.0, 1.0))
                else:
                    side_w.append((0.5, 0.5))
            k = max(p.size for p in polys)
            self.torso_coeffs = np.zeros((len(polys), k))
            for i, p in enumerate(polys):
                self.torso_coeffs[i, :p.size] = p
            self.torso_dcoeffs = self.torso_coeffs[:, 1:] * np.arange(1, k)
            self.torso_side_w = np.asarray(side_w)

    def effective_weights(self) -> tuple[float, float, float, float]:
        w = self.weights
        boost = w.stability_boost if self.stability_boost_active else 1.0
        return w.w_world, w.w_los, w.w_bone * boost, w.w_multi * boost

    def torso_factors(self, beta_l: float, beta_r: float, with_derivative: bool):
        """(factors, d/d beta_l, d/d beta_r) arrays over multi-segments."""
        n = len(self.engine.multi_names)
        if self.torso_identity:
            zeros = np.zeros(n)
            return np.ones(n), zeros, zeros
        k = self.torso_coeffs.shape[1]
        pl = np.power(beta_l, np.arange(k))
        pr = np.power(beta_r, np.arange(k))
        gl = self.torso_coeffs @ pl
        gr = self.torso_coeffs @ pr
        wl = self.torso_side_w[:, 0]
        wr = self.torso_side_w[:, 1]
        factors = wl * gl + wr * gr
        if not with_derivative:
            zeros = np.zeros(n)
            return factors, zeros, zeros
        dgl = self.torso_dcoeffs @ pl[: k - 1] if k > 1 else np.zeros(n)
        dgr = self.torso_dcoeffs @ pr[: k - 1] if k > 1 else np.zeros(n)
        return factors, wl * dgl, wr * dgr


def _elevation(ctx: CostContext, positions: np.ndarray, side: str) -> dict:
    if side not in ctx.engine.elev:
        return {"beta": 0.0, "valid": False}
    s_idx, e_idx, h_idx = ctx.engine.elev[side]
    h_vec = positions[e_idx] - positions[s_idx]
    t_vec = positions[h_idx] - positions[s_idx]
    nh = math.sqrt(h_vec @ h_vec)
    nt = math.sqrt(t_vec @ t_vec)
    if nh <= EPS or nt <= EPS:
        return {"beta": 0.0, "valid": False}
    c = float(h_vec @ t_vec / (nh * nt))
    c = min(1.0, max(-1.0, c))
    return {"beta": math.acos(c), "valid": True, "c": c,
            "h_vec": h_vec, "t_vec": t_vec, "nh": nh, "nt": nt,
            "s_idx": s_idx, "e_idx": e_idx, "h_idx": h_idx}


def _world_cost(ctx: CostContext, e, n, valid, grad: np.ndarray | None):
    eng = ctx.engine
    w = ctx.weights
    unit = np.zeros_like(e)
    unit[valid] = e[valid] / n[valid, None]

    # Absolute orientation: (1 - lambda_abs * xi(world_limb, limb))^2 per
    # limb, with xi = 0 when either side is degenerate.
    xi = np.zeros(eng.n_limbs)
    both = valid & ctx.world_limb_valid
    xi[both] = np.einsum("ij,ij->i", ctx.world_limb_unit[both], unit[both])
    res_abs = 1.0 - w.lambda_abs * xi
    j_abs = float(res_abs @ res_abs)

    # Relative orientation: squared inter-limb angle differences; the
    # ordered double sum counts every unordered pair twice.
    ci, cj = eng.pair_i, eng.pair_j
    pair_ok = ctx.pair_valid_world & valid[ci] & valid[cj]
    cosc = np.einsum("ij,ij->i", unit[ci], unit[cj])
    cosc = np.clip(cosc, -1.0, 1.0)
    alpha = np.arccos(cosc)
    d_alpha = np.where(pair_ok, ctx.world_pair_angle - alpha, 0.0)
    j_rel = 2.0 * w.lambda_rel * float(d_alpha @ d_alpha)

    if grad is not None:
        ge = np.zeros_like(e)
        coef = np.where(both, -2.0 * res_abs * w.lambda_abs, 0.0)
        inv_n = np.where(valid, 1.0 / np.where(valid, n, 1.0), 0.0)
        # d xi / d e = w_hat/n - xi e/n^2
        ge += coef[:, None] * (ctx.world_limb_unit * inv_n[:, None]
                               - xi[:, None] * unit * inv_n[:, None])

        if ci.size:
            s = np.sqrt(np.maximum(1.0 - cosc ** 2, EPS))
            dcost_dcos = np.where(pair_ok, 4.0 * w.lambda_rel * d_alpha / s, 0.0)
            ui, uj = unit[ci], unit[cj]
            inv_i, inv_j = inv_n[ci], inv_n[cj]
            dcos_dei = (uj - cosc[:, None] * ui) * inv_i[:, None]
            dcos_dej = (ui - cosc[:, None] * uj) * inv_j[:, None]
            ge += eng.pair_sel_i @ (dcost_dcos[:, None] * dcos_dei)
            ge += eng.pair_sel_j @ (dcost_dcos[:, None] * dcos_dej)

        grad += eng.limb_incidence @ ge

    return j_rel + j_abs


def _los_cost(ctx: CostContext, positions: np.ndarray, grad: np.ndarray | None):
    x = positions + ctx.camera_offset
    r = np.linalg.norm(x, axis=1)
    ok = r > EPS
    xi = np.zeros(positions.shape[0])
    v = ctx.los.directions
    inv_r = np.where(ok, 1.0 / np.where(ok, r, 1.0), 0.0)
    xi = np.einsum("ij,ij->i", x, v) * inv_r
    fac = ctx.los_fac
    res = 1.0 - fac * xi
    k = positions.shape[0]
    j_s = float(res @ res) / k

    if grad is not None:
        coef = (-2.0 / k) * res * fac * inv_r
        grad += coef[:, None] * (v - (xi * inv_r)[:, None] * x)
    return j_s


def _bone_and_multi_cost(ctx: CostContext, positions: np.ndarray, e, n,
                         grad_bone: np.ndarray | None, grad_multi: np.ndarray | None):
    eng = ctx.engine
    w = ctx.weights
    lengths = n[eng.rigid_idx]
    total = float(np.sum(lengths))
    if total <= EPS:
        return COST_SENTINEL, COST_SENTINEL, (0.0, 0.0)

    r_count = lengths.size
    b = lengths / total
    diff_b = b - ctx.rigid_targets
    j_b = (w.lambda_bone ** 2) * float(diff_b @ diff_b) / r_count

    with_grad = grad_multi is not None
    ev_l = _elevation(ctx, positions, "L")
    ev_r = _elevation(ctx, positions, "R")
    beta_l, beta_r = ev_l["beta"], ev_r["beta"]

    g_vec = eng.segment_vectors(positions)
    g_len = np.linalg.norm(g_vec, axis=1)
    m = g_len / total
    m_count = m.size
    factors, dfac_l, dfac_r = ctx.torso_factors(beta_l, beta_r, with_grad)
    u = ctx.multi_targets * factors
    diff_m = m - u
    j_m = float(diff_m @ diff_m) / m_count if m_count else 0.0

    rigid_ok = lengths > EPS
    if grad_bone is not None or with_grad:
        unit = np.zeros((r_count, 3))
        unit[rigid_ok] = e[eng.rigid_idx][rigid_ok] / lengths[rigid_ok, None]

    if grad_bone is not None:
        q = (2.0 * w.lambda_bone ** 2 / r_count) * diff_b
        # d b_r / d L_m = delta/total - L_r/total^2
        djdL = q / total - float(q @ b) / total
        grad_bone += eng.rigid_incidence @ (djdL[:, None] * unit)

    if with_grad and m_count:
        p = (2.0 / m_count) * diff_m
        # Through the segment lengths.
        seg_ok = g_len > EPS
        ghat = np.zeros_like(g_vec)
        ghat[seg_ok] = g_vec[seg_ok] / g_len[seg_ok, None]
        grad_multi += eng.multi_incidence @ ((p / total)[:, None] * ghat)
        # Through the shared fixed-bone sum.
        djdL_m = -float(p @ m) / total
        grad_multi += eng.rigid_incidence @ (djdL_m * unit)
        # Through the elevation angles inside the adjustment polynomials.
        if not ctx.torso_identity:
            for ev, dfac in ((ev_l, dfac_l), (ev_r, dfac_r)):
                dj_dbeta = -float(p @ (ctx.multi_targets * dfac))
                if dj_dbeta == 0.0 or not ev["valid"]:
                    continue
                s = math.sqrt(max(1.0 - ev["c"] ** 2, EPS))
                dbeta_dc = -1.0 / s
                h_vec, t_vec, nh, nt, c = (ev["h_vec"], ev["t_vec"],
                                           ev["nh"], ev["nt"], ev["c"])
                dc_dh = t_vec / (nh * nt) - c * h_vec / nh ** 2
                dc_dt = h_vec / (nh * nt) - c * t_vec / nt ** 2
                gh = dj_dbeta * dbeta_dc * dc_dh
                gt = dj_dbeta * dbeta_dc * dc_dt
                grad_multi[ev["e_idx"]] += gh
                grad_multi[ev["h_idx"]] += gt
                grad_multi[ev["s_idx"]] -= gh + gt

    return j_b, j_m, (beta_l, beta_r)


def _evaluate(ctx: CostContext, positions: np.ndarray, with_grad: bool,
              with_breakdown: bool = True):
    e, n = ctx.engine.limb_vectors(positions)
    valid = n > EPS
    gw = np.zeros_like(positions) if with_grad else None
    gs = np.zeros_like(positions) if with_grad else None
    gb = np.zeros_like(positions) if with_grad else None
    gm = np.zeros_like(positions) if with_grad else None

    j_w = _world_cost(ctx, e, n, valid, gw)
    j_s = _los_cost(ctx, positions, gs)
    j_b, j_m, betas = _bone_and_multi_cost(ctx, positions, e, n, gb, gm)

    for name, value in (("world", j_w), ("los", j_s), ("bone", j_b), ("multi", j_m)):
        if not math.isfinite(value):
            raise FrameError(f"non-finite {name} cost")

    ww, ws, wb, wm = ctx.effective_weights()
    total = ww * j_w + ws * j_s + wb * j_b + wm * j_m
    breakdown = None
    if with_breakdown:
        breakdown = {
            "world": j_w, "los": j_s, "bone": j_b, "multi": j_m,
            "total": total, "beta_l": betas[0], "beta_r": betas[1],
            "weights": {"world": ww, "los": ws, "bone": wb, "multi": wm},
        }
    if not with_grad:
        return total, breakdown, None
    grad = ww * gw + ws * gs + wb * gb + wm * gm
    return total, breakdown, grad


def world_cost(pose: Pose, ctx: CostContext) -> float:
    e, n = ctx.engine.limb_vectors(pose.positions)
    return _world_cost(ctx, e, n, n > EPS, None)


def los_cost(pose: Pose, ctx: CostContext) -> float:
    return _los_cost(ctx, pose.positions, None)


def bone_cost(pose: Pose, ctx: CostContext) -> float:
    e, n = ctx.engine.limb_vectors(pose.positions)
    j_b, _, _ = _bone_and_multi_cost(ctx, pose.positions, e, n, None, None)
    return j_b


def multi_bone_cost(pose: Pose, ctx: CostContext) -> float:
    e, n = ctx.engine.limb_vectors(pose.positions)
    _, j_m, _ = _bone_and_multi_cost(ctx, pose.positions, e, n, None, None)
    return j_m


def total_cost(pose: Pose, ctx: CostContext) -> tuple[float, dict]:
    total, breakdown, _ = _evaluate(ctx, pose.positions, with_grad=False)
    return total, breakdown


def cost_gradient(pose: Pose, ctx: CostContext) -> np.ndarray:
    """Analytic gradient of the total cost w.r.t. every pose coordinate."""
    _, _, grad = _evaluate(ctx, pose.positions, with_grad=True, with_breakdown=False)
    return grad


def cost_value_and_gradient(positions: np.ndarray, ctx: CostContext,
                            with_breakdown: bool = True):
    """(total, gradient, breakdown) on raw positions; the solver's entry point."""
    total, breakdown, grad = _evaluate(ctx, positions, with_grad=True,
                                       with_breakdown=with_breakdown)
    return total, grad, breakdown


def finite_difference_gradient(pose: Pose, ctx: CostContext, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient; independent of the analytic path."""
    pos = pose.positions
    grad = np.zeros_like(pos)
    for j in range(pos.shape[0]):
        for k in range(3):
            plus = pos.copy()
            minus = pos.copy()
            plus[j, k] += h
            minus[j, k] -= h
            fp, _, _ = _evaluate(ctx, plus, with_grad=False, with_breakdown=False)
            fm, _, _ = _evaluate(ctx, minus, with_grad=False, with_breakdown=False)
            grad[j, k] = (fp - fm) / (2.0 * h)
    return grad
