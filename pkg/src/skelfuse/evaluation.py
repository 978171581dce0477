"""Metrics for scoring refined output against ground truth.

Skeleton pairs are compared after moving both to a pelvis origin and
solving a single least-squares scale on the estimate, so streams in
different units compare fairly. Rotational (Procrustes) alignment is
deliberately not applied: absolute-orientation errors should stay visible.

Reported metrics: mean per-joint position error (3D and in the image
plane), per-body-angle mean absolute errors in degrees, and the variance
of each rigid bone's length across a sequence (a direct probe of
anatomical consistency; population variance, stated in output metadata).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .topology import Pose, SkeletonTopology, angle_between


@dataclass(frozen=True)
class AlignedPair:
    """Estimate and truth, both pelvis-origin, scale applied to the estimate."""

    estimate: np.ndarray   # (J, 3), scaled
    truth: np.ndarray      # (J, 3)
    scale: float
    degenerate: bool = False


def align(estimate: Pose | np.ndarray, truth: Pose | np.ndarray,
          topology: SkeletonTopology) -> AlignedPair:
    """Pelvis-origin translation plus closed-form least-squares scale.

    The scale minimizing sum ||s*e_i - t_i||^2 is s* = sum<e_i, t_i> /
    sum||e_i||^2. An all-zero estimate is degenerate and keeps s = 1.
    """
    est = estimate.positions if isinstance(estimate, Pose) else np.asarray(estimate, dtype=np.float64)
    tru = truth.positions if isinstance(truth, Pose) else np.asarray(truth, dtype=np.float64)
    est = est - topology.hip_midpoint(est)
    tru = tru - topology.hip_midpoint(tru)
    denom = float(np.sum(est * est))
    if denom < 1e-18:
        return AlignedPair(estimate=est, truth=tru, scale=1.0, degenerate=True)
    s = float(np.sum(est * tru) / denom)
    return AlignedPair(estimate=s * est, truth=tru, scale=s)


def mpjpe(pair: AlignedPair, plane: str = "3d") -> float:
    """Mean per-joint position error in millimeters; "xy" drops depth."""
    diff = pair.estimate - pair.truth
    if plane == "xy":
        diff = diff[:, :2]
    elif plane != "3d":
        raise ValueError("plane must be '3d' or 'xy'")
    return float(np.mean(np.linalg.norm(diff, axis=1))) * 1000.0


def body_angles_deg(positions: np.ndarray, topology: SkeletonTopology) -> dict[str, float | None]:
    """Configured body angles in degrees; None where a limb is degenerate."""
    out: dict[str, float | None] = {}
    for name, (a, vertex, b) in topology.body_angles.items():
        v = positions[topology.joint_index(vertex)]
        va = positions[topology.joint_index(a)] - v
        vb = positions[topology.joint_index(b)] - v
        if np.linalg.norm(va) < 1e-12 or np.linalg.norm(vb) < 1e-12:
            out[name] = None
        else:
            out[name] = math.degrees(angle_between(va, vb))
    return out


def angle_error(pair: AlignedPair, topology: SkeletonTopology) -> dict[str, float | None]:
    """Absolute body-angle differences for one frame, degrees."""
    est = body_angles_deg(pair.estimate, topology)
    tru = body_angles_deg(pair.truth, topology)
    return {name: (abs(est[name] - tru[name])
                   if est[name] is not None and tru[name] is not None else None)
            for name in topology.body_angles}


@dataclass
class AngleErrorSummary:
    per_angle_deg: dict[str, float]
    per_angle_excluded: dict[str, int]
    mean_deg: float
    per_frame_mean_deg: np.ndarray


def angle_error_sequence(estimates: np.ndarray, truths: np.ndarray,
                         topology: SkeletonTopology) -> AngleErrorSummary:
    """Mean absolute error per body angle across frames; degenerate frames
    are excluded per angle and counted."""
    names = list(topology.body_angles)
    sums = {n: 0.0 for n in names}
    counts = {n: 0 for n in names}
    excluded = {n: 0 for n in names}
    per_frame_means = []
    for est, tru in zip(estimates, truths):
        errs = angle_error(AlignedPair(est, tru, 1.0), topology)
        frame_vals = []
        for n in names:
            if errs[n] is None:
                excluded[n] += 1
            else:
                sums[n] += errs[n]
                counts[n] += 1
                frame_vals.append(errs[n])
        per_frame_means.append(float(np.mean(frame_vals)) if frame_vals else math.nan)
    per_angle = {n: (sums[n] / counts[n]) if counts[n] else math.nan for n in names}
    valid = [v for v in per_angle.values() if not math.isnan(v)]
    return AngleErrorSummary(
        per_angle_deg=per_angle,
        per_angle_excluded=excluded,
        mean_deg=float(np.mean(valid)) if valid else math.nan,
        per_frame_mean_deg=np.asarray(per_frame_means),
    )


def bone_variance(sequence: np.ndarray, topology: SkeletonTopology) -> tuple[dict[str, float], float]:
    """Population variance of each rigid bone's length across a sequence, mm^2.

    Input positions are meters; callers wanting unit-comparable numbers
    should scale the sequence (e.g. by its alignment scale) first.
    """
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim != 3 or seq.shape[0] < 2:
        raise ValueError("need a (T, J, 3) sequence with at least 2 frames")
    out: dict[str, float] = {}
    for bone in topology.rigid_bones:
        p, d = topology.limb_indices(bone)
        lengths_mm = np.linalg.norm(seq[:, d] - seq[:, p], axis=1) * 1000.0
        var = float(np.var(lengths_mm))
        # Double precision resolves these lengths to ~1 ulp; variance below
        # the squared rounding floor is exactly zero, not a measurement.
        floor = (8.0 * np.finfo(np.float64).eps * float(np.max(lengths_mm))) ** 2
        out[bone] = 0.0 if var < floor else var
    return out, float(np.mean(list(out.values())))


@dataclass
class SequenceMetrics:
    """Everything the comparison table needs for one estimate-vs-truth run."""

    mpjpe_3d_mm: float
    mpjpe_xy_mm: float
    mpjpe_3d_std_mm: float          # std of per-frame mean position error
    angle_mean_deg: float
    angle_std_deg: float            # std of per-frame mean angle error
    per_angle_deg: dict[str, float]
    per_angle_excluded: dict[str, int]
    bone_variance_mm2: dict[str, float]
    bone_variance_mean_mm2: float
    n_frames: int
    mean_scale: float

    def as_dict(self) -> dict:
        return {
            "mpjpe_3d_mm": self.mpjpe_3d_mm,
            "mpjpe_xy_mm": self.mpjpe_xy_mm,
            "mpjpe_3d_std_mm": self.mpjpe_3d_std_mm,
            "angle_mean_deg": self.angle_mean_deg,
            "angle_std_deg": self.angle_std_deg,
            "per_angle_deg": self.per_angle_deg,
            "per_angle_excluded": self.per_angle_excluded,
            "bone_variance_mm2": self.bone_variance_mm2,
            "bone_variance_mean_mm2": self.bone_variance_mean_mm2,
            "n_frames": self.n_frames,
            "mean_scale": self.mean_scale,
            "variance_estimator": "population",
        }


def evaluate_sequences(estimates: np.ndarray, truths: np.ndarray,
                       topology: SkeletonTopology,
                       scale_mode: str = "per-frame") -> SequenceMetrics:
    """Score an estimated sequence against truth frame by frame.

    ``scale_mode`` solves the alignment scale per frame (default) or once
    per sequence (the mean of per-frame solutions). Bone variance always
    uses the single per-sequence scale so frame-wise rescaling cannot hide
    bone-length fluctuation.
    """
    if scale_mode not in ("per-frame", "per-sequence"):
        raise ValueError("scale_mode must be 'per-frame' or 'per-sequence'")
    est = np.asarray(estimates, dtype=np.float64)
    tru = np.asarray(truths, dtype=np.float64)
    if est.shape != tru.shape:
        raise ValueError(f"sequence shapes differ: {est.shape} vs {tru.shape}")
    n = est.shape[0]

    est_centered = np.stack([est[i] - topology.hip_midpoint(est[i]) for i in range(n)])
    tru_centered = np.stack([tru[i] - topology.hip_midpoint(tru[i]) for i in range(n)])
    per_frame = [align(est[i], tru[i], topology) for i in range(n)]
    mean_scale = float(np.mean([p.scale for p in per_frame]))
    if scale_mode == "per-sequence":
        pairs = [AlignedPair(est_centered[i] * mean_scale, tru_centered[i], mean_scale)
                 for i in range(n)]
    else:
        pairs = per_frame

    err_3d = np.array([mpjpe(p, "3d") for p in pairs])
    err_xy = np.array([mpjpe(p, "xy") for p in pairs])
    angles = angle_error_sequence(np.stack([p.estimate for p in pairs]),
                                  np.stack([p.truth for p in pairs]), topology)

    bone_var, bone_var_mean = bone_variance(est_centered * mean_scale, topology)

    frame_means = angles.per_frame_mean_deg
    valid = frame_means[~np.isnan(frame_means)]
    return SequenceMetrics(
        mpjpe_3d_mm=float(np.mean(err_3d)),
        mpjpe_xy_mm=float(np.mean(err_xy)),
        mpjpe_3d_std_mm=float(np.std(err_3d)),
        angle_mean_deg=angles.mean_deg,
        angle_std_deg=float(np.std(valid)) if valid.size else math.nan,
        per_angle_deg=angles.per_angle_deg,
        per_angle_excluded=angles.per_angle_excluded,
        bone_variance_mm2=bone_var,
        bone_variance_mean_mm2=bone_var_mean,
        n_frames=n,
        mean_scale=mean_scale,
    )


def comparison_table(rows: dict[str, SequenceMetrics]) -> str:
    """Plain-text table of the headline metrics, one column per variant."""
    metrics = [
        ("3D MPJPE (mm)", lambda m: m.mpjpe_3d_mm),
        ("3D Std Dev (mm)", lambda m: m.mpjpe_3d_std_mm),
        ("XY MPJPE (mm)", lambda m: m.mpjpe_xy_mm),
        ("Avg Angle Error (deg)", lambda m: m.angle_mean_deg),
        ("Avg Angle Std Dev (deg)", lambda m: m.angle_std_deg),
        ("Mean Bone Variance (mm^2)", lambda m: m.bone_variance_mean_mm2),
    ]
    names = list(rows)
    width = max(len(n) for n in names + ["Metric"]) + 2
    label_w = max(len(m[0]) for m in metrics) + 2
    lines = ["Metric".ljust(label_w) + "".join(n.rjust(width) for n in names)]
    for label, fetch in metrics:
        lines.append(label.ljust(label_w)
                     + "".join(f"{fetch(rows[n]):{width}.2f}" for n in names))
    return "\n".join(lines)


def match_by_timestamp(frames_a, frames_b, tol: float = 1e-6):
    """Pairs of frames with matching timestamps (tolerant to subsampling)."""
    index = {round(f.timestamp / tol) * tol: f for f in frames_b}
    matched_a, matched_b = [], []
    for f in frames_a:
        key = round(f.timestamp / tol) * tol
        if key in index:
            matched_a.append(f)
            matched_b.append(index[key])
    return matched_a, matched_b
