"""Bone-ratio model: per-frame measurement, gating, and Kalman refinement.

Anatomy is scale-free here: every segment length is expressed as a ratio of
the summed fixed-bone length (both ulnae, humeri, femora, tibiae, plus the
pelvis), so the model never needs absolute units. Limb lengths are measured
in the image (xy) plane and corrected for the limb's inclination; steep
bones have a poor signal-to-noise ratio and are excluded beyond 50 degrees.
Measurements that deviate more than 15% from the initial ratios are
rejected as outliers, which also keeps the estimates inside a trust band
around anthropometrically plausible values.

A scalar Kalman filter per canonical segment blends prior estimates with
new confidence-weighted measurements; symmetric limbs are merged into one
measurement per pair before updating.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FrameError, TopologyError
from .topology import SkeletonTopology, angle_between

# Default ratios of segment length to the summed fixed-bone length, measured
# from neutral upright reference recordings aligned with the estimator's
# landmark definitions. Each symmetric entry applies to both sides.
DEFAULT_INITIAL_RATIOS: dict[str, float] = {
    "ulna": 0.0862,
    "humerus": 0.1015,
    "femur": 0.1462,
    "tibia": 0.1297,
    "pelvis": 0.0728,
    "shoulder_width": 0.1260,
    "spine": 0.1859,
    "lateral_trunk": 0.1878,
}


@dataclass(frozen=True)
class EstimatorConfig:
    """Kalman and gating parameters; anatomy is static so the filter should
    converge and then hold.

    The base measurement noise is sized for realistic single-frame ratio
    measurements (a few percent std): the anthropometric prior must not be
    overwritten by one confident but noisy frame, because later
    measurements partially echo the optimized pose and a locked-in error
    self-confirms.
    """

    initial_variance: float = 4e-4        # ~2% std on a ratio
    process_noise: float = 1e-8           # per frame
    base_measurement_noise: float = 1e-3  # scaled by 1/confidence
    confidence_threshold: float = 0.5
    max_ratio_deviation: float = 0.15
    max_inclination_deg: float = 50.0
    stability_rel_change: float = 1e-3    # frame counts as stable below this

    def __post_init__(self):
        for name in ("initial_variance", "process_noise", "base_measurement_noise"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class RatioMeasurement:
    segment: str            # limb or multi-segment name (side-specific)
    measured_ratio: float
    confidence: float       # [0, 1]
    inclination: float      # radians from the xy-plane

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.measured_ratio <= 0.0:
            raise ValueError("measured ratio must be positive")


@dataclass
class SegmentState:
    estimate: float
    variance: float
    initial: float


@dataclass
class BoneModel:
    """Per-canonical-segment ratio estimates with Kalman variance."""

    segments: dict[str, SegmentState]
    stability_counter: int = 0

    @staticmethod
    def from_initial(topology: SkeletonTopology,
                     initial_ratios: dict[str, float] | None = None,
                     config: EstimatorConfig | None = None) -> "BoneModel":
        ratios = dict(DEFAULT_INITIAL_RATIOS)
        if initial_ratios:
            ratios.update(initial_ratios)
        cfg = config or EstimatorConfig()
        segments: dict[str, SegmentState] = {}
        for key in list(topology.rigid_bone_groups()) + list(topology.multi_segment_groups()):
            if key not in ratios:
                raise TopologyError(f"no initial ratio configured for segment {key!r}")
            r0 = float(ratios[key])
            if r0 <= 0:
                raise ValueError(f"initial ratio for {key!r} must be positive")
            segments[key] = SegmentState(estimate=r0, variance=cfg.initial_variance, initial=r0)
        return BoneModel(segments=segments)

    def canonical(self, segment: str) -> str:
        key = SkeletonTopology.pair_key(segment) or segment
        if key not in self.segments:
            raise TopologyError(f"segment {segment!r} has no model entry")
        return key

    def rigid_targets(self, topology: SkeletonTopology) -> np.ndarray:
        """Current ratio estimate per rigid bone, in topology order."""
        return np.array([self.segments[self.canonical(b)].estimate
                         for b in topology.rigid_bones], dtype=np.float64)

    def multi_targets(self, topology: SkeletonTopology) -> np.ndarray:
        """Current neutral ratio estimate per multi-segment, in topology order."""
        return np.array([self.segments[self.canonical(s)].estimate
                         for s in topology.multi_segments], dtype=np.float64)

    def to_dict(self) -> dict:
        return {
            "segments": {k: {"estimate": s.estimate, "variance": s.variance,
                             "initial": s.initial}
                         for k, s in self.segments.items()},
            "stability_counter": self.stability_counter,
        }

    @staticmethod
    def from_dict(data: dict) -> "BoneModel":
        segments = {k: SegmentState(estimate=float(v["estimate"]),
                                    variance=float(v["variance"]),
                                    initial=float(v["initial"]))
                    for k, v in data["segments"].items()}
        return BoneModel(segments=segments,
                         stability_counter=int(data.get("stability_counter", 0)))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @staticmethod
    def load(path: str) -> "BoneModel":
        with open(path, "r", encoding="utf-8") as fh:
            return BoneModel.from_dict(json.load(fh))


class TorsoAdjustmentModel:
    """Elevation-dependent multiplicative adjustments for torso segments.

    Raising the arms rotates the scapulae, which translates the shoulder
    landmarks and changes the apparent shoulder width, spine, and lateral
    trunk lengths. Each canonical segment carries a polynomial g(beta) in
    the arm elevation angle with g(0) = 1; the adjusted ratio is
    m* multiplied by a combination of the per-side factors:

    - spine and shoulder_width average the two sides' factors,
    - lateral trunk uses its own side's factor only.

    The default model is the identity (no adjustment); site-specific
    polynomials are loaded from config.
    """

    def __init__(self, coefficients: dict[str, list[float]] | None = None):
        self.coefficients: dict[str, np.ndarray] = {}
        for name, coeffs in (coefficients or {}).items():
            c = np.asarray(coeffs, dtype=np.float64)
            if c.ndim != 1 or c.size == 0:
                raise ValueError(f"polynomial for {name!r} must be a 1-D coefficient list")
            if abs(c[0] - 1.0) > 1e-9:
                raise ValueError(
                    f"polynomial for {name!r} must satisfy g(0) = 1 (neutral arms unadjusted)")
            self.coefficients[name] = c

    @staticmethod
    def identity() -> "TorsoAdjustmentModel":
        return TorsoAdjustmentModel()

    def _poly(self, canonical: str) -> np.ndarray:
        return self.coefficients.get(canonical, np.array([1.0]))

    def factor(self, canonical: str, beta: float) -> float:
        c = self._poly(canonical)
        return float(np.polyval(c[::-1], beta))

    def factor_derivative(self, canonical: str, beta: float) -> float:
        c = self._poly(canonical)
        if c.size == 1:
            return 0.0
        d = c[1:] * np.arange(1, c.size)
        return float(np.polyval(d[::-1], beta))

    def combined_factor(self, segment: str, beta_l: float, beta_r: float) -> float:
        key = SkeletonTopology.pair_key(segment) or segment
        if key == "lateral_trunk":
            beta = beta_l if segment.endswith("_L") else beta_r
            return self.factor(key, beta)
        return 0.5 * (self.factor(key, beta_l) + self.factor(key, beta_r))

    def combined_partials(self, segment: str, beta_l: float, beta_r: float) -> tuple[float, float]:
        """(d factor / d beta_l, d factor / d beta_r)."""
        key = SkeletonTopology.pair_key(segment) or segment
        if key == "lateral_trunk":
            if segment.endswith("_L"):
                return self.factor_derivative(key, beta_l), 0.0
            return 0.0, self.factor_derivative(key, beta_r)
        return (0.5 * self.factor_derivative(key, beta_l),
                0.5 * self.factor_derivative(key, beta_r))

    def to_dict(self) -> dict:
        return {k: v.tolist() for k, v in self.coefficients.items()}


def torso_adjust(model: TorsoAdjustmentModel, segment: str, m_star: float,
                 beta_l: float, beta_r: float) -> float:
    """Expected multi-segment ratio at the given arm elevations."""
    known = {"spine", "shoulder_width", "lateral_trunk"}
    key = SkeletonTopology.pair_key(segment) or segment
    if key not in known:
        raise TopologyError(f"unknown multi-segment {segment!r}")
    return m_star * model.combined_factor(segment, beta_l, beta_r)


def inclination_to_xy_plane(vec: np.ndarray) -> float:
    """Angle in [0, pi/2] between a segment and the image (xy) plane."""
    xy = math.hypot(vec[0], vec[1])
    return math.atan2(abs(vec[2]), xy)


def corrected_length(vec: np.ndarray) -> tuple[float, float]:
    """(inclination-corrected length, inclination).

    The xy-projected length divided by cos(inclination) recovers the true
    segment length; for near-vertical segments (cos -> 0) the 3D norm is
    used directly, which is the same quantity without the 0/0 hazard.
    """
    incl = inclination_to_xy_plane(vec)
    xy = math.hypot(vec[0], vec[1])
    c = math.cos(incl)
    if c < 1e-9:
        return float(np.linalg.norm(vec)), incl
    return xy / c, incl


def confidence_score(visibilities, inclination: float,
                     max_inclination_deg: float = 50.0) -> float:
    """Reliability of one segment-length measurement, in [0, 1].

    Monotone increasing in the worst joint visibility and decreasing in
    inclination; exactly 1 at full visibility with an in-plane segment,
    0 at or beyond the inclination gate.
    """
    vis = float(np.min(np.asarray(visibilities, dtype=np.float64)))
    max_incl = math.radians(max_inclination_deg)
    incl_term = max(0.0, 1.0 - inclination / max_incl)
    return max(0.0, min(1.0, vis)) * incl_term


def _elevation_angles(positions: np.ndarray, topology: SkeletonTopology) -> tuple[float, float]:
    """Humerothoracic elevation per side from raw positions; 0 when degenerate."""
    out = []
    for side in ("L", "R"):
        shoulder, elbow, hip = topology.elevation_joints[side]
        s = positions[topology.joint_index(shoulder)]
        humerus = positions[topology.joint_index(elbow)] - s
        trunk = positions[topology.joint_index(hip)] - s
        if np.linalg.norm(humerus) < 1e-12 or np.linalg.norm(trunk) < 1e-12:
            out.append(0.0)
        else:
            out.append(angle_between(humerus, trunk))
    return out[0], out[1]


def measure_ratios(positions: np.ndarray, visibility: np.ndarray,
                   topology: SkeletonTopology,
                   torso_model: TorsoAdjustmentModel | None = None) -> list[RatioMeasurement]:
    """Per-frame ratio measurements for every rigid bone and multi-segment.

    Each segment's xy-plane length is corrected for inclination, then
    normalized by the frame's summed corrected fixed-bone length (so the
    fixed-bone ratios of a frame sum to 1 by construction). Multi-segment
    measurements are referred back to the neutral posture by dividing out
    the torso adjustment at the frame's arm elevations.

    Measurements beyond the inclination gate are still produced (flagged by
    their inclination value) so the caller's gate can count them; frames
    whose fixed-bone sum is degenerate raise FrameError.
    """
    pos = np.asarray(positions, dtype=np.float64)
    vis = np.asarray(visibility, dtype=np.float64)
    torso = torso_model or TorsoAdjustmentModel.identity()

    fixed_lengths: dict[str, tuple[float, float, float]] = {}
    for bone in topology.rigid_bones:
        p, d = topology.limb_indices(bone)
        length, incl = corrected_length(pos[d] - pos[p])
        fixed_lengths[bone] = (length, incl, float(min(vis[p], vis[d])))
    total = sum(v[0] for v in fixed_lengths.values())
    if total < 1e-9:
        raise FrameError("summed fixed-bone length is degenerate; frame rejected")

    measurements: list[RatioMeasurement] = []
    for bone, (length, incl, v) in fixed_lengths.items():
        if length <= 0:
            continue
        measurements.append(RatioMeasurement(
            segment=bone,
            measured_ratio=length / total,
            confidence=confidence_score((v,), incl),
            inclination=incl,
        ))

    beta_l, beta_r = _elevation_angles(pos, topology)
    for seg in topology.multi_segments:
        (a1, a2), (b1, b2) = topology.segment_endpoint_indices(seg)
        vec = 0.5 * (pos[b1] + pos[b2]) - 0.5 * (pos[a1] + pos[a2])
        length, incl = corrected_length(vec)
        if length <= 0:
            continue
        ratio = length / total
        factor = torso.combined_factor(seg, beta_l, beta_r)
        if factor > 1e-6:
            ratio /= factor
        v = float(np.min(vis[[a1, a2, b1, b2]]))
        measurements.append(RatioMeasurement(
            segment=seg,
            measured_ratio=ratio,
            confidence=confidence_score((v,), incl),
            inclination=incl,
        ))
    return measurements


@dataclass(frozen=True)
class GateResult:
    accepted: bool
    reason: str | None = None  # "deviation" | "inclination" | "confidence"


def gate_outliers(measurement: RatioMeasurement, model: BoneModel,
                  config: EstimatorConfig | None = None) -> GateResult:
    """Accept or reject one measurement against the model's trust gates."""
    cfg = config or EstimatorConfig()
    if measurement.inclination > math.radians(cfg.max_inclination_deg):
        return GateResult(False, "inclination")
    initial = model.segments[model.canonical(measurement.segment)].initial
    if abs(measurement.measured_ratio / initial - 1.0) > cfg.max_ratio_deviation:
        return GateResult(False, "deviation")
    if measurement.confidence < cfg.confidence_threshold:
        return GateResult(False, "confidence")
    return GateResult(True)


def kalman_update(model: BoneModel, measurement: RatioMeasurement,
                  config: EstimatorConfig | None = None) -> BoneModel:
    """Scalar Kalman update of one canonical segment (mutates the model).

    Measurement noise scales inversely with confidence, so low-confidence
    observations move the estimate less. Callers must gate first; a zero
    confidence here is a contract violation.
    """
    cfg = config or EstimatorConfig()
    if measurement.confidence <= 0.0:
        raise ValueError("kalman_update requires positive confidence (gate must prevent this)")
    state = model.segments[model.canonical(measurement.segment)]
    p_pred = state.variance + cfg.process_noise
    r = cfg.base_measurement_noise / measurement.confidence
    gain = p_pred / (p_pred + r)
    state.estimate = state.estimate + gain * (measurement.measured_ratio - state.estimate)
    state.variance = (1.0 - gain) * p_pred
    return model


def merge_symmetric(measurements: list[RatioMeasurement]) -> RatioMeasurement:
    """Confidence-weighted average of a symmetric pair's measurements."""
    if len(measurements) == 1:
        return measurements[0]
    weights = np.array([m.confidence for m in measurements], dtype=np.float64)
    ratios = np.array([m.measured_ratio for m in measurements], dtype=np.float64)
    merged_ratio = float(np.dot(weights, ratios) / np.sum(weights))
    key = SkeletonTopology.pair_key(measurements[0].segment) or measurements[0].segment
    return RatioMeasurement(
        segment=key,
        measured_ratio=merged_ratio,
        confidence=float(np.mean(weights)),
        inclination=float(min(m.inclination for m in measurements)),
    )


@dataclass
class ObservationSummary:
    accepted: list[str] = field(default_factory=list)
    rejected: dict[str, str] = field(default_factory=dict)  # segment -> reason
    stable_frame: bool = False


class BoneRatioEstimator:
    """Stateful per-session estimator: measure, gate, merge, update.

    Single-owner mutable; one estimator per stream session. Distinct
    sessions are fully independent.
    """

    def __init__(self, topology: SkeletonTopology,
                 model: BoneModel | None = None,
                 torso_model: TorsoAdjustmentModel | None = None,
                 config: EstimatorConfig | None = None):
        self.topology = topology
        self.config = config or EstimatorConfig()
        self.torso_model = torso_model or TorsoAdjustmentModel.identity()
        self.model = model or BoneModel.from_initial(topology, config=self.config)

    def observe(self, positions: np.ndarray, visibility: np.ndarray) -> ObservationSummary:
        """Run one frame through measure -> gate -> merge -> Kalman update."""
        summary = ObservationSummary()
        try:
            measurements = measure_ratios(positions, visibility, self.topology,
                                          self.torso_model)
        except FrameError:
            self.model.stability_counter += 1
            summary.stable_frame = True
            return summary

        by_key: dict[str, list[RatioMeasurement]] = {}
        for m in measurements:
            gate = gate_outliers(m, self.model, self.config)
            if gate.accepted:
                key = SkeletonTopology.pair_key(m.segment) or m.segment
                by_key.setdefault(key, []).append(m)
            else:
                summary.rejected[m.segment] = gate.reason or "rejected"

        max_rel_change = 0.0
        for key, group in sorted(by_key.items()):
            merged = merge_symmetric(group)
            before = self.model.segments[key].estimate
            kalman_update(self.model, merged, self.config)
            after = self.model.segments[key].estimate
            max_rel_change = max(max_rel_change, abs(after - before) / before)
            summary.accepted.append(key)

        if max_rel_change < self.config.stability_rel_change:
            self.model.stability_counter += 1
            summary.stable_frame = True
        else:
            self.model.stability_counter = 0
        return summary
