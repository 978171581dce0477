"""Streaming refinement session: filter, rays, bone model, optimize.

Per frame, in order: low-pass filter all coordinate channels, build
line-of-sight rays from the filtered normalized landmarks, update the bone
model (measured from the previous frame's refined pose when one exists,
from the incoming world landmarks otherwise), assemble the cost context,
and minimize starting from the previous refined pose (world landmarks on
the first frame or after a reset).

A session is strictly sequential: warm starts and the Kalman state are
order-dependent. Distinct sessions are independent.
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .bones import BoneModel, BoneRatioEstimator, EstimatorConfig, TorsoAdjustmentModel
from .camera import CameraModel, build_los
from .cost import (
    DEFAULT_CAMERA_OFFSET,
    CostContext,
    CostEngine,
    CostWeights,
    cost_value_and_gradient,
)
from .errors import FrameError, StreamFormatError
from .filtering import FilterSpec, FrameFilter
from .solver import SolveReport, SolverSettings, minimize
from .streams import LandmarkFrame
from .topology import SkeletonTopology, default_topology

logger = logging.getLogger(__name__)

WARM_PREVIOUS = "previous-frame"
WARM_WORLD = "world-landmarks"


@dataclass
class RefinedFrame:
    """Optimized joint positions plus solve diagnostics for one frame."""

    timestamp: float
    positions: np.ndarray
    report: SolveReport
    flags: list[str] = field(default_factory=list)
    bone_estimates: dict[str, float] = field(default_factory=dict)
    bone_variances: dict[str, float] = field(default_factory=dict)
    stability_counter: int = 0


@dataclass
class RefinerConfig:
    """Everything a refinement session needs besides the camera and topology."""

    filter_spec: FilterSpec = field(default_factory=FilterSpec)
    weights: CostWeights = field(default_factory=CostWeights)
    solver: SolverSettings = field(default_factory=SolverSettings)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    camera_offset: tuple = DEFAULT_CAMERA_OFFSET
    pair_mode: str = "adjacent"
    sanity_box_m: float | None = None   # half-width of an optional bound box
    reset_window: int = 30              # trailing costs kept for the reset rule
    reset_factor: float = 2.5           # escape threshold, x trailing median cost


class StreamRefiner:
    """Single-owner, per-stream refinement session."""

    def __init__(self, camera: CameraModel,
                 topology: SkeletonTopology | None = None,
                 config: RefinerConfig | None = None,
                 bone_model: BoneModel | None = None,
                 torso_model: TorsoAdjustmentModel | None = None,
                 initial_ratios: dict[str, float] | None = None):
        self.topology = topology or default_topology()
        self.camera = camera
        self.config = config or RefinerConfig()
        self.torso_model = torso_model or TorsoAdjustmentModel.identity()
        if bone_model is None:
            bone_model = BoneModel.from_initial(self.topology, initial_ratios,
                                                self.config.estimator)
        self.estimator = BoneRatioEstimator(self.topology, model=bone_model,
                                            torso_model=self.torso_model,
                                            config=self.config.estimator)
        self.engine = CostEngine(self.topology, pair_mode=self.config.pair_mode)
        self._filter = FrameFilter(self.config.filter_spec, self.topology.n_joints)
        self._prev_refined: np.ndarray | None = None
        self._recent_costs: deque = deque(maxlen=max(5, self.config.reset_window))
        self._cold_start_next = False
        self._scale_anchor_sum = 0.0
        self._scale_anchor_n = 0

    @property
    def bone_model(self) -> BoneModel:
        return self.estimator.model

    def _fixed_bone_sum(self, positions: np.ndarray) -> float:
        _, n = self.engine.limb_vectors(positions)
        return float(np.sum(n[self.engine.rigid_idx]))

    def _fix_scale_gauge(self, positions: np.ndarray, world_f: np.ndarray) -> np.ndarray:
        """Pin the depth gauge: central scaling in the camera frame leaves the
        cost invariant exactly (rays, angles, and ratios are all preserved),
        so without an anchor the solution's absolute scale random-walks from
        frame to frame. Rescale along that flat direction so the refined
        fixed-bone sum tracks the running mean of the observed one."""
        observed = self._fixed_bone_sum(world_f)
        if observed > 1e-9:
            self._scale_anchor_sum += observed
            self._scale_anchor_n += 1
        if self._scale_anchor_n == 0:
            return positions
        anchor = self._scale_anchor_sum / self._scale_anchor_n
        current = self._fixed_bone_sum(positions)
        if current <= 1e-9:
            return positions
        s = anchor / current
        offset = np.asarray(self.config.camera_offset, dtype=np.float64)
        return s * positions + (s - 1.0) * offset

    def _solver_settings(self, x0: np.ndarray) -> SolverSettings:
        cfg = self.config.solver
        if self.config.sanity_box_m is None:
            return cfg
        lo = x0 - self.config.sanity_box_m
        hi = x0 + self.config.sanity_box_m
        return SolverSettings(
            max_iterations=cfg.max_iterations,
            gradient_tolerance=cfg.gradient_tolerance,
            cost_tolerance=cfg.cost_tolerance,
            history_size=cfg.history_size,
            bounds=(lo, hi),
            wolfe_c1=cfg.wolfe_c1,
            wolfe_c2=cfg.wolfe_c2,
        )

    def process(self, frame: LandmarkFrame) -> RefinedFrame:
        topo = self.topology
        if frame.n_joints != topo.n_joints:
            raise StreamFormatError(
                f"frame has {frame.n_joints} joints, topology defines {topo.n_joints}")

        world_f, norm_f = self._filter.step(frame.world, frame.normalized)
        los = build_los(norm_f, self.camera, frame.visibility)

        # Bone measurements come from the filtered input landmarks. Feeding
        # the optimized pose back instead freezes the model: the optimizer
        # pins the refined ratios to the current estimates, so measurements
        # taken from it only echo the model and the subject's actual
        # anatomy is never learned.
        self.estimator.observe(world_f, frame.visibility)

        weights = self.config.weights
        stable = self.bone_model.stability_counter > weights.stability_horizon
        ctx = CostContext(
            world=world_f, los=los, bone_model=self.bone_model, topology=topo,
            weights=weights, torso_model=self.torso_model,
            camera_offset=self.config.camera_offset,
            stability_boost_active=stable, engine=self.engine)

        flags: list[str] = []
        if self._prev_refined is not None and not self._cold_start_next:
            x0 = self._prev_refined
            warm = WARM_PREVIOUS
        else:
            x0 = world_f
            warm = WARM_WORLD
            if self._cold_start_next:
                flags.append("reset")
        self._cold_start_next = False

        shape = x0.shape

        def objective(x_flat: np.ndarray):
            value, grad, _ = cost_value_and_gradient(x_flat.reshape(shape), ctx,
                                                     with_breakdown=False)
            return value, grad.reshape(-1)

        try:
            positions, report = self._minimize_with_fallback(objective, x0, world_f, flags)
            report.warm_start = warm if "fallback-world-start" not in flags else WARM_WORLD

            # Warm starting tracks local minima; when the landed minimum is
            # clearly out of family with recent frames, re-solve from the
            # world landmarks and keep the better result, and cold-start the
            # next frame. Without this a capture persists indefinitely.
            if (warm == WARM_PREVIOUS and len(self._recent_costs) >= 5
                    and report.final_cost > self.config.reset_factor
                    * float(np.median(self._recent_costs))):
                x_retry, rep_retry = minimize(objective, world_f.reshape(-1).copy(),
                                              self._solver_settings(world_f.reshape(-1)))
                if rep_retry.final_cost < report.final_cost:
                    positions = x_retry.reshape(world_f.shape)
                    report = rep_retry
                    report.warm_start = WARM_WORLD
                    flags.append("retried-from-world")

            positions = self._fix_scale_gauge(positions, world_f)
        except FrameError as exc:
            logger.warning("frame %.3f unrefined: %s", frame.timestamp, exc)
            flags.append("unrefined")
            positions = world_f.copy()
            report = SolveReport(initial_cost=math.nan, final_cost=math.nan,
                                 iterations=0, n_evaluations=0, reason="failed",
                                 warm_start=warm)

        if "unrefined" not in flags:
            _, _, breakdown = cost_value_and_gradient(positions, ctx)
            report.breakdown = breakdown
            self._recent_costs.append(report.final_cost)
            if len(self._recent_costs) >= 5:
                median = float(np.median(self._recent_costs))
                if median > 0 and report.final_cost > self.config.reset_factor * median:
                    self._cold_start_next = True

        self._prev_refined = positions.copy()

        model = self.bone_model
        return RefinedFrame(
            timestamp=frame.timestamp,
            positions=positions,
            report=report,
            flags=flags,
            bone_estimates={k: s.estimate for k, s in model.segments.items()},
            bone_variances={k: s.variance for k, s in model.segments.items()},
            stability_counter=model.stability_counter,
        )

    def _minimize_with_fallback(self, objective, x0: np.ndarray, world_f: np.ndarray,
                                flags: list[str]):
        x0_flat = x0.reshape(-1).copy()
        settings = self._solver_settings(x0_flat)
        try:
            x_flat, report = minimize(objective, x0_flat, settings)
        except ValueError:
            # Non-finite cost at the warm start: retry from world landmarks.
            flags.append("fallback-world-start")
            w_flat = world_f.reshape(-1).copy()
            try:
                x_flat, report = minimize(objective, w_flat,
                                          self._solver_settings(w_flat))
            except ValueError as exc:
                raise FrameError(f"cost non-finite from both start points: {exc}") from exc
        return x_flat.reshape(x0.shape), report

    def run(self, frames: Iterable[LandmarkFrame]) -> list[RefinedFrame]:
        return [self.process(f) for f in frames]


def refined_to_record(frame: RefinedFrame) -> dict:
    rec = {
        "t": frame.timestamp,
        "world": frame.positions.tolist(),
        "cost": frame.report.final_cost,
        "initial_cost": frame.report.initial_cost,
        "iterations": frame.report.iterations,
        "reason": frame.report.reason,
        "warm_start": frame.report.warm_start,
    }
    terms = frame.report.breakdown
    if terms:
        rec["terms"] = {k: terms[k] for k in ("world", "los", "bone", "multi")}
    if frame.flags:
        rec["flags"] = frame.flags
    return rec


def write_refined_stream(frames: Iterable[RefinedFrame], sink: IO[str]) -> None:
    for f in frames:
        sink.write(json.dumps(refined_to_record(f), separators=(",", ":")))
        sink.write("\n")


def read_refined_positions(path: str) -> tuple[np.ndarray, np.ndarray]:
    """(timestamps, positions) arrays from a refined stream file."""
    ts, worlds = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                ts.append(float(rec["t"]))
                worlds.append(np.asarray(rec["world"], dtype=np.float64))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise StreamFormatError(f"bad refined record: {exc}", line_number) from None
    return np.asarray(ts), (np.stack(worlds) if worlds else np.empty((0, 0, 3)))


def write_bone_trajectory(frames: Iterable[RefinedFrame], sink: IO[str]) -> None:
    for f in frames:
        rec = {"t": f.timestamp, "estimates": f.bone_estimates,
               "variances": f.bone_variances, "stability": f.stability_counter}
        sink.write(json.dumps(rec, separators=(",", ":")))
        sink.write("\n")
