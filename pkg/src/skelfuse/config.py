"""Declarative pipeline configuration.

One YAML file configures everything: topology, filter, camera, cost
weights, solver, bone estimator, initial ratios, torso polynomials,
pipeline plumbing, ratio persistence mode, and (for stream generation) a
motion block. Unknown keys are rejected everywhere so typos fail loudly.
An annotated example with every default lives in ``configs/default.yaml``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .bones import DEFAULT_INITIAL_RATIOS, EstimatorConfig, TorsoAdjustmentModel
from .camera import CameraModel
from .cost import DEFAULT_CAMERA_OFFSET, CostWeights
from .errors import ConfigError
from .filtering import FilterSpec
from .pipeline import RefinerConfig
from .solver import SolverSettings
from .synth import MotionScript, NoiseSpec, SubjectDims
from .topology import SkeletonTopology, default_topology, topology_from_dict


def _check_keys(block: dict, allowed: set[str], path: str) -> None:
    if not isinstance(block, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(block).__name__}")
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")


def _build_filter(block: dict) -> FilterSpec:
    _check_keys(block, {"order", "cutoff_hz", "sample_hz"}, "filter")
    try:
        return FilterSpec(**block)
    except (TypeError, ValueError, ConfigError) as exc:
        raise ConfigError(f"filter: {exc}") from exc


def _build_camera(block: dict) -> CameraModel:
    _check_keys(block, {"fov_deg", "focal_px", "principal_point", "image_size"}, "camera")
    size = tuple(block.get("image_size", (1280, 720)))
    try:
        if "focal_px" in block:
            principal = tuple(block.get("principal_point", (size[0] / 2, size[1] / 2)))
            return CameraModel(focal_length=float(block["focal_px"]),
                               principal_point=principal, image_size=size)
        return CameraModel.from_fov(float(block.get("fov_deg", 60.0)), size)
    except (TypeError, ValueError, ConfigError) as exc:
        raise ConfigError(f"camera: {exc}") from exc


def _build_weights(block: dict) -> CostWeights:
    allowed = {"w_world", "w_los", "w_bone", "w_multi", "lambda_rel", "lambda_abs",
               "lambda_los", "lambda_vis", "lambda_bone", "stability_boost",
               "stability_horizon"}
    _check_keys(block, allowed, "weights")
    try:
        return CostWeights(**block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"weights: {exc}") from exc


def _build_solver(block: dict) -> SolverSettings:
    allowed = {"max_iterations", "gradient_tolerance", "cost_tolerance",
               "history_size", "wolfe_c1", "wolfe_c2"}
    _check_keys(block, allowed, "solver")
    try:
        return SolverSettings(**block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from exc


def _build_estimator(block: dict) -> EstimatorConfig:
    allowed = {"initial_variance", "process_noise", "base_measurement_noise",
               "confidence_threshold", "max_ratio_deviation", "max_inclination_deg",
               "stability_rel_change"}
    _check_keys(block, allowed, "estimator")
    try:
        return EstimatorConfig(**block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"estimator: {exc}") from exc


def _build_noise(block: dict) -> NoiseSpec:
    allowed = {"world_xy_sigma", "world_z_sigma", "group_z_sigma", "group_xy_sigma",
               "group_tau_s", "normalized_sigma", "base_visibility",
               "visibility_jitter", "occlusion_start_prob", "occlusion_frames",
               "occlusion_visibility"}
    _check_keys(block, allowed, "motion.noise")
    block = dict(block)
    if "occlusion_frames" in block:
        block["occlusion_frames"] = tuple(block["occlusion_frames"])
    try:
        return NoiseSpec(**block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"motion.noise: {exc}") from exc


def _build_motion(block: dict) -> MotionScript:
    allowed = {"kind", "duration_s", "frame_rate_hz", "distance_m", "subject",
               "params", "noise", "keyframes"}
    _check_keys(block, allowed, "motion")
    subject = SubjectDims()
    if "subject" in block:
        _check_keys(block["subject"], {"fixed_sum", "ratios"}, "motion.subject")
        subject = SubjectDims(fixed_sum=float(block["subject"].get("fixed_sum", 2.6)),
                              ratios=dict(block["subject"].get("ratios", {})))
    noise = _build_noise(block.get("noise", {}))
    try:
        return MotionScript(
            kind=block.get("kind", "squat"),
            duration_s=float(block.get("duration_s", 10.0)),
            frame_rate_hz=float(block.get("frame_rate_hz", 30.0)),
            distance_m=float(block.get("distance_m", 2.5)),
            subject=subject,
            noise=noise,
            params=dict(block.get("params", {})),
            keyframes=list(block.get("keyframes", [])),
        )
    except Exception as exc:
        raise ConfigError(f"motion: {exc}") from exc


@dataclass
class PipelineConfig:
    topology: SkeletonTopology = field(default_factory=default_topology)
    camera: CameraModel = field(default_factory=CameraModel.from_fov)
    refiner: RefinerConfig = field(default_factory=RefinerConfig)
    initial_ratios: dict = field(default_factory=lambda: dict(DEFAULT_INITIAL_RATIOS))
    torso_model: TorsoAdjustmentModel = field(default_factory=TorsoAdjustmentModel.identity)
    ratio_mode: str = "reset"          # "reset" | "reuse"
    session_path: str | None = None
    motion: MotionScript | None = None
    seed: int = 0


TOP_LEVEL_KEYS = {"topology", "filter", "camera", "weights", "solver", "estimator",
                  "initial_ratios", "torso_polynomials", "pipeline", "ratio_mode",
                  "motion", "seed"}


def config_from_dict(data: dict) -> PipelineConfig:
    if data is None:
        data = {}
    _check_keys(data, TOP_LEVEL_KEYS, "config")

    topology = default_topology()
    if data.get("topology") is not None:
        topology = topology_from_dict(data["topology"])

    camera = _build_camera(data.get("camera", {}))
    weights = _build_weights(data.get("weights", {}))
    solver = _build_solver(data.get("solver", {}))
    estimator = _build_estimator(data.get("estimator", {}))
    filter_spec = _build_filter(data.get("filter", {}))

    pipe = data.get("pipeline", {})
    _check_keys(pipe, {"camera_offset", "pair_mode", "sanity_box_m",
                       "reset_window", "reset_factor"}, "pipeline")
    refiner = RefinerConfig(
        filter_spec=filter_spec,
        weights=weights,
        solver=solver,
        estimator=estimator,
        camera_offset=tuple(pipe.get("camera_offset", DEFAULT_CAMERA_OFFSET)),
        pair_mode=pipe.get("pair_mode", "adjacent"),
        sanity_box_m=pipe.get("sanity_box_m"),
        reset_window=int(pipe.get("reset_window", 30)),
        reset_factor=float(pipe.get("reset_factor", 2.5)),
    )

    ratios = dict(DEFAULT_INITIAL_RATIOS)
    extra = data.get("initial_ratios", {})
    unknown = set(extra) - set(DEFAULT_INITIAL_RATIOS)
    if unknown:
        raise ConfigError(f"initial_ratios: unknown segments {sorted(unknown)}")
    ratios.update({k: float(v) for k, v in extra.items()})

    try:
        torso = TorsoAdjustmentModel(data.get("torso_polynomials") or None)
    except ValueError as exc:
        raise ConfigError(f"torso_polynomials: {exc}") from exc

    mode_block = data.get("ratio_mode", {})
    if isinstance(mode_block, str):
        mode_block = {"mode": mode_block}
    _check_keys(mode_block, {"mode", "session"}, "ratio_mode")
    mode = mode_block.get("mode", "reset")
    if mode not in ("reset", "reuse"):
        raise ConfigError(f"ratio_mode.mode must be 'reset' or 'reuse', got {mode!r}")
    session = mode_block.get("session")
    if mode == "reuse" and not session:
        raise ConfigError("ratio_mode: reuse mode requires a session file path")

    motion = _build_motion(data["motion"]) if data.get("motion") else None

    return PipelineConfig(
        topology=topology, camera=camera, refiner=refiner,
        initial_ratios=ratios, torso_model=torso,
        ratio_mode=mode, session_path=session,
        motion=motion, seed=int(data.get("seed", 0)),
    )


def load_config(path: str | None) -> PipelineConfig:
    """Parse and validate a YAML config file; None loads all defaults."""
    if path is None:
        return config_from_dict({})
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return config_from_dict(data or {})


def resolved_config_dict(cfg: PipelineConfig) -> dict:
    """The fully resolved configuration, suitable for printing as YAML."""
    r = cfg.refiner
    cam = cfg.camera
    return {
        "topology": {"joints": len(cfg.topology.joints),
                     "limbs": len(cfg.topology.limbs),
                     "rigid_bones": list(cfg.topology.rigid_bones),
                     "multi_segments": list(cfg.topology.multi_segments)},
        "camera": {"focal_px": cam.focal_length,
                   "principal_point": list(cam.principal_point),
                   "image_size": list(cam.image_size)},
        "filter": {"order": r.filter_spec.order,
                   "cutoff_hz": r.filter_spec.cutoff_hz,
                   "sample_hz": r.filter_spec.sample_hz},
        "weights": {k: getattr(r.weights, k) for k in (
            "w_world", "w_los", "w_bone", "w_multi", "lambda_rel", "lambda_abs",
            "lambda_los", "lambda_vis", "lambda_bone", "stability_boost",
            "stability_horizon")},
        "solver": {k: getattr(r.solver, k) for k in (
            "max_iterations", "gradient_tolerance", "cost_tolerance", "history_size")},
        "estimator": {k: getattr(r.estimator, k) for k in (
            "initial_variance", "process_noise", "base_measurement_noise",
            "confidence_threshold", "max_ratio_deviation", "max_inclination_deg",
            "stability_rel_change")},
        "pipeline": {"camera_offset": list(r.camera_offset),
                     "pair_mode": r.pair_mode,
                     "sanity_box_m": r.sanity_box_m,
                     "reset_window": r.reset_window,
                     "reset_factor": r.reset_factor},
        "initial_ratios": dict(cfg.initial_ratios),
        "torso_polynomials": cfg.torso_model.to_dict(),
        "ratio_mode": {"mode": cfg.ratio_mode, "session": cfg.session_path},
        "seed": cfg.seed,
    }
