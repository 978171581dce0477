"""Streaming refinement of monocular pose-estimator landmark streams.

Fuses paired normalized-2D and world-3D landmark streams into anatomically
consistent 3D skeletons: low-pass filtering, line-of-sight ray constraints,
Kalman-refined bone-ratio models, and per-frame quasi-Newton optimization
of a weighted geometric cost.
"""

from .bones import (
    DEFAULT_INITIAL_RATIOS,
    BoneModel,
    BoneRatioEstimator,
    EstimatorConfig,
    RatioMeasurement,
    TorsoAdjustmentModel,
    confidence_score,
    gate_outliers,
    kalman_update,
    measure_ratios,
    torso_adjust,
)
from .camera import CameraModel, LosFrame, build_los, project_to_normalized
from .cost import (
    CostContext,
    CostEngine,
    CostWeights,
    bone_cost,
    cost_gradient,
    finite_difference_gradient,
    los_cost,
    multi_bone_cost,
    total_cost,
    world_cost,
)
from .errors import (
    ConfigError,
    DegenerateLimbError,
    FrameError,
    ScriptError,
    SkelfuseError,
    StreamFormatError,
    TopologyError,
)
from .filtering import ChannelBankFilter, FilterSpec, FrameFilter, ScalarFilter, design_butterworth
from .solver import SolveReport, SolverSettings, minimize
from .streams import LandmarkFrame, parse_stream, read_stream_file, write_stream, write_stream_file
from .topology import (
    Pose,
    SkeletonTopology,
    default_topology,
    humerothoracic_elevation,
    inter_limb_angle,
    limb_vector,
    normalized_scalar_product,
)

__version__ = "0.1.0"
