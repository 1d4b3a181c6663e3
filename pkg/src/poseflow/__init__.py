"""Streaming multi-person pose estimation engine.

A static chain of dataflow operators connected by bounded FIFO channels,
with adaptive batching in front of the inference stage, a complete
part-affinity-field pose parser, and a deterministic synthetic backend
that makes the whole pipeline verifiable end to end.
"""

from .config import PipelineConfig
from .dataflow import (
    Channel,
    END_OF_STREAM,
    OperatorSpec,
    Packet,
    PipelineStats,
    build_pipeline,
    run_pipeline,
    run_sequential,
)
from .errors import (
    BackendError,
    ChannelClosed,
    ConfigError,
    ContractError,
    FormatError,
    GraphError,
    PipelineError,
    PoseflowError,
)
from .formats import read_ppm, read_tensor, write_ppm, write_tensor
from .paf import ParserParams, parse
from .pipeline import build_pose_pipeline, run_pose_pipeline
from .scheduler import SchedulerPolicy, accumulate_batch, split_batch_results
from .synth import (
    FileBackend,
    GroundTruthHuman,
    GroundTruthScene,
    SynthParams,
    SyntheticBackend,
    procedural_scene,
    render_feature_maps,
)
from .topology import load_topology
from .types import (
    FeatureMaps,
    Frame,
    HumanPose,
    Keypoint,
    SkeletonTopology,
    TensorF32,
)

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "Channel",
    "ChannelClosed",
    "ConfigError",
    "ContractError",
    "END_OF_STREAM",
    "FeatureMaps",
    "FileBackend",
    "FormatError",
    "Frame",
    "GraphError",
    "GroundTruthHuman",
    "GroundTruthScene",
    "HumanPose",
    "Keypoint",
    "OperatorSpec",
    "Packet",
    "ParserParams",
    "PipelineConfig",
    "PipelineError",
    "PipelineStats",
    "PoseflowError",
    "SchedulerPolicy",
    "SkeletonTopology",
    "SyntheticBackend",
    "SynthParams",
    "TensorF32",
    "accumulate_batch",
    "build_pipeline",
    "build_pose_pipeline",
    "load_topology",
    "parse",
    "procedural_scene",
    "read_ppm",
    "read_tensor",
    "render_feature_maps",
    "run_pipeline",
    "run_pose_pipeline",
    "run_sequential",
    "split_batch_results",
    "write_ppm",
    "write_tensor",
]
