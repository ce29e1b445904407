"""Cross-source point cloud registration: street-view LiDAR onto an over-view
visual reconstruction, by patch matching, boundary NDT and pose clustering."""

__version__ = "0.1.0"

from .cloud import SpatialIndex, apply_transform, avg_nearest_distance, voxel_downsample
from .errors import HybridFusionError, PipelineFailure
from .evaluation import boundary_accuracy, evaluate, supplement_degree, supplement_ratio
from .fusion import ClusterParams, PatchTransform, fuse
from .io import load_cloud, save_cloud
from .pipeline import PipelineParams, PipelineResult, run_pipeline
from .synth import SceneConfig, synth_scene
from .transforms import RigidTransform2, RigidTransform3, compose

__all__ = [
    "ClusterParams", "HybridFusionError", "PatchTransform", "PipelineFailure", "PipelineParams",
    "PipelineResult", "RigidTransform2", "RigidTransform3", "SceneConfig", "SpatialIndex",
    "apply_transform", "avg_nearest_distance", "boundary_accuracy", "compose", "evaluate", "fuse",
    "load_cloud", "run_pipeline", "save_cloud", "supplement_degree", "supplement_ratio",
    "synth_scene", "voxel_downsample",
]
