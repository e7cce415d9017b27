"""Multi-sensor track-to-track association by stochastic optimization."""
from .core import (
    ScenarioFrame, SensorInfo, Track, canonicalize, clusters_of, is_sensor_valid,
    truth_association,
)
from .likelihood import DetectionModel, SpatialKind, log_joint_lik
from .so import SoConfig, run as run_so

__version__ = "0.1.0"

__all__ = [
    "ScenarioFrame", "SensorInfo", "Track", "canonicalize", "clusters_of", "is_sensor_valid",
    "truth_association", "DetectionModel", "SpatialKind", "log_joint_lik", "SoConfig",
    "run_so", "__version__",
]
