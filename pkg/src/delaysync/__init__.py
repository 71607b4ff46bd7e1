"""Time-anchored synchronization and fusion for multi-node roadside perception."""

__version__ = "0.1.0"

from .errors import ConfigError, DelaySyncError, InputError, SequencingError
from .sim import EventLog, NodeProfile, SimConfig, TriggerMode, run_simulation
from .latency import EstimatorConfig, LatencyEstimate, LatencyEstimator
from .scheduler import SchedulerConfig, SchedulerMode, schedule_log, full_match_rate
from .geometry import DrivableMap, OrientedBox, in_drivable_area, nms, oriented_iou
from .fusion import Detection, FusedObject, Tracker, TrackerConfig, associate_and_fuse, motion_correct
from .scenario import ScenarioConfig, generate_scene, scenario_config
from .evaluation import evaluate_map

__all__ = [
    "__version__",
    "ConfigError", "DelaySyncError", "InputError", "SequencingError",
    "EventLog", "NodeProfile", "SimConfig", "TriggerMode", "run_simulation",
    "EstimatorConfig", "LatencyEstimate", "LatencyEstimator",
    "SchedulerConfig", "SchedulerMode", "schedule_log", "full_match_rate",
    "DrivableMap", "OrientedBox", "in_drivable_area", "nms", "oriented_iou",
    "Detection", "FusedObject", "Tracker", "TrackerConfig", "associate_and_fuse", "motion_correct",
    "ScenarioConfig", "generate_scene", "scenario_config",
    "evaluate_map",
]
