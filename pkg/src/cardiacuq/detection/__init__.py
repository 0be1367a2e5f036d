from .config import DetectorConfig
from .crops import CropGeometry, crop_for_detection
from .infer import DetectionResult, SliceDetection, detect_failure_regions
from .model import SResNet, build_detector
from .train import compute_w_pos, detection_loss, sample_training_batch, train_detector

__all__ = [
    "DetectorConfig",
    "CropGeometry",
    "crop_for_detection",
    "DetectionResult",
    "SliceDetection",
    "detect_failure_regions",
    "SResNet",
    "build_detector",
    "compute_w_pos",
    "detection_loss",
    "sample_training_batch",
    "train_detector",
]
