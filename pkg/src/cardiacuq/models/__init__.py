from .config import SegModelConfig, default_seg_config
from .nets import build_segmentation_model

__all__ = ["SegModelConfig", "default_seg_config", "build_segmentation_model"]
