"""Cardiac MR segmentation with uncertainty-driven failure detection and correction."""

__version__ = "0.1.0"

CLASS_NAMES = ("background", "RV", "LVM", "LV")
NUM_CLASSES = 4
FOREGROUND_CLASSES = (1, 2, 3)
TARGET_IN_PLANE_SPACING_MM = 1.4
PATCH_SIZE = 8
