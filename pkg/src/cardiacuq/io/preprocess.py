"""Preprocessing: in-plane resampling to a 1.4 mm grid and intensity scaling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage.transform import resize

from .. import TARGET_IN_PLANE_SPACING_MM
from ..errors import DegenerateIntensityError
from .acdc import PatientStudy, PhaseData


@dataclass(frozen=True)
class ResampleGeometry:
    """Everything needed to undo the in-plane resampling exactly."""

    original_hw: tuple[int, int]
    original_spacing: tuple[float, float, float]
    resampled_hw: tuple[int, int]
    target_mm: float = TARGET_IN_PLANE_SPACING_MM


def resampled_size(size: int, spacing_mm: float, target_mm: float = TARGET_IN_PLANE_SPACING_MM) -> int:
    """Grid size after resampling: physical extent divided by the target spacing."""
    return int(round(size * spacing_mm / target_mm))


def _resize_slices(volume: np.ndarray, hw: tuple[int, int], order: int) -> np.ndarray:
    if tuple(volume.shape[1:]) == tuple(hw):
        return volume.copy()
    out = np.empty((volume.shape[0], hw[0], hw[1]), dtype=np.float32 if order else volume.dtype)
    for z in range(volume.shape[0]):
        out[z] = resize(
            volume[z],
            hw,
            order=order,
            preserve_range=True,
            anti_aliasing=False,
            mode="edge",
        ).astype(out.dtype)
    return out


def preprocess_volume(study: PatientStudy) -> PatientStudy:
    """Resample each phase in-plane to 1.4x1.4 mm and min-max scale intensities.

    Images are interpolated bilinearly, references nearest-neighbor; slice
    spacing is left untouched. Scaling runs after resampling so the output
    range is exactly [0, 1] per volume.
    """
    dx, dy, dz = study.spacing
    h, w, _ = study.original_shape
    new_hw = (resampled_size(h, dy), resampled_size(w, dx))
    geometry = ResampleGeometry(
        original_hw=(h, w), original_spacing=study.spacing, resampled_hw=new_hw
    )

    phases = {}
    for name, phase in study.phases.items():
        if np.ptp(phase.image) == 0:
            raise DegenerateIntensityError(
                f"{study.patient_id}/{name}: constant intensity volume"
            )
        image = _resize_slices(phase.image, new_hw, order=1)
        lo, hi = float(image.min()), float(image.max())
        if hi == lo:
            raise DegenerateIntensityError(
                f"{study.patient_id}/{name}: constant intensity after resampling"
            )
        image = (image - lo) / (hi - lo)
        reference = _resize_slices(phase.reference, new_hw, order=0)
        phases[name] = PhaseData(image=image.astype(np.float32), reference=reference)

    return PatientStudy(
        patient_id=study.patient_id,
        disease_group=study.disease_group,
        phases=phases,
        spacing=(TARGET_IN_PLANE_SPACING_MM, TARGET_IN_PLANE_SPACING_MM, dz),
        original_shape=study.original_shape,
        resample=geometry,
    )


def invert_resample_labels(labels: np.ndarray, geometry: ResampleGeometry) -> np.ndarray:
    """Map a (Z, H', W') label volume back onto the original in-plane grid."""
    if labels.shape[1:] != geometry.resampled_hw:
        raise ValueError(
            f"labels {labels.shape[1:]} do not match resampled grid {geometry.resampled_hw}"
        )
    return _resize_slices(labels, geometry.original_hw, order=0)
