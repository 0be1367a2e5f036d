"""Synthetic short-axis phantom studies in the ACDC directory layout.

Each patient gets an ellipsoidal LV blood pool, a myocardial annulus and an
RV crescent, tapering toward the apex, with disease-group-specific geometry
and contraction. Images carry noise, bias fields and randomly degraded
slice contrast so a reduced-scale segmentation run leaves realistic local
failures for the detection stage to find.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .io import nifti
from .io.acdc import DISEASE_GROUPS

# geometry in voxels (~1.4-1.7 mm): (lv_radius, wall_thickness, rv_scale, contraction)
_GROUP_PARAMS = {
    "NOR": ((13, 16), (5, 7), (1.0, 1.2), (0.55, 0.65)),
    "DCM": ((19, 23), (4, 5), (1.0, 1.2), (0.80, 0.90)),
    "HCM": ((9, 12), (9, 12), (0.9, 1.1), (0.45, 0.60)),
    "MINF": ((15, 19), (5, 7), (1.0, 1.2), (0.85, 0.95)),
    "ARV": ((13, 16), (5, 7), (1.5, 1.8), (0.55, 0.70)),
}

_INTENSITY = {"background": 0.42, "blood": 0.85, "myo": 0.28}


def _crescent_labels(size, cx, cy, r_lv, wall, rv_scale, wobble_phase, wobble_amp):
    """Label one slice: 1=RV, 2=LVM, 3=LV."""
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    radius = np.hypot(dy, dx)
    angle = np.arctan2(dy, dx)
    wave = 1.0 + wobble_amp * np.sin(3 * angle + wobble_phase)

    labels = np.zeros(size, dtype=np.uint8)
    lv = radius <= r_lv * wave
    myo = (radius <= (r_lv + wall) * wave) & ~lv
    rv_a = (r_lv + wall) * rv_scale
    rv_b = (r_lv + wall) * 0.85
    rv_cx = cx - (r_lv + wall) * 0.95
    rv = ((yy - cy) / rv_b) ** 2 + ((xx - rv_cx) / rv_a) ** 2 <= 1.0
    labels[rv & ~lv & ~myo] = 1
    labels[myo] = 2
    labels[lv] = 3
    return labels


def _render_image(labels, rng, contrast_scale, noise_sigma, rv_contrast=1.0, stripe=False):
    h, w = labels.shape
    image = np.full((h, w), _INTENSITY["background"], dtype=np.float64)
    image += gaussian_filter(rng.normal(0, 1.0, size=(h, w)), 6) * 0.12  # tissue texture
    for cls, tone in ((1, _INTENSITY["blood"]), (2, _INTENSITY["myo"]), (3, _INTENSITY["blood"])):
        scale = contrast_scale * (rv_contrast if cls == 1 else 1.0)
        delta = (tone - _INTENSITY["background"]) * scale
        image[labels == cls] = _INTENSITY["background"] + delta
    if stripe and labels.any():
        # banding artifact crossing the heart: flips local appearance
        rows, cols = np.nonzero(labels)
        r = int(rng.choice(rows))
        height = int(rng.integers(6, 14))
        shift = float(rng.uniform(0.25, 0.45)) * (1 if rng.uniform() < 0.5 else -1)
        image[max(0, r - height // 2) : r + height // 2] += shift
    image = gaussian_filter(image, 1.0)  # partial volume
    bias = gaussian_filter(rng.normal(0, 1.0, size=(h, w)), 24)
    bias = 1.0 + 0.25 * bias / max(np.abs(bias).max(), 1e-6)
    image = image * bias + rng.normal(0, noise_sigma, size=(h, w))
    return np.clip(image, 0.0, 1.2)


def generate_phantom_patient(
    patient_dir: Path, patient_id: str, group: str, rng, size: tuple[int, int] = (144, 144)
) -> None:
    n_slices = int(rng.integers(8, 11))
    z_lo = int(rng.integers(0, 2))
    z_hi = n_slices - 1 - int(rng.integers(0, 2))
    spacing = (float(rng.uniform(1.37, 1.68)),) * 2 + (float(rng.uniform(5.0, 10.0)),)

    (r_lo, r_hi), (t_lo, t_hi), (rv_lo, rv_hi), (c_lo, c_hi) = _GROUP_PARAMS[group]
    r_lv = float(rng.uniform(r_lo, r_hi))
    wall = float(rng.uniform(t_lo, t_hi))
    rv_scale = float(rng.uniform(rv_lo, rv_hi))
    contraction = float(rng.uniform(c_lo, c_hi))
    noise_sigma = float(rng.uniform(0.08, 0.16))
    wobble_amp = float(rng.uniform(0.02, 0.09))
    cx0 = size[1] / 2 + rng.uniform(-8, 8) + (r_lv + wall) * 0.45
    cy0 = size[0] / 2 + rng.uniform(-8, 8)

    frames = {"ED": 1, "ES": 12}
    volumes = {}
    for phase, _ in frames.items():
        cavity = r_lv if phase == "ED" else r_lv * contraction
        thick = wall if phase == "ED" else wall * (1.0 + 0.35 * (1 - contraction))
        labels = np.zeros((n_slices, *size), dtype=np.uint8)
        image = np.zeros((n_slices, *size), dtype=np.float64)
        for z in range(n_slices):
            if z_lo <= z <= z_hi:
                # taper from apex (z_lo) to base (z_hi)
                frac = 0.35 + 0.65 * (z - z_lo) / max(z_hi - z_lo, 1)
                cx = cx0 + rng.uniform(-2, 2)
                cy = cy0 + rng.uniform(-2, 2)
                labels[z] = _crescent_labels(
                    size,
                    cx,
                    cy,
                    cavity * frac,
                    max(thick * (0.8 + 0.4 * frac), 2.5),
                    rv_scale,
                    wobble_phase=float(rng.uniform(0, 2 * np.pi)),
                    wobble_amp=wobble_amp,
                )
            # degraded contrast on some slices leaves local failures behind
            contrast = 1.0
            rv_contrast = 1.0
            roll = rng.uniform()
            if roll < 0.30:
                contrast = float(rng.uniform(0.15, 0.45))
            elif roll < 0.55:
                rv_contrast = float(rng.uniform(0.10, 0.40))
            if z in (z_lo, z_hi):
                contrast *= 0.65  # apex and base are the hard slices
            stripe = rng.uniform() < 0.25
            image[z] = _render_image(
                labels[z], rng, contrast, noise_sigma, rv_contrast, stripe=stripe
            )
        volumes[phase] = (image, labels)

    patient_dir.mkdir(parents=True, exist_ok=True)
    (patient_dir / "Info.cfg").write_text(
        f"ED: {frames['ED']}\nES: {frames['ES']}\nGroup: {group}\n"
        f"Height: 170.0\nNbFrame: 28\nWeight: 75.0\n"
    )
    for phase, frame in frames.items():
        image, labels = volumes[phase]
        # internal (Z, H, W) -> on-disk (X, Y, Z)
        img_xyz = np.transpose(image * 400.0, (2, 1, 0)).astype(np.float32)
        ref_xyz = np.transpose(labels, (2, 1, 0)).astype(np.uint8)
        nifti.write(patient_dir / f"{patient_id}_frame{frame:02d}.nii.gz", img_xyz, spacing)
        nifti.write(patient_dir / f"{patient_id}_frame{frame:02d}_gt.nii.gz", ref_xyz, spacing)


def generate_phantom_dataset(
    root, n_patients: int = 30, seed: int = 0, size: tuple[int, int] = (144, 144)
) -> list[str]:
    """Write `n_patients` phantom studies under `root`, cycling disease groups."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    ids = []
    for i in range(n_patients):
        patient_id = f"patient{i + 1:03d}"
        group = DISEASE_GROUPS[i % len(DISEASE_GROUPS)]
        generate_phantom_patient(root / patient_id, patient_id, group, rng, size=size)
        ids.append(patient_id)
    return ids
