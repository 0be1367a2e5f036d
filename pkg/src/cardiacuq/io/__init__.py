from .acdc import DISEASE_GROUPS, PHASES, PatientStudy, load_acdc_patient
from .folds import FoldSplit, make_stratified_folds
from .preprocess import ResampleGeometry, invert_resample_labels, preprocess_volume

__all__ = [
    "DISEASE_GROUPS",
    "PHASES",
    "PatientStudy",
    "load_acdc_patient",
    "FoldSplit",
    "make_stratified_folds",
    "ResampleGeometry",
    "invert_resample_labels",
    "preprocess_volume",
]
