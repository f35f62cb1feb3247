"""Blind source separation of tensor-valued observations with FOBI, JADE and
their band-limited k-JADE variants."""

from .estimators import (
    ModeError,
    ModePlan,
    UnmixingResult,
    fit,
    fit_vectorized,
    k_tjade_mode,
    tfobi_mode,
    tjade_mode,
)
from .io import read_sample, write_sample
from .jointdiag import JointDiagConfig, JointDiagWarning, joint_diagonalize
from .metrics import gain_matrix, md_index, relative_md, scree, transformed_md
from .moments import (
    InsufficientSampleError,
    SingularCovarianceError,
    cumulant_matrix,
    cumulant_set,
    fobi_matrix,
    standardize,
)

__all__ = [
    "ModeError",
    "ModePlan",
    "UnmixingResult",
    "fit",
    "fit_vectorized",
    "k_tjade_mode",
    "tfobi_mode",
    "tjade_mode",
    "read_sample",
    "write_sample",
    "JointDiagConfig",
    "JointDiagWarning",
    "joint_diagonalize",
    "gain_matrix",
    "md_index",
    "relative_md",
    "scree",
    "transformed_md",
    "InsufficientSampleError",
    "SingularCovarianceError",
    "cumulant_matrix",
    "cumulant_set",
    "fobi_matrix",
    "standardize",
]

__version__ = "0.1.0"
